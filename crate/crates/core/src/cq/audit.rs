use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::{check_neighborhood_cq, check_pointwise_cq, CqKind, NeighborhoodOptions};
use crate::error::Result;
use crate::expr::{EvalPoint, ExprAst};
use crate::model::ProblemSpec;
use crate::rng::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditViolation {
    pub index: usize,
    pub rule: String,
    /// Problem JSON plus the reference point under `"z"`.
    pub instance: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub count: usize,
    pub checked: usize,
    /// Instances where some check returned an error.
    pub skipped: usize,
    pub violations: Vec<AuditViolation>,
}

const EPS_ACT: f64 = 1e-9;

fn random_poly<R: Rng>(rng: &mut R, names: &[String]) -> String {
    let d = names.len();
    let mut terms = Vec::new();
    while terms.is_empty() {
        for a in 0..d {
            if rng.gen_bool(0.5) {
                terms.push((rng.gen_range(-2i32..=2), names[a].clone()));
            }
            for b in a..d {
                if rng.gen_bool(0.15) {
                    terms.push((rng.gen_range(-2i32..=2), format!("{}*{}", names[a], names[b])));
                }
            }
        }
        terms.retain(|(c, _)| *c != 0);
    }
    terms.iter().map(|(c, mono)| format!("({c})*{mono}")).collect::<Vec<_>>().join(" + ")
}

/// Random polynomial instance with `U = R^m` and an integer feasible point.
fn random_instance(seed: u64, index: usize) -> Result<(ProblemSpec, EvalPoint<f64>)> {
    let mut rng = stream_rng(seed, index as u64);
    let n = rng.gen_range(1..=3usize);
    let m = rng.gen_range(1..=3usize);
    let l = rng.gen_range(0..=3usize);
    let s = rng.gen_range(0..=3usize);
    let names: Vec<String> = (1..=n).map(|i| format!("x{i}")).chain((1..=m).map(|j| format!("u{j}"))).collect();
    let z: Vec<f64> = (0..n + m).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
    let point = EvalPoint::from_z(0.0, &z, n);
    let shifted = |active: bool, rng: &mut rand_chacha::ChaCha8Rng| -> Result<String> {
        let p = random_poly(rng, &names);
        let at = ExprAst::parse(&p, n, m)?.evaluate(&point)?;
        let c = if active { at } else { at + 1.0 };
        Ok(format!("{p} - ({c})"))
    };
    let mut g = Vec::with_capacity(l);
    for _ in 0..l {
        let active = rng.gen_bool(0.8);
        g.push(shifted(active, &mut rng)?);
    }
    let mut h = Vec::with_capacity(s);
    for _ in 0..s {
        h.push(shifted(true, &mut rng)?);
    }
    let js = json!({"n": n, "m": m, "t0": 0, "t1": 1, "F": "0", "phi": vec!["0"; n], "g": g, "h": h});
    Ok((ProblemSpec::from_json_value(&js)?, point))
}

fn verdicts(ps: &ProblemSpec, z: &EvalPoint<f64>, nb: &NeighborhoodOptions) -> Result<Vec<(CqKind, bool)>> {
    let mut out = Vec::new();
    for k in [CqKind::Plicq, CqKind::Nnamcq, CqKind::Wbcq, CqKind::Mfc, CqKind::Ccq] {
        out.push((k, check_pointwise_cq(k, ps, z, EPS_ACT)?.holds()));
    }
    for k in [CqKind::Cpld, CqKind::Rcpld, CqKind::Crsc] {
        out.push((k, check_neighborhood_cq(k, ps, z, nb)?.holds()));
    }
    Ok(out)
}

fn broken_rules(v: &[(CqKind, bool)]) -> Vec<String> {
    let get = |k: CqKind| v.iter().find(|(kk, _)| *kk == k).map(|(_, h)| *h).unwrap_or(false);
    let mut out = Vec::new();
    let mut imply = |a: CqKind, b: CqKind| {
        if get(a) && !get(b) {
            out.push(format!("{} => {}", a.name(), b.name()));
        }
    };
    imply(CqKind::Plicq, CqKind::Cpld);
    imply(CqKind::Cpld, CqKind::Rcpld);
    imply(CqKind::Rcpld, CqKind::Crsc);
    imply(CqKind::Ccq, CqKind::Mfc);
    if (get(CqKind::Wbcq) && get(CqKind::Nnamcq)) != get(CqKind::Mfc) {
        out.push("(WBCQ and NNAMCQ) <=> MFC".into());
    }
    out
}

/// Runs every check on `count` random smooth polynomial instances and
/// reports each broken implication among the verdicts.
pub fn audit_implication_chain(seed: u64, count: usize) -> AuditReport {
    let nb = NeighborhoodOptions { seed, ..NeighborhoodOptions::default() };
    let results: Vec<Option<Vec<AuditViolation>>> = (0..count)
        .into_par_iter()
        .map(|index| {
            let (ps, z) = random_instance(seed, index).ok()?;
            let v = verdicts(&ps, &z, &nb).ok()?;
            let mut inst = ps.to_json_value();
            inst["z"] = json!(z.z());
            Some(broken_rules(&v).into_iter().map(|rule| AuditViolation { index, rule, instance: inst.clone() }).collect())
        })
        .collect();
    let skipped = results.iter().filter(|r| r.is_none()).count();
    AuditReport { seed, count, checked: count - skipped, skipped, violations: results.into_iter().flatten().flatten().collect() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_feasible_and_reproducible() {
        for i in 0..20 {
            let (ps, z) = random_instance(7, i).unwrap();
            assert!(ps.feasibility_residual(&z).unwrap() == 0.0);
            let (ps2, _) = random_instance(7, i).unwrap();
            assert_eq!(ps.to_json_value(), ps2.to_json_value());
        }
    }

    #[test]
    fn rule_table() {
        let v = vec![(CqKind::Plicq, true), (CqKind::Cpld, false), (CqKind::Wbcq, true), (CqKind::Nnamcq, true), (CqKind::Mfc, true)];
        assert_eq!(broken_rules(&v), vec!["PLICQ => CPLD".to_string()]);
    }

    #[test]
    fn small_audit_is_clean() {
        let r = audit_implication_chain(3, 12);
        assert_eq!(r.checked + r.skipped, 12);
        assert!(r.violations.is_empty(), "{:?}", r.violations);
    }
}
