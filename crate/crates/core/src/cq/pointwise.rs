use super::{CqKind, CqVerdict, Witness};
use crate::error::{Error, Result};
use crate::expr::{EvalPoint, DEFAULT_TIE_TOL};
use crate::model::ProblemSpec;
use crate::nonsmooth::{active_set, ActiveSetInfo};
use crate::numkernel::{exists_nonzero, positive_linear_dependence, LinearProgram, RowSense};
use crate::scalar::Real;

/// Largest equality count for which CCQ enumerates sign patterns exactly.
const CCQ_SIGN_ENUM_MAX: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColumnKind {
    /// Generator `k` of the Clarke set of active inequality `i`.
    G { i: usize, k: usize },
    H { j: usize },
    /// Active face of the control box (`upper` selects `+e_j`).
    Face { j: usize, upper: bool },
}

#[derive(Clone, Debug)]
pub struct Column<T> {
    pub kind: ColumnKind,
    pub nonneg: bool,
    pub x: Vec<T>,
    pub u: Vec<T>,
}

/// Columns of the homogeneous multiplier system
/// `(α, β) = Σ λ_i ∂g_i + Σ ϖ_j ∇h_j + (0, η)` at one point. Nonsmooth
/// inequalities contribute one nonnegative column per Clarke generator, so
/// `λ_i` is the sum of its generator weights.
#[derive(Clone, Debug)]
pub struct MultiplierSystem<T> {
    pub n: usize,
    pub m: usize,
    pub l: usize,
    pub s: usize,
    pub cols: Vec<Column<T>>,
    pub active: ActiveSetInfo,
    pub conservative: bool,
}

impl<T: Real> MultiplierSystem<T> {
    pub fn build(ps: &ProblemSpec, z: &EvalPoint<T>, eps_act: T) -> Result<Self> {
        let active = active_set(ps, z, eps_act)?;
        let tie = T::lit(DEFAULT_TIE_TOL);
        let (n, m) = (ps.n, ps.m);
        let mut cols = Vec::new();
        let mut conservative = false;
        for &i in &active.active_g {
            let gs = ps.g[i].clarke_generators(z, tie)?;
            conservative |= !gs.is_singleton() || !gs.exact;
            for (k, v) in gs.vectors.iter().enumerate() {
                cols.push(Column { kind: ColumnKind::G { i, k }, nonneg: true, x: v[1..=n].to_vec(), u: v[1 + n..].to_vec() });
            }
        }
        for (j, h) in ps.h.iter().enumerate() {
            let gr = h.gradient(z)?;
            cols.push(Column { kind: ColumnKind::H { j }, nonneg: false, x: gr.z()[..n].to_vec(), u: gr.z()[n..].to_vec() });
        }
        for (&j, upper) in active.lower_active.iter().map(|j| (j, false)).chain(active.upper_active.iter().map(|j| (j, true))) {
            let mut u = vec![T::zero(); m];
            u[j] = if upper { T::one() } else { -T::one() };
            cols.push(Column { kind: ColumnKind::Face { j, upper }, nonneg: true, x: vec![T::zero(); n], u });
        }
        Ok(Self { n, m, l: ps.l, s: ps.s, cols, active, conservative })
    }

    pub fn nonneg(&self) -> Vec<bool> {
        self.cols.iter().map(|c| c.nonneg).collect()
    }

    fn is_multiplier(&self, c: usize) -> bool {
        !matches!(self.cols[c].kind, ColumnKind::Face { .. })
    }

    /// Rows `Σ_c col.x[i] y_c` (x-part) for each state coordinate.
    pub fn x_rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.cols.iter().map(|c| c.x[i]).collect()).collect()
    }

    pub fn u_rows(&self) -> Vec<Vec<T>> {
        (0..self.m).map(|i| self.cols.iter().map(|c| c.u[i]).collect()).collect()
    }

    /// `(λ over l+s, η over active faces)` from column weights.
    pub fn aggregate(&self, y: &[T]) -> (Vec<T>, Vec<T>) {
        let mut lambda = vec![T::zero(); self.l + self.s];
        let mut eta = Vec::new();
        for (c, &w) in self.cols.iter().zip(y) {
            match c.kind {
                ColumnKind::G { i, .. } => lambda[i] += w,
                ColumnKind::H { j } => lambda[self.l + j] += w,
                ColumnKind::Face { .. } => eta.push(w),
            }
        }
        (lambda, eta)
    }

    pub fn x_row(&self, y: &[T]) -> Vec<T> {
        (0..self.n).map(|i| self.cols.iter().zip(y).map(|(c, &w)| c.x[i] * w).sum()).collect()
    }

    pub fn u_row(&self, y: &[T]) -> Vec<T> {
        (0..self.m).map(|i| self.cols.iter().zip(y).map(|(c, &w)| c.u[i] * w).sum()).collect()
    }

    fn labels(&self, signed: bool) -> Vec<String> {
        self.cols
            .iter()
            .filter(|c| c.nonneg == signed)
            .map(|c| match c.kind {
                ColumnKind::G { i, k } => format!("g{}#{}", i + 1, k),
                ColumnKind::H { j } => format!("h{}", j + 1),
                ColumnKind::Face { j, upper } => format!("u{}{}", j + 1, if upper { "<=ub" } else { ">=lb" }),
            })
            .collect()
    }

    fn multiplier_witness(&self, y: &[T]) -> Witness<T> {
        let (lambda, eta) = self.aggregate(y);
        Witness::Multiplier { lambda, eta, alpha: self.x_row(y) }
    }

    fn nnamcq(&self) -> Result<Option<Vec<T>>> {
        let mut rows = self.x_rows();
        rows.extend(self.u_rows());
        let target: Vec<bool> = (0..self.cols.len()).map(|c| self.is_multiplier(c)).collect();
        exists_nonzero(&rows, &self.nonneg(), &target)
    }

    fn mfc(&self) -> Result<Option<Vec<T>>> {
        let target: Vec<bool> = (0..self.cols.len()).map(|c| self.is_multiplier(c)).collect();
        exists_nonzero(&self.u_rows(), &self.nonneg(), &target)
    }

    /// Witness `y` (column weights) with zero u-row and nonzero x-row.
    fn wbcq(&self) -> Result<Option<Vec<T>>> {
        let nc = self.cols.len();
        let mut rows: Vec<Vec<T>> = self
            .x_rows()
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.extend((0..self.n).map(|k| if k == i { -T::one() } else { T::zero() }));
                r
            })
            .collect();
        for mut r in self.u_rows() {
            r.extend(vec![T::zero(); self.n]);
            rows.push(r);
        }
        let mut nonneg = self.nonneg();
        nonneg.extend(vec![false; self.n]);
        let target: Vec<bool> = (0..nc + self.n).map(|c| c >= nc).collect();
        Ok(exists_nonzero(&rows, &nonneg, &target)?.map(|mut y| {
            y.truncate(nc);
            y
        }))
    }

    /// `max ‖λ‖₁` subject to `‖β‖∞ ≤ 1`; `None` when unbounded.
    fn ccq_modulus(&self) -> Result<(Option<T>, bool)> {
        let nc = self.cols.len();
        let h_cols: Vec<usize> = (0..nc).filter(|&c| matches!(self.cols[c].kind, ColumnKind::H { .. })).collect();
        let base = |obj: Vec<T>| {
            let mut lp = LinearProgram::new(nc).maximize(obj);
            for (c, col) in self.cols.iter().enumerate() {
                if !col.nonneg {
                    lp.set_bounds(c, T::neg_infinity(), T::infinity());
                }
            }
            for r in self.u_rows() {
                lp.push_row(r.clone(), RowSense::Le, T::one());
                lp.push_row(r, RowSense::Ge, -T::one());
            }
            lp
        };
        let g_obj: Vec<T> = (0..nc).map(|c| if matches!(self.cols[c].kind, ColumnKind::G { .. }) { T::one() } else { T::zero() }).collect();
        let mut best = T::zero();
        if h_cols.len() <= CCQ_SIGN_ENUM_MAX {
            for mask in 0u32..(1u32 << h_cols.len()) {
                let mut obj = g_obj.clone();
                let mut lp_bounds = Vec::new();
                for (b, &c) in h_cols.iter().enumerate() {
                    let neg = mask >> b & 1 == 1;
                    obj[c] = if neg { -T::one() } else { T::one() };
                    lp_bounds.push((c, neg));
                }
                let mut lp = base(obj);
                for (c, neg) in lp_bounds {
                    if neg {
                        lp.set_bounds(c, T::neg_infinity(), T::zero());
                    } else {
                        lp.set_bounds(c, T::zero(), T::infinity());
                    }
                }
                let sol = lp.solve()?;
                match sol.status {
                    crate::numkernel::LpStatus::Optimal => best = best.max(sol.objective),
                    crate::numkernel::LpStatus::Unbounded => return Ok((None, false)),
                    crate::numkernel::LpStatus::Infeasible => {
                        return Err(Error::Internal("CCQ section LP infeasible at the origin".into()))
                    }
                }
            }
            Ok((Some(best), false))
        } else {
            // Upper bound: Σλ_g part plus per-coordinate |ϖ_j| maxima.
            let mut objs = vec![g_obj];
            for &c in &h_cols {
                for s in [T::one(), -T::one()] {
                    let mut o = vec![T::zero(); nc];
                    o[c] = s;
                    objs.push(o);
                }
            }
            for o in objs {
                let sol = base(o).solve()?;
                match sol.status {
                    crate::numkernel::LpStatus::Optimal => best += sol.objective.max(T::zero()),
                    _ => return Ok((None, true)),
                }
            }
            Ok((Some(best), true))
        }
    }

    fn plicq(&self) -> Result<Option<Witness<T>>> {
        let z = |c: &Column<T>| c.x.iter().chain(&c.u).copied().collect::<Vec<T>>();
        let signed: Vec<Vec<T>> = self.cols.iter().filter(|c| c.nonneg).map(z).collect();
        let free: Vec<Vec<T>> = self.cols.iter().filter(|c| !c.nonneg).map(z).collect();
        if signed.is_empty() && free.is_empty() {
            return Ok(None);
        }
        let d = positive_linear_dependence(&signed, &free)?;
        Ok(d.dependent.then(|| Witness::Dependence {
            signed_labels: self.labels(true),
            signed: d.alpha,
            free_labels: self.labels(false),
            free: d.beta,
        }))
    }
}

/// Decides one of NNAMCQ, WBCQ, MFC, CCQ, PLICQ at `z`.
pub fn check_pointwise_cq<T: Real>(kind: CqKind, ps: &ProblemSpec, z: &EvalPoint<T>, eps_act: T) -> Result<CqVerdict<T>> {
    let sys = MultiplierSystem::build(ps, z, eps_act)?;
    let mut v = CqVerdict::new(kind);
    v.conservative = sys.conservative;
    match kind {
        CqKind::Nnamcq => {
            let w = sys.nnamcq()?;
            v.holds = Some(w.is_none());
            v.witness = w.map(|y| sys.multiplier_witness(&y));
        }
        CqKind::Mfc => {
            let w = sys.mfc()?;
            v.holds = Some(w.is_none());
            v.witness = w.map(|y| sys.multiplier_witness(&y));
        }
        CqKind::Wbcq => {
            let w = sys.wbcq()?;
            v.holds = Some(w.is_none());
            v.witness = w.map(|y| sys.multiplier_witness(&y));
        }
        CqKind::Ccq => {
            let (modulus, bound_only) = sys.ccq_modulus()?;
            v.holds = Some(modulus.is_some());
            v.modulus = modulus;
            v.note = "modulus bounds ‖λ‖₁ by ‖β‖∞".into();
            if bound_only {
                v.note.push_str("; upper bound from per-coordinate LPs");
            }
            if modulus.is_none() {
                v.witness = sys.mfc()?.map(|y| sys.multiplier_witness(&y));
            }
        }
        CqKind::Plicq => {
            let w = sys.plicq()?;
            v.holds = Some(w.is_none());
            v.witness = w;
        }
        other => {
            return Err(Error::Unsupported(format!("{} is not a pointwise check", other.name())));
        }
    }
    if v.fails() && v.conservative {
        v.note = if v.note.is_empty() { "advisory: Clarke overapproximation".into() } else { format!("{}; advisory: Clarke overapproximation", v.note) };
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_problem;

    fn problem(json: &str) -> ProblemSpec {
        load_problem(json.as_bytes()).unwrap()
    }

    const DEPENDENT_EQ: &str = r#"{"n":1,"m":2,"t0":0,"t1":1,"F":"0","phi":["u1"],
        "h":["x1 + u1 - u2","2*x1 + 2*u1 - 2*u2"]}"#;

    #[test]
    fn dependent_equalities() {
        let ps = problem(DEPENDENT_EQ);
        let z = EvalPoint::<f64>::new(0.0, vec![0.5], vec![0.25, 0.75]);
        let nn = check_pointwise_cq(CqKind::Nnamcq, &ps, &z, 1e-6).unwrap();
        assert!(nn.fails());
        match nn.witness.unwrap() {
            Witness::Multiplier { lambda, .. } => assert!((lambda[0] + 2.0 * lambda[1]).abs() < 1e-9 && lambda[1] != 0.0),
            w => panic!("{w:?}"),
        }
        assert!(check_pointwise_cq(CqKind::Wbcq, &ps, &z, 1e-6).unwrap().holds());
        assert!(check_pointwise_cq(CqKind::Mfc, &ps, &z, 1e-6).unwrap().fails());
        assert!(check_pointwise_cq(CqKind::Ccq, &ps, &z, 1e-6).unwrap().fails());
        assert!(check_pointwise_cq(CqKind::Plicq, &ps, &z, 1e-6).unwrap().fails());
    }

    #[test]
    fn pure_state_constraint() {
        let ps = problem(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"g":["x1"]}"#);
        let z = EvalPoint::<f64>::new(0.0, vec![0.0], vec![0.0]);
        assert!(check_pointwise_cq(CqKind::Nnamcq, &ps, &z, 1e-6).unwrap().holds());
        let wb = check_pointwise_cq(CqKind::Wbcq, &ps, &z, 1e-6).unwrap();
        assert!(wb.fails());
        match wb.witness.unwrap() {
            Witness::Multiplier { lambda, alpha, .. } => {
                assert!((lambda[0] - 1.0).abs() < 1e-12 && (alpha[0] - 1.0).abs() < 1e-12)
            }
            w => panic!("{w:?}"),
        }
        assert!(check_pointwise_cq(CqKind::Mfc, &ps, &z, 1e-6).unwrap().fails());
    }

    #[test]
    fn mixed_constraint_ccq_modulus() {
        // g = u - x - 1 active: λ = β exactly, so μ = 1.
        let ps = problem(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"g":["u1 - x1 - 1"]}"#);
        let z = EvalPoint::<f64>::new(0.0, vec![0.0], vec![1.0]);
        let c = check_pointwise_cq(CqKind::Ccq, &ps, &z, 1e-6).unwrap();
        assert!(c.holds() && (c.modulus.unwrap() - 1.0).abs() < 1e-12);
        assert!(check_pointwise_cq(CqKind::Plicq, &ps, &z, 1e-6).unwrap().holds());
    }

    #[test]
    fn box_faces_enter_the_u_row() {
        // h = u1 - x1 with u1 in [0, 1] at the lower face: face column cancels λ_h in the u-row.
        let ps = problem(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"h":["u1 - x1"],"U":{"lower":[0],"upper":[1]}}"#);
        let z = EvalPoint::<f64>::new(0.0, vec![0.0], vec![0.0]);
        assert!(check_pointwise_cq(CqKind::Mfc, &ps, &z, 1e-6).unwrap().fails());
        assert!(check_pointwise_cq(CqKind::Nnamcq, &ps, &z, 1e-6).unwrap().holds());
    }

    #[test]
    fn infeasible_point_errors() {
        let ps = problem(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"g":["x1"]}"#);
        let z = EvalPoint::<f64>::new(0.0, vec![1.0], vec![0.0]);
        assert!(matches!(check_pointwise_cq(CqKind::Nnamcq, &ps, &z, 1e-6), Err(Error::Infeasible(_))));
    }

    #[test]
    fn nonsmooth_inequality_is_conservative() {
        let ps = problem(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"g":["abs(u1) - x1"]}"#);
        let z = EvalPoint::<f64>::new(0.0, vec![0.0], vec![0.0]);
        let v = check_pointwise_cq(CqKind::Mfc, &ps, &z, 1e-6).unwrap();
        // 0 ∈ [-1, 1] = ∂_u g, so the hull admits λ > 0 with zero u-row.
        assert!(v.fails() && v.conservative);
    }
}
