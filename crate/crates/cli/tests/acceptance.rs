//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use mixcon::cq::{audit_implication_chain, ErrorBoundOptions};
use mixcon::expr::{EvalPoint, ExprAst};
use mixcon::localopt::AlOptions;
use mixcon::model::{ProblemSpec, Radius, Trajectory};
use mixcon::numkernel::positive_linear_dependence;
use mixcon::ocp::{solve_al, transcribe};
use mixcon::rng::stream_rng;
use mixcon::setmap::{certify_gamma_pl, estimate_bounded_slope, estimate_pl_modulus, RadiusProfile, SamplingOptions};
use mixcon::verify::{certify, NcCertificate, NcOptions, Verdict};
use rand::Rng;
use serde_json::Value;

const C1_BUDGET: Duration = Duration::from_secs(1);
const C2_BUDGET: Duration = Duration::from_secs(60);
const C2_SEED: u64 = 42;
const C2_COUNT: usize = 100;
const C3_FAMILIES: usize = 50;
const C3_STEPS: usize = 20;
const C4_BUDGET: Duration = Duration::from_secs(5);
const C4_P_TOL: f64 = 1e-6;
const C4_EULER_TOL: f64 = 1e-8;
const C4_MARGIN_TOL: f64 = 1e-6;
const C5_COSTATE_TOL: f64 = 1e-2;
const C5_TERMINAL_TOL: f64 = 1e-8;
const C5_RATIO: (f64, f64) = (0.3, 0.7);
const C6_MIN_RESIDUAL: f64 = 0.1;
const C7_ZERO_TOL: f64 = 1e-6;
const C7_UNIT_REL: f64 = 0.1;
const C8_POINTS: usize = 100;
const C8_REL_TOL: f64 = 1e-5;
const N_FINE: usize = 1000;

type Outcome = Result<String, String>;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(name)
}

fn problem(name: &str) -> ProblemSpec {
    ProblemSpec::from_json_bytes(&std::fs::read(fixture(name)).expect("fixture")).expect("fixture parses")
}

fn mixcon(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mixcon")).args(args).output().expect("binary runs")
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let path = fixture("dependent_equalities.json");
    let start = Instant::now();
    let out = mixcon(&["analyze-cq", "--problem", path.to_str().unwrap(), "--x", "0", "--u", "0,0"]);
    let elapsed = start.elapsed();
    ensure(out.status.code() == Some(0), || format!("exit {:?}", out.status.code()))?;
    let r: Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let s = &r["summary"];
    ensure(s["NNAMCQ"] == false && s["WBCQ"] == true && s["CALM_STRUCTURAL"] == true, || format!("summary {s}"))?;
    ensure(r["gamma_pseudo_lipschitz"]["holds"] == true, || "gamma not certified".into())?;
    // The NNAMCQ witness must be a nonzero dependence among the equality gradients.
    let nn = r["verdicts"].as_array().unwrap().iter().find(|v| v["kind"] == "NNAMCQ").unwrap();
    let lam: Vec<f64> = nn["witness"]["lambda"].as_array().ok_or("no witness")?.iter().map(|v| v.as_f64().unwrap()).collect();
    let ps = problem("dependent_equalities.json");
    let z = EvalPoint::new(0.0, vec![0.0], vec![0.0, 0.0]);
    let mut comb = [0.0; 3];
    for (h, w) in ps.h.iter().zip(&lam) {
        for (c, g) in comb.iter_mut().zip(&h.gradient(&z).unwrap().grad[1..]) {
            *c += w * g;
        }
    }
    ensure(lam.iter().any(|v| v.abs() > 1e-9) && comb.iter().all(|c| c.abs() < 1e-9), || format!("bad witness {lam:?}"))?;
    ensure(elapsed < C1_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("witness λ = {lam:?}, {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let rep = audit_implication_chain(C2_SEED, C2_COUNT);
    let elapsed = start.elapsed();
    ensure(rep.violations.is_empty(), || format!("{} violations, first {:?}", rep.violations.len(), rep.violations[0].rule))?;
    ensure(rep.checked + rep.skipped == C2_COUNT, || "instance count mismatch".into())?;
    ensure(elapsed < C2_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("{} checked, {} skipped, 0 violations, {elapsed:.2?}", rep.checked, rep.skipped))
}

/// Minimum `‖Σ c_i v_i‖∞` over grid weights `|c_i| = w_i / steps` with
/// `Σ w_i = steps`; signed members keep `c_i ≥ 0`.
fn grid_min(vectors: &[Vec<f64>], signed: &[bool], steps: usize) -> f64 {
    fn rec(i: usize, left: usize, w: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if i + 1 == w.len() {
            w[i] = left;
            f(w);
            return;
        }
        for a in 0..=left {
            w[i] = a;
            rec(i + 1, left - a, w, f);
        }
    }
    let k = vectors.len();
    let mut best = f64::INFINITY;
    rec(0, steps, &mut vec![0; k], &mut |w: &[usize]| {
        let free: Vec<usize> = (0..k).filter(|&i| !signed[i] && w[i] > 0).collect();
        for mask in 0..1usize << free.len() {
            let mut sum = [0.0; 3];
            for i in 0..k {
                let mut c = w[i] as f64 / steps as f64;
                if free.iter().position(|&f| f == i).is_some_and(|p| mask >> p & 1 == 1) {
                    c = -c;
                }
                for d in 0..3 {
                    sum[d] += c * vectors[i][d];
                }
            }
            best = best.min(sum.iter().fold(0.0f64, |a, &v| a.max(v.abs())));
        }
    });
    best
}

fn criterion_3() -> Outcome {
    let (mut agree, mut dependent, mut redraws) = (0, 0, 0);
    let mut stream = 0u64;
    while agree < C3_FAMILIES {
        let mut rng = stream_rng(3, stream);
        stream += 1;
        let k = rng.gen_range(1..=4usize);
        let signed: Vec<bool> = (0..k).map(|_| rng.gen_bool(0.5)).collect();
        let mut vectors: Vec<Vec<f64>> = (0..k).map(|_| (0..3).map(|_| rng.gen_range(-2i32..=2) as f64).collect()).collect();
        if k >= 2 && rng.gen_bool(0.5) {
            // Plant a dependency whose weights lie on the grid: w_i / 20.
            let mut w = vec![1usize; k];
            for _ in 0..C3_STEPS - k {
                w[rng.gen_range(0..k)] += 1;
            }
            let mut last = [0.0; 3];
            for i in 0..k - 1 {
                for d in 0..3 {
                    last[d] -= w[i] as f64 * vectors[i][d];
                }
            }
            vectors[k - 1] = last.iter().map(|c| c / w[k - 1] as f64).collect();
        }
        let grid = grid_min(&vectors, &signed, C3_STEPS);
        let vmax = vectors.iter().flatten().fold(0.0f64, |a, &c| a.max(c.abs()));
        // An exact dependency rounds onto the grid with residual below this.
        let slack = k as f64 / C3_STEPS as f64 * vmax;
        let truth = if grid <= 1e-9 {
            true
        } else if grid > slack {
            false
        } else {
            redraws += 1;
            continue;
        };
        let s: Vec<Vec<f64>> = vectors.iter().zip(&signed).filter(|p| *p.1).map(|p| p.0.clone()).collect();
        let f: Vec<Vec<f64>> = vectors.iter().zip(&signed).filter(|p| !*p.1).map(|p| p.0.clone()).collect();
        let got = positive_linear_dependence(&s, &f).map_err(|e| e.to_string())?.dependent;
        ensure(got == truth, || format!("family {vectors:?} signed {signed:?}: LP {got}, grid {truth}"))?;
        agree += 1;
        dependent += usize::from(truth);
    }
    Ok(format!("{agree}/{C3_FAMILIES} agree ({dependent} dependent), {redraws} undecidable draws replaced"))
}

fn solve(ps: &ProblemSpec, n_int: usize) -> Result<Trajectory<f64>, String> {
    let nlp = transcribe::<f64>(ps, n_int).map_err(|e| e.to_string())?;
    let (traj, rep) = solve_al(&nlp, None, &AlOptions::default()).map_err(|e| e.to_string())?;
    ensure(rep.converged, || format!("solver did not converge: {rep:?}"))?;
    Ok(traj)
}

fn verify(ps: &ProblemSpec, traj: &Trajectory<f64>) -> Result<NcCertificate<f64>, String> {
    let radius = RadiusProfile::new(ps.radius, traj.grid.len()).map_err(|e| e.to_string())?;
    certify(ps, traj, &radius, &NcOptions::default()).map_err(|e| e.to_string())
}

fn criterion_4() -> Outcome {
    let ps = problem("exampleA.json");
    let start = Instant::now();
    let traj = solve(&ps, N_FINE)?;
    let cert = verify(&ps, &traj)?;
    let elapsed = start.elapsed();
    let p_err = cert.multipliers.p.iter().map(|p| (p[0] - 1.0).abs()).fold(0.0, f64::max);
    let r = &cert.residuals;
    ensure(cert.verdict == Verdict::Pass && cert.lambda0 == 1, || format!("verdict {:?} λ0 {}", cert.failing, cert.lambda0))?;
    ensure(p_err <= C4_P_TOL, || format!("max |p - 1| = {p_err:e}"))?;
    ensure(r.euler_x <= C4_EULER_TOL && r.euler_u <= C4_EULER_TOL, || format!("euler residuals {:e} {:e}", r.euler_x, r.euler_u))?;
    ensure(cert.weierstrass.margin <= C4_MARGIN_TOL, || format!("margin {:e}", cert.weierstrass.margin))?;
    ensure(elapsed < C4_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("max|p-1| {p_err:.1e}, euler {:.1e}/{:.1e}, margin {:.1e}, {elapsed:.2?}", r.euler_x, r.euler_u, cert.weierstrass.margin))
}

/// Largest `|p_k - e^{1-τ_k}|` for exampleB at `n_int` intervals, plus the certificate.
fn example_b(n_int: usize) -> Result<(f64, Trajectory<f64>, NcCertificate<f64>), String> {
    let ps = problem("exampleB.json");
    let traj = solve(&ps, n_int)?;
    let cert = verify(&ps, &traj)?;
    let p_err = traj.grid.iter().zip(&cert.multipliers.p).map(|(t, p)| (p[0] - (1.0 - t).exp()).abs()).fold(0.0, f64::max);
    Ok((p_err, traj, cert))
}

fn criterion_5() -> Outcome {
    let ps = problem("exampleB.json");
    let (p_err, traj, cert) = example_b(N_FINE)?;
    let (p_err_coarse, _, _) = example_b(N_FINE / 2)?;
    ensure(cert.verdict == Verdict::Pass, || format!("failing {:?}", cert.failing))?;
    ensure(p_err <= C5_COSTATE_TOL, || format!("p error {p_err:e}"))?;
    let lam = &cert.multipliers.lam;
    let lam_err = traj.grid.iter().zip(lam).map(|(t, l)| (l[0] - (1.0 - t).exp()).abs()).fold(0.0, f64::max);
    ensure(lam_err <= C5_COSTATE_TOL, || format!("λ error {lam_err:e}"))?;
    ensure(lam.iter().flatten().all(|&l| l >= 0.0), || "negative λ".into())?;
    // Complementary slackness: inactive constraints carry exactly zero weight.
    for (k, l) in lam.iter().enumerate() {
        let g = ps.constraint_values(&traj.node(k)).map_err(|e| e.to_string())?.0[0];
        ensure(g >= -cert.eps_act || l[0] == 0.0, || format!("λ_{k} = {} with g = {g:e}", l[0]))?;
    }
    let p_n = cert.multipliers.p.last().unwrap()[0];
    ensure((p_n - 1.0).abs() <= C5_TERMINAL_TOL, || format!("p_N = {p_n}"))?;
    let ratio = p_err / p_err_coarse;
    ensure((C5_RATIO.0..=C5_RATIO.1).contains(&ratio), || format!("refinement ratio {ratio}"))?;
    Ok(format!("p err {p_err:.2e}, λ err {lam_err:.2e}, comp slack {:.1e}, p_N-1 {:.1e}, ratio {ratio:.3}", cert.residuals.comp_slack, p_n - 1.0))
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let grid = Trajectory::<f64>::uniform_grid(0.0, 1.0, N_FINE);
    let x: Vec<Vec<f64>> = grid.iter().map(|&t| vec![t]).collect();
    let traj = Trajectory { grid, x, u: vec![vec![1.0]; N_FINE] };
    let tpath = dir.path().join("u_one.json");
    std::fs::write(&tpath, serde_json::to_vec(&traj).unwrap()).map_err(|e| e.to_string())?;
    let cpath = dir.path().join("cert.json");
    let out = mixcon(&["verify", "--problem", fixture("exampleB.json").to_str().unwrap(), "--trajectory", tpath.to_str().unwrap(), "--out", cpath.to_str().unwrap()]);
    ensure(out.status.code() == Some(1), || format!("exit {:?}", out.status.code()))?;
    let c: Value = serde_json::from_slice(&std::fs::read(&cpath).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(c["verdict"] == "fail", || "verdict is not fail".into())?;
    let r = &c["residuals"];
    let worst = ["euler_x", "euler_u", "transversality"].iter().filter_map(|k| r[*k].as_f64()).fold(0.0, f64::max);
    ensure(worst >= C6_MIN_RESIDUAL, || format!("largest residual {worst}"))?;
    Ok(format!("exit 1, failing {}, largest residual {worst:.3}", c["failing"]))
}

fn criterion_7() -> Outcome {
    let opts = SamplingOptions::default();
    let constant = problem("constant_map.json");
    let k0: mixcon::PlEstimate = estimate_pl_modulus(&constant, 0.0, &[0.0], &[0.0], 0.1, 1.0, &[0.0], &opts).map_err(|e| e.to_string())?;
    ensure(k0.k_hat.abs() <= C7_ZERO_TOL && k0.pairs > 0, || format!("constant map k̂ = {:e}", k0.k_hat))?;
    let shifted = problem("shifted_box.json");
    let k1: mixcon::PlEstimate = estimate_pl_modulus(&shifted, 0.0, &[0.0], &[0.0], 0.1, 1.0, &[0.0], &opts).map_err(|e| e.to_string())?;
    ensure((k1.k_hat - 1.0).abs() <= C7_UNIT_REL, || format!("shifted box k̂ = {}", k1.k_hat))?;
    let gamma = certify_gamma_pl(&shifted, &EvalPoint::new(0.0, vec![0.0], vec![0.0]), &ErrorBoundOptions::default()).map_err(|e| e.to_string())?;
    ensure(gamma.holds, || "shifted box Γ not certified".into())?;
    let pure = problem("pure_state.json");
    let n_int = 10;
    let grid = Trajectory::<f64>::uniform_grid(0.0, 1.0, n_int);
    let traj = Trajectory { x: vec![vec![0.0]; n_int + 1], u: vec![vec![0.0]; n_int], grid };
    let radius = RadiusProfile::new(Radius::Infinite, n_int + 1).map_err(|e| e.to_string())?;
    let slope: mixcon::BoundedSlope = estimate_bounded_slope(&pure, &traj, 0.1, &radius, &opts).map_err(|e| e.to_string())?;
    ensure(slope.k_hat.is_infinite() && !slope.bounded && slope.witness.is_some(), || format!("pure-state slope {}", slope.k_hat))?;
    let w = slope.witness.unwrap();
    Ok(format!("k̂ constant {:.1e}, shifted {:.4}, pure-state ∞ at t={} x={:?}", k0.k_hat, k1.k_hat, w.t, w.x))
}

fn criterion_8() -> Outcome {
    let names = ["exampleA.json", "exampleB.json", "constant_map.json", "shifted_box.json", "pure_state.json", "dependent_equalities.json", "unreachable_endpoint.json"];
    let mut exprs: Vec<(String, ExprAst)> = Vec::new();
    for name in names {
        let ps = problem(name);
        exprs.push((format!("{name}:F"), ps.running_cost.clone()));
        exprs.push((format!("{name}:f"), ps.endpoint_cost.clone()));
        for (tag, list) in [("phi", &ps.phi), ("g", &ps.g), ("h", &ps.h)] {
            exprs.extend(list.iter().enumerate().map(|(i, e)| (format!("{name}:{tag}{}", i + 1), e.clone())));
        }
    }
    let mut worst = 0.0f64;
    let mut rng = stream_rng(8, 0);
    for _ in 0..C8_POINTS {
        for (label, e) in &exprs {
            let (n, m) = e.dims();
            let p = EvalPoint::new(rng.gen_range(-2.0..2.0), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect(), (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let g = e.gradient(&p).map_err(|err| err.to_string())?;
            let mut z: Vec<f64> = p.z();
            z.insert(0, p.t);
            for slot in 0..z.len() {
                let h = 1e-6 * (1.0 + z[slot].abs());
                let at = |d: f64| {
                    let mut w = z.clone();
                    w[slot] += d;
                    e.evaluate(&EvalPoint::from_z(w[0], &w[1..], n)).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let rel = (fd - g.grad[slot]).abs() / 1f64.max(g.grad[slot].abs());
                worst = worst.max(rel);
                ensure(rel <= C8_REL_TOL, || format!("{label} slot {slot}: fd {fd} vs {}", g.grad[slot]))?;
            }
        }
    }
    Ok(format!("{} expressions × {C8_POINTS} points, worst relative error {worst:.1e}", exprs.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 dependent equalities analysis", criterion_1),
        ("2 CQ implication audit", criterion_2),
        ("3 positive dependence vs grid oracle", criterion_3),
        ("4 exampleA positive control", criterion_4),
        ("5 exampleB positive control", criterion_5),
        ("6 exampleB negative control", criterion_6),
        ("7 set-map moduli", criterion_7),
        ("8 gradient oracle", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let (tag, detail) = match run() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {name}: {detail} [{:.2?}]", start.elapsed());
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
