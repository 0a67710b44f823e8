//! Necessary-condition verifier for candidate trajectories.
//!
//! Multipliers come from one sign-constrained least-squares solve of the
//! discrete adjoint system of the forward-Euler transcription. Unknowns are
//! ordered `ξ0 | p_0 | q_0 | p_1 | … | q_{N-1} | p_N | ξ1`, where `q_k` holds
//! the constraint columns at node `k` (Clarke generators of active `g`,
//! gradients of `h`, active box faces). Each Euler x-row is multiplied by
//! `h_k` so that the system stays banded and well scaled:
//!
//! ```text
//! x-row:  p_{k+1} − p_k + h J_φxᵀ p_{k+1} − h Σ q x-parts = h λ0 ∇_x F
//! u-row:  −J_φuᵀ p_{k+1} + Σ q u-parts                    = −λ0 ∇_u F
//! ends:   p_0 − ξ0 = λ0 ∇_{x0} f,   −p_N − ξ1 = λ0 ∇_{x1} f
//! ```
//!
//! `ξ` only has entries on fixed endpoint coordinates. Nonsmooth `φ` and `F`
//! enter through the gradient selection of [`ExprAst::gradient`](crate::expr::ExprAst::gradient).

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cq::{check_pointwise_cq, check_structural_calmness, ColumnKind, CqKind, CqVerdict, MultiplierSystem};
use crate::error::{Error, Result};
use crate::expr::EvalPoint;
use crate::model::{MultiplierArc, ProblemSpec, Trajectory};
use crate::numkernel::{structured_nnls, SparseRows};
use crate::rng::stream_rng;
use crate::scalar::{norm2, Real};
use crate::setmap::{enumerate_cluster_points, ClusterSide, RadiusProfile};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NcOptions {
    /// Activity tolerance; `None` selects `max(1e-6, 10 h)`.
    pub eps_act: Option<f64>,
    /// Tolerance on Euler and transversality residuals.
    pub tol_residual: f64,
    pub tol_weierstrass: f64,
    /// Extra Weierstrass slack per unit of step size.
    pub weierstrass_allowance: f64,
    /// Constraint tolerance for Weierstrass comparison controls.
    pub feas_filter: f64,
    /// Random comparison controls per node (in addition to the grid).
    pub control_samples: usize,
    /// Grid points per control axis when `m ≤ 3`; total grid is capped at `grid_points²`.
    pub grid_points: usize,
    /// Half-width of the comparison box around `u_k` on unbounded axes.
    pub halfwidth: f64,
    pub seed: u64,
    pub ridge: f64,
    pub check_cq: bool,
}

impl Default for NcOptions {
    fn default() -> Self {
        Self {
            eps_act: None,
            tol_residual: 1e-8,
            tol_weierstrass: 1e-6,
            weierstrass_allowance: 1.0,
            feas_filter: 1e-9,
            control_samples: 256,
            grid_points: 201,
            halfwidth: 10.0,
            seed: 0,
            ridge: 1e-10,
            check_cq: true,
        }
    }
}

impl NcOptions {
    pub fn activity_tolerance<T: Real>(&self, traj: &Trajectory<T>) -> f64 {
        self.eps_act.unwrap_or_else(|| (10.0 * traj.max_step().to_f64_lossy()).max(1e-6))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct Residuals<T: Real> {
    pub euler_x: T,
    pub euler_u: T,
    pub transversality: T,
    pub comp_slack: T,
    pub nonneg: T,
    pub nontriviality: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct Reconstruction<T: Real> {
    pub arc: MultiplierArc<T>,
    /// Signed box-normal coefficients per interval (`+` upper face, `−` lower face).
    pub eta: Vec<Vec<T>>,
    pub residuals: Residuals<T>,
    pub eps_act: f64,
    /// `‖A y − b‖₂` of the scaled least-squares system.
    pub lsq_residual: T,
    /// Anchored adjoint coordinate used when `λ0 = 0`.
    pub anchor: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RowKind {
    X { k: usize },
    U,
    Ends,
}

struct AdjointSystem<T: Real> {
    n: usize,
    intervals: usize,
    fixed0: Vec<usize>,
    fixed1: Vec<usize>,
    p_off: Vec<usize>,
    q_off: Vec<usize>,
    xi1_off: usize,
    ncols: usize,
    nodes: Vec<MultiplierSystem<T>>,
    rows: Vec<(Vec<(usize, T)>, T, RowKind)>,
    steps: Vec<T>,
    g_vals: Vec<Vec<T>>,
}

impl<T: Real> AdjointSystem<T> {
    fn build(ps: &ProblemSpec, traj: &Trajectory<T>, lambda0: u8, eps_act: T) -> Result<Self> {
        traj.validate(ps)?;
        if lambda0 > 1 {
            return Err(Error::Domain(format!("lambda0 must be 0 or 1, got {lambda0}")));
        }
        let (n, m, nn) = (ps.n, ps.m, traj.intervals());
        let l0 = T::of(lambda0 as usize);
        let fixed0: Vec<usize> = (0..n).filter(|&i| !ps.endpoints.x0[i].is_free()).collect();
        let fixed1: Vec<usize> = (0..n).filter(|&i| !ps.endpoints.x1[i].is_free()).collect();
        let points: Vec<EvalPoint<T>> = (0..nn).map(|k| traj.node(k)).collect();
        let nodes = points
            .iter()
            .enumerate()
            .map(|(k, z)| {
                MultiplierSystem::build(ps, z, eps_act).map_err(|e| match e {
                    Error::Infeasible(msg) => Error::Infeasible(format!("node {k} (t = {}): {msg}", z.t)),
                    other => other,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut off = fixed0.len();
        let (mut p_off, mut q_off) = (Vec::with_capacity(nn + 1), Vec::with_capacity(nn));
        for sys in &nodes {
            p_off.push(off);
            off += n;
            q_off.push(off);
            off += sys.cols.len();
        }
        p_off.push(off);
        off += n;
        let xi1_off = off;
        let ncols = off + fixed1.len();

        let mut rows = Vec::with_capacity(nn * (n + m) + 2 * n);
        let mut g_vals = Vec::with_capacity(nn);
        let steps: Vec<T> = (0..nn).map(|k| traj.step(k)).collect();
        for (k, z) in points.iter().enumerate() {
            let h = steps[k];
            let jphi = ps.phi.iter().map(|e| e.gradient(z).map(|g| g.z().to_vec())).collect::<Result<Vec<_>>>()?;
            let gf = ps.running_cost.gradient(z)?;
            let gf = gf.z();
            let sys = &nodes[k];
            let (pk, pk1, qk) = (p_off[k], p_off[k + 1], q_off[k]);
            for i in 0..n {
                let mut e = vec![(pk1 + i, T::one()), (pk + i, -T::one())];
                e.extend((0..n).map(|r| (pk1 + r, h * jphi[r][i])));
                e.extend(sys.cols.iter().enumerate().map(|(c, col)| (qk + c, -h * col.x[i])));
                rows.push((e, h * l0 * gf[i], RowKind::X { k }));
            }
            for j in 0..m {
                let mut e: Vec<(usize, T)> = (0..n).map(|r| (pk1 + r, -jphi[r][n + j])).collect();
                e.extend(sys.cols.iter().enumerate().map(|(c, col)| (qk + c, col.u[j])));
                rows.push((e, -l0 * gf[n + j], RowKind::U));
            }
            g_vals.push(ps.constraint_values(z)?.0);
        }
        let ends = EvalPoint::new(traj.grid[nn], traj.x[0].iter().chain(&traj.x[nn]).copied().collect(), Vec::new());
        let ge = ps.endpoint_cost.gradient(&ends)?;
        let ge = ge.z();
        for i in 0..n {
            let mut e = vec![(p_off[0] + i, T::one())];
            if let Some(c) = fixed0.iter().position(|&f| f == i) {
                e.push((c, -T::one()));
            }
            rows.push((e, l0 * ge[i], RowKind::Ends));
            let mut e = vec![(p_off[nn] + i, -T::one())];
            if let Some(c) = fixed1.iter().position(|&f| f == i) {
                e.push((xi1_off + c, -T::one()));
            }
            rows.push((e, l0 * ge[n + i], RowKind::Ends));
        }
        Ok(Self { n, intervals: nn, fixed0, fixed1, p_off, q_off, xi1_off, ncols, nodes, rows, steps, g_vals })
    }

    fn nonneg(&self) -> Vec<bool> {
        let mut mask = vec![false; self.ncols];
        for (sys, &q) in self.nodes.iter().zip(&self.q_off) {
            for (c, col) in sys.cols.iter().enumerate() {
                mask[q + c] = col.nonneg;
            }
        }
        mask
    }

    /// Sparse system with column `anchor.0` fixed to `anchor.1` and moved to the right-hand side.
    fn sparse(&self, anchor: Option<(usize, T)>) -> Result<SparseRows<T>> {
        let mut sys = SparseRows::new(self.ncols);
        for (e, b, _) in &self.rows {
            let mut b = *b;
            let mut e = e.clone();
            if let Some((a, v)) = anchor {
                e.retain(|&(j, c)| {
                    if j == a {
                        b -= c * v;
                    }
                    j != a
                });
            }
            sys.push(e, b)?;
        }
        Ok(sys)
    }

    fn solve(&self, anchor: Option<(usize, T)>, ridge: T) -> Result<Vec<T>> {
        let mask = self.nonneg();
        let warm = vec![true; self.ncols];
        let sol = structured_nnls(&self.sparse(anchor)?, &mask, ridge, Some(&warm))?;
        let mut y = sol.x;
        if let Some((a, v)) = anchor {
            y[a] = v;
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Solver("multiplier least squares returned non-finite values".into()));
        }
        Ok(y)
    }

    /// Row defects `A y − b`, with x-rows divided by their step.
    fn defects(&self, y: &[T]) -> (T, T, T, T) {
        let (mut ex, mut eu, mut tr, mut sq) = (T::zero(), T::zero(), T::zero(), T::zero());
        for (e, b, kind) in &self.rows {
            let r = e.iter().map(|&(j, c)| c * y[j]).sum::<T>() - *b;
            sq += r * r;
            match kind {
                RowKind::X { k } => ex = ex.max((r / self.steps[*k]).abs()),
                RowKind::U => eu = eu.max(r.abs()),
                RowKind::Ends => tr = tr.max(r.abs()),
            }
        }
        (ex, eu, tr, sq.sqrt())
    }

    fn reconstruction(&self, y: &[T], lambda0: u8, eps_act: f64, anchor: Option<String>) -> Reconstruction<T> {
        let (n, nn) = (self.n, self.intervals);
        let p: Vec<Vec<T>> = self.p_off.iter().map(|&o| y[o..o + n].to_vec()).collect();
        let (mut lam, mut varpi, mut eta) = (Vec::with_capacity(nn), Vec::with_capacity(nn), Vec::with_capacity(nn));
        for (sys, &q) in self.nodes.iter().zip(&self.q_off) {
            let w = &y[q..q + sys.cols.len()];
            let (agg, _) = sys.aggregate(w);
            lam.push(agg[..sys.l].to_vec());
            varpi.push(agg[sys.l..].to_vec());
            let mut e = vec![T::zero(); sys.m];
            for (col, &wc) in sys.cols.iter().zip(w) {
                if let ColumnKind::Face { j, upper } = col.kind {
                    e[j] += if upper { wc } else { -wc };
                }
            }
            eta.push(e);
        }
        let mut xi0 = vec![T::zero(); n];
        for (c, &i) in self.fixed0.iter().enumerate() {
            xi0[i] = y[c];
        }
        let mut xi1 = vec![T::zero(); n];
        for (c, &i) in self.fixed1.iter().enumerate() {
            xi1[i] = y[self.xi1_off + c];
        }
        let arc = MultiplierArc { lambda0, p, lam, varpi, xi0, xi1 };
        let comp_slack = arc.lam.iter().zip(&self.g_vals).flat_map(|(lk, gk)| lk.iter().zip(gk).map(|(&a, &b)| (a * b).abs())).fold(T::zero(), T::max);
        let nonneg = if arc.lam.iter().all(|r| r.is_empty()) { T::zero() } else { arc.min_lambda() };
        let (euler_x, euler_u, transversality, lsq) = self.defects(y);
        let residuals = Residuals { euler_x, euler_u, transversality, comp_slack, nonneg, nontriviality: arc.nontriviality() };
        Reconstruction { arc, eta, residuals, eps_act, lsq_residual: lsq, anchor }
    }
}

/// Reconstructs `(p, λ, ϖ, ξ)` for a fixed `λ0`. With `λ0 = 0` every
/// endpoint adjoint coordinate is anchored to `±1` in turn; the best
/// anchored solution is rescaled to `max_k ‖p_k‖∞ = 1`.
pub fn reconstruct_multipliers<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, lambda0: u8, opts: &NcOptions) -> Result<Reconstruction<T>> {
    let eps_act = opts.activity_tolerance(traj);
    let sys = AdjointSystem::build(ps, traj, lambda0, T::lit(eps_act))?;
    let ridge = T::lit(opts.ridge);
    if lambda0 == 1 {
        let y = sys.solve(None, ridge)?;
        return Ok(sys.reconstruction(&y, 1, eps_act, None));
    }
    let (n, nn) = (ps.n, sys.intervals);
    let mut best: Option<(T, Vec<T>, String)> = None;
    for (node, label) in [(0, "p0"), (nn, "pN")] {
        for i in 0..n {
            for sign in [T::one(), -T::one()] {
                let col = sys.p_off[node] + i;
                let y = sys.solve(Some((col, sign)), ridge)?;
                let pmax = sys.p_off.iter().flat_map(|&o| y[o..o + n].iter()).fold(T::zero(), |a, &v| a.max(v.abs()));
                let y: Vec<T> = y.iter().map(|&v| v / pmax).collect();
                let (_, _, _, lsq) = sys.defects(&y);
                let name = format!("{label}[{}] = {}", i + 1, if sign > T::zero() { "+1" } else { "-1" });
                if best.as_ref().is_none_or(|b| lsq < b.0) {
                    best = Some((lsq, y, name));
                }
            }
        }
    }
    let (_, y, name) = best.ok_or_else(|| Error::Internal("no anchor candidates".into()))?;
    Ok(sys.reconstruction(&y, 0, eps_act, Some(name)))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct WeierstrassWitness<T: Real> {
    pub t: T,
    pub node: usize,
    pub u: Vec<T>,
    pub margin: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct WeierstrassReport<T: Real> {
    /// Largest `H(u) − H(u_k)` over admissible comparison controls.
    pub margin: T,
    pub witness: Option<WeierstrassWitness<T>>,
    pub samples: usize,
    pub tolerance: T,
    pub holds: bool,
}

fn comparison_box<T: Real>(ps: &ProblemSpec, u: &[T], hw: T) -> (Vec<T>, Vec<T>) {
    let lo = u.iter().enumerate().map(|(j, &c)| ps.u_box.lo::<T>(j).max(c - hw)).collect();
    let hi = u.iter().enumerate().map(|(j, &c)| ps.u_box.hi::<T>(j).min(c + hw)).collect();
    (lo, hi)
}

fn comparison_grid<T: Real>(lo: &[T], hi: &[T], per_axis: usize) -> Vec<Vec<T>> {
    let mut out = vec![Vec::new()];
    for (&a, &b) in lo.iter().zip(hi) {
        let pts: Vec<T> = (0..per_axis).map(|i| a + (b - a) * T::of(i) / T::of(per_axis - 1)).collect();
        out = out.into_iter().flat_map(|prefix| pts.iter().map(move |&v| [prefix.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Samples comparison controls at every node and reports the worst
/// Hamiltonian gain `⟨p_{k+1}, φ(x_k, u)⟩ − λ0 F(x_k, u)` over the candidate
/// control, restricted to feasible `u` whose velocity lies within `R_k`.
pub fn check_weierstrass<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, arc: &MultiplierArc<T>, radius: &RadiusProfile, opts: &NcOptions) -> Result<WeierstrassReport<T>> {
    traj.validate(ps)?;
    let nn = traj.intervals();
    if arc.p.len() != nn + 1 || arc.p.iter().any(|r| r.len() != ps.n) {
        return Err(Error::Dimension("multiplier arc does not match the trajectory".into()));
    }
    let m = ps.m;
    let per_axis = match m {
        0 => 0,
        1..=3 => {
            let cap = (opts.grid_points * opts.grid_points) as f64;
            (opts.grid_points as f64).min(cap.powf(1.0 / m as f64).floor()).max(2.0) as usize
        }
        _ => 0,
    };
    let l0 = T::of(arc.lambda0 as usize);
    let filter = T::lit(opts.feas_filter);
    let hw = T::lit(opts.halfwidth);
    let per_node: Vec<Result<(T, Vec<T>, usize)>> = (0..nn)
        .into_par_iter()
        .map(|k| {
            let t = traj.grid[k];
            let x = &traj.x[k];
            let us = &traj.u[k];
            let p = &arc.p[k + 1];
            let ham = |u: &[T]| -> Result<(T, Vec<T>)> {
                let z = EvalPoint::new(t, x.clone(), u.to_vec());
                let v = ps.dynamics(&z)?;
                let val = p.iter().zip(&v).map(|(&a, &b)| a * b).sum::<T>() - l0 * ps.running_cost.evaluate(&z)?;
                Ok((val, v))
            };
            let (h_star, v_star) = ham(us)?;
            let r = T::lit(radius.at(k));
            let (lo, hi) = comparison_box(ps, us, hw);
            let mut cands = if per_axis > 0 { comparison_grid(&lo, &hi, per_axis) } else { Vec::new() };
            let mut rng = stream_rng(opts.seed, k as u64);
            for _ in 0..opts.control_samples {
                cands.push(lo.iter().zip(&hi).map(|(&a, &b)| a + (b - a) * T::lit(rng.gen::<f64>())).collect());
            }
            let (mut worst, mut arg, mut used) = (T::zero(), us.clone(), 0usize);
            for u in cands {
                let z = EvalPoint::new(t, x.clone(), u.clone());
                let Ok((g, h)) = ps.constraint_values(&z) else { continue };
                if g.iter().any(|&v| !(v <= filter)) || h.iter().any(|&v| !(v.abs() <= filter)) {
                    continue;
                }
                let Ok((val, v)) = ham(&u) else { continue };
                let dv: Vec<T> = v.iter().zip(&v_star).map(|(&a, &b)| a - b).collect();
                if !(norm2(&dv) < r) || !val.is_finite() {
                    continue;
                }
                used += 1;
                if val - h_star > worst {
                    worst = val - h_star;
                    arg = u;
                }
            }
            Ok((worst, arg, used))
        })
        .collect();
    let mut margin = T::zero();
    let mut witness = None;
    let mut samples = 0;
    for (k, r) in per_node.into_iter().enumerate() {
        let (w, u, used) = r?;
        samples += used;
        if w > margin {
            margin = w;
            witness = Some(WeierstrassWitness { t: traj.grid[k], node: k, u, margin: w });
        }
    }
    let tolerance = T::lit(opts.tol_weierstrass) + T::lit(opts.weierstrass_allowance) * traj.max_step();
    Ok(WeierstrassReport { margin, witness, samples, tolerance, holds: margin <= tolerance })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct CqPoint<T: Real> {
    pub t: T,
    pub side: ClusterSide,
    pub verdict: CqVerdict<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct CqAlongTrajectory<T: Real> {
    pub points_checked: usize,
    pub wbcq_holds: bool,
    /// WBCQ verdicts at the cluster points where it fails (or is undecided).
    pub wbcq_exceptions: Vec<CqPoint<T>>,
    pub calmness: CqVerdict<T>,
}

fn cq_along_trajectory<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, eps_act: T) -> Result<CqAlongTrajectory<T>> {
    let cps = enumerate_cluster_points(ps, traj, T::tol(1e-9))?;
    let nn = traj.intervals();
    let verdicts = cps
        .par_iter()
        .map(|cp| -> Result<CqPoint<T>> {
            let k = traj.grid.iter().position(|&g| g == cp.t).unwrap_or(0);
            let u = match cp.side {
                ClusterSide::Left => &traj.u[k - 1],
                _ => &traj.u[k.min(nn - 1)],
            };
            let z = EvalPoint::new(cp.t, cp.x.clone(), u.clone());
            Ok(CqPoint { t: cp.t, side: cp.side, verdict: check_pointwise_cq(CqKind::Wbcq, ps, &z, eps_act)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let points_checked = verdicts.len();
    let wbcq_exceptions: Vec<CqPoint<T>> = verdicts.into_iter().filter(|p| p.verdict.holds != Some(true)).collect();
    let z0 = traj.node(0);
    Ok(CqAlongTrajectory { points_checked, wbcq_holds: wbcq_exceptions.is_empty(), wbcq_exceptions, calmness: check_structural_calmness(ps, &z0) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct NcCertificate<T: Real> {
    pub lambda0: u8,
    pub multipliers: MultiplierArc<T>,
    pub eta: Vec<Vec<T>>,
    pub residuals: Residuals<T>,
    pub weierstrass: WeierstrassReport<T>,
    pub cq_along_trajectory: Option<CqAlongTrajectory<T>>,
    pub verdict: Verdict,
    pub failing: Vec<String>,
    pub eps_act: f64,
    pub anchor: Option<String>,
    /// `λ0` branches that were tried, in order.
    pub branches_tried: Vec<u8>,
    pub note: String,
}

fn failing_clauses<T: Real>(rec: &Reconstruction<T>, w: &WeierstrassReport<T>, opts: &NcOptions) -> Vec<String> {
    let r = &rec.residuals;
    let tol = T::lit(opts.tol_residual);
    let lam_max = rec.arc.lam.iter().flatten().fold(T::one(), |a, &v| a.max(v));
    let mut out = Vec::new();
    let mut check = |ok: bool, name: &str| {
        if !ok {
            out.push(name.to_string());
        }
    };
    check(r.euler_x <= tol, "euler_x");
    check(r.euler_u <= tol, "euler_u");
    check(r.transversality <= tol, "transversality");
    check(r.comp_slack <= T::lit(rec.eps_act) * lam_max, "comp_slack");
    check(r.nonneg >= -T::lit(rec.eps_act), "nonneg");
    check(r.nontriviality >= T::one() - T::tol(1e-12), "nontriviality");
    check(w.holds, "weierstrass");
    out
}

/// Runs the `λ0 = 1` branch and, unless every terminal coordinate is free,
/// the abnormal `λ0 = 0` branch, and assembles the certificate.
pub fn certify<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, radius: &RadiusProfile, opts: &NcOptions) -> Result<NcCertificate<T>> {
    let mut branches = vec![1u8];
    let rec1 = reconstruct_multipliers(ps, traj, 1, opts)?;
    let w1 = check_weierstrass(ps, traj, &rec1.arc, radius, opts)?;
    let fail1 = failing_clauses(&rec1, &w1, opts);
    let (rec, w, failing) = if fail1.is_empty() || ps.terminal_free() {
        (rec1, w1, fail1)
    } else {
        branches.push(0);
        let rec0 = reconstruct_multipliers(ps, traj, 0, opts)?;
        let w0 = check_weierstrass(ps, traj, &rec0.arc, radius, opts)?;
        let fail0 = failing_clauses(&rec0, &w0, opts);
        if fail0.is_empty() {
            (rec0, w0, fail0)
        } else {
            (rec1, w1, fail1)
        }
    };
    let cq = if opts.check_cq { Some(cq_along_trajectory(ps, traj, T::lit(rec.eps_act))?) } else { None };
    let verdict = if failing.is_empty() { Verdict::Pass } else { Verdict::Fail };
    let mut note = String::from("necessary conditions only: a pass does not certify optimality");
    if ps.terminal_free() {
        note.push_str("; x(t1) is free, so lambda0 = 1");
    }
    if let Some(cq) = &cq {
        if !cq.wbcq_holds || cq.calmness.holds != Some(true) {
            note.push_str("; constraint qualifications along the trajectory are not all confirmed");
        }
    }
    Ok(NcCertificate {
        lambda0: rec.arc.lambda0,
        multipliers: rec.arc,
        eta: rec.eta,
        residuals: rec.residuals,
        weierstrass: w,
        cq_along_trajectory: cq,
        verdict,
        failing,
        eps_act: rec.eps_act,
        anchor: rec.anchor,
        branches_tried: branches,
        note,
    })
}
