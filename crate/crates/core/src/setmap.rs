//! The velocity set `Γ(x) = {φ(x, u) : u ∈ U, g(x, u) ≤ 0, h(x, u) = 0}`:
//! pseudo-Lipschitz certificate and estimates, bounded-slope constant,
//! tempered growth and admissible cluster points of a trajectory.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cq::{check_pointwise_cq, check_structural_calmness, estimate_error_bound, CqKind, CqVerdict, ErrorBoundOptions, MultiplierSystem};
use crate::error::{Error, Result};
use crate::expr::EvalPoint;
use crate::localopt::{solve_al, AlOptions, NlpProblem};
use crate::model::{ProblemSpec, Radius, Trajectory};
use crate::nonsmooth::DEFAULT_EPS_ACT;
use crate::numkernel::{LinearProgram, LpStatus, RowSense};
use crate::rng::{stream_rng, uniform_ball, uniform_box};
use crate::scalar::{norm2, norm_inf, Real};

/// Residual below which a point counts as a member of `M(0)`.
pub const FEAS_TOL: f64 = 1e-8;
const MEMBER_ATTEMPTS: usize = 16;
/// Total grid size used by the distance fallback.
const GRID_BUDGET: usize = 201 * 201;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RadiusKind {
    Constant,
    Infinite,
}

/// Radius `R_k ∈ (0, ∞]` at each grid node.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusProfile {
    pub values: Vec<f64>,
    pub provenance: RadiusKind,
}

impl RadiusProfile {
    pub fn new(radius: Radius, nodes: usize) -> Result<Self> {
        match radius {
            Radius::Infinite => Ok(Self { values: vec![f64::INFINITY; nodes], provenance: RadiusKind::Infinite }),
            Radius::Constant(r) if r > 0.0 => Ok(Self { values: vec![r; nodes], provenance: RadiusKind::Constant }),
            Radius::Constant(r) => Err(Error::Invariant { path: "R".into(), message: format!("radius must be positive, got {r}") }),
        }
    }

    pub fn at(&self, k: usize) -> f64 {
        self.values[k.min(self.values.len() - 1)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplingOptions {
    pub samples: usize,
    pub seed: u64,
    /// Local solves per distance evaluation.
    pub starts: usize,
    /// Half-width of the control search box around the reference control.
    pub halfwidth: f64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { samples: 64, seed: 0, starts: 16, halfwidth: 10.0 }
    }
}

enum Objective<T> {
    /// `½‖φ(x, u) − v‖²`.
    Velocity(Vec<T>),
    /// `½‖w − anchor‖²` over the free variables.
    Anchor(Vec<T>),
}

/// Local search over `u` (state fixed) or over `(x, u)` jointly.
struct Search<'a, T: Real> {
    ps: &'a ProblemSpec,
    t: T,
    fixed_x: Option<Vec<T>>,
    objective: Objective<T>,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<'a, T: Real> Search<'a, T> {
    fn new(ps: &'a ProblemSpec, t: T, fixed_x: Option<Vec<T>>, objective: Objective<T>) -> Self {
        let nx = if fixed_x.is_some() { 0 } else { ps.n };
        let mut lo = vec![T::neg_infinity(); nx];
        let mut hi = vec![T::infinity(); nx];
        lo.extend((0..ps.m).map(|j| ps.u_box.lo::<T>(j)));
        hi.extend((0..ps.m).map(|j| ps.u_box.hi::<T>(j)));
        Self { ps, t, fixed_x, objective, lo, hi }
    }

    fn point(&self, w: &[T]) -> EvalPoint<T> {
        match &self.fixed_x {
            Some(x) => EvalPoint::new(self.t, x.clone(), w.to_vec()),
            None => EvalPoint::from_z(self.t, w, self.ps.n),
        }
    }

    fn offset(&self) -> usize {
        if self.fixed_x.is_some() {
            self.ps.n
        } else {
            0
        }
    }

    fn run(&self, w0: &[T]) -> Option<Vec<T>> {
        let opts = AlOptions { feas_tol: FEAS_TOL * 1e-2, opt_tol: 1e-8, max_outer: 20, max_inner: 5000, ..AlOptions::default() };
        let (w, _) = solve_al(self, w0, &opts).ok()?;
        let p = self.point(&w);
        (self.ps.feasibility_residual(&p).ok()? <= T::lit(FEAS_TOL)).then_some(w)
    }
}

impl<T: Real> NlpProblem<T> for Search<'_, T> {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn lower(&self) -> &[T] {
        &self.lo
    }
    fn upper(&self) -> &[T] {
        &self.hi
    }
    fn eval(&self, w: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
        let p = self.point(w);
        let half = T::lit(0.5);
        let f = match &self.objective {
            Objective::Velocity(v) => {
                let phi = self.ps.dynamics(&p)?;
                half * phi.iter().zip(v).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>()
            }
            Objective::Anchor(a) => half * w.iter().zip(a).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>(),
        };
        let (g, h) = self.ps.constraint_values(&p)?;
        Ok((f, h, g))
    }
    fn grad_combination(&self, w: &[T], wf: T, w_eq: &[T], w_in: &[T]) -> Result<Vec<T>> {
        let p = self.point(w);
        let off = self.offset();
        let mut out = vec![T::zero(); w.len()];
        let add = |out: &mut [T], grad: &[T], c: T| {
            for (o, &d) in out.iter_mut().zip(&grad[off..]) {
                *o += c * d;
            }
        };
        match &self.objective {
            Objective::Velocity(v) => {
                for (e, &vr) in self.ps.phi.iter().zip(v) {
                    let gr = e.gradient(&p)?;
                    add(&mut out, gr.z(), wf * (gr.value - vr));
                }
            }
            Objective::Anchor(a) => {
                for ((o, &x), &y) in out.iter_mut().zip(w).zip(a) {
                    *o += wf * (x - y);
                }
            }
        }
        for (e, &c) in self.ps.h.iter().zip(w_eq).chain(self.ps.g.iter().zip(w_in)) {
            if c != T::zero() {
                add(&mut out, e.gradient(&p)?.z(), c);
            }
        }
        Ok(out)
    }
}

/// Control search box `U ∩ [c − hw, c + hw]`.
fn search_box<T: Real>(ps: &ProblemSpec, center: &[T], hw: T) -> (Vec<T>, Vec<T>) {
    let lo = (0..ps.m).map(|j| ps.u_box.lo::<T>(j).max(center[j] - hw)).collect();
    let hi = (0..ps.m).map(|j| ps.u_box.hi::<T>(j).min(center[j] + hw)).collect();
    (lo, hi)
}

fn residual<T: Real>(ps: &ProblemSpec, t: T, x: &[T], u: &[T]) -> Result<T> {
    ps.feasibility_residual(&EvalPoint::new(t, x.to_vec(), u.to_vec()))
}

/// Random control around the search box, widened by a quarter of its width
/// and clipped to `U` so box faces carry positive probability, then moved
/// onto the constraint set when infeasible.
fn sample_member<T: Real, R: Rng>(ps: &ProblemSpec, t: T, x: &[T], bx: &(Vec<T>, Vec<T>), rng: &mut R) -> Result<Option<Vec<T>>> {
    let quarter = T::lit(0.25);
    let lo: Vec<T> = bx.0.iter().zip(&bx.1).map(|(&a, &b)| a - quarter * (b - a)).collect();
    let hi: Vec<T> = bx.0.iter().zip(&bx.1).map(|(&a, &b)| b + quarter * (b - a)).collect();
    let u = ps.u_box.project(&uniform_box(rng, &lo, &hi));
    if residual(ps, t, x, &u)? <= T::lit(FEAS_TOL) {
        return Ok(Some(u));
    }
    Ok(Search::new(ps, t, Some(x.to_vec()), Objective::Anchor(u.clone())).run(&u))
}

fn grid_axis(m: usize) -> usize {
    let mut k = 201usize;
    while m > 0 && k.pow(m as u32) > GRID_BUDGET {
        k -= 1;
    }
    k.max(2)
}

/// Feasible grid control closest in velocity to `v`.
fn grid_best<T: Real>(ps: &ProblemSpec, t: T, x: &[T], v: &[T], bx: &(Vec<T>, Vec<T>)) -> Result<Option<(T, Vec<T>)>> {
    let m = ps.m;
    let k = grid_axis(m);
    let mut best: Option<(T, Vec<T>)> = None;
    let mut u = vec![T::zero(); m];
    for mut code in 0..k.pow(m as u32) {
        for (j, uj) in u.iter_mut().enumerate() {
            let i = code % k;
            code /= k;
            *uj = bx.0[j] + (bx.1[j] - bx.0[j]) * T::of(i) / T::of(k - 1);
        }
        if residual(ps, t, x, &u)? <= T::lit(FEAS_TOL) {
            let phi = ps.dynamics(&EvalPoint::new(t, x.to_vec(), u.clone()))?;
            let d = norm2(&phi.iter().zip(v).map(|(&a, &b)| a - b).collect::<Vec<T>>());
            if best.as_ref().is_none_or(|(b, _)| d < *b) {
                best = Some((d, u.clone()));
            }
        }
    }
    Ok(best)
}

/// `dist(v, Γ(x))` restricted to the search box around `u_ref`, with the
/// minimizing control; `None` when no feasible control was found.
pub fn velocity_distance<T: Real>(ps: &ProblemSpec, t: T, x: &[T], v: &[T], u_ref: &[T], opts: &SamplingOptions, stream: u64) -> Result<Option<(T, Vec<T>)>> {
    let bx = search_box(ps, u_ref, T::lit(opts.halfwidth));
    let mut best = if ps.m <= 3 { grid_best(ps, t, x, v, &bx)? } else { None };
    let search = Search::new(ps, t, Some(x.to_vec()), Objective::Velocity(v.to_vec()));
    let mut starts = vec![ps.u_box.project(u_ref)];
    if let Some((_, u)) = &best {
        starts.push(u.clone());
    }
    let mut rng = stream_rng(opts.seed ^ 0x5eed, stream);
    while starts.len() < opts.starts.max(1) {
        starts.push(uniform_box(&mut rng, &bx.0, &bx.1));
    }
    for u0 in starts {
        if let Some(u) = search.run(&u0) {
            let phi = ps.dynamics(&EvalPoint::new(t, x.to_vec(), u.clone()))?;
            let d = norm2(&phi.iter().zip(v).map(|(&a, &b)| a - b).collect::<Vec<T>>());
            if best.as_ref().is_none_or(|(b, _)| d < *b) {
                best = Some((d, u));
            }
        }
    }
    Ok(best)
}

/// Sub-verdicts behind the pseudo-Lipschitz certificate for `Γ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct GammaPlCertificate<T: Real> {
    pub holds: bool,
    pub wbcq: CqVerdict<T>,
    pub calmness: CqVerdict<T>,
    pub error_bound: Option<CqVerdict<T>>,
}

/// `Γ` is pseudo-Lipschitz around `(x̄, φ(x̄, ū))` when WBCQ holds at `z`
/// and `M` is calm there (structurally, or by a stable error-bound estimate).
pub fn certify_gamma_pl<T: Real>(ps: &ProblemSpec, z: &EvalPoint<T>, eb: &ErrorBoundOptions) -> Result<GammaPlCertificate<T>> {
    let wbcq = check_pointwise_cq(CqKind::Wbcq, ps, z, T::lit(DEFAULT_EPS_ACT))?;
    let calmness = check_structural_calmness(ps, z);
    let error_bound = if calmness.holds() { None } else { Some(estimate_error_bound(ps, z, eb)?) };
    let calm = calmness.holds() || error_bound.as_ref().is_some_and(CqVerdict::holds);
    Ok(GammaPlCertificate { holds: wbcq.holds() && calm, wbcq, calmness, error_bound })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct PlPair<T: Real> {
    pub x: Vec<T>,
    pub x_prime: Vec<T>,
    pub v: Vec<T>,
    pub ratio: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct PlEstimate<T: Real> {
    pub k_hat: T,
    pub pairs: usize,
    /// Samples where `Γ(x) ∩ B(v_center, R)` or `Γ(x')` came up empty.
    pub empty: usize,
    pub attaining: Option<PlPair<T>>,
}

/// `k̂ = max dist(v, Γ(x')) / ‖x − x'‖` over `x, x' ∈ B(x_center, eps)` and
/// `v ∈ Γ(x) ∩ B(v_center, R)`; controls are searched around `u_hint`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_pl_modulus<T: Real>(
    ps: &ProblemSpec,
    t: T,
    x_center: &[T],
    v_center: &[T],
    eps: T,
    radius: T,
    u_hint: &[T],
    opts: &SamplingOptions,
) -> Result<PlEstimate<T>> {
    if !(eps > T::zero()) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    if x_center.len() != ps.n || v_center.len() != ps.n || u_hint.len() != ps.m {
        return Err(Error::Dimension("estimate_pl_modulus: center lengths do not match (n, m)".into()));
    }
    let bx = search_box(ps, u_hint, T::lit(opts.halfwidth));
    let results: Vec<Option<PlPair<T>>> = (0..opts.samples as u64)
        .into_par_iter()
        .map(|k| -> Result<Option<PlPair<T>>> {
            let mut rng = stream_rng(opts.seed, k);
            let x = uniform_ball(&mut rng, x_center, eps);
            let xp = uniform_ball(&mut rng, x_center, eps);
            let mut member = None;
            for _ in 0..MEMBER_ATTEMPTS {
                if let Some(u) = sample_member(ps, t, &x, &bx, &mut rng)? {
                    let v = ps.dynamics(&EvalPoint::new(t, x.clone(), u.clone()))?;
                    let off: Vec<T> = v.iter().zip(v_center).map(|(&a, &b)| a - b).collect();
                    if norm2(&off) <= radius {
                        member = Some((u, v));
                        break;
                    }
                }
            }
            let Some((u, v)) = member else { return Ok(None) };
            let Some((d, _)) = velocity_distance(ps, t, &xp, &v, &u, opts, k)? else { return Ok(None) };
            let dx = norm2(&x.iter().zip(&xp).map(|(&a, &b)| a - b).collect::<Vec<T>>());
            let ratio = if dx > T::zero() { d / dx } else { T::zero() };
            Ok(Some(PlPair { x, x_prime: xp, v, ratio }))
        })
        .collect::<Result<_>>()?;
    let empty = results.iter().filter(|r| r.is_none()).count();
    let attaining = results.into_iter().flatten().fold(None::<PlPair<T>>, |best, p| match best {
        Some(b) if b.ratio >= p.ratio => Some(b),
        _ => Some(p),
    });
    Ok(PlEstimate { k_hat: attaining.as_ref().map_or(T::zero(), |p| p.ratio), pairs: opts.samples - empty, empty, attaining })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct SlopeWitness<T: Real> {
    pub t: T,
    pub x: Vec<T>,
    pub u: Vec<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct BoundedSlope<T: Real> {
    /// Largest sampled slope; infinite when some LP was unbounded.
    pub k_hat: T,
    pub bounded: bool,
    /// `min_k R_k / k̂`, infinite when `k̂ = 0`.
    pub margin: T,
    pub samples: usize,
    pub witness: Option<SlopeWitness<T>>,
}

/// `max ‖α‖∞` over `(α, β)` generated by the multiplier cone at `(x, u)`
/// with `‖β‖∞ ≤ 1`; `None` when unbounded.
fn slope_at<T: Real>(ps: &ProblemSpec, p: &EvalPoint<T>) -> Result<Option<T>> {
    let sys = MultiplierSystem::build(ps, p, T::lit(DEFAULT_EPS_ACT))?;
    let (n, m) = (ps.n, ps.m);
    let jphi: Vec<Vec<T>> = ps.phi.iter().map(|e| e.gradient(p).map(|g| g.z().to_vec())).collect::<Result<_>>()?;
    let nc = sys.cols.len();
    let mut best = T::zero();
    for i in 0..n {
        for sign in [T::one(), -T::one()] {
            let mut obj: Vec<T> = sys.cols.iter().map(|c| sign * c.x[i]).collect();
            obj.extend(jphi.iter().map(|g| -sign * g[i]));
            let mut lp = LinearProgram::new(nc + n).maximize(obj);
            for (c, col) in sys.cols.iter().enumerate() {
                if !col.nonneg {
                    lp.set_bounds(c, T::neg_infinity(), T::infinity());
                }
            }
            for r in 0..n {
                lp.set_bounds(nc + r, -T::one(), T::one());
            }
            for j in 0..m {
                let mut row: Vec<T> = sys.cols.iter().map(|c| c.u[j]).collect();
                row.extend(jphi.iter().map(|g| -g[n + j]));
                lp.push_row(row, RowSense::Eq, T::zero());
            }
            let sol = lp.solve()?;
            match sol.status {
                LpStatus::Optimal => best = best.max(sol.objective),
                LpStatus::Unbounded => return Ok(None),
                LpStatus::Infeasible => return Err(Error::Internal("slope LP infeasible at the origin".into())),
            }
        }
    }
    Ok(Some(best))
}

fn node_control<T: Real>(traj: &Trajectory<T>, k: usize) -> &[T] {
    &traj.u[k.min(traj.intervals() - 1)]
}

fn node_velocity<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, k: usize) -> Result<Vec<T>> {
    ps.dynamics(&EvalPoint::new(traj.grid[k], traj.x[k].clone(), node_control(traj, k).to_vec()))
}

fn require_smooth(ps: &ProblemSpec) -> Result<()> {
    if ps.phi.iter().chain(&ps.g).chain(&ps.h).any(|e| !e.is_smooth()) {
        return Err(Error::Unsupported("bounded-slope estimate needs smooth phi, g and h".into()));
    }
    Ok(())
}

/// Bounded-slope constant along `traj`: the trajectory nodes themselves plus
/// `opts.samples` feasible points `(x, u)` with `‖x − x*(t)‖ ≤ eps` and
/// `‖φ(x, u) − ẋ*(t)‖ ≤ R(t)`.
pub fn estimate_bounded_slope<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, eps: T, radius: &RadiusProfile, opts: &SamplingOptions) -> Result<BoundedSlope<T>> {
    require_smooth(ps)?;
    traj.validate(ps)?;
    let nodes = traj.grid.len();
    let total = nodes + opts.samples;
    let hw = T::lit(opts.halfwidth);
    let results: Vec<Option<(T, usize, SlopeWitness<T>)>> = (0..total)
        .into_par_iter()
        .map(|s| -> Result<Option<(T, usize, SlopeWitness<T>)>> {
            let k = s % nodes;
            let t = traj.grid[k];
            let (xs, us) = (&traj.x[k], node_control(traj, k));
            let (x, u) = if s < nodes {
                (xs.clone(), us.to_vec())
            } else {
                let mut rng = stream_rng(opts.seed, s as u64);
                let x0 = uniform_ball(&mut rng, xs, eps);
                let bx = search_box(ps, us, hw);
                let u0 = ps.u_box.project(&uniform_box(&mut rng, &bx.0, &bx.1));
                if residual(ps, t, &x0, &u0)? <= T::lit(FEAS_TOL) {
                    (x0, u0)
                } else {
                    let anchor: Vec<T> = x0.iter().chain(&u0).copied().collect();
                    let Some(w) = Search::new(ps, t, None, Objective::Anchor(anchor.clone())).run(&anchor) else { return Ok(None) };
                    (w[..ps.n].to_vec(), w[ps.n..].to_vec())
                }
            };
            let dx = norm2(&x.iter().zip(xs).map(|(&a, &b)| a - b).collect::<Vec<T>>());
            let p = EvalPoint::new(t, x.clone(), u.clone());
            if dx > eps * T::lit(1.0 + 1e-9) || residual(ps, t, &x, &u)? > T::lit(FEAS_TOL) {
                return Ok(None);
            }
            let vstar = node_velocity(ps, traj, k)?;
            let dv = norm2(&ps.dynamics(&p)?.iter().zip(&vstar).map(|(&a, &b)| a - b).collect::<Vec<T>>());
            if dv > T::lit(radius.at(k)) {
                return Ok(None);
            }
            let slope = slope_at(ps, &p)?.unwrap_or(T::infinity());
            Ok(Some((slope, k, SlopeWitness { t, x, u })))
        })
        .collect::<Result<_>>()?;
    let used: Vec<_> = results.into_iter().flatten().collect();
    let samples = used.len();
    let mut k_hat = T::zero();
    let mut witness = None;
    let mut visited = vec![false; nodes];
    for (slope, k, w) in used {
        visited[k] = true;
        if slope > k_hat {
            k_hat = slope;
            witness = Some(w);
        }
    }
    let rmin = (0..nodes).filter(|&k| visited[k]).map(|k| radius.at(k)).fold(f64::INFINITY, f64::min);
    let margin = if k_hat > T::zero() { T::lit(rmin) / k_hat } else { T::infinity() };
    Ok(BoundedSlope { k_hat, bounded: k_hat.is_finite(), margin, samples, witness: if k_hat.is_finite() { None } else { witness } })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct TemperedGrowth<T: Real> {
    pub holds: bool,
    /// Smallest `λ·R(t) − dist(ẋ*(t), Γ(x))` seen.
    pub r0: T,
    pub samples: usize,
    /// `(t, x)` where `Γ(x) ∩ B(ẋ*(t), λR(t))` came up empty.
    pub witness: Option<(T, Vec<T>)>,
}

/// Empirical tempered-growth check: `Γ(x) ∩ B(ẋ*(t), λ·R(t)) ≠ ∅` at the
/// trajectory nodes and at sampled `x ∈ B(x*(t), eps)`.
pub fn check_tempered_growth<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, eps: T, radius: &RadiusProfile, lambda_frac: f64, opts: &SamplingOptions) -> Result<TemperedGrowth<T>> {
    if !(lambda_frac > 0.0 && lambda_frac < 1.0) {
        return Err(Error::Domain(format!("lambda_frac must lie in (0, 1), got {lambda_frac}")));
    }
    traj.validate(ps)?;
    let nodes = traj.grid.len();
    let total = nodes + opts.samples;
    let lam = T::lit(lambda_frac);
    let results: Vec<(T, T, Vec<T>)> = (0..total)
        .into_par_iter()
        .map(|s| -> Result<(T, T, Vec<T>)> {
            let k = s % nodes;
            let t = traj.grid[k];
            let x = if s < nodes { traj.x[k].clone() } else { uniform_ball(&mut stream_rng(opts.seed, s as u64), &traj.x[k], eps) };
            let vstar = node_velocity(ps, traj, k)?;
            let allowed = lam * T::lit(radius.at(k));
            let margin = match velocity_distance(ps, t, &x, &vstar, node_control(traj, k), opts, s as u64)? {
                Some((d, _)) => allowed - d,
                None => T::neg_infinity(),
            };
            Ok((margin, t, x))
        })
        .collect::<Result<_>>()?;
    let mut r0 = T::infinity();
    let mut witness = None;
    for (margin, t, x) in results {
        if margin < r0 {
            r0 = margin;
            if margin < T::zero() {
                witness = Some((t, x));
            }
        }
    }
    Ok(TemperedGrowth { holds: r0 >= T::zero(), r0, samples: total, witness })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterSide {
    Diagonal,
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct ClusterPoint<T: Real> {
    pub t: T,
    pub x: Vec<T>,
    pub v: Vec<T>,
    pub side: ClusterSide,
}

/// Candidate admissible cluster points `(t, x*(t), v)`: one diagonal point per
/// node, or left and right velocities where the control or velocity jumps.
pub fn enumerate_cluster_points<T: Real>(ps: &ProblemSpec, traj: &Trajectory<T>, jump_tol: T) -> Result<Vec<ClusterPoint<T>>> {
    traj.validate(ps)?;
    let nn = traj.intervals();
    let mut out = Vec::with_capacity(nn + 1);
    for k in 0..=nn {
        let t = traj.grid[k];
        let x = &traj.x[k];
        let vel = |u: &[T]| ps.dynamics(&EvalPoint::new(t, x.clone(), u.to_vec()));
        if k == 0 || k == nn {
            out.push(ClusterPoint { t, x: x.clone(), v: vel(node_control(traj, k))?, side: ClusterSide::Diagonal });
            continue;
        }
        let (ul, ur) = (&traj.u[k - 1], &traj.u[k]);
        let (vl, vr) = (vel(ul)?, vel(ur)?);
        let du = norm_inf(&ul.iter().zip(ur).map(|(&a, &b)| a - b).collect::<Vec<T>>());
        let dv = norm_inf(&vl.iter().zip(&vr).map(|(&a, &b)| a - b).collect::<Vec<T>>());
        if du > jump_tol && dv > jump_tol {
            out.push(ClusterPoint { t, x: x.clone(), v: vl, side: ClusterSide::Left });
            out.push(ClusterPoint { t, x: x.clone(), v: vr, side: ClusterSide::Right });
        } else {
            out.push(ClusterPoint { t, x: x.clone(), v: vr, side: ClusterSide::Diagonal });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_problem;

    fn ps(json: &str) -> ProblemSpec {
        load_problem(json.as_bytes()).unwrap()
    }

    const EXAMPLE_B: &str = r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","f":"-x2","phi":["u1"],"g":["u1 - x1 - 1"],
        "E":{"x0":[{"fixed":0}],"x1":["free"]}}"#;

    fn b_traj(nn: usize) -> Trajectory<f64> {
        let h = 1.0 / nn as f64;
        let x: Vec<Vec<f64>> = (0..=nn).map(|k| vec![(1.0 + h).powi(k as i32) - 1.0]).collect();
        let u = x[..nn].iter().map(|r| vec![r[0] + 1.0]).collect();
        Trajectory { grid: Trajectory::uniform_grid(0.0, 1.0, nn), x, u }
    }

    #[test]
    fn pl_constant_map_is_zero() {
        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"U":{"lower":[-1],"upper":[1]}}"#);
        let e = estimate_pl_modulus(&p, 0.0, &[0.0], &[0.0], 0.1, f64::INFINITY, &[0.0], &SamplingOptions { samples: 24, ..Default::default() }).unwrap();
        assert!(e.k_hat.abs() < 1e-6 && e.empty == 0, "{e:?}");
    }

    #[test]
    fn pl_shifted_box_is_one() {
        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["x1 + u1"],"U":{"lower":[-1],"upper":[1]}}"#);
        let e = estimate_pl_modulus(&p, 0.0, &[0.0], &[0.0], 0.1, f64::INFINITY, &[0.0], &SamplingOptions { samples: 48, ..Default::default() }).unwrap();
        assert!((e.k_hat - 1.0).abs() < 0.1, "{e:?}");
    }

    #[test]
    fn pl_half_line_is_one() {
        let p = ps(EXAMPLE_B);
        let e = estimate_pl_modulus(&p, 0.0, &[0.0], &[1.0], 0.1, f64::INFINITY, &[1.0], &SamplingOptions { samples: 48, ..Default::default() }).unwrap();
        assert!((e.k_hat - 1.0).abs() < 0.1, "{e:?}");
    }

    #[test]
    fn gamma_certificate() {
        let z = EvalPoint::new(0.0, vec![0.5], vec![0.25, 0.75]);
        let p = ps(r#"{"n":1,"m":2,"t0":0,"t1":1,"F":"0","phi":["u1"],"h":["x1 + u1 - u2","2*x1 + 2*u1 - 2*u2"]}"#);
        assert!(certify_gamma_pl(&p, &z, &ErrorBoundOptions::default()).unwrap().holds);
        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"g":["x1"]}"#);
        let c = certify_gamma_pl(&p, &EvalPoint::new(0.0, vec![0.0], vec![0.0]), &ErrorBoundOptions::default()).unwrap();
        assert!(!c.holds && c.wbcq.fails());
        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["sin(x1) + u1"],"U":{"lower":[-1],"upper":[1]}}"#);
        assert!(certify_gamma_pl(&p, &EvalPoint::new(0.0, vec![0.3], vec![1.0]), &ErrorBoundOptions::default()).unwrap().holds);
    }

    #[test]
    fn bounded_slope_examples() {
        let opts = SamplingOptions { samples: 32, ..Default::default() };
        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"]}"#);
        let tr = Trajectory { grid: Trajectory::uniform_grid(0.0, 1.0, 4), x: (0..5).map(|k| vec![k as f64 / 4.0]).collect(), u: vec![vec![1.0]; 4] };
        let b = estimate_bounded_slope(&p, &tr, 0.1, &RadiusProfile::new(Radius::Infinite, 5).unwrap(), &opts).unwrap();
        assert!(b.k_hat == 0.0 && b.margin.is_infinite());

        let p = ps(EXAMPLE_B);
        let b = estimate_bounded_slope(&p, &b_traj(8), 0.1, &RadiusProfile::new(Radius::Constant(1.0), 9).unwrap(), &opts).unwrap();
        assert!(b.bounded && (b.k_hat - 1.0).abs() < 1e-9 && b.margin > 0.0, "{b:?}");

        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"g":["x1"]}"#);
        let tr = Trajectory { grid: Trajectory::uniform_grid(0.0, 1.0, 2), x: vec![vec![0.0]; 3], u: vec![vec![0.0]; 2] };
        let b = estimate_bounded_slope(&p, &tr, 0.1, &RadiusProfile::new(Radius::Infinite, 3).unwrap(), &opts).unwrap();
        assert!(!b.bounded && b.witness.is_some());
    }

    #[test]
    fn tempered_growth_examples() {
        let opts = SamplingOptions { samples: 16, ..Default::default() };
        let p = ps(EXAMPLE_B);
        let tg = check_tempered_growth(&p, &b_traj(8), 0.05, &RadiusProfile::new(Radius::Constant(1.0), 9).unwrap(), 0.5, &opts).unwrap();
        assert!(tg.holds && tg.r0 >= 0.45 - 1e-6, "{tg:?}");
        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"],"g":["u1 + 1","1 - u1"]}"#);
        let tr = Trajectory { grid: Trajectory::uniform_grid(0.0, 1.0, 2), x: vec![vec![0.0]; 3], u: vec![vec![0.0]; 2] };
        let tg = check_tempered_growth(&p, &tr, 0.05, &RadiusProfile::new(Radius::Constant(1.0), 3).unwrap(), 0.5, &opts).unwrap();
        assert!(!tg.holds && tg.witness.is_some());
        assert!(check_tempered_growth(&p, &tr, 0.05, &RadiusProfile::new(Radius::Constant(1.0), 3).unwrap(), 1.0, &opts).is_err());
    }

    #[test]
    fn cluster_points() {
        let p = ps(r#"{"n":1,"m":1,"t0":0,"t1":1,"F":"0","phi":["u1"]}"#);
        let tr = Trajectory { grid: Trajectory::uniform_grid(0.0, 1.0, 4), x: vec![vec![0.0], vec![0.0], vec![0.0], vec![0.25], vec![0.5]], u: vec![vec![0.0], vec![0.0], vec![1.0], vec![1.0]] };
        let c = enumerate_cluster_points(&p, &tr, 1e-9).unwrap();
        assert_eq!(c.len(), 6);
        let at_half: Vec<_> = c.iter().filter(|q| q.t == 0.5).collect();
        assert_eq!(at_half.len(), 2);
        assert_eq!((at_half[0].v[0], at_half[1].v[0]), (0.0, 1.0));
        let tr = Trajectory { grid: Trajectory::uniform_grid(0.0, 1.0, 4), x: (0..5).map(|k| vec![k as f64 / 4.0]).collect(), u: vec![vec![1.0]; 4] };
        let c = enumerate_cluster_points(&p, &tr, 1e-9).unwrap();
        assert!(c.len() == 5 && c.iter().all(|q| q.v == vec![1.0] && q.side == ClusterSide::Diagonal));
    }

    #[test]
    fn radius_profile() {
        assert!(RadiusProfile::new(Radius::Constant(0.0), 3).is_err());
        let r = RadiusProfile::new(Radius::Constant(2.0), 3).unwrap();
        assert_eq!((r.at(0), r.at(7), r.provenance), (2.0, 2.0, RadiusKind::Constant));
    }
}
