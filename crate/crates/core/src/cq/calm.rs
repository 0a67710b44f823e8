use rayon::prelude::*;

use super::{coord_name, CqKind, CqVerdict, Witness};
use crate::error::{Error, Result};
use crate::expr::{EvalPoint, Var};
use crate::localopt::{solve_al, AlOptions, NlpProblem};
use crate::model::ProblemSpec;
use crate::rng::{stream_rng, uniform_ball};
use crate::scalar::{norm2, Real};

/// Stream offset separating the shrunken-radius probe from the main samples.
const PROBE_STREAM: u64 = 1 << 32;
/// Stream offset for random projection starts.
const START_STREAM: u64 = 1 << 40;
/// Largest `n + m` for the grid fallback of the projection.
const GRID_DIM_MAX: usize = 3;
const GRID_PER_DIM: usize = 41;

/// Certifies calmness when every `g` and `h` is affine: `M` is then a
/// polyhedral multifunction over the box `U`, hence upper Lipschitz.
pub fn check_structural_calmness<T: Real>(ps: &ProblemSpec, _z: &EvalPoint<T>) -> CqVerdict<T> {
    let mut v = CqVerdict::new(CqKind::CalmStructural);
    let nonaffine: Vec<String> = ps
        .g
        .iter()
        .enumerate()
        .filter(|(_, e)| !e.is_affine())
        .map(|(i, _)| format!("g{}", i + 1))
        .chain(ps.h.iter().enumerate().filter(|(_, e)| !e.is_affine()).map(|(j, _)| format!("h{}", j + 1)))
        .collect();
    if nonaffine.is_empty() {
        v.holds = Some(true);
        v.witness = Some(Witness::Structural { detail: "affine constraints over a box: polyhedral multifunction, locally upper Lipschitz".into() });
    } else {
        v.note = format!("unknown-structural: {} not affine", nonaffine.join(", "));
    }
    v
}

/// Structural global error bound for `{z : g(z) ≤ 0}` with `U = R^m`:
/// each `g_i = φ_i + b_iᵀz` with smooth `φ_i`, and one coordinate `j` where
/// every `b_ij` is nonzero with a common sign and no `φ_i` depends on `z_j`.
pub fn check_global_eb_structure<T: Real>(ps: &ProblemSpec) -> Result<CqVerdict<T>> {
    if ps.s > 0 {
        return Err(Error::Unsupported("global error-bound structure needs an inequality-only system".into()));
    }
    let mut v = CqVerdict::new(CqKind::GlobalEbStructural);
    if ps.u_box.is_bounded() || (0..ps.m).any(|j| ps.u_box.lo::<f64>(j).is_finite() || ps.u_box.hi::<f64>(j).is_finite()) {
        v.note = "unknown: control set is not the whole space".into();
        return Ok(v);
    }
    if ps.g.is_empty() {
        v.holds = Some(true);
        v.witness = Some(Witness::Structural { detail: "no constraints".into() });
        return Ok(v);
    }
    let mut splits = Vec::with_capacity(ps.l);
    for (i, g) in ps.g.iter().enumerate() {
        match g.split_affine() {
            Some(sp) if sp.remainder_is_smooth() => splits.push(sp),
            _ => {
                v.note = format!("unknown: g{} has no smooth-plus-linear decomposition", i + 1);
                return Ok(v);
            }
        }
    }
    let n = ps.n;
    for j in 0..n + ps.m {
        let var = if j < n { Var::X(j) } else { Var::U(j - n) };
        let pos = splits.iter().all(|s| s.linear[j] > 0.0);
        let neg = splits.iter().all(|s| s.linear[j] < 0.0);
        if (pos || neg) && splits.iter().all(|s| !s.remainder_depends_on(var)) {
            v.holds = Some(true);
            v.witness = Some(Witness::Coordinate { index: j, name: coord_name(j, n) });
            return Ok(v);
        }
    }
    v.holds = Some(false);
    v.note = "no coordinate with one-signed linear coefficients free of the nonlinear part".into();
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBoundOptions {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
    /// Random projection starts per sample, besides the sample and the center.
    pub random_starts: usize,
}

impl Default for ErrorBoundOptions {
    fn default() -> Self {
        Self { radius: 1e-2, samples: 64, seed: 0, random_starts: 2 }
    }
}

/// `min ½‖y‖²` over `w = z' + r y ∈ M(0)`, constraints divided by `r`.
struct Projection<'a, T: Real> {
    ps: &'a ProblemSpec,
    t: T,
    zp: Vec<T>,
    r: T,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<'a, T: Real> Projection<'a, T> {
    fn new(ps: &'a ProblemSpec, t: T, zp: Vec<T>, r: T) -> Self {
        let n = ps.n;
        let d = zp.len();
        let mut lo = vec![T::neg_infinity(); d];
        let mut hi = vec![T::infinity(); d];
        for j in 0..ps.m {
            lo[n + j] = (ps.u_box.lo::<T>(j) - zp[n + j]) / r;
            hi[n + j] = (ps.u_box.hi::<T>(j) - zp[n + j]) / r;
        }
        Self { ps, t, zp, r, lo, hi }
    }

    fn point(&self, y: &[T]) -> EvalPoint<T> {
        let w: Vec<T> = self.zp.iter().zip(y).map(|(&a, &b)| a + self.r * b).collect();
        EvalPoint::from_z(self.t, &w, self.ps.n)
    }
}

impl<T: Real> NlpProblem<T> for Projection<'_, T> {
    fn dim(&self) -> usize {
        self.zp.len()
    }
    fn lower(&self) -> &[T] {
        &self.lo
    }
    fn upper(&self) -> &[T] {
        &self.hi
    }
    fn eval(&self, y: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
        let (g, h) = self.ps.constraint_values(&self.point(y))?;
        let f = T::lit(0.5) * y.iter().map(|&v| v * v).sum::<T>();
        Ok((f, h.into_iter().map(|v| v / self.r).collect(), g.into_iter().map(|v| v / self.r).collect()))
    }
    fn grad_combination(&self, y: &[T], wf: T, w_eq: &[T], w_in: &[T]) -> Result<Vec<T>> {
        let p = self.point(y);
        let mut out: Vec<T> = y.iter().map(|&v| wf * v).collect();
        for (e, &w) in self.ps.h.iter().zip(w_eq).chain(self.ps.g.iter().zip(w_in)) {
            if w != T::zero() {
                let gr = e.gradient(&p)?;
                for (o, &d) in out.iter_mut().zip(gr.z()) {
                    *o += w * d;
                }
            }
        }
        Ok(out)
    }
}

struct SampleRatio<T> {
    z: Vec<T>,
    ratio: Option<T>,
    failed: bool,
}

fn residual_at<T: Real>(ps: &ProblemSpec, t: T, z: &[T]) -> Result<T> {
    ps.feasibility_residual(&EvalPoint::from_z(t, z, ps.n))
}

/// Upper bound on `dist(z', M(0))` from local projections; `None` if no
/// start reached a feasible point.
fn projected_distance<T: Real>(ps: &ProblemSpec, t: T, center: &[T], zp: &[T], res: T, seed: u64, idx: u64, starts: usize) -> Result<Option<T>> {
    let gap: Vec<T> = center.iter().zip(zp).map(|(&a, &b)| a - b).collect();
    let reach = norm2(&gap);
    let r = reach.max(T::tol(1e-300));
    let prob = Projection::new(ps, t, zp.to_vec(), r);
    let tau = res * T::lit(1e-6);
    let opts = AlOptions {
        feas_tol: (tau / r).to_f64().unwrap_or(1e-10).max(1e-14),
        opt_tol: 1e-8,
        max_outer: 20,
        max_inner: 5000,
        ..AlOptions::default()
    };
    let mut y0s: Vec<Vec<T>> = vec![vec![T::zero(); zp.len()], gap.iter().map(|&v| v / r).collect()];
    let mut rng = stream_rng(seed, START_STREAM + idx);
    let origin = vec![T::zero(); zp.len()];
    for _ in 0..starts {
        y0s.push(uniform_ball(&mut rng, &origin, T::lit(2.0)));
    }
    let mut best: Option<T> = None;
    for y0 in y0s {
        let Ok((y, _)) = solve_al(&prob, &y0, &opts) else { continue };
        let w = prob.point(&y).z();
        if residual_at(ps, t, &w)? <= tau {
            let d = r * norm2(&y);
            best = Some(best.map_or(d, |b: T| b.min(d)));
        }
    }
    if best.is_none() && zp.len() <= GRID_DIM_MAX {
        best = grid_distance(ps, t, center, zp, reach, tau)?;
    }
    Ok(best)
}

/// Nearest feasible point of a grid centered at `center` with half-width `2·reach`.
fn grid_distance<T: Real>(ps: &ProblemSpec, t: T, center: &[T], zp: &[T], reach: T, tau: T) -> Result<Option<T>> {
    let d = zp.len();
    let half = (GRID_PER_DIM / 2) as i64;
    let step = T::lit(2.0) * reach / T::of(GRID_PER_DIM / 2);
    let total = GRID_PER_DIM.pow(d as u32);
    let mut best: Option<T> = None;
    let mut w = vec![T::zero(); d];
    for mut code in 0..total {
        for (k, wk) in w.iter_mut().enumerate() {
            let off = (code % GRID_PER_DIM) as i64 - half;
            code /= GRID_PER_DIM;
            *wk = center[k] + step * T::lit(off as f64);
        }
        if residual_at(ps, t, &w)? <= tau {
            let dist = norm2(&w.iter().zip(zp).map(|(&a, &b)| a - b).collect::<Vec<T>>());
            best = Some(best.map_or(dist, |b: T| b.min(dist)));
        }
    }
    Ok(best)
}

fn sample_ratios<T: Real>(ps: &ProblemSpec, z: &EvalPoint<T>, radius: T, streams: std::ops::Range<u64>, opts: &ErrorBoundOptions) -> Result<Vec<SampleRatio<T>>> {
    let center = z.z();
    let n = ps.n;
    streams
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&k| {
            let mut zp = uniform_ball(&mut stream_rng(opts.seed, k), &center, radius);
            let u = ps.u_box.project(&zp[n..]);
            zp[n..].copy_from_slice(&u);
            let res = residual_at(ps, z.t, &zp)?;
            if res <= T::zero() {
                return Ok(SampleRatio { z: zp, ratio: None, failed: false });
            }
            match projected_distance(ps, z.t, &center, &zp, res, opts.seed, k, opts.random_starts)? {
                Some(d) => Ok(SampleRatio { ratio: Some(d / res), z: zp, failed: false }),
                None => Ok(SampleRatio { z: zp, ratio: None, failed: true }),
            }
        })
        .collect()
}

fn max_ratio<T: Real>(rs: &[SampleRatio<T>]) -> (T, Option<usize>) {
    rs.iter().enumerate().fold((T::zero(), None), |(m, at), (k, s)| match s.ratio {
        Some(r) if r > m => (r, Some(k)),
        _ => (m, at),
    })
}

/// Empirical local error-bound modulus `μ̂ = max dist(z', M(0)) / residual(z')`
/// over samples `z' ∈ B(z, r)` with `u' ∈ U`.
///
/// The estimate counts as stable when doubling the sample count changes it
/// by less than 20% and shrinking the radius to `r/4` does not raise it by
/// more than 20%.
pub fn estimate_error_bound<T: Real>(ps: &ProblemSpec, z: &EvalPoint<T>, opts: &ErrorBoundOptions) -> Result<CqVerdict<T>> {
    let res0 = ps.feasibility_residual(z)?;
    if res0 > T::tol(1e-6) {
        return Err(Error::Infeasible(format!("reference point has feasibility residual {res0}")));
    }
    let n_s = opts.samples as u64;
    let r = T::lit(opts.radius);
    let main = sample_ratios(ps, z, r, 0..2 * n_s, opts)?;
    let probe = sample_ratios(ps, z, r / T::lit(4.0), PROBE_STREAM..PROBE_STREAM + n_s, opts)?;
    let (mu_n, _) = max_ratio(&main[..opts.samples]);
    let (mu_2n, at) = max_ratio(&main);
    let (mu_probe, _) = max_ratio(&probe);
    let failures = main.iter().chain(&probe).filter(|s| s.failed).count();

    let tiny = T::tol(1e-12);
    let doubling_ok = (mu_2n - mu_n).abs() <= T::lit(0.2) * mu_n.max(tiny) || mu_2n <= tiny;
    let shrink_ok = mu_probe <= T::lit(1.2) * mu_2n + tiny;
    let mut v = CqVerdict::new(CqKind::ErrorBoundEst);
    v.empirical = true;
    v.samples = main.len() + probe.len();
    v.modulus = Some(mu_2n.max(mu_probe));
    v.holds = Some(doubling_ok && shrink_ok);
    v.note = format!("mu_N={mu_n} mu_2N={mu_2n} mu_r/4={mu_probe}; {failures} projection failures excluded");
    if !(doubling_ok && shrink_ok) {
        v.note = format!("no-error-bound: estimate not stable; {}", v.note);
        if let Some(k) = at {
            v.witness = Some(Witness::Sample { z: main[k].z.clone(), detail: format!("distance/residual ratio {mu_2n}") });
        }
    }
    Ok(v)
}
