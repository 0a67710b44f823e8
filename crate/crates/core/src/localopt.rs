//! Augmented-Lagrangian method with a spectral projected-gradient inner
//! loop for box-constrained smooth problems
//! `min f(y)  s.t.  c_eq(y) = 0,  c_in(y) ≤ 0,  lo ≤ y ≤ hi`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::{dot, norm_inf, Real};

/// Smooth constrained problem with a box.
pub trait NlpProblem<T: Real> {
    fn dim(&self) -> usize;
    fn lower(&self) -> &[T];
    fn upper(&self) -> &[T];
    /// Objective, equality residuals and inequality residuals.
    fn eval(&self, y: &[T]) -> Result<(T, Vec<T>, Vec<T>)>;
    /// Gradient of `wf·f + w_eqᵀ c_eq + w_inᵀ c_in`.
    fn grad_combination(&self, y: &[T], wf: T, w_eq: &[T], w_in: &[T]) -> Result<Vec<T>>;
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlOptions {
    pub penalty0: f64,
    pub growth: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub feas_tol: f64,
    pub opt_tol: f64,
    /// Inner stopping tolerance on the projected AL gradient.
    pub inner_tol: f64,
    /// Largest admissible penalty before reporting divergence.
    pub max_penalty: f64,
}

impl Default for AlOptions {
    fn default() -> Self {
        Self {
            penalty0: 10.0,
            growth: 10.0,
            max_outer: 12,
            max_inner: 20_000,
            feas_tol: 1e-6,
            opt_tol: 1e-6,
            inner_tol: 1e-9,
            max_penalty: 1e16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct AlReport<T: Real> {
    pub converged: bool,
    pub objective: T,
    /// `max(‖c_eq‖∞, max(c_in, 0))`.
    pub violation: T,
    /// Projected gradient of the Lagrangian, ∞-norm.
    pub projected_gradient: T,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_penalty: T,
    pub mu_eq: Vec<T>,
    pub mu_in: Vec<T>,
}

/// Inner iterations without visible decrease before the inner loop stops.
const STALL_LIMIT: usize = 100;

fn project<T: Real>(y: &mut [T], lo: &[T], hi: &[T]) {
    for ((v, &a), &b) in y.iter_mut().zip(lo).zip(hi) {
        *v = v.max(a).min(b);
    }
}

fn violation<T: Real>(ceq: &[T], cin: &[T]) -> T {
    norm_inf(ceq).max(cin.iter().fold(T::zero(), |a, &c| a.max(c)))
}

fn projected_gradient_norm<T: Real>(y: &[T], g: &[T], lo: &[T], hi: &[T]) -> T {
    let mut trial: Vec<T> = y.iter().zip(g).map(|(&a, &b)| a - b).collect();
    project(&mut trial, lo, hi);
    trial.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
}

struct Augmented<'a, T: Real, P: NlpProblem<T> + ?Sized> {
    prob: &'a P,
    mu_eq: Vec<T>,
    mu_in: Vec<T>,
    rho: T,
}

impl<T: Real, P: NlpProblem<T> + ?Sized> Augmented<'_, T, P> {
    fn value(&self, y: &[T]) -> Result<(T, T, Vec<T>, Vec<T>)> {
        let (f, ceq, cin) = self.prob.eval(y)?;
        let half = T::lit(0.5);
        let mut l = f;
        for (&c, &mu) in ceq.iter().zip(&self.mu_eq) {
            l += mu * c + half * self.rho * c * c;
        }
        for (&c, &mu) in cin.iter().zip(&self.mu_in) {
            let s = (mu + self.rho * c).max(T::zero());
            l += (s * s - mu * mu) / (self.rho + self.rho);
        }
        Ok((l, f, ceq, cin))
    }

    fn gradient(&self, y: &[T], ceq: &[T], cin: &[T]) -> Result<Vec<T>> {
        let weq: Vec<T> = ceq.iter().zip(&self.mu_eq).map(|(&c, &mu)| mu + self.rho * c).collect();
        let win: Vec<T> = cin.iter().zip(&self.mu_in).map(|(&c, &mu)| (mu + self.rho * c).max(T::zero())).collect();
        self.prob.grad_combination(y, T::one(), &weq, &win)
    }

    /// Nonmonotone spectral projected gradient; returns iterations used.
    fn minimize(&self, y: &mut Vec<T>, tol: T, max_iter: usize) -> Result<usize> {
        let (lo, hi) = (self.prob.lower(), self.prob.upper());
        project(y, lo, hi);
        let (mut lval, _, mut ceq, mut cin) = self.value(y)?;
        if !lval.is_finite() {
            return Err(Error::Solver("augmented Lagrangian is not finite at the start point".into()));
        }
        let mut g = self.gradient(y, &ceq, &cin)?;
        let mut history = vec![lval];
        let pg0 = projected_gradient_norm(y, &g, lo, hi);
        let clamp = |a: T| a.max(T::lit(1e-12)).min(T::lit(1e12));
        let mut alpha = clamp(if pg0 > T::zero() { T::one() / pg0 } else { T::one() });
        // Iterations since the last decrease that is visible above roundoff.
        let (mut best, mut stall) = (lval, 0usize);
        for it in 0..max_iter {
            if stall >= STALL_LIMIT {
                return Ok(it);
            }
            if projected_gradient_norm(y, &g, lo, hi) <= tol {
                return Ok(it);
            }
            let mut trial: Vec<T> = y.iter().zip(&g).map(|(&a, &b)| a - alpha * b).collect();
            project(&mut trial, lo, hi);
            let d: Vec<T> = trial.iter().zip(y.iter()).map(|(&a, &b)| a - b).collect();
            let gd = dot(&g, &d);
            let lref = history.iter().copied().fold(T::neg_infinity(), T::max);
            let mut t = T::one();
            let mut accepted = None;
            for _ in 0..60 {
                let cand: Vec<T> = y.iter().zip(&d).map(|(&a, &b)| a + t * b).collect();
                if let Ok((lc, _, ce, ci)) = self.value(&cand) {
                    if lc.is_finite() && lc <= lref + T::lit(1e-4) * t * gd {
                        accepted = Some((cand, lc, ce, ci));
                        break;
                    }
                }
                t *= T::lit(0.5);
            }
            let Some((ynew, lnew, ce, ci)) = accepted else {
                // No decrease representable: stationary to working precision.
                return Ok(it);
            };
            let gnew = self.gradient(&ynew, &ce, &ci)?;
            let s: Vec<T> = ynew.iter().zip(y.iter()).map(|(&a, &b)| a - b).collect();
            let yy: Vec<T> = gnew.iter().zip(&g).map(|(&a, &b)| a - b).collect();
            let sty = dot(&s, &yy);
            alpha = if sty > T::zero() { clamp(dot(&s, &s) / sty) } else { T::lit(1e12) };
            *y = ynew;
            g = gnew;
            lval = lnew;
            if lval < best - T::epsilon() * T::lit(64.0) * (T::one() + best.abs()) {
                best = lval;
                stall = 0;
            } else {
                stall += 1;
            }
            ceq = ce;
            cin = ci;
            history.push(lval);
            if history.len() > 10 {
                history.remove(0);
            }
        }
        let _ = (ceq, cin);
        Ok(max_iter)
    }
}

/// Runs the augmented-Lagrangian loop from `y0`.
pub fn solve_al<T: Real, P: NlpProblem<T> + ?Sized>(prob: &P, y0: &[T], opts: &AlOptions) -> Result<(Vec<T>, AlReport<T>)> {
    if y0.len() != prob.dim() {
        return Err(Error::Dimension(format!("start has length {} but problem has {}", y0.len(), prob.dim())));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("start point is not finite".into()));
    }
    let mut y = y0.to_vec();
    let (_, ceq, cin) = prob.eval(&{
        let mut p = y.clone();
        project(&mut p, prob.lower(), prob.upper());
        p
    })?;
    let mut aug = Augmented { prob, mu_eq: vec![T::zero(); ceq.len()], mu_in: vec![T::zero(); cin.len()], rho: T::lit(opts.penalty0) };
    let mut inner_total = 0usize;
    let mut last_viol = T::infinity();
    let (feas, opt) = (T::lit(opts.feas_tol), T::lit(opts.opt_tol));
    let mut outer = 0usize;
    let mut best: Option<(Vec<T>, T)> = None;
    loop {
        outer += 1;
        inner_total += aug.minimize(&mut y, T::tol(opts.inner_tol), opts.max_inner)?;
        let (f, ceq, cin) = prob.eval(&y)?;
        let viol = violation(&ceq, &cin);
        if best.as_ref().is_none_or(|(_, v)| viol < *v) {
            best = Some((y.clone(), viol));
        }
        // First-order multiplier update.
        for (mu, &c) in aug.mu_eq.iter_mut().zip(&ceq) {
            *mu += aug.rho * c;
        }
        for (mu, &c) in aug.mu_in.iter_mut().zip(&cin) {
            *mu = (*mu + aug.rho * c).max(T::zero());
        }
        let glag = prob.grad_combination(&y, T::one(), &aug.mu_eq, &aug.mu_in)?;
        let pg = projected_gradient_norm(&y, &glag, prob.lower(), prob.upper());
        let converged = viol <= feas && pg <= opt;
        if converged || outer >= opts.max_outer {
            let (y_out, viol_out) = if converged { (y.clone(), viol) } else { best.clone().expect("at least one iterate") };
            let (f_out, _, _) = if converged { (f, ceq, cin) } else { prob.eval(&y_out)? };
            let report = AlReport {
                converged,
                objective: f_out,
                violation: viol_out,
                projected_gradient: pg,
                outer_iterations: outer,
                inner_iterations: inner_total,
                final_penalty: aug.rho,
                mu_eq: aug.mu_eq,
                mu_in: aug.mu_in,
            };
            return Ok((y_out, report));
        }
        if viol > T::lit(0.25) * last_viol || viol > feas {
            aug.rho *= T::lit(opts.growth);
            if aug.rho > T::lit(opts.max_penalty) || !aug.rho.is_finite() {
                return Err(Error::Solver(format!("penalty overflow after {outer} outer iterations (violation {viol})")));
            }
        }
        last_viol = viol;
    }
}
