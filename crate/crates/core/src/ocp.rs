//! Forward-Euler direct transcription and an augmented-Lagrangian solver.
//!
//! Decision layout: `x_0 … x_N` (each length `n`) followed by
//! `u_0 … u_{N-1}` (each length `m`). Equalities are ordered as dynamics
//! defects, then `h` at each control node, then fixed-endpoint equations;
//! inequalities are `g` at each control node. The running cost uses the
//! left-endpoint rule `Σ h F(τ_k, x_k, u_k)`, which is the quadrature whose
//! exact discrete adjoint the verifier reconstructs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::expr::EvalPoint;
use crate::localopt::{self, AlOptions, NlpProblem};
use crate::model::{EndpointMark, ProblemSpec, Trajectory};
use crate::scalar::{norm_inf, Real};

#[derive(Clone, Debug)]
pub struct DiscretizedNlp<T: Real> {
    pub ps: ProblemSpec,
    pub intervals: usize,
    pub grid: Vec<T>,
    lo: Vec<T>,
    hi: Vec<T>,
}

fn fixed_values(marks: &[EndpointMark]) -> Vec<(usize, f64)> {
    marks
        .iter()
        .enumerate()
        .filter_map(|(i, m)| match m {
            EndpointMark::Fixed(v) => Some((i, *v)),
            EndpointMark::Free => None,
        })
        .collect()
}

/// Builds the uniform-grid transcription with `n_int ≥ 2` intervals.
pub fn transcribe<T: Real>(ps: &ProblemSpec, n_int: usize) -> Result<DiscretizedNlp<T>> {
    if n_int < 2 {
        return Err(Error::Domain(format!("transcription needs N >= 2 intervals, got {n_int}")));
    }
    if ps.phi.iter().any(|e| !e.is_smooth()) {
        return Err(Error::Unsupported("the solver needs smooth dynamics phi".into()));
    }
    let (n, m) = (ps.n, ps.m);
    let nv = (n_int + 1) * n + n_int * m;
    let mut lo = vec![T::neg_infinity(); nv];
    let mut hi = vec![T::infinity(); nv];
    for k in 0..n_int {
        for j in 0..m {
            lo[(n_int + 1) * n + k * m + j] = ps.u_box.lo(j);
            hi[(n_int + 1) * n + k * m + j] = ps.u_box.hi(j);
        }
    }
    Ok(DiscretizedNlp { ps: ps.clone(), intervals: n_int, grid: Trajectory::uniform_grid(ps.t0, ps.t1, n_int), lo, hi })
}

impl<T: Real> DiscretizedNlp<T> {
    pub fn step(&self) -> T {
        (T::lit(self.ps.t1) - T::lit(self.ps.t0)) / T::of(self.intervals)
    }

    pub fn num_vars(&self) -> usize {
        self.lo.len()
    }

    pub fn x_index(&self, k: usize, i: usize) -> usize {
        k * self.ps.n + i
    }

    pub fn u_index(&self, k: usize, j: usize) -> usize {
        (self.intervals + 1) * self.ps.n + k * self.ps.m + j
    }

    pub fn num_equalities(&self) -> usize {
        let fixed = fixed_values(&self.ps.endpoints.x0).len() + fixed_values(&self.ps.endpoints.x1).len();
        self.intervals * (self.ps.n + self.ps.s) + fixed
    }

    pub fn num_inequalities(&self) -> usize {
        self.intervals * self.ps.l
    }

    pub fn pack(&self, traj: &Trajectory<T>) -> Result<Vec<T>> {
        if traj.intervals() != self.intervals {
            return Err(Error::Dimension(format!("trajectory has {} intervals, transcription {}", traj.intervals(), self.intervals)));
        }
        traj.validate(&self.ps)?;
        Ok(traj.x.iter().flatten().chain(traj.u.iter().flatten()).copied().collect())
    }

    pub fn unpack(&self, y: &[T]) -> Trajectory<T> {
        let (n, m, nn) = (self.ps.n, self.ps.m, self.intervals);
        let x = (0..=nn).map(|k| y[k * n..(k + 1) * n].to_vec()).collect();
        let u = (0..nn).map(|k| y[self.u_index(k, 0)..self.u_index(k, 0) + m].to_vec()).collect();
        Trajectory { grid: self.grid.clone(), x, u }
    }

    fn node(&self, y: &[T], k: usize) -> EvalPoint<T> {
        let (n, m) = (self.ps.n, self.ps.m);
        let u0 = self.u_index(k, 0);
        EvalPoint::new(self.grid[k], y[k * n..(k + 1) * n].to_vec(), y[u0..u0 + m].to_vec())
    }

    fn endpoint_point(&self, x0: &[T], xn: &[T]) -> EvalPoint<T> {
        EvalPoint::new(T::lit(self.ps.t1), x0.iter().chain(xn).copied().collect(), Vec::new())
    }

    /// `Σ h F(τ_k, x_k, u_k) + f(x_0, x_N)`.
    pub fn objective(&self, y: &[T]) -> Result<T> {
        let h = self.step();
        let n = self.ps.n;
        let mut j = T::zero();
        for k in 0..self.intervals {
            j += h * self.ps.running_cost.evaluate(&self.node(y, k))?;
        }
        let nn = self.intervals;
        Ok(j + self.ps.endpoint_cost.evaluate(&self.endpoint_point(&y[..n], &y[nn * n..(nn + 1) * n]))?)
    }

    pub fn equality_residuals(&self, y: &[T]) -> Result<Vec<T>> {
        let (n, nn) = (self.ps.n, self.intervals);
        let h = self.step();
        let mut out = Vec::with_capacity(self.num_equalities());
        for k in 0..nn {
            let p = self.node(y, k);
            let phi = self.ps.dynamics(&p)?;
            for i in 0..n {
                out.push(y[(k + 1) * n + i] - y[k * n + i] - h * phi[i]);
            }
        }
        for k in 0..nn {
            let p = self.node(y, k);
            for e in &self.ps.h {
                out.push(e.evaluate(&p)?);
            }
        }
        for (i, v) in fixed_values(&self.ps.endpoints.x0) {
            out.push(y[i] - T::lit(v));
        }
        for (i, v) in fixed_values(&self.ps.endpoints.x1) {
            out.push(y[nn * n + i] - T::lit(v));
        }
        Ok(out)
    }

    pub fn inequality_residuals(&self, y: &[T]) -> Result<Vec<T>> {
        let mut out = Vec::with_capacity(self.num_inequalities());
        for k in 0..self.intervals {
            let p = self.node(y, k);
            for e in &self.ps.g {
                out.push(e.evaluate(&p)?);
            }
        }
        Ok(out)
    }

    /// Largest dynamics defect `‖x_{k+1} − x_k − h φ_k‖∞`.
    pub fn max_defect(&self, y: &[T]) -> Result<T> {
        let eq = self.equality_residuals(y)?;
        Ok(norm_inf(&eq[..self.intervals * self.ps.n]))
    }
}

impl<T: Real> NlpProblem<T> for DiscretizedNlp<T> {
    fn dim(&self) -> usize {
        self.num_vars()
    }
    fn lower(&self) -> &[T] {
        &self.lo
    }
    fn upper(&self) -> &[T] {
        &self.hi
    }
    fn eval(&self, y: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
        Ok((self.objective(y)?, self.equality_residuals(y)?, self.inequality_residuals(y)?))
    }
    fn grad_combination(&self, y: &[T], wf: T, w_eq: &[T], w_in: &[T]) -> Result<Vec<T>> {
        let (n, m, s, l, nn) = (self.ps.n, self.ps.m, self.ps.s, self.ps.l, self.intervals);
        let h = self.step();
        let mut out = vec![T::zero(); y.len()];
        let ui = |k: usize, j: usize| self.u_index(k, j);
        // Scatter a (x, u) gradient of a node-k term.
        let scatter = |out: &mut [T], k: usize, gz: &[T], c: T| {
            for i in 0..n {
                out[k * n + i] += c * gz[i];
            }
            for j in 0..m {
                out[ui(k, j)] += c * gz[n + j];
            }
        };
        for k in 0..nn {
            let p = self.node(y, k);
            if wf != T::zero() {
                scatter(&mut out, k, self.ps.running_cost.gradient(&p)?.z(), wf * h);
            }
            for i in 0..n {
                let w = w_eq[k * n + i];
                if w != T::zero() {
                    out[(k + 1) * n + i] += w;
                    out[k * n + i] -= w;
                    scatter(&mut out, k, self.ps.phi[i].gradient(&p)?.z(), -w * h);
                }
            }
            for (j, e) in self.ps.h.iter().enumerate() {
                let w = w_eq[nn * n + k * s + j];
                if w != T::zero() {
                    scatter(&mut out, k, e.gradient(&p)?.z(), w);
                }
            }
            for (i, e) in self.ps.g.iter().enumerate() {
                let w = w_in[k * l + i];
                if w != T::zero() {
                    scatter(&mut out, k, e.gradient(&p)?.z(), w);
                }
            }
        }
        if wf != T::zero() {
            let ge = self.ps.endpoint_cost.gradient(&self.endpoint_point(&y[..n], &y[nn * n..(nn + 1) * n]))?;
            let gz = ge.z();
            for i in 0..n {
                out[i] += wf * gz[i];
                out[nn * n + i] += wf * gz[n + i];
            }
        }
        let mut e = nn * (n + s);
        for (i, _) in fixed_values(&self.ps.endpoints.x0) {
            out[i] += w_eq[e];
            e += 1;
        }
        for (i, _) in fixed_values(&self.ps.endpoints.x1) {
            out[nn * n + i] += w_eq[e];
            e += 1;
        }
        Ok(out)
    }
}

/// Reduced problem over `(free x_0 coordinates, u)` with the states rolled
/// out by forward Euler. The objective is divided by `h` and the
/// fixed-terminal equations by `h`, so every control sees O(1) sensitivities.
struct Shooting<'a, T: Real> {
    nlp: &'a DiscretizedNlp<T>,
    free0: Vec<usize>,
    x0_fixed: Vec<T>,
    fixed1: Vec<(usize, f64)>,
    lo: Vec<T>,
    hi: Vec<T>,
}

impl<'a, T: Real> Shooting<'a, T> {
    fn new(nlp: &'a DiscretizedNlp<T>) -> Self {
        let ps = &nlp.ps;
        let free0: Vec<usize> = (0..ps.n).filter(|&i| ps.endpoints.x0[i].is_free()).collect();
        let mut x0_fixed = vec![T::zero(); ps.n];
        for (i, v) in fixed_values(&ps.endpoints.x0) {
            x0_fixed[i] = T::lit(v);
        }
        let mut lo = vec![T::neg_infinity(); free0.len()];
        let mut hi = vec![T::infinity(); free0.len()];
        for _ in 0..nlp.intervals {
            lo.extend((0..ps.m).map(|j| ps.u_box.lo::<T>(j)));
            hi.extend((0..ps.m).map(|j| ps.u_box.hi::<T>(j)));
        }
        Self { nlp, free0, x0_fixed, fixed1: fixed_values(&ps.endpoints.x1), lo, hi }
    }

    fn controls<'b>(&self, v: &'b [T]) -> &'b [T] {
        &v[self.free0.len()..]
    }

    fn rollout(&self, v: &[T]) -> Result<Vec<Vec<T>>> {
        let ps = &self.nlp.ps;
        let h = self.nlp.step();
        let mut x0 = self.x0_fixed.clone();
        for (c, &i) in self.free0.iter().enumerate() {
            x0[i] = v[c];
        }
        let u = self.controls(v);
        let mut xs = Vec::with_capacity(self.nlp.intervals + 1);
        xs.push(x0);
        for k in 0..self.nlp.intervals {
            let p = EvalPoint::new(self.nlp.grid[k], xs[k].clone(), u[k * ps.m..(k + 1) * ps.m].to_vec());
            let phi = ps.dynamics(&p)?;
            let next = p.x.iter().zip(&phi).map(|(&a, &b)| a + h * b).collect();
            xs.push(next);
        }
        Ok(xs)
    }

    fn trajectory(&self, v: &[T]) -> Result<Trajectory<T>> {
        let m = self.nlp.ps.m;
        let u = self.controls(v);
        Ok(Trajectory { grid: self.nlp.grid.clone(), x: self.rollout(v)?, u: (0..self.nlp.intervals).map(|k| u[k * m..(k + 1) * m].to_vec()).collect() })
    }

    fn point(&self, xs: &[Vec<T>], v: &[T], k: usize) -> EvalPoint<T> {
        let m = self.nlp.ps.m;
        EvalPoint::new(self.nlp.grid[k], xs[k].clone(), self.controls(v)[k * m..(k + 1) * m].to_vec())
    }

    fn endpoint(&self, xs: &[Vec<T>]) -> EvalPoint<T> {
        self.nlp.endpoint_point(&xs[0], &xs[self.nlp.intervals])
    }
}

impl<T: Real> NlpProblem<T> for Shooting<'_, T> {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn lower(&self) -> &[T] {
        &self.lo
    }
    fn upper(&self) -> &[T] {
        &self.hi
    }
    fn eval(&self, v: &[T]) -> Result<(T, Vec<T>, Vec<T>)> {
        let ps = &self.nlp.ps;
        let h = self.nlp.step();
        let xs = self.rollout(v)?;
        let mut f = T::zero();
        let mut ceq = Vec::new();
        let mut cin = Vec::new();
        for k in 0..self.nlp.intervals {
            let p = self.point(&xs, v, k);
            f += ps.running_cost.evaluate(&p)?;
            for e in &ps.h {
                ceq.push(e.evaluate(&p)?);
            }
            for e in &ps.g {
                cin.push(e.evaluate(&p)?);
            }
        }
        f += ps.endpoint_cost.evaluate(&self.endpoint(&xs))? / h;
        let xn = &xs[self.nlp.intervals];
        for &(i, val) in &self.fixed1 {
            ceq.push((xn[i] - T::lit(val)) / h);
        }
        Ok((f, ceq, cin))
    }
    fn grad_combination(&self, v: &[T], wf: T, w_eq: &[T], w_in: &[T]) -> Result<Vec<T>> {
        let ps = &self.nlp.ps;
        let (n, m, s, l, nn) = (ps.n, ps.m, ps.s, ps.l, self.nlp.intervals);
        let h = self.nlp.step();
        let xs = self.rollout(v)?;
        let mut out = vec![T::zero(); v.len()];
        let nf = self.free0.len();
        // Adjoint of the terminal terms.
        let ge = ps.endpoint_cost.gradient(&self.endpoint(&xs))?;
        let mut a: Vec<T> = (0..n).map(|i| wf * ge.z()[n + i] / h).collect();
        for (c, &(i, _)) in self.fixed1.iter().enumerate() {
            a[i] += w_eq[nn * s + c] / h;
        }
        for k in (0..nn).rev() {
            let p = self.point(&xs, v, k);
            let mut lx = vec![T::zero(); n];
            let mut lu = vec![T::zero(); m];
            let mut add = |gz: &[T], c: T| {
                for i in 0..n {
                    lx[i] += c * gz[i];
                }
                for j in 0..m {
                    lu[j] += c * gz[n + j];
                }
            };
            if wf != T::zero() {
                add(ps.running_cost.gradient(&p)?.z(), wf);
            }
            for (j, e) in ps.h.iter().enumerate() {
                let w = w_eq[k * s + j];
                if w != T::zero() {
                    add(e.gradient(&p)?.z(), w);
                }
            }
            for (i, e) in ps.g.iter().enumerate() {
                let w = w_in[k * l + i];
                if w != T::zero() {
                    add(e.gradient(&p)?.z(), w);
                }
            }
            for (r, e) in ps.phi.iter().enumerate() {
                if a[r] != T::zero() {
                    add(e.gradient(&p)?.z(), h * a[r]);
                }
            }
            for j in 0..m {
                out[nf + k * m + j] = lu[j];
            }
            for i in 0..n {
                a[i] += lx[i];
            }
        }
        for (c, &i) in self.free0.iter().enumerate() {
            out[c] = a[i] + wf * ge.z()[i] / h;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "")]
pub struct SolveReport<T: Real> {
    pub converged: bool,
    pub best_effort: bool,
    pub objective: T,
    /// Largest violation over defects, `h`, `g⁺` and fixed endpoints (unscaled).
    pub violation: T,
    pub max_defect: T,
    /// Projected Lagrangian gradient in the scaled reduced space.
    pub projected_gradient: T,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_penalty: T,
}

/// Solves the transcription from `start` (or zero controls projected into
/// `U`) and returns the rolled-out trajectory.
pub fn solve_al<T: Real>(nlp: &DiscretizedNlp<T>, start: Option<&Trajectory<T>>, opts: &AlOptions) -> Result<(Trajectory<T>, SolveReport<T>)> {
    let sh = Shooting::new(nlp);
    let mut v0: Vec<T> = match start {
        Some(tr) => {
            nlp.pack(tr)?;
            let mut v: Vec<T> = sh.free0.iter().map(|&i| tr.x[0][i]).collect();
            v.extend(tr.u.iter().flatten().copied());
            v
        }
        None => vec![T::zero(); sh.dim()],
    };
    if v0.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain("start trajectory is not finite".into()));
    }
    for (x, (&a, &b)) in v0.iter_mut().zip(sh.lo.iter().zip(&sh.hi)) {
        *x = x.max(a).min(b);
    }
    let (v, rep) = localopt::solve_al(&sh, &v0, opts)?;
    let traj = sh.trajectory(&v)?;
    let y = nlp.pack(&traj)?;
    let eq = nlp.equality_residuals(&y)?;
    let ineq = nlp.inequality_residuals(&y)?;
    let violation = norm_inf(&eq).max(ineq.iter().fold(T::zero(), |a, &c| a.max(c)));
    let max_defect = nlp.max_defect(&y)?;
    let objective = nlp.objective(&y)?;
    let converged = rep.converged && violation <= T::lit(opts.feas_tol);
    Ok((
        traj,
        SolveReport {
            converged,
            best_effort: !converged,
            objective,
            violation,
            max_defect,
            projected_gradient: rep.projected_gradient,
            outer_iterations: rep.outer_iterations,
            inner_iterations: rep.inner_iterations,
            final_penalty: rep.final_penalty,
        },
    ))
}
