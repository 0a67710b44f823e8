use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Primal feasibility tolerance used by [`LinearProgram::solve`].
pub const LP_FEAS_TOL: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `max|min c^T x  s.t.  A x (≤|=|≥) b,  lower ≤ x ≤ upper`.
///
/// Variables default to `[0, ∞)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    pub maximize: bool,
    pub c: Vec<T>,
    pub rows: Vec<Vec<T>>,
    pub senses: Vec<RowSense>,
    pub b: Vec<T>,
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpSolution<T> {
    pub status: LpStatus,
    /// Primal point; empty unless `status` is optimal.
    pub x: Vec<T>,
    /// Objective value in the caller's sense; NaN unless optimal.
    pub objective: T,
}

impl<T: Real> LpSolution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

impl<T: Real> LinearProgram<T> {
    /// Feasibility problem in `nvars` nonnegative variables with zero objective.
    pub fn new(nvars: usize) -> Self {
        Self {
            maximize: false,
            c: vec![T::zero(); nvars],
            rows: Vec::new(),
            senses: Vec::new(),
            b: Vec::new(),
            lower: vec![T::zero(); nvars],
            upper: vec![T::infinity(); nvars],
        }
    }

    pub fn nvars(&self) -> usize {
        self.c.len()
    }

    pub fn maximize(mut self, c: Vec<T>) -> Self {
        self.maximize = true;
        self.c = c;
        self
    }

    pub fn minimize(mut self, c: Vec<T>) -> Self {
        self.maximize = false;
        self.c = c;
        self
    }

    pub fn row(mut self, coeffs: Vec<T>, sense: RowSense, rhs: T) -> Self {
        self.push_row(coeffs, sense, rhs);
        self
    }

    pub fn push_row(&mut self, coeffs: Vec<T>, sense: RowSense, rhs: T) {
        self.rows.push(coeffs);
        self.senses.push(sense);
        self.b.push(rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lo: T, hi: T) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    pub fn free(mut self, j: usize) -> Self {
        self.set_bounds(j, T::neg_infinity(), T::infinity());
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Dimension(format!("LP has {n} variables but {} / {} bounds", self.lower.len(), self.upper.len())));
        }
        if self.senses.len() != self.rows.len() || self.b.len() != self.rows.len() {
            return Err(Error::Dimension("LP row senses / rhs do not match row count".into()));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::Dimension(format!("LP row {i} has length {} (expected {n})", r.len())));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!("LP row {i} has a non-finite entry")));
            }
        }
        if self.c.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::Domain("LP objective or rhs has a non-finite entry".into()));
        }
        for j in 0..n {
            if self.lower[j] == T::infinity() || self.upper[j] == T::neg_infinity() || self.lower[j].is_nan() || self.upper[j].is_nan() {
                return Err(Error::Domain(format!("LP variable {j} has an invalid bound")));
            }
        }
        Ok(())
    }

    /// Two-phase dense simplex with Bland's rule.
    pub fn solve(&self) -> Result<LpSolution<T>> {
        self.validate()?;
        let infeasible = || LpSolution { status: LpStatus::Infeasible, x: Vec::new(), objective: T::nan() };
        let n = self.nvars();
        let feas = T::tol(LP_FEAS_TOL);

        // x_j = offset_j + sum coef * y, y >= 0.
        let mut offset = vec![T::zero(); n];
        let mut terms: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
        let mut ny = 0usize;
        let mut bound_rows: Vec<(usize, T)> = Vec::new(); // y_k <= width
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo > hi + feas {
                return Ok(infeasible());
            }
            if lo.is_finite() {
                offset[j] = lo;
                terms[j].push((ny, T::one()));
                if hi.is_finite() {
                    bound_rows.push((ny, (hi - lo).max(T::zero())));
                }
                ny += 1;
            } else if hi.is_finite() {
                offset[j] = hi;
                terms[j].push((ny, -T::one()));
                ny += 1;
            } else {
                terms[j].push((ny, T::one()));
                terms[j].push((ny + 1, -T::one()));
                ny += 2;
            }
        }

        // Rows over y: coeffs, sense, rhs.
        let mut rows: Vec<(Vec<T>, RowSense, T)> = Vec::with_capacity(self.rows.len() + bound_rows.len());
        for (i, r) in self.rows.iter().enumerate() {
            let mut coeffs = vec![T::zero(); ny];
            let mut rhs = self.b[i];
            for j in 0..n {
                let a = r[j];
                if a == T::zero() {
                    continue;
                }
                rhs -= a * offset[j];
                for &(k, s) in &terms[j] {
                    coeffs[k] += a * s;
                }
            }
            rows.push((coeffs, self.senses[i], rhs));
        }
        for &(k, w) in &bound_rows {
            let mut coeffs = vec![T::zero(); ny];
            coeffs[k] = T::one();
            rows.push((coeffs, RowSense::Le, w));
        }

        let nslack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
        let mrows = rows.len();
        // Columns: y (ny), slacks (nslack), artificials (<= mrows).
        let mut tab = Tableau::new(mrows, ny + nslack + mrows);
        let art0 = ny + nslack;
        let mut next_slack = ny;
        let mut nart = 0usize;
        for (i, (coeffs, sense, rhs)) in rows.into_iter().enumerate() {
            let row = &mut tab.a[i];
            row[..ny].copy_from_slice(&coeffs);
            let mut slack = None;
            match sense {
                RowSense::Le => {
                    row[next_slack] = T::one();
                    slack = Some(next_slack);
                    next_slack += 1;
                }
                RowSense::Ge => {
                    row[next_slack] = -T::one();
                    slack = Some(next_slack);
                    next_slack += 1;
                }
                RowSense::Eq => {}
            }
            let rhs_col = tab.ncols;
            row[rhs_col] = rhs;
            if rhs < T::zero() {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            match slack {
                Some(sj) if row[sj] > T::zero() => tab.basis[i] = sj,
                _ => {
                    let aj = art0 + nart;
                    row[aj] = T::one();
                    tab.basis[i] = aj;
                    nart += 1;
                }
            }
        }
        tab.truncate_cols(art0 + nart);

        // Phase 1.
        if nart > 0 {
            let mut obj = vec![T::zero(); tab.ncols + 1];
            for j in art0..art0 + nart {
                obj[j] = T::one();
            }
            for i in 0..mrows {
                if tab.basis[i] >= art0 {
                    for j in 0..=tab.ncols {
                        obj[j] -= tab.a[i][j];
                    }
                }
            }
            let bounded = tab.run(&mut obj, tab.ncols)?;
            debug_assert!(bounded);
            let bscale = T::one().max(crate::scalar::norm_inf(&self.b));
            if -obj[tab.ncols] > feas * bscale {
                return Ok(infeasible());
            }
            // Drive artificials out of the basis; drop redundant rows.
            let mut i = 0;
            while i < tab.m {
                if tab.basis[i] >= art0 {
                    let piv = T::tol(PIVOT_TOL);
                    let col = (0..art0).find(|&j| tab.a[i][j].abs() > piv);
                    match col {
                        Some(j) => tab.pivot(&mut obj, i, j),
                        None => {
                            tab.remove_row(i);
                            continue;
                        }
                    }
                }
                i += 1;
            }
            tab.truncate_cols(art0);
        }

        // Phase 2: minimize sign * c^T x over y.
        let sign = if self.maximize { -T::one() } else { T::one() };
        let mut cy = vec![T::zero(); tab.ncols];
        for j in 0..n {
            for &(k, s) in &terms[j] {
                cy[k] += sign * self.c[j] * s;
            }
        }
        let mut obj = vec![T::zero(); tab.ncols + 1];
        obj[..tab.ncols].copy_from_slice(&cy);
        for i in 0..tab.m {
            let cb = cy[tab.basis[i]];
            if cb != T::zero() {
                for j in 0..=tab.ncols {
                    obj[j] -= cb * tab.a[i][j];
                }
            }
        }
        if !tab.run(&mut obj, tab.ncols)? {
            return Ok(LpSolution { status: LpStatus::Unbounded, x: Vec::new(), objective: T::nan() });
        }

        let mut y = vec![T::zero(); tab.ncols];
        for i in 0..tab.m {
            y[tab.basis[i]] = tab.a[i][tab.ncols].max(T::zero());
        }
        let x: Vec<T> = (0..n)
            .map(|j| {
                let v = terms[j].iter().fold(offset[j], |acc, &(k, s)| acc + s * y[k]);
                v.max(self.lower[j]).min(self.upper[j])
            })
            .collect();
        let objective = crate::scalar::dot(&self.c, &x);
        Ok(LpSolution { status: LpStatus::Optimal, x, objective })
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn violation(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (i, r) in self.rows.iter().enumerate() {
            let ax = crate::scalar::dot(r, x);
            let v = match self.senses[i] {
                RowSense::Le => ax - self.b[i],
                RowSense::Ge => self.b[i] - ax,
                RowSense::Eq => (ax - self.b[i]).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        worst
    }
}

struct Tableau<T> {
    m: usize,
    ncols: usize,
    /// Each row holds `ncols` coefficients followed by the rhs.
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
}

impl<T: Real> Tableau<T> {
    fn new(m: usize, ncols: usize) -> Self {
        Self { m, ncols, a: vec![vec![T::zero(); ncols + 1]; m], basis: vec![0; m] }
    }

    fn truncate_cols(&mut self, keep: usize) {
        for row in &mut self.a {
            let rhs = row[self.ncols];
            row.truncate(keep);
            row.push(rhs);
        }
        self.ncols = keep;
    }

    fn remove_row(&mut self, i: usize) {
        self.a.remove(i);
        self.basis.remove(i);
        self.m -= 1;
    }

    fn pivot(&mut self, obj: &mut [T], r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        self.a[r][c] = T::one();
        let prow = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != T::zero() {
                for (v, &pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[c] = T::zero();
            }
        }
        let f = obj[c];
        if f != T::zero() {
            for (v, &pv) in obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            obj[c] = T::zero();
        }
        self.basis[r] = c;
    }

    /// Minimizes with reduced-cost row `obj` over columns `< allowed`.
    /// Returns `false` when unbounded.
    fn run(&mut self, obj: &mut [T], allowed: usize) -> Result<bool> {
        let dtol = T::tol(LP_FEAS_TOL);
        let ptol = T::tol(PIVOT_TOL);
        let rhs = self.ncols;
        for _ in 0..MAX_PIVOTS {
            let Some(c) = (0..allowed).find(|&j| obj[j] < -dtol) else {
                return Ok(true);
            };
            let mut best: Option<(usize, T)> = None;
            for i in 0..self.m {
                let aic = self.a[i][c];
                if aic <= ptol {
                    continue;
                }
                let ratio = self.a[i][rhs].max(T::zero()) / aic;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= dtol * (T::one() + br.abs());
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            let Some((r, _)) = best else {
                return Ok(false);
            };
            self.pivot(obj, r, c);
        }
        Err(Error::Solver("simplex pivot limit reached".into()))
    }
}

/// Convenience wrapper over [`LinearProgram::solve`].
pub fn solve_lp<T: Real>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    lp.solve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bound() {
        let lp = LinearProgram::<f64>::new(1).maximize(vec![1.0]).row(vec![1.0], RowSense::Le, 3.0);
        let s = lp.solve().unwrap();
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_row() {
        let lp = LinearProgram::<f64>::new(1).maximize(vec![1.0]).row(vec![1.0], RowSense::Le, -1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn simplex_value() {
        let lp = LinearProgram::<f64>::new(2).maximize(vec![1.0, 1.0]).row(vec![1.0, 1.0], RowSense::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded() {
        let lp = LinearProgram::<f64>::new(2).maximize(vec![1.0, 0.0]).row(vec![-1.0, 1.0], RowSense::Le, 1.0);
        assert_eq!(lp.solve().unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn free_and_boxed_variables() {
        // min x - y  s.t. x + y = 1, x free, -2 <= y <= 0.5
        let mut lp = LinearProgram::<f64>::new(2).minimize(vec![1.0, -1.0]).row(vec![1.0, 1.0], RowSense::Eq, 1.0).free(0);
        lp.set_bounds(1, -2.0, 0.5);
        let s = lp.solve().unwrap();
        assert!((s.x[1] - 0.5).abs() < 1e-12 && (s.x[0] - 0.5).abs() < 1e-12);
        assert!((s.objective - 0.0).abs() < 1e-12);
    }

    #[test]
    fn upper_only_bound_and_ge_rows() {
        // max x s.t. x <= -1 (bound), x >= -5
        let mut lp = LinearProgram::<f64>::new(1).maximize(vec![1.0]).row(vec![1.0], RowSense::Ge, -5.0);
        lp.set_bounds(0, f64::NEG_INFINITY, -1.0);
        let s = lp.solve().unwrap();
        assert!((s.x[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let lp = LinearProgram::<f64>::new(2)
            .minimize(vec![1.0, 2.0])
            .row(vec![1.0, 1.0], RowSense::Eq, 2.0)
            .row(vec![2.0, 2.0], RowSense::Eq, 4.0);
        let s = lp.solve().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cycling_instance() {
        // Beale's example, which cycles under the textbook largest-coefficient rule.
        let lp = LinearProgram::<f64>::new(4)
            .minimize(vec![-0.75, 150.0, -0.02, 6.0])
            .row(vec![0.25, -60.0, -0.04, 9.0], RowSense::Le, 0.0)
            .row(vec![0.5, -90.0, -0.02, 3.0], RowSense::Le, 0.0)
            .row(vec![0.0, 0.0, 1.0, 0.0], RowSense::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!((s.objective + 0.05).abs() < 1e-9);
    }

    #[test]
    fn f32_instance() {
        let lp = LinearProgram::<f32>::new(2).maximize(vec![1.0, 1.0]).row(vec![1.0, 1.0], RowSense::Le, 1.0);
        assert!((lp.solve().unwrap().objective - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dimension_error() {
        let lp = LinearProgram::<f64>::new(2).row(vec![1.0], RowSense::Le, 1.0);
        assert!(matches!(lp.solve(), Err(Error::Dimension(_))));
    }
}
