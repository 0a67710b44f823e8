use serde::{Deserialize, Serialize};

use super::lp::{LinearProgram, RowSense};
use super::qr::{null_vector, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Polyhedral cone `{ Σ λ_i a_i + Σ μ_j b_j : λ ≥ 0 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ConeDescription<T: Real> {
    pub nonneg_generators: Vec<Vec<T>>,
    pub span_basis: Vec<Vec<T>>,
}

impl<T: Real> ConeDescription<T> {
    pub fn new(nonneg_generators: Vec<Vec<T>>, span_basis: Vec<Vec<T>>) -> Self {
        Self { nonneg_generators, span_basis }
    }

    /// Common dimension, or `None` when both lists are empty.
    pub fn dim(&self) -> Result<Option<usize>> {
        let mut it = self.nonneg_generators.iter().chain(&self.span_basis).map(Vec::len);
        let Some(d) = it.next() else { return Ok(None) };
        if it.any(|e| e != d) {
            return Err(Error::Dimension("cone generators differ in length".into()));
        }
        Ok(Some(d))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Membership<T: Real> {
    pub member: bool,
    /// Coefficients on the nonnegative generators (empty when not a member).
    pub lambda: Vec<T>,
    /// Coefficients on the span basis (empty when not a member).
    pub mu: Vec<T>,
}

/// Decides `v ∈ cone` by LP feasibility.
pub fn cone_membership<T: Real>(v: &[T], cone: &ConeDescription<T>) -> Result<Membership<T>> {
    if let Some(d) = cone.dim()? {
        if d != v.len() {
            return Err(Error::Dimension(format!("vector has length {} but cone lives in R^{d}", v.len())));
        }
    }
    let na = cone.nonneg_generators.len();
    let nb = cone.span_basis.len();
    let mut lp = LinearProgram::new(na + nb);
    for j in na..na + nb {
        lp.set_bounds(j, T::neg_infinity(), T::infinity());
    }
    for (i, &vi) in v.iter().enumerate() {
        let row: Vec<T> = cone.nonneg_generators.iter().chain(&cone.span_basis).map(|g| g[i]).collect();
        lp.push_row(row, RowSense::Eq, vi);
    }
    let sol = lp.solve()?;
    if !sol.is_optimal() {
        return Ok(Membership { member: false, lambda: Vec::new(), mu: Vec::new() });
    }
    Ok(Membership { member: true, lambda: sol.x[..na].to_vec(), mu: sol.x[na..].to_vec() })
}

/// Finds `y ≠ 0` restricted to `target` coordinates with
/// `rows · y = 0` and `y_j ≥ 0` where `nonneg[j]`.
///
/// Returns a witness with some target coordinate nonzero, or `None`.
pub fn exists_nonzero<T: Real>(rows: &[Vec<T>], nonneg: &[bool], target: &[bool]) -> Result<Option<Vec<T>>> {
    let nv = nonneg.len();
    if target.len() != nv || rows.iter().any(|r| r.len() != nv) {
        return Err(Error::Dimension("exists_nonzero: inconsistent sizes".into()));
    }
    let base = || {
        let mut lp = LinearProgram::new(nv);
        for j in 0..nv {
            if !nonneg[j] {
                lp.set_bounds(j, T::neg_infinity(), T::infinity());
            }
        }
        for r in rows {
            lp.push_row(r.clone(), RowSense::Eq, T::zero());
        }
        lp
    };
    let signed: Vec<usize> = (0..nv).filter(|&j| nonneg[j] && target[j]).collect();
    if !signed.is_empty() {
        let mut lp = base();
        let mut norm = vec![T::zero(); nv];
        for &j in &signed {
            norm[j] = T::one();
        }
        lp.push_row(norm, RowSense::Eq, T::one());
        let sol = lp.solve()?;
        if sol.is_optimal() {
            return Ok(Some(sol.x));
        }
    }
    for j in (0..nv).filter(|&j| !nonneg[j] && target[j]) {
        for s in [T::one(), -T::one()] {
            let mut lp = base();
            lp.set_bounds(j, s, s);
            let sol = lp.solve()?;
            if sol.is_optimal() {
                return Ok(Some(sol.x));
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dependence<T: Real> {
    pub dependent: bool,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

/// Decides whether `{a_i} ∪ {b_j}` is positively linearly dependent: some
/// `(α, β) ≠ 0` with `α ≥ 0` and `Σ α_i a_i + Σ β_j b_j = 0`.
///
/// Solutions with `α ≠ 0` are found by the LP `Σ α_i = 1`; otherwise the
/// family is dependent iff the free vectors are linearly dependent.
pub fn positive_linear_dependence<T: Real>(signed: &[Vec<T>], free: &[Vec<T>]) -> Result<Dependence<T>> {
    positive_linear_dependence_tol(signed, free, T::lit(DEFAULT_RANK_TOL))
}

/// [`positive_linear_dependence`] with an explicit relative rank tolerance
/// for the free-vector fallback.
pub fn positive_linear_dependence_tol<T: Real>(signed: &[Vec<T>], free: &[Vec<T>], rank_tol: T) -> Result<Dependence<T>> {
    if signed.is_empty() && free.is_empty() {
        return Err(Error::Dimension("positive_linear_dependence needs at least one vector".into()));
    }
    let d = ConeDescription::new(signed.to_vec(), free.to_vec()).dim()?.unwrap_or(0);
    let (na, nb) = (signed.len(), free.len());
    let no = Dependence { dependent: false, alpha: vec![T::zero(); na], beta: vec![T::zero(); nb] };
    if na > 0 {
        let mut lp = LinearProgram::new(na + nb);
        for j in na..na + nb {
            lp.set_bounds(j, T::neg_infinity(), T::infinity());
        }
        for i in 0..d {
            let row: Vec<T> = signed.iter().chain(free).map(|g| g[i]).collect();
            lp.push_row(row, RowSense::Eq, T::zero());
        }
        let mut norm = vec![T::zero(); na + nb];
        norm[..na].iter_mut().for_each(|v| *v = T::one());
        lp.push_row(norm, RowSense::Eq, T::one());
        let sol = lp.solve()?;
        if sol.is_optimal() {
            return Ok(Dependence { dependent: true, alpha: sol.x[..na].to_vec(), beta: sol.x[na..].to_vec() });
        }
    }
    if nb == 0 {
        return Ok(no);
    }
    match null_vector(free, rank_tol) {
        None => Ok(no),
        Some(mut beta) => {
            normalize_certificate(&mut beta);
            Ok(Dependence { dependent: true, alpha: vec![T::zero(); na], beta })
        }
    }
}

/// Scales so the smallest nonzero magnitude is 1 and the first nonzero entry is positive.
fn normalize_certificate<T: Real>(v: &mut [T]) {
    let big = crate::scalar::norm_inf(v);
    let small_cut = big * T::lit(1e-10);
    let min = v.iter().map(|x| x.abs()).filter(|&a| a > small_cut).fold(T::infinity(), T::min);
    let first = v.iter().copied().find(|x| x.abs() > small_cut).unwrap_or(T::one());
    if min.is_finite() && min > T::zero() {
        let s = if first < T::zero() { -T::one() / min } else { T::one() / min };
        for x in v.iter_mut() {
            *x = if x.abs() > small_cut { *x * s } else { T::zero() };
        }
    }
}
