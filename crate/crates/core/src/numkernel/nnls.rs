use super::mat::Mat;
use super::qr::PivotedQr;
use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct NnlsSolution<T> {
    pub x: Vec<T>,
    /// `‖A x − b‖₂`.
    pub residual: T,
    /// Largest KKT violation: `max(x_j<0, w_j>0 at x_j=0, |w_j| at x_j>0 or free)`
    /// with `w = A^T (b − A x)`.
    pub kkt: T,
}

/// Lawson–Hanson active-set loop shared by the dense and banded backends.
///
/// `solve_passive(passive)` returns the unconstrained least-squares minimizer
/// over passive variables (zeros elsewhere); `dual(x)` returns `A^T (b − A x)`.
pub(crate) fn active_set<T: Real>(
    nonneg: &[bool],
    initial_passive: Option<&[bool]>,
    tol: T,
    mut solve_passive: impl FnMut(&[bool]) -> Result<Vec<T>>,
    mut dual: impl FnMut(&[T]) -> Vec<T>,
) -> Result<Vec<T>> {
    let n = nonneg.len();
    let mut passive: Vec<bool> = match initial_passive {
        Some(p) => nonneg.iter().zip(p).map(|(&nn, &p)| !nn || p).collect(),
        None => nonneg.iter().map(|&nn| !nn).collect(),
    };
    let mut x = vec![T::zero(); n];
    let nn_count = nonneg.iter().filter(|&&b| b).count();
    let max_outer = 3 * nn_count + 30;
    let zero_tol = T::tol(1e-14);
    let mut last_added: Option<usize> = None;
    for _ in 0..max_outer {
        // Inner loop: restore feasibility of the passive solution.
        for _ in 0..=n {
            let z = solve_passive(&passive)?;
            let bad = (0..n).any(|j| nonneg[j] && passive[j] && z[j] <= T::zero());
            if !bad {
                x = z;
                break;
            }
            let mut alpha = T::one();
            for j in 0..n {
                if nonneg[j] && passive[j] && z[j] <= T::zero() {
                    let d = x[j] - z[j];
                    let a = if d > T::zero() { x[j] / d } else { T::zero() };
                    alpha = alpha.min(a);
                }
            }
            for j in 0..n {
                if passive[j] {
                    let xj = x[j];
                    x[j] = xj + alpha * (z[j] - xj);
                }
            }
            let mut dropped = false;
            for j in 0..n {
                if nonneg[j] && passive[j] && x[j] <= zero_tol * (T::one() + z[j].abs()) {
                    x[j] = T::zero();
                    passive[j] = false;
                    dropped = true;
                }
            }
            if !dropped {
                // Guard against a stall from rounding.
                for j in 0..n {
                    if nonneg[j] && passive[j] && z[j] <= T::zero() && x[j] <= zero_tol {
                        passive[j] = false;
                        x[j] = T::zero();
                    }
                }
            }
        }
        let w = dual(&x);
        let mut best: Option<(usize, T)> = None;
        for j in 0..n {
            if nonneg[j] && !passive[j] && w[j] > tol && Some(j) != last_added
                && best.is_none_or(|(_, bw)| w[j] > bw) {
                    best = Some((j, w[j]));
                }
        }
        match best {
            None => return Ok(x),
            Some((j, _)) => {
                passive[j] = true;
                last_added = Some(j);
            }
        }
    }
    Err(Error::Solver("NNLS active-set iteration limit reached".into()))
}

/// KKT violation of a sign-constrained least-squares point.
pub(crate) fn kkt_violation<T: Real>(x: &[T], w: &[T], nonneg: &[bool]) -> T {
    let mut worst = T::zero();
    for j in 0..x.len() {
        if nonneg[j] {
            worst = worst.max(-x[j]);
            worst = worst.max(if x[j] > T::zero() { w[j].abs() } else { w[j] });
        } else {
            worst = worst.max(w[j].abs());
        }
    }
    worst
}

fn dense_dual<T: Real>(a: &Mat<T>, b: &[T], x: &[T]) -> Vec<T> {
    let ax = a.mul_vec(x);
    let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    a.tmul_vec(&r)
}

/// `min ‖A x − b‖₂` subject to `x_j ≥ 0` where `nonneg[j]`, free otherwise.
pub fn nnls_mixed<T: Real>(a: &Mat<T>, b: &[T], nonneg: &[bool]) -> Result<NnlsSolution<T>> {
    if b.len() != a.rows() || nonneg.len() != a.cols() {
        return Err(Error::Dimension(format!("nnls: A is {}x{}, b has {}, mask has {}", a.rows(), a.cols(), b.len(), nonneg.len())));
    }
    if !a.is_finite() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("nnls: non-finite input".into()));
    }
    let scale = T::one().max(a.max_abs()).max(crate::scalar::norm_inf(b));
    let tol = T::tol(1e-13) * scale * scale;
    let rank_tol = T::tol(1e-12);
    let n = a.cols();
    let x = active_set(
        nonneg,
        None,
        tol,
        |passive| {
            let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
            let mut z = vec![T::zero(); n];
            if idx.is_empty() {
                return Ok(z);
            }
            let sub = a.select_cols(&idx);
            let qr = PivotedQr::new(&sub);
            let sol = qr.solve(b, qr.rank(rank_tol));
            for (k, &j) in idx.iter().enumerate() {
                z[j] = sol[k];
            }
            Ok(z)
        },
        |x| dense_dual(a, b, x),
    )?;
    let w = dense_dual(a, b, &x);
    let ax = a.mul_vec(&x);
    let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
    Ok(NnlsSolution { residual: norm2(&r), kkt: kkt_violation(&x, &w, nonneg), x })
}

/// `min ‖A x − b‖₂` subject to `x ≥ 0` (Lawson–Hanson).
pub fn nnls<T: Real>(a: &Mat<T>, b: &[T]) -> Result<NnlsSolution<T>> {
    nnls_mixed(a, b, &vec![true; a.cols()])
}
