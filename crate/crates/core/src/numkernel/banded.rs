//! Banded least squares by row-wise Givens rotations, used for the large
//! stage-structured multiplier systems where dense QR would be wasteful.

use super::nnls::{active_set, kkt_violation, NnlsSolution};
use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};

/// Sparse row-major system `A x ≈ b`.
#[derive(Clone, Debug, Default)]
pub struct SparseRows<T> {
    ncols: usize,
    rows: Vec<Vec<(usize, T)>>,
    rhs: Vec<T>,
}

impl<T: Real> SparseRows<T> {
    pub fn new(ncols: usize) -> Self {
        Self { ncols, rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// Appends a row; duplicate columns are summed and zeros dropped.
    pub fn push(&mut self, mut entries: Vec<(usize, T)>, rhs: T) -> Result<()> {
        if let Some(&(j, _)) = entries.iter().find(|e| e.0 >= self.ncols) {
            return Err(Error::Dimension(format!("column {j} out of range ({} columns)", self.ncols)));
        }
        if !rhs.is_finite() || entries.iter().any(|e| !e.1.is_finite()) {
            return Err(Error::Domain("non-finite entry in sparse row".into()));
        }
        entries.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, T)> = Vec::with_capacity(entries.len());
        for (j, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += v,
                _ => merged.push((j, v)),
            }
        }
        merged.retain(|e| e.1 != T::zero());
        self.rows.push(merged);
        self.rhs.push(rhs);
        Ok(())
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        self.rows.iter().map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()).collect()
    }

    /// `b − A x`.
    pub fn residual(&self, x: &[T]) -> Vec<T> {
        self.mul(x).iter().zip(&self.rhs).map(|(&ax, &b)| b - ax).collect()
    }

    pub fn tmul(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.ncols];
        for (r, &yi) in self.rows.iter().zip(y) {
            for &(j, v) in r {
                out[j] += v * yi;
            }
        }
        out
    }

    fn bandwidth(&self) -> usize {
        self.rows.iter().filter_map(|r| Some(r.last()?.0 - r.first()?.0 + 1)).max().unwrap_or(1)
    }

    /// Least squares over `passive` columns with Tikhonov weight `ridge`;
    /// other columns are held at zero.
    fn solve_passive(&self, passive: &[bool], ridge: T, order: &[usize], w: usize) -> Vec<T> {
        let n = self.ncols;
        let mut r = vec![T::zero(); n * w];
        let mut qtb = vec![T::zero(); n];
        let mut filled = vec![false; n];
        let mut buf = vec![T::zero(); w];
        // Ridge rows are interleaved at their own column.
        let mut ridge_next = 0usize;
        let insert = |c0: usize, buf: &mut [T], mut beta: T, r: &mut [T], qtb: &mut [T], filled: &mut [bool]| {
            for c in c0..(c0 + w).min(n) {
                let off = c - c0;
                let v = buf[off];
                if v == T::zero() {
                    continue;
                }
                let rc = &mut r[c * w..(c + 1) * w];
                let len = w - off;
                if !filled[c] {
                    rc[..len].copy_from_slice(&buf[off..]);
                    for e in rc[len..].iter_mut() {
                        *e = T::zero();
                    }
                    qtb[c] = beta;
                    filled[c] = true;
                    return;
                }
                let d = rc[0];
                let rho = d.hypot(v);
                let (cs, sn) = (d / rho, v / rho);
                for k in 0..len {
                    let a = rc[k];
                    let b = buf[off + k];
                    rc[k] = cs * a + sn * b;
                    buf[off + k] = cs * b - sn * a;
                }
                buf[off] = T::zero();
                let q = qtb[c];
                qtb[c] = cs * q + sn * beta;
                beta = cs * beta - sn * q;
            }
        };
        for &i in order {
            let row = &self.rows[i];
            let Some(&(c0, _)) = row.first() else { continue };
            while ridge_next < c0 {
                if passive[ridge_next] && ridge > T::zero() {
                    buf.iter_mut().for_each(|e| *e = T::zero());
                    buf[0] = ridge;
                    insert(ridge_next, &mut buf, T::zero(), &mut r, &mut qtb, &mut filled);
                }
                ridge_next += 1;
            }
            buf.iter_mut().for_each(|e| *e = T::zero());
            for &(j, v) in row {
                if passive[j] {
                    buf[j - c0] = v;
                }
            }
            insert(c0, &mut buf, self.rhs[i], &mut r, &mut qtb, &mut filled);
        }
        while ridge_next < n {
            if passive[ridge_next] && ridge > T::zero() {
                buf.iter_mut().for_each(|e| *e = T::zero());
                buf[0] = ridge;
                insert(ridge_next, &mut buf, T::zero(), &mut r, &mut qtb, &mut filled);
            }
            ridge_next += 1;
        }
        let mut z = vec![T::zero(); n];
        let tiny = T::min_positive_value().sqrt();
        for c in (0..n).rev() {
            if !filled[c] || !passive[c] {
                continue;
            }
            let rc = &r[c * w..(c + 1) * w];
            if rc[0].abs() <= tiny {
                continue;
            }
            let mut s = qtb[c];
            for k in 1..w.min(n - c) {
                s -= rc[k] * z[c + k];
            }
            z[c] = s / rc[0];
        }
        z
    }
}

/// Sign-constrained least squares on a banded sparse system:
/// `min ‖A x − b‖² + ridge² ‖x‖²` with `x_j ≥ 0` where `nonneg[j]`.
///
/// `warm` optionally seeds the passive set.
pub fn structured_nnls<T: Real>(
    sys: &SparseRows<T>,
    nonneg: &[bool],
    ridge: T,
    warm: Option<&[bool]>,
) -> Result<NnlsSolution<T>> {
    if nonneg.len() != sys.ncols {
        return Err(Error::Dimension("structured_nnls: mask length differs from column count".into()));
    }
    let mut order: Vec<usize> = (0..sys.nrows()).collect();
    order.sort_by_key(|&i| sys.rows[i].first().map_or(usize::MAX, |e| e.0));
    let w = sys.bandwidth();
    let scale = sys.rows.iter().flatten().fold(T::one(), |a, e| a.max(e.1.abs()));
    let tol = T::tol(1e-13) * scale * scale;
    let r2 = ridge * ridge;
    let dual = |x: &[T]| {
        let mut g = sys.tmul(&sys.residual(x));
        for (gj, &xj) in g.iter_mut().zip(x) {
            *gj -= r2 * xj;
        }
        g
    };
    let x = active_set(nonneg, warm, tol, |p| Ok(sys.solve_passive(p, ridge, &order, w)), dual)?;
    let g = dual(&x);
    Ok(NnlsSolution { residual: norm2(&sys.residual(&x)), kkt: kkt_violation(&x, &g, nonneg), x })
}
