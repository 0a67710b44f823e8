use super::mat::Mat;
use crate::scalar::Real;

/// Relative rank tolerance.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Householder QR with column pivoting, stored compactly.
pub(crate) struct PivotedQr<T> {
    /// Upper triangle holds R; below-diagonal part holds Householder vectors.
    qr: Mat<T>,
    betas: Vec<T>,
    pub perm: Vec<usize>,
    pub diag: Vec<T>,
}

impl<T: Real> PivotedQr<T> {
    pub fn new(a: &Mat<T>) -> Self {
        let (m, n) = (a.rows(), a.cols());
        let mut qr = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut norms: Vec<T> = (0..n).map(|j| (0..m).map(|i| qr[(i, j)] * qr[(i, j)]).sum()).collect();
        let steps = m.min(n);
        let mut betas = Vec::with_capacity(steps);
        let mut diag = Vec::with_capacity(steps);
        for k in 0..steps {
            // Recompute remaining norms exactly; sizes are small.
            for j in k..n {
                norms[j] = (k..m).map(|i| qr[(i, j)] * qr[(i, j)]).sum();
            }
            let p = (k..n).fold(k, |b, j| if norms[j] > norms[b] { j } else { b });
            if p != k {
                for i in 0..m {
                    let t = qr[(i, k)];
                    qr[(i, k)] = qr[(i, p)];
                    qr[(i, p)] = t;
                }
                perm.swap(k, p);
                norms.swap(k, p);
            }
            let alpha_norm = norms[k].sqrt();
            if alpha_norm == T::zero() {
                betas.push(T::zero());
                diag.push(T::zero());
                continue;
            }
            let x0 = qr[(k, k)];
            let alpha = if x0 >= T::zero() { -alpha_norm } else { alpha_norm };
            // v = x - alpha e1, stored with v0 in place.
            let v0 = x0 - alpha;
            qr[(k, k)] = v0;
            let vnorm2 = v0 * v0 + (k + 1..m).map(|i| qr[(i, k)] * qr[(i, k)]).sum::<T>();
            let beta = if vnorm2 > T::zero() { (T::one() + T::one()) / vnorm2 } else { T::zero() };
            for j in k + 1..n {
                let s: T = (k..m).map(|i| qr[(i, k)] * qr[(i, j)]).sum();
                let f = beta * s;
                for i in k..m {
                    let vik = qr[(i, k)];
                    qr[(i, j)] -= f * vik;
                }
            }
            betas.push(beta);
            diag.push(alpha);
        }
        Self { qr, betas, perm, diag }
    }

    /// Number of diagonal entries above `tol` times the largest.
    pub fn rank(&self, tol: T) -> usize {
        let top = self.diag.first().map_or(T::zero(), |d| d.abs());
        if top == T::zero() {
            return 0;
        }
        self.diag.iter().take_while(|d| d.abs() > tol * top).count()
    }

    /// Applies `Q^T` to `b`.
    fn qt(&self, b: &[T]) -> Vec<T> {
        let m = self.qr.rows();
        let mut y = b.to_vec();
        for (k, &beta) in self.betas.iter().enumerate() {
            if beta == T::zero() {
                continue;
            }
            let s: T = (k..m).map(|i| self.qr[(i, k)] * y[i]).sum();
            let f = beta * s;
            for i in k..m {
                y[i] -= f * self.qr[(i, k)];
            }
        }
        y
    }

    fn r(&self, i: usize, j: usize) -> T {
        if i == j {
            self.diag[i]
        } else {
            self.qr[(i, j)]
        }
    }

    /// Basic least-squares solution using the leading `rank` columns.
    pub fn solve(&self, b: &[T], rank: usize) -> Vec<T> {
        let n = self.qr.cols();
        let y = self.qt(b);
        let mut z = vec![T::zero(); n];
        for i in (0..rank).rev() {
            let mut s = y[i];
            for j in i + 1..rank {
                s -= self.r(i, j) * z[j];
            }
            z[i] = s / self.diag[i];
        }
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }

    /// A kernel vector built from the first non-pivot column, if rank < cols.
    pub fn null_vector(&self, rank: usize) -> Option<Vec<T>> {
        let n = self.qr.cols();
        if rank >= n {
            return None;
        }
        let k = rank;
        let mut z = vec![T::zero(); n];
        z[k] = -T::one();
        for i in (0..rank).rev() {
            let mut s = self.r(i, k);
            for j in i + 1..rank {
                s -= self.r(i, j) * z[j];
            }
            z[i] = s / self.diag[i];
        }
        let mut x = vec![T::zero(); n];
        for (idx, &p) in self.perm.iter().enumerate() {
            x[p] = z[idx];
        }
        Some(x)
    }
}

/// Numeric rank of `mx`: pivots of column-pivoted QR above `tol` times the largest pivot.
pub fn numeric_rank<T: Real>(mx: &Mat<T>, tol: T) -> usize {
    if mx.rows() == 0 || mx.cols() == 0 {
        return 0;
    }
    // Pivoting over the longer dimension keeps the factorization small.
    if mx.cols() > mx.rows() {
        PivotedQr::new(&mx.transpose()).rank(tol)
    } else {
        PivotedQr::new(mx).rank(tol)
    }
}

/// Nonzero `c` with `sum c_j v_j ≈ 0`, or `None` if the vectors are independent.
pub fn null_vector<T: Real>(vectors: &[Vec<T>], tol: T) -> Option<Vec<T>> {
    if vectors.is_empty() {
        return None;
    }
    let qr = PivotedQr::new(&Mat::from_cols(vectors));
    let rank = qr.rank(tol);
    qr.null_vector(rank)
}

/// Indices of a maximal linearly independent subfamily (pivot order).
pub fn independent_subset<T: Real>(vectors: &[Vec<T>], tol: T) -> Vec<usize> {
    if vectors.is_empty() || vectors[0].is_empty() {
        return Vec::new();
    }
    let qr = PivotedQr::new(&Mat::from_cols(vectors));
    let r = qr.rank(tol);
    let mut idx = qr.perm[..r].to_vec();
    idx.sort_unstable();
    idx
}

/// Rank-revealing least squares `argmin ‖A x − b‖` (basic solution).
pub fn least_squares<T: Real>(a: &Mat<T>, b: &[T], tol: T) -> Vec<T> {
    if a.cols() == 0 {
        return Vec::new();
    }
    let qr = PivotedQr::new(a);
    let r = qr.rank(tol);
    qr.solve(b, r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_examples() {
        let m = Mat::<f64>::from_rows(&[vec![1.0, 1.0, -1.0], vec![2.0, 2.0, -2.0]]);
        assert_eq!(numeric_rank(&m, 1e-8), 1);
        assert_eq!(numeric_rank(&Mat::<f64>::identity(3), 1e-8), 3);
        assert_eq!(numeric_rank(&Mat::<f64>::zeros(3, 2), 1e-8), 0);
    }

    #[test]
    fn kernel_of_parallel_pair() {
        let v = null_vector::<f64>(&[vec![1.0, 1.0, -1.0], vec![2.0, 2.0, -2.0]], 1e-8).unwrap();
        // proportional to (2, -1)
        assert!((v[0] + 2.0 * v[1]).abs() < 1e-12 && v[0] != 0.0);
    }

    #[test]
    fn least_squares_overdetermined() {
        let a = Mat::<f64>::from_rows(&[vec![1.0], vec![1.0]]);
        let x = least_squares(&a, &[1.0, 3.0], 1e-12);
        assert!((x[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_square() {
        let a = Mat::<f64>::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]);
        let x = least_squares(&a, &[3.0, 5.0], 1e-12);
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }
}
