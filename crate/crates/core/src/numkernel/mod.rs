//! Dense numeric kernels: simplex LP, nonnegative least squares, numeric
//! rank, polyhedral cone membership and positive linear dependence.

mod banded;
mod cone;
mod lp;
mod mat;
mod nnls;
mod qr;

pub use banded::{structured_nnls, SparseRows};
pub use cone::{cone_membership, exists_nonzero, positive_linear_dependence, positive_linear_dependence_tol, ConeDescription, Dependence, Membership};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus, RowSense, LP_FEAS_TOL};
pub use mat::Mat;
pub use nnls::{nnls, nnls_mixed, NnlsSolution};
pub use qr::{independent_subset, least_squares, null_vector, numeric_rank, DEFAULT_RANK_TOL};
