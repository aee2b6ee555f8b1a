//! Dense linear algebra, seeded random streams and stable log-domain helpers.

mod chol;
mod mat;
mod rng;
mod stats;

pub use chol::Cholesky;
pub use mat::{matmul, Mat};
pub(crate) use mat::{gemm, transpose_into};
pub use rng::{stream_id, Rng};
pub use stats::{diag_gaussian_log_density, gaussian_log_density, log_sum_exp};
