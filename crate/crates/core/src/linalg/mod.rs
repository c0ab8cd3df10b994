//! Dense and sparse matrix primitives, GCN adjacency normalization, truncated SVD and the
//! Gaussian entropy diagnostic.

mod dense;
mod entropy;
mod sparse;
mod svd;

pub use dense::DenseMatrix;
pub use entropy::{gaussian_entropy, GaussianEntropy, COVARIANCE_RIDGE};
pub use sparse::{normalize_adjacency, SparseMatrix};
pub use svd::{truncated_svd, SvdResult, OVERSAMPLING, POWER_ITERATIONS};
