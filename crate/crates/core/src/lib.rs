//! Multi-domain graph pre-training.
//!
//! Each domain's features are projected onto a per-domain SVD basis refined by a shared MLP
//! (the domain projection unit), then encoded by a shared variational GCN whose posterior is
//! pulled toward a common standard-normal prior (latent distribution alignment). The crate
//! also carries the evaluation protocols (linear probe, few-shot prototypes, graph-level
//! prototypes), ablation variants and mutual-information diagnostics.
//!
//! The numerical core ([`linalg`], [`autodiff`], [`dpu`], [`lda`]) is generic over the
//! [`Scalar`] type; the aliases below fix it to `f64`, which training, checkpoints and the
//! command line use throughout.

pub mod autodiff;
pub mod cli;
pub mod dpu;
pub mod error;
pub mod eval;
pub mod graph;
pub mod lda;
pub mod linalg;
pub mod scalar;
pub mod train;

pub use error::{LedaError, Result};
pub use scalar::Scalar;

pub type Matrix = linalg::DenseMatrix<f64>;
pub type Sparse = linalg::SparseMatrix<f64>;
pub type Svd = linalg::SvdResult<f64>;
pub type Params = autodiff::ParamSet<f64>;
pub type Tape64 = autodiff::Tape<f64>;
pub type AdamW = autodiff::AdamWState<f64>;
