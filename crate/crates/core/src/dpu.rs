//! Domain projection unit.
//!
//! Each domain `i` contributes a frozen SVD basis `Vᵢ` (`dᵢ × k`). A two-layer MLP shared by
//! all domains refines it row by row into `V̂ᵢ = ReLU(Vᵢ W₁ + b₁) W₂ + b₂` (`dᵢ × m`), and
//! node features are aligned as `X̂ᵢ = Xᵢ V̂ᵢ`. Training uses
//!
//! ```text
//! recon = Σᵢ ‖Xᵢ − Xᵢ V̂ᵢ V̂ᵢᵀ‖²_F
//! ortho = Σᵢ ‖V̂ᵢᵀ V̂ᵢ − I_m‖²_F
//! align = recon + λ · ortho
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, ParamSet, Tape, Var};
use crate::error::{LedaError, Result};
use crate::linalg::{truncated_svd, DenseMatrix};
use crate::scalar::Scalar;

pub const W1: &str = "dpu.W1";
pub const B1: &str = "dpu.b1";
pub const W2: &str = "dpu.W2";
pub const B2: &str = "dpu.b2";
pub const PARAM_NAMES: [&str; 4] = [W1, B1, W2, B2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpuConfig {
    /// SVD rank, the MLP input width.
    pub k: usize,
    /// Hidden width.
    pub h: usize,
    /// Aligned dimension.
    pub m: usize,
    /// Weight of the orthogonality term.
    pub lambda: f64,
}

impl Default for DpuConfig {
    fn default() -> Self {
        Self {
            k: 64,
            h: 128,
            m: 64,
            lambda: 1.0,
        }
    }
}

/// Frozen per-domain projection basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainBasis<T> {
    pub domain_id: String,
    /// `dᵢ × k`.
    pub v: DenseMatrix<T>,
    /// Some columns are completion padding because the data had rank below `k`.
    pub padded: bool,
}

/// Right singular vectors of `x` as the domain's initial basis.
///
/// When `x` has fewer than `k` independent directions the basis is completed with orthonormal
/// directions (and zero columns once `dᵢ < k` exhausts the space) and flagged as padded.
pub fn init_basis<T: Scalar>(
    domain_id: &str,
    x: &DenseMatrix<T>,
    k: usize,
    seed: u64,
) -> Result<DomainBasis<T>> {
    let (n, d) = x.shape();
    if k == 0 {
        return Err(LedaError::InvalidArgument("basis rank must be positive".into()));
    }
    let rank = k.min(n).min(d);
    if rank == 0 {
        return Err(LedaError::InvalidArgument(format!(
            "domain '{domain_id}' has an empty {n}x{d} feature matrix"
        )));
    }
    let svd = truncated_svd(x, rank, seed)?;
    let mut padded = svd.rank_deficient;
    let v = if rank == k {
        svd.v
    } else {
        padded = true;
        let mut v = DenseMatrix::zeros(d, k);
        let mut basis: Vec<Vec<T>> = (0..rank).map(|c| svd.v.column(c)).collect();
        let mut axis = 0;
        while basis.len() < k.min(d) && axis < d {
            let mut e = vec![T::zero(); d];
            e[axis] = T::one();
            axis += 1;
            for _ in 0..2 {
                for b in &basis {
                    let c: T = e.iter().zip(b).map(|(&x, &y)| x * y).sum();
                    for (x, &y) in e.iter_mut().zip(b) {
                        *x = *x - c * y;
                    }
                }
            }
            let nrm = e.iter().map(|&x| x * x).sum::<T>().sqrt();
            if nrm > T::of(1e-6) {
                basis.push(e.into_iter().map(|x| x / nrm).collect());
            }
        }
        for (c, col) in basis.iter().enumerate() {
            v.set_column(c, col);
        }
        v
    };
    Ok(DomainBasis {
        domain_id: domain_id.to_string(),
        v,
        padded,
    })
}

/// Shared MLP weights: `W₁ (k × h)`, `b₁ (1 × h)`, `W₂ (h × m)`, `b₂ (1 × m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DpuParams<T> {
    pub w1: DenseMatrix<T>,
    pub b1: DenseMatrix<T>,
    pub w2: DenseMatrix<T>,
    pub b2: DenseMatrix<T>,
}

impl<T: Scalar> DpuParams<T> {
    /// Glorot-uniform weights and zero biases, drawn in the order `W₁`, `W₂`.
    pub fn init<R: Rng + ?Sized>(config: &DpuConfig, rng: &mut R) -> Self {
        let w1 = DenseMatrix::glorot_uniform(config.k, config.h, rng);
        let w2 = DenseMatrix::glorot_uniform(config.h, config.m, rng);
        Self {
            w1,
            b1: DenseMatrix::zeros(1, config.h),
            w2,
            b2: DenseMatrix::zeros(1, config.m),
        }
    }

    pub fn insert_into(&self, params: &mut ParamSet<T>) -> Result<()> {
        params.insert(W1, self.w1.clone())?;
        params.insert(B1, self.b1.clone())?;
        params.insert(W2, self.w2.clone())?;
        params.insert(B2, self.b2.clone())
    }

    pub fn from_params(params: &ParamSet<T>) -> Result<Self> {
        Ok(Self {
            w1: params.value(W1)?.clone(),
            b1: params.value(B1)?.clone(),
            w2: params.value(W2)?.clone(),
            b2: params.value(B2)?.clone(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

fn add_bias<T: Scalar>(mut m: DenseMatrix<T>, bias: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if bias.rows() != 1 || bias.cols() != m.cols() {
        return Err(LedaError::shape(
            "add_row_bias",
            format!("bias {}x{} for {} columns", bias.rows(), bias.cols(), m.cols()),
        ));
    }
    for r in 0..m.rows() {
        for (v, &b) in m.row_mut(r).iter_mut().zip(bias.values()) {
            *v = *v + b;
        }
    }
    Ok(m)
}

/// `V̂ = ReLU(V W₁ + b₁) W₂ + b₂`.
pub fn trans<T: Scalar>(v: &DenseMatrix<T>, params: &DpuParams<T>) -> Result<DenseMatrix<T>> {
    let hidden = add_bias(v.matmul(&params.w1)?, &params.b1)?.map(|x| x.max(T::zero()));
    add_bias(hidden.matmul(&params.w2)?, &params.b2)
}

/// `X̂ = X V̂`.
pub fn align<T: Scalar>(x: &DenseMatrix<T>, vhat: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    x.matmul(vhat)
}

/// [`trans`] recorded on a tape, with the MLP weights taken from `bindings`.
pub fn trans_on_tape<T: Scalar>(tape: &mut Tape<T>, v: Var, bindings: &Bindings) -> Result<Var> {
    let pre = tape.matmul(v, bindings[W1])?;
    let pre = tape.add_row_bias(pre, bindings[B1])?;
    let hidden = tape.relu(pre);
    let out = tape.matmul(hidden, bindings[W2])?;
    tape.add_row_bias(out, bindings[B2])
}

/// Reconstruction and orthogonality terms of one domain.
#[derive(Clone, Copy, Debug)]
pub struct AlignVars {
    /// `X V̂`.
    pub xhat: Var,
    pub recon: Var,
    pub ortho: Var,
}

/// `‖X − X V̂ V̂ᵀ‖²_F` and `‖V̂ᵀ V̂ − I‖²_F` for one domain, with `x` a constant node.
pub fn align_terms_on_tape<T: Scalar>(tape: &mut Tape<T>, x: Var, vhat: Var) -> Result<AlignVars> {
    let xhat = tape.matmul(x, vhat)?;
    let vhat_t = tape.transpose(vhat);
    let rebuilt = tape.matmul(xhat, vhat_t)?;
    let residual = tape.sub(x, rebuilt)?;
    let recon = tape.frobenius_sq(residual);

    let gram = tape.matmul(vhat_t, vhat)?;
    let m = tape.value(gram).rows();
    let eye = tape.constant(DenseMatrix::identity(m));
    let off = tape.sub(gram, eye)?;
    let ortho = tape.frobenius_sq(off);
    Ok(AlignVars { xhat, recon, ortho })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignLoss<T> {
    pub total: T,
    pub recon: T,
    pub ortho: T,
}

/// `align = recon + λ · ortho` summed over `(X, V)` pairs, in the order given.
pub fn loss_align<T: Scalar>(
    domains: &[(&DenseMatrix<T>, &DenseMatrix<T>)],
    params: &DpuParams<T>,
    lambda: T,
) -> Result<AlignLoss<T>> {
    if domains.is_empty() {
        return Err(LedaError::InvalidArgument(
            "alignment loss needs at least one domain".into(),
        ));
    }
    let mut recon = T::zero();
    let mut ortho = T::zero();
    for (x, v) in domains {
        let vhat = trans(v, params)?;
        let rebuilt = x.matmul(&vhat)?.matmul_t_unchecked(&vhat);
        recon = recon + x.sub(&rebuilt)?.frobenius_sq();
        let gram = vhat.t_matmul_unchecked(&vhat);
        ortho = ortho + gram.sub(&DenseMatrix::identity(gram.rows()))?.frobenius_sq();
    }
    let total = recon + lambda * ortho;
    if !total.is_finite() {
        return Err(LedaError::NonFinite(format!(
            "alignment loss (recon {recon}, ortho {ortho})"
        )));
    }
    Ok(AlignLoss {
        total,
        recon,
        ortho,
    })
}
