//! Latent distribution alignment: a variational GCN shared across domains.
//!
//! ```text
//! Z_base = ReLU(S X̂ W_base)
//! μ      = S Z_base W_μ
//! log σ  = S Z_base W_σ
//! Z      = μ + exp(log σ) ⊙ ε,   ε ~ N(0, I)
//! X̂_rec  = S Z W_dec
//! loss   = mean_nodes ‖X̂ − X̂_rec‖² + β · mean_nodes Σ_dims ½(μ² + σ² − 1 − 2 log σ)
//! ```
//!
//! `S` is the normalized adjacency of the domain. The loss is the negated evidence lower
//! bound under a unit-variance Gaussian likelihood and a standard-normal prior.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bindings, ParamSet, Tape, Var};
use crate::error::{LedaError, Result};
use crate::linalg::{DenseMatrix, SparseMatrix};
use crate::scalar::Scalar;

pub const W_BASE: &str = "lda.W_base";
pub const W_MU: &str = "lda.W_mu";
pub const W_SIGMA: &str = "lda.W_sigma";
pub const W_DEC: &str = "lda.W_dec";
pub const PARAM_NAMES: [&str; 4] = [W_BASE, W_MU, W_SIGMA, W_DEC];

/// Range `log σ` is clamped to inside the KL term.
pub const LOG_SIGMA_CLAMP: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LdaConfig {
    /// Width of the base GCN layer.
    pub h_e: usize,
    /// Latent dimension.
    pub z: usize,
    /// Weight of the KL term.
    pub beta_kl: f64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            h_e: 256,
            z: 128,
            beta_kl: 1.0,
        }
    }
}

/// Standard-normal prior `N(0, I)` of dimension `z`; fixed and shared by every domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prior {
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LdaParams<T> {
    pub w_base: DenseMatrix<T>,
    pub w_mu: DenseMatrix<T>,
    pub w_sigma: DenseMatrix<T>,
    pub w_dec: DenseMatrix<T>,
}

impl<T: Scalar> LdaParams<T> {
    /// Glorot-uniform weights drawn in the order base, μ, σ, decoder.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, config: &LdaConfig, rng: &mut R) -> Self {
        Self {
            w_base: DenseMatrix::glorot_uniform(input_dim, config.h_e, rng),
            w_mu: DenseMatrix::glorot_uniform(config.h_e, config.z, rng),
            w_sigma: DenseMatrix::glorot_uniform(config.h_e, config.z, rng),
            w_dec: DenseMatrix::glorot_uniform(config.z, input_dim, rng),
        }
    }

    pub fn insert_into(&self, params: &mut ParamSet<T>) -> Result<()> {
        params.insert(W_BASE, self.w_base.clone())?;
        params.insert(W_MU, self.w_mu.clone())?;
        params.insert(W_SIGMA, self.w_sigma.clone())?;
        params.insert(W_DEC, self.w_dec.clone())
    }

    pub fn from_params(params: &ParamSet<T>) -> Result<Self> {
        Ok(Self {
            w_base: params.value(W_BASE)?.clone(),
            w_mu: params.value(W_MU)?.clone(),
            w_sigma: params.value(W_SIGMA)?.clone(),
            w_dec: params.value(W_DEC)?.clone(),
        })
    }

    pub fn prior(&self) -> Prior {
        Prior {
            dim: self.w_mu.cols(),
        }
    }
}

/// Encoder outputs for one domain; the sample and its noise are present after reparameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentState<T> {
    pub z_base: DenseMatrix<T>,
    pub mu: DenseMatrix<T>,
    pub log_sigma: DenseMatrix<T>,
    pub z_sample: Option<DenseMatrix<T>>,
    pub eps: Option<DenseMatrix<T>>,
}

pub fn encode<T: Scalar>(
    xhat: &DenseMatrix<T>,
    s: &SparseMatrix<T>,
    params: &LdaParams<T>,
) -> Result<LatentState<T>> {
    let z_base = s.matmul_dense(&xhat.matmul(&params.w_base)?)?.map(|v| v.max(T::zero()));
    let propagated = s.matmul_dense(&z_base)?;
    let mu = propagated.matmul(&params.w_mu)?;
    let log_sigma = propagated.matmul(&params.w_sigma)?;
    Ok(LatentState {
        z_base,
        mu,
        log_sigma,
        z_sample: None,
        eps: None,
    })
}

/// Standard-normal noise of the given shape from `seed`.
pub fn standard_normal<T: Scalar>(rows: usize, cols: usize, seed: u64) -> DenseMatrix<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DenseMatrix::random_normal(rows, cols, &mut rng)
}

/// `Z = μ + exp(log σ) ⊙ ε`; returns `(Z, ε)`.
pub fn reparameterize<T: Scalar>(
    mu: &DenseMatrix<T>,
    log_sigma: &DenseMatrix<T>,
    seed: u64,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    let eps = standard_normal(mu.rows(), mu.cols(), seed);
    let z = sample_with_noise(mu, log_sigma, &eps)?;
    Ok((z, eps))
}

pub fn sample_with_noise<T: Scalar>(
    mu: &DenseMatrix<T>,
    log_sigma: &DenseMatrix<T>,
    eps: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    let scaled = log_sigma.zip_map(eps, "reparameterize", |ls, e| ls.exp() * e)?;
    mu.add(&scaled)
}

/// `X̂_rec = S Z W_dec`.
pub fn decode<T: Scalar>(
    z: &DenseMatrix<T>,
    s: &SparseMatrix<T>,
    params: &LdaParams<T>,
) -> Result<DenseMatrix<T>> {
    s.matmul_dense(&z.matmul(&params.w_dec)?)
}

/// Mean over nodes of `Σ_dims ½(μ² + exp(2 log σ) − 1 − 2 log σ)`, with `log σ` clamped
/// to `[-10, 10]`.
pub fn kl_to_prior<T: Scalar>(mu: &DenseMatrix<T>, log_sigma: &DenseMatrix<T>) -> Result<T> {
    let half = T::of(0.5);
    let bound = T::of(LOG_SIGMA_CLAMP);
    let terms = mu.zip_map(log_sigma, "kl_to_prior", |m, ls| {
        let ls = ls.max(-bound).min(bound);
        let two_ls = ls + ls;
        half * (m * m + two_ls.exp() - T::one() - two_ls)
    })?;
    Ok(terms.sum() / T::of(mu.rows().max(1) as f64))
}

/// Propagates `z` through `S` `t` more times; `t = 0` returns the input.
pub fn propagate_extra<T: Scalar>(
    z: &DenseMatrix<T>,
    s: &SparseMatrix<T>,
    t: usize,
) -> Result<DenseMatrix<T>> {
    let mut out = z.clone();
    for _ in 0..t {
        out = s.matmul_dense(&out)?;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdaLoss<T> {
    pub loss: T,
    pub recon: T,
    pub kl: T,
}

/// Tape handles for the encoder outputs.
#[derive(Clone, Copy, Debug)]
pub struct EncoderVars {
    pub z_base: Var,
    pub mu: Var,
    pub log_sigma: Var,
}

/// `ReLU(S X̂ W_base)` on a tape.
pub fn base_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    xhat: Var,
    s: &Arc<SparseMatrix<T>>,
    bindings: &Bindings,
) -> Result<Var> {
    let projected = tape.matmul(xhat, bindings[W_BASE])?;
    let propagated = tape.sparse_matmul(s, projected)?;
    Ok(tape.relu(propagated))
}

pub fn encode_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    xhat: Var,
    s: &Arc<SparseMatrix<T>>,
    bindings: &Bindings,
) -> Result<EncoderVars> {
    let z_base = base_on_tape(tape, xhat, s, bindings)?;
    let propagated = tape.sparse_matmul(s, z_base)?;
    let mu = tape.matmul(propagated, bindings[W_MU])?;
    let log_sigma = tape.matmul(propagated, bindings[W_SIGMA])?;
    Ok(EncoderVars {
        z_base,
        mu,
        log_sigma,
    })
}

pub fn kl_on_tape<T: Scalar>(tape: &mut Tape<T>, mu: Var, log_sigma: Var) -> Result<Var> {
    let n = tape.value(mu).rows().max(1);
    let bound = T::of(LOG_SIGMA_CLAMP);
    let ls = tape.clamp(log_sigma, -bound, bound);
    let mu_sq = tape.square(mu);
    let two_ls = tape.scale(ls, T::of(2.0));
    let var = tape.exp(two_ls);
    let a = tape.add(mu_sq, var)?;
    let b = tape.sub(a, two_ls)?;
    let c = tape.offset(b, -T::one());
    let total = tape.reduce_sum(c);
    Ok(tape.scale(total, T::of(0.5) / T::of(n as f64)))
}

/// Scalar handles for the per-domain variational loss.
#[derive(Clone, Copy, Debug)]
pub struct LdaVars {
    pub loss: Var,
    pub recon: Var,
    pub kl: Var,
    pub encoder: EncoderVars,
}

/// Full per-domain variational loss on a tape, with the noise `eps` held constant.
pub fn domain_loss_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    xhat: Var,
    s: &Arc<SparseMatrix<T>>,
    bindings: &Bindings,
    eps: &DenseMatrix<T>,
    beta_kl: T,
) -> Result<LdaVars> {
    let encoder = encode_on_tape(tape, xhat, s, bindings)?;
    let eps = tape.constant_named("eps", eps.clone());
    let sigma = tape.exp(encoder.log_sigma);
    let noise = tape.mul(sigma, eps)?;
    let z = tape.add(encoder.mu, noise)?;

    let decoded = tape.matmul(z, bindings[W_DEC])?;
    let rebuilt = tape.sparse_matmul(s, decoded)?;
    let residual = tape.sub(xhat, rebuilt)?;
    let sq = tape.frobenius_sq(residual);
    let n = tape.value(xhat).rows().max(1);
    let recon = tape.scale(sq, T::one() / T::of(n as f64));

    let kl = kl_on_tape(tape, encoder.mu, encoder.log_sigma)?;
    let weighted = tape.scale(kl, beta_kl);
    let loss = tape.add(recon, weighted)?;
    Ok(LdaVars {
        loss,
        recon,
        kl,
        encoder,
    })
}

/// Per-domain variational loss `(loss, recon, kl)` with noise drawn from `seed`.
pub fn loss_total_domain<T: Scalar>(
    xhat: &DenseMatrix<T>,
    s: &SparseMatrix<T>,
    params: &LdaParams<T>,
    seed: u64,
    beta_kl: T,
) -> Result<LdaLoss<T>> {
    let mut tape = Tape::new();
    let mut set = ParamSet::new();
    params.insert_into(&mut set)?;
    let bindings = set.bind(&mut tape);
    let xhat_var = tape.constant(xhat.clone());
    let eps = standard_normal(xhat.rows(), params.w_mu.cols(), seed);
    let s = Arc::new(s.clone());
    let vars = domain_loss_on_tape(&mut tape, xhat_var, &s, &bindings, &eps, beta_kl)?;
    let out = LdaLoss {
        loss: tape.scalar(vars.loss)?,
        recon: tape.scalar(vars.recon)?,
        kl: tape.scalar(vars.kl)?,
    };
    if !out.loss.is_finite() {
        return Err(LedaError::NonFinite(format!(
            "variational loss (recon {}, kl {})",
            out.recon, out.kl
        )));
    }
    Ok(out)
}
