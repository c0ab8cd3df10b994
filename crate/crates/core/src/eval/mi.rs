//! Mutual-information proxy between two domains' embeddings and projection entropy.
//!
//! With temperature-scaled cosine scores `s` over cross-domain pairs, the proxy is
//! `E[s] − log Σ exp(s)`. The bias term of the underlying bound has no estimator and is
//! reported as not estimated.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{basis_for, EmbeddingSet};
use crate::dpu;
use crate::error::{LedaError, Result};
use crate::graph::DomainGraph;
use crate::linalg::{gaussian_entropy, GaussianEntropy};
use crate::train::Checkpoint;

/// Pair budget above which pairs are sampled uniformly with replacement.
pub const MAX_PAIRS: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiRecord {
    pub domain_a: String,
    pub domain_b: String,
    pub tau: f64,
    pub pairs: usize,
    pub sampled: bool,
    pub expected_s: f64,
    pub log_z: f64,
    pub mi_proxy: f64,
    /// Always `"not-estimated"`.
    pub delta: String,
}

/// `(E[s], log Σ exp(s), E[s] − log Σ exp(s))` of a non-empty score list.
pub fn mi_from_scores(scores: &[f64]) -> Result<(f64, f64, f64)> {
    if scores.is_empty() {
        return Err(LedaError::InvalidArgument("no similarity scores".into()));
    }
    let expected = scores.iter().sum::<f64>() / scores.len() as f64;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    Ok((expected, log_z, expected - log_z))
}

fn unit_rows(e: &crate::Matrix) -> Vec<Vec<f64>> {
    (0..e.rows())
        .map(|r| {
            let row = e.row(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter().map(|v| v / n).collect()
            } else {
                row.to_vec()
            }
        })
        .collect()
}

/// Proxy over every cross pair of `a × b`, or [`MAX_PAIRS`] seeded samples of them.
pub fn mi_diagnostic(a: &EmbeddingSet, b: &EmbeddingSet, tau: f64, seed: u64) -> Result<MiRecord> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(LedaError::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    let (na, nb) = (a.embeddings.rows(), b.embeddings.rows());
    if na == 0 || nb == 0 {
        return Err(LedaError::InvalidArgument("mutual-information diagnostic needs non-empty sets".into()));
    }
    if a.embeddings.cols() != b.embeddings.cols() {
        return Err(LedaError::shape(
            "mi_diagnostic",
            format!("{} vs {} embedding columns", a.embeddings.cols(), b.embeddings.cols()),
        ));
    }
    let ua = unit_rows(&a.embeddings);
    let ub = unit_rows(&b.embeddings);
    let score = |i: usize, j: usize| ua[i].iter().zip(&ub[j]).map(|(x, y)| x * y).sum::<f64>() / tau;

    let total = na.saturating_mul(nb);
    let sampled = total > MAX_PAIRS;
    let scores: Vec<f64> = if sampled {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..MAX_PAIRS)
            .map(|_| score(rng.random_range(0..na), rng.random_range(0..nb)))
            .collect()
    } else {
        (0..na).flat_map(|i| (0..nb).map(move |j| (i, j))).map(|(i, j)| score(i, j)).collect()
    };
    let (expected_s, log_z, mi_proxy) = mi_from_scores(&scores)?;
    Ok(MiRecord {
        domain_a: a.domain_id.clone(),
        domain_b: b.domain_id.clone(),
        tau,
        pairs: scores.len(),
        sampled,
        expected_s,
        log_z,
        mi_proxy,
        delta: "not-estimated".into(),
    })
}

/// Gaussian entropy of the domain's projected basis under `ckpt`.
pub fn diagnostics_entropy(ckpt: &Checkpoint, domain: &DomainGraph) -> Result<GaussianEntropy> {
    let basis = basis_for(ckpt, &domain.domain_id, &domain.features)?;
    let vhat = if ckpt.config.variant.uses_dpu() {
        dpu::trans(&basis.v, &ckpt.dpu)?
    } else {
        basis.v
    };
    Ok(gaussian_entropy(&vhat))
}
