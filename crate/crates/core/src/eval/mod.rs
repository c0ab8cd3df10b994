//! Downstream protocols on frozen embeddings.
//!
//! Every protocol takes a base seed and derives the seed of repeat `r` as `seed + r`, so
//! repeats are independent, reproducible and can run in parallel; results are aggregated in
//! repeat order.

mod fewshot;
mod mi;
mod probe;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dpu::{self, DomainBasis};
use crate::error::{LedaError, Result};
use crate::graph::DomainGraph;
use crate::lda::{self, LdaParams};
use crate::linalg::normalize_adjacency;
use crate::train::{basis_seed, Checkpoint, Variant};
use crate::{Matrix, Sparse};

pub use fewshot::{cosine_predict, fewshot_eval, graph_eval, prototypes};
pub use mi::{diagnostics_entropy, mi_diagnostic, mi_from_scores, MiRecord, MAX_PAIRS};
pub use probe::{linear_probe, ProbeConfig};

/// Node embeddings of one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub domain_id: String,
    /// `n × z`.
    pub embeddings: Matrix,
    pub labels: Option<Vec<usize>>,
}

impl EmbeddingSet {
    pub fn new(domain_id: impl Into<String>, embeddings: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != embeddings.rows() {
                return Err(LedaError::InvalidArgument(format!(
                    "{} labels for {} embeddings",
                    l.len(),
                    embeddings.rows()
                )));
            }
        }
        if !embeddings.is_finite() {
            return Err(LedaError::NonFinite("embedding entries".into()));
        }
        Ok(Self {
            domain_id: domain_id.into(),
            embeddings,
            labels,
        })
    }

    pub(crate) fn require_labels(&self) -> Result<&[usize]> {
        self.labels.as_deref().ok_or_else(|| {
            LedaError::Dataset(format!("domain '{}' has no labels", self.domain_id))
        })
    }
}

/// Which representation a checkpoint's variant exposes downstream.
pub fn embedding_kind(variant: Variant) -> &'static str {
    match variant {
        Variant::Full | Variant::NoDpu => "mu",
        Variant::NoLda => "propagated-aligned-features",
        Variant::DpuCl => "base-encoder",
    }
}

/// The checkpoint's basis for `domain_id` when its shape fits `features`, otherwise a fresh
/// one computed exactly as training would have.
pub fn basis_for(ckpt: &Checkpoint, domain_id: &str, features: &Matrix) -> Result<DomainBasis<f64>> {
    match ckpt.basis(domain_id) {
        Some(b) if b.v.rows() == features.cols() => Ok(b.clone()),
        _ => dpu::init_basis(
            domain_id,
            features,
            ckpt.config.dpu.k,
            basis_seed(ckpt.config.seed, domain_id),
        ),
    }
}

/// Embeds `domain` using an explicit basis.
pub fn embed_with_basis(
    domain: &DomainGraph,
    basis: &DomainBasis<f64>,
    s: &Sparse,
    ckpt: &Checkpoint,
    t: usize,
) -> Result<EmbeddingSet> {
    let k = ckpt.config.dpu.k;
    if basis.v.cols() != k || basis.v.rows() != domain.feature_dim() {
        return Err(LedaError::shape(
            "embed",
            format!(
                "basis {}x{} for domain '{}' with {} features and k = {k}",
                basis.v.rows(),
                basis.v.cols(),
                domain.domain_id,
                domain.feature_dim()
            ),
        ));
    }
    let variant = ckpt.config.variant;
    let xhat = if variant.uses_dpu() {
        dpu::align(&domain.features, &dpu::trans(&basis.v, &ckpt.dpu)?)?
    } else {
        domain.features.matmul(&basis.v)?
    };
    let raw = match variant {
        Variant::Full | Variant::NoDpu => encode_checked(&xhat, s, &ckpt.lda)?.mu,
        Variant::NoLda => s.matmul_dense(&xhat)?,
        Variant::DpuCl => encode_checked(&xhat, s, &ckpt.lda)?.z_base,
    };
    let e = lda::propagate_extra(&raw, s, t)?;
    EmbeddingSet::new(domain.domain_id.clone(), e, domain.labels.clone())
}

fn encode_checked(xhat: &Matrix, s: &Sparse, params: &LdaParams<f64>) -> Result<lda::LatentState<f64>> {
    if params.w_base.rows() != xhat.cols() {
        return Err(LedaError::shape(
            "embed",
            format!(
                "aligned features have {} columns but the encoder expects {}",
                xhat.cols(),
                params.w_base.rows()
            ),
        ));
    }
    lda::encode(xhat, s, params)
}

/// Deterministic embeddings of `domain` under `ckpt`, propagated `t` extra steps.
pub fn embed(domain: &DomainGraph, ckpt: &Checkpoint, t: usize) -> Result<EmbeddingSet> {
    let basis = basis_for(ckpt, &domain.domain_id, &domain.features)?;
    let s = normalize_adjacency(&domain.adjacency)?;
    embed_with_basis(domain, &basis, &s, ckpt, t)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Result of one evaluation task; accuracies are percentages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: String,
    pub mean_accuracy: f64,
    pub std: f64,
    pub repeats: usize,
    pub seed: u64,
    pub accuracies: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub macro_f1_std: Option<f64>,
    /// Effective configuration of the run, filled in by the caller.
    pub config: serde_json::Value,
    pub flags: Vec<String>,
}

impl EvalReport {
    pub(crate) fn from_accuracies(task: impl Into<String>, seed: u64, accuracies: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&accuracies);
        Self {
            task: task.into(),
            mean_accuracy: mean,
            std,
            repeats: accuracies.len(),
            seed,
            accuracies,
            macro_f1: None,
            macro_f1_std: None,
            config: serde_json::Value::Null,
            flags: Vec::new(),
        }
    }
}

/// Pretty JSON of any serializable value with object keys sorted at every level.
pub fn to_sorted_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's map is ordered by key unless `preserve_order` is enabled.
    let v = serde_json::to_value(value).map_err(|e| LedaError::InvalidArgument(format!("json: {e}")))?;
    serde_json::to_string_pretty(&v).map_err(|e| LedaError::InvalidArgument(format!("json: {e}")))
}

/// Writes embeddings as TSV: node index, then one column per dimension.
pub fn write_embeddings_tsv(set: &EmbeddingSet, path: &Path) -> Result<()> {
    let mut out = String::new();
    for r in 0..set.embeddings.rows() {
        out.push_str(&r.to_string());
        for v in set.embeddings.row(r) {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| LedaError::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| LedaError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpu::DpuConfig;
    use crate::graph::{generate_sbm, GraphCollection};
    use crate::lda::LdaConfig;
    use crate::train::{pretrain, TrainConfig};

    fn trained(variant: Variant) -> Checkpoint {
        let a = generate_sbm(2, 5, 0.8, 0.1, 6, 3.0, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            dpu: DpuConfig {
                k: 3,
                h: 5,
                m: 4,
                lambda: 1.0,
            },
            lda: LdaConfig {
                h_e: 5,
                z: 3,
                beta_kl: 1.0,
            },
            variant,
            ..Default::default()
        };
        pretrain(&GraphCollection::node_level(vec![a]).unwrap(), &cfg).unwrap()
    }

    #[test]
    fn embeddings_are_deterministic_and_sized() {
        let ckpt = trained(Variant::Full);
        let unseen = generate_sbm(3, 4, 0.9, 0.1, 9, 2.0, 5).unwrap();
        let a = embed(&unseen, &ckpt, 0).unwrap();
        let b = embed(&unseen, &ckpt, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.embeddings.shape(), (12, 3));
    }

    #[test]
    fn variant_embedding_widths() {
        let g = generate_sbm(2, 5, 0.8, 0.1, 7, 3.0, 9).unwrap();
        assert_eq!(embed(&g, &trained(Variant::NoDpu), 1).unwrap().embeddings.cols(), 3);
        assert_eq!(embed(&g, &trained(Variant::NoLda), 1).unwrap().embeddings.cols(), 4);
        assert_eq!(embed(&g, &trained(Variant::DpuCl), 1).unwrap().embeddings.cols(), 5);
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    #[test]
    fn sorted_keys() {
        let report = EvalReport::from_accuracies("t", 1, vec![50.0]);
        let json = to_sorted_json(&report).unwrap();
        let keys: Vec<usize> = ["\"accuracies\"", "\"config\"", "\"flags\"", "\"mean_accuracy\"", "\"task\""]
            .iter()
            .map(|k| json.find(k).unwrap())
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]), "{json}");
    }
}
