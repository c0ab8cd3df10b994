use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::AdamWConfig;
use crate::dpu::DpuConfig;
use crate::error::{LedaError, Result};
use crate::lda::LdaConfig;
use crate::train::{TrainConfig, Variant};

/// JSON run description. Relative `data` paths resolve against the config file's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub k: usize,
    pub h: usize,
    pub m: usize,
    pub lambda: f64,
    pub h_e: usize,
    pub z: usize,
    pub beta_kl: f64,
    pub mu_align: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = DpuConfig::default();
        let l = LdaConfig::default();
        Self {
            k: d.k,
            h: d.h,
            m: d.m,
            lambda: d.lambda,
            h_e: l.h_e,
            z: l.z,
            beta_kl: l.beta_kl,
            mu_align: TrainConfig::default().mu_align,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub seed: u64,
    pub lr: f64,
    pub weight_decay: f64,
    pub variant: Variant,
    pub tau: f64,
    pub two_phase: bool,
    pub align_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            seed: t.seed,
            lr: t.optimizer.lr,
            weight_decay: t.optimizer.weight_decay,
            variant: t.variant,
            tau: t.tau,
            two_phase: t.two_phase,
            align_epochs: t.align_epochs,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Extra propagation steps per domain id; unlisted domains use 0.
    pub t_propagate: BTreeMap<String, usize>,
    pub k_shot: usize,
    pub repeats: usize,
    pub train_frac: f64,
    pub runs: usize,
    pub support_per_class: usize,
    pub seed: u64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            t_propagate: BTreeMap::new(),
            k_shot: 1,
            repeats: 500,
            train_frac: 0.1,
            runs: 20,
            support_per_class: 1,
            seed: 66666,
        }
    }
}

impl EvalSection {
    pub fn t_for(&self, domain_id: &str) -> usize {
        self.t_propagate.get(domain_id).copied().unwrap_or(0)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| LedaError::Config(e.to_string()))
    }

    /// Reads `path`; a relative `data` entry is made relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| LedaError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| LedaError::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        if let Some(data) = &cfg.data {
            if data.is_relative() {
                let base = path.parent().unwrap_or_else(|| Path::new("."));
                cfg.data = Some(base.join(data));
            }
        }
        Ok(cfg)
    }

    pub fn train_config(&self) -> TrainConfig {
        let m = &self.model;
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            seed: t.seed,
            optimizer: AdamWConfig {
                lr: t.lr,
                weight_decay: t.weight_decay,
                ..Default::default()
            },
            dpu: DpuConfig {
                k: m.k,
                h: m.h,
                m: m.m,
                lambda: m.lambda,
            },
            lda: LdaConfig {
                h_e: m.h_e,
                z: m.z,
                beta_kl: m.beta_kl,
            },
            mu_align: m.mu_align,
            variant: t.variant,
            tau: t.tau,
            two_phase: t.two_phase,
            align_epochs: t.align_epochs,
        }
    }
}

fn strip_prefix(e: &LedaError) -> String {
    match e {
        LedaError::Config(msg) => msg.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.train_config(), TrainConfig::default());
        assert_eq!(cfg.eval.repeats, 500);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = RunConfig::from_json(r#"{"model": {"k": 4, "width": 3}}"#).unwrap_err();
        assert!(matches!(err, LedaError::Config(_)));
        assert!(err.to_string().contains("width"), "{err}");
    }

    #[test]
    fn sections_map_onto_train_config() {
        let cfg = RunConfig::from_json(
            r#"{"model": {"k": 4, "z": 3, "mu_align": 0.5},
                "train": {"epochs": 7, "variant": "no-lda", "lr": 0.01}}"#,
        )
        .unwrap();
        let t = cfg.train_config();
        assert_eq!((t.dpu.k, t.lda.z, t.epochs), (4, 3, 7));
        assert_eq!(t.mu_align, 0.5);
        assert_eq!(t.variant, Variant::NoLda);
        assert_eq!(t.optimizer.lr, 0.01);
    }
}
