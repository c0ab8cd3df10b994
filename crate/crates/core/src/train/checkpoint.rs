//! Self-describing checkpoint files.
//!
//! Layout: the 8 magic bytes `LEDACKPT`, a little-endian `u32` header length, a JSON header
//! and a payload of little-endian `f64` values. Each header tensor entry gives its name,
//! shape and byte offset into the payload; matrices are stored row-major.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LossRecord, TrainConfig};
use crate::autodiff::ParamSet;
use crate::dpu::{self, DomainBasis, DpuParams};
use crate::error::{LedaError, Result};
use crate::lda::{self, LdaParams};
use crate::Matrix;

pub const MAGIC: &[u8; 8] = b"LEDACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

const BASIS_PREFIX: &str = "basis.";

/// Per-domain facts recorded at training time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainRecord {
    pub domain_id: String,
    pub feature_dim: usize,
    pub num_nodes: usize,
    pub padded_basis: bool,
    /// Entropy of the projected basis before and after training, absent when degenerate.
    pub entropy_init: Option<f64>,
    pub entropy_final: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub dpu: DpuParams<f64>,
    pub lda: LdaParams<f64>,
    /// Sorted by `domain_id`.
    pub bases: Vec<DomainBasis<f64>>,
    pub domains: Vec<DomainRecord>,
    pub epoch: usize,
    pub final_loss: Option<LossRecord>,
    pub loss_trace: Vec<LossRecord>,
}

impl Checkpoint {
    pub fn basis(&self, domain_id: &str) -> Option<&DomainBasis<f64>> {
        self.bases.iter().find(|b| b.domain_id == domain_id)
    }

    /// All trained parameters as a set, `dpu.*` first.
    pub fn params(&self) -> Result<ParamSet<f64>> {
        let mut set = ParamSet::new();
        self.dpu.insert_into(&mut set)?;
        self.lda.insert_into(&mut set)?;
        Ok(set)
    }

    fn tensors(&self) -> Result<Vec<(String, &Matrix)>> {
        let mut out: Vec<(String, &Matrix)> = vec![
            (dpu::W1.into(), &self.dpu.w1),
            (dpu::B1.into(), &self.dpu.b1),
            (dpu::W2.into(), &self.dpu.w2),
            (dpu::B2.into(), &self.dpu.b2),
            (lda::W_BASE.into(), &self.lda.w_base),
            (lda::W_MU.into(), &self.lda.w_mu),
            (lda::W_SIGMA.into(), &self.lda.w_sigma),
            (lda::W_DEC.into(), &self.lda.w_dec),
        ];
        for b in &self.bases {
            out.push((format!("{BASIS_PREFIX}{}", b.domain_id), &b.v));
        }
        Ok(out)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    config: TrainConfig,
    epoch: usize,
    domains: Vec<DomainRecord>,
    final_loss: Option<LossRecord>,
    loss_trace: Vec<LossRecord>,
    tensors: Vec<TensorEntry>,
}

/// Serializes `ckpt` to bytes.
pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let tensors = ckpt.tensors()?;
    let mut entries = Vec::with_capacity(tensors.len());
    let mut payload = Vec::new();
    for (name, m) in &tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            rows: m.rows(),
            cols: m.cols(),
            offset: payload.len() as u64,
        });
        for v in m.values() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        version: CHECKPOINT_VERSION,
        config: ckpt.config.clone(),
        epoch: ckpt.epoch,
        domains: ckpt.domains.clone(),
        final_loss: ckpt.final_loss.clone(),
        loss_trace: ckpt.loss_trace.clone(),
        tensors: entries,
    };
    let json = serde_json::to_vec(&header).map_err(|e| LedaError::Format(format!("header: {e}")))?;
    let len = u32::try_from(json.len()).map_err(|_| LedaError::Format("header over 4 GiB".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&payload);
    Ok(out)
}

/// Parses checkpoint bytes, rejecting unknown or missing tensors.
pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(LedaError::Format("bad magic bytes (not a checkpoint file)".into()));
    }
    if bytes.len() < 12 {
        return Err(LedaError::Format("truncated before header length".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header_end = 12usize
        .checked_add(len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| LedaError::Format(format!("truncated header: need {len} bytes")))?;
    let header_bytes = &bytes[12..header_end];
    let raw: serde_json::Value = serde_json::from_slice(header_bytes)
        .map_err(|e| LedaError::Format(format!("header is not valid JSON: {e}")))?;
    match raw.get("version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
        Some(v) => {
            return Err(LedaError::Format(format!(
                "unsupported checkpoint version {v} (expected {CHECKPOINT_VERSION})"
            )))
        }
        None => return Err(LedaError::Format("header has no version".into())),
    }
    let header: Header =
        serde_json::from_value(raw).map_err(|e| LedaError::Format(format!("header: {e}")))?;
    let payload = &bytes[header_end..];

    let mut expected: BTreeSet<String> = dpu::PARAM_NAMES
        .iter()
        .chain(&lda::PARAM_NAMES)
        .map(|s| s.to_string())
        .collect();
    for d in &header.domains {
        expected.insert(format!("{BASIS_PREFIX}{}", d.domain_id));
    }
    let unknown: Vec<&str> = header
        .tensors
        .iter()
        .map(|t| t.name.as_str())
        .filter(|n| !expected.contains(*n))
        .collect();
    if !unknown.is_empty() {
        return Err(LedaError::Format(format!("unknown tensors: {}", unknown.join(", "))));
    }

    let mut params = ParamSet::new();
    let mut bases = Vec::new();
    for t in &header.tensors {
        let count = t.rows.checked_mul(t.cols).ok_or_else(|| {
            LedaError::Format(format!("tensor '{}' shape overflows", t.name))
        })?;
        let start = usize::try_from(t.offset).map_err(|_| LedaError::Format("offset overflow".into()))?;
        let end = start
            .checked_add(count * 8)
            .filter(|&end| end <= payload.len())
            .ok_or_else(|| {
                LedaError::Format(format!(
                    "truncated payload: tensor '{}' needs bytes {start}..{} of {}",
                    t.name,
                    start + count * 8,
                    payload.len()
                ))
            })?;
        let values = payload[start..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let m = Matrix::from_vec(t.rows, t.cols, values)
            .map_err(|e| LedaError::Format(format!("tensor '{}': {e}", t.name)))?;
        match t.name.strip_prefix(BASIS_PREFIX) {
            Some(id) => bases.push((id.to_string(), m)),
            None => params.insert(t.name.clone(), m).map_err(|_| {
                LedaError::Format(format!("duplicate tensor '{}'", t.name))
            })?,
        }
    }
    let missing: Vec<&str> = expected
        .iter()
        .map(String::as_str)
        .filter(|n| !header.tensors.iter().any(|t| t.name == *n))
        .collect();
    if !missing.is_empty() {
        return Err(LedaError::Format(format!("missing tensors: {}", missing.join(", "))));
    }

    let bases = header
        .domains
        .iter()
        .map(|d| {
            let v = bases
                .iter()
                .find(|(id, _)| *id == d.domain_id)
                .map(|(_, m)| m.clone())
                .expect("presence checked above");
            DomainBasis {
                domain_id: d.domain_id.clone(),
                v,
                padded: d.padded_basis,
            }
        })
        .collect();
    Ok(Checkpoint {
        config: header.config,
        dpu: DpuParams::from_params(&params)?,
        lda: LdaParams::from_params(&params)?,
        bases,
        domains: header.domains,
        epoch: header.epoch,
        final_loss: header.final_loss,
        loss_trace: header.loss_trace,
    })
}

/// Writes `ckpt` to `path` through a temporary file and a rename.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode(ckpt)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| LedaError::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        LedaError::io(path, e)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| LedaError::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        LedaError::Format(msg) => LedaError::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
