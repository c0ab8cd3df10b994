//! Joint optimization of the projection unit and the variational encoder across domains.
//!
//! Every epoch runs one full-batch forward/backward pass per domain, sums the gradients in
//! ascending `domain_id` order and takes a single AdamW step. The per-domain objective is
//!
//! ```text
//! Lᵢ = recon_lda + β · kl + μ_align · (recon_align + λ · ortho)
//! ```
//!
//! with the ablation [`Variant`]s dropping or replacing terms.

mod checkpoint;
mod infonce;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{collect_grads, AdamWConfig, AdamWState, Bindings, ParamSet, Tape, Var};
use crate::dpu::{self, DomainBasis, DpuConfig, DpuParams};
use crate::error::{LedaError, Result};
use crate::graph::{DomainGraph, GraphCollection};
use crate::lda::{self, LdaConfig, LdaParams};
use crate::linalg::{gaussian_entropy, normalize_adjacency};
use crate::{Matrix, Sparse};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, DomainRecord, CHECKPOINT_VERSION, MAGIC};
pub use infonce::{cosine_rows, infonce_from_similarities, infonce_loss, infonce_on_tape};

/// Feature dropout rate of the second view in the contrastive variant.
pub const DROPOUT: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    NoDpu,
    NoLda,
    DpuCl,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoDpu, Variant::NoLda, Variant::DpuCl];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDpu => "no-dpu",
            Variant::NoLda => "no-lda",
            Variant::DpuCl => "dpu-cl",
        }
    }

    /// Whether embeddings go through the trained projection MLP.
    pub fn uses_dpu(self) -> bool {
        self != Variant::NoDpu
    }

    /// Parameters updated by the optimizer under this variant.
    pub fn trainable(self) -> Vec<&'static str> {
        match self {
            Variant::Full => dpu::PARAM_NAMES.iter().chain(&lda::PARAM_NAMES).copied().collect(),
            Variant::NoDpu => lda::PARAM_NAMES.to_vec(),
            Variant::NoLda => dpu::PARAM_NAMES.to_vec(),
            Variant::DpuCl => {
                let mut names = dpu::PARAM_NAMES.to_vec();
                names.push(lda::W_BASE);
                names
            }
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = LedaError;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                LedaError::Config(format!(
                    "unknown variant '{s}' (expected full, no-dpu, no-lda or dpu-cl)"
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub dpu: DpuConfig,
    pub lda: LdaConfig,
    /// Weight of the alignment loss inside the joint objective.
    pub mu_align: f64,
    pub variant: Variant,
    /// InfoNCE temperature (contrastive variant only).
    pub tau: f64,
    /// Train the projection unit alone on the alignment loss before the joint phase.
    pub two_phase: bool,
    /// Length of that first phase.
    pub align_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            seed: 66666,
            optimizer: AdamWConfig::default(),
            dpu: DpuConfig::default(),
            lda: LdaConfig::default(),
            mu_align: 1.0,
            variant: Variant::Full,
            tau: 0.5,
            two_phase: false,
            align_epochs: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("dpu.lambda", self.dpu.lambda),
            ("lda.beta_kl", self.lda.beta_kl),
            ("mu_align", self.mu_align),
            ("optimizer.weight_decay", self.optimizer.weight_decay),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(LedaError::Config(format!("{name} must be finite and >= 0, got {w}")));
            }
        }
        let dims = [
            ("dpu.k", self.dpu.k),
            ("dpu.h", self.dpu.h),
            ("dpu.m", self.dpu.m),
            ("lda.h_e", self.lda.h_e),
            ("lda.z", self.lda.z),
        ];
        for (name, d) in dims {
            if d == 0 {
                return Err(LedaError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.optimizer.lr > 0.0 && self.optimizer.lr.is_finite()) {
            return Err(LedaError::Config(format!(
                "optimizer.lr must be positive, got {}",
                self.optimizer.lr
            )));
        }
        if self.variant == Variant::DpuCl && !(self.tau > 0.0) {
            return Err(LedaError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        Ok(())
    }

    /// Width of the encoder input: `m` after the projection unit, `k` without it.
    pub fn encoder_input_dim(&self) -> usize {
        if self.variant.uses_dpu() {
            self.dpu.m
        } else {
            self.dpu.k
        }
    }
}

/// Summed loss components of one epoch; terms a variant does not optimize are absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: usize,
    /// 1 for the alignment-only warm-up of two-phase training, 2 for the main phase.
    pub phase: u8,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub align_recon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub align_ortho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lda_recon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kl: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infonce: Option<f64>,
}

impl LossRecord {
    fn absorb(&mut self, other: &LossRecord) {
        fn add(into: &mut Option<f64>, v: Option<f64>) {
            if let Some(v) = v {
                *into = Some(into.unwrap_or(0.0) + v);
            }
        }
        self.total += other.total;
        add(&mut self.align_recon, other.align_recon);
        add(&mut self.align_ortho, other.align_ortho);
        add(&mut self.lda_recon, other.lda_recon);
        add(&mut self.kl, other.kl);
        add(&mut self.infonce, other.infonce);
    }
}

/// 64-bit FNV-1a, used to give every domain a seed that does not depend on manifest order.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the SVD basis of `domain_id` under run seed `seed`.
pub fn basis_seed(seed: u64, domain_id: &str) -> u64 {
    splitmix(seed ^ fnv1a(domain_id.as_bytes()))
}

fn noise_seed(seed: u64, epoch: usize, domain_id: &str, stream: u64) -> u64 {
    splitmix(splitmix(basis_seed(seed, domain_id) ^ stream).wrapping_add(epoch as u64))
}

/// A training domain with its fixed inputs.
struct Prepared {
    id: String,
    x: Arc<Matrix>,
    s: Arc<Sparse>,
    basis: DomainBasis<f64>,
    /// `X V` for the variant without the projection MLP.
    projected: Option<Matrix>,
}

fn prepare(domains: &[DomainGraph], config: &TrainConfig) -> Result<Vec<Prepared>> {
    let mut out = Vec::with_capacity(domains.len());
    for g in domains {
        let basis = dpu::init_basis(&g.domain_id, &g.features, config.dpu.k, basis_seed(config.seed, &g.domain_id))?;
        let projected = (!config.variant.uses_dpu())
            .then(|| g.features.matmul(&basis.v))
            .transpose()?;
        out.push(Prepared {
            id: g.domain_id.clone(),
            x: Arc::new(g.features.clone()),
            s: Arc::new(normalize_adjacency(&g.adjacency)?),
            basis,
            projected,
        });
    }
    out.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(out)
}

/// Seeded parameters, initialized in the order `dpu.*` then `lda.*`.
pub fn init_params(config: &TrainConfig) -> Result<ParamSet<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::new();
    DpuParams::<f64>::init(&config.dpu, &mut rng).insert_into(&mut params)?;
    LdaParams::<f64>::init(config.encoder_input_dim(), &config.lda, &mut rng).insert_into(&mut params)?;
    Ok(params)
}

#[derive(Clone, Copy)]
enum Objective {
    AlignOnly,
    Main,
}

struct DomainPass {
    record: LossRecord,
    grads: indexmap::IndexMap<String, Matrix>,
}

fn domain_pass(
    d: &Prepared,
    params: &ParamSet<f64>,
    config: &TrainConfig,
    trainable: &[&str],
    objective: Objective,
    epoch: usize,
) -> Result<DomainPass> {
    let mut tape = Tape::new();
    let b = params.bind_subset(&mut tape, trainable);
    let lambda = config.dpu.lambda;
    let mut record = LossRecord::default();

    let align_only = matches!(objective, Objective::AlignOnly) || config.variant == Variant::NoLda;
    let mut loss: Option<Var> = None;
    let xhat = if config.variant.uses_dpu() {
        let x = tape.constant_named(format!("X[{}]", d.id), (*d.x).clone());
        let v = tape.constant_named(format!("V[{}]", d.id), d.basis.v.clone());
        let vhat = dpu::trans_on_tape(&mut tape, v, &b)?;
        let terms = dpu::align_terms_on_tape(&mut tape, x, vhat)?;
        record.align_recon = Some(tape.scalar(terms.recon)?);
        record.align_ortho = Some(tape.scalar(terms.ortho)?);
        let weighted = tape.scale(terms.ortho, lambda);
        let align = tape.add(terms.recon, weighted)?;
        let weight = if align_only { 1.0 } else { config.mu_align };
        loss = Some(tape.scale(align, weight));
        terms.xhat
    } else {
        let projected = d.projected.clone().expect("projection prepared for no-dpu");
        tape.constant_named(format!("XV[{}]", d.id), projected)
    };

    if !align_only {
        let eps = lda::standard_normal(tape.value(xhat).rows(), config.lda.z, noise_seed(config.seed, epoch, &d.id, 1));
        let vars = lda::domain_loss_on_tape(&mut tape, xhat, &d.s, &b, &eps, config.lda.beta_kl)?;
        record.lda_recon = Some(tape.scalar(vars.recon)?);
        record.kl = Some(tape.scalar(vars.kl)?);
        loss = Some(match loss {
            Some(l) => tape.add(l, vars.loss)?,
            None => vars.loss,
        });
    }
    let loss = loss.expect("every variant has a loss term");
    record.total = tape.scalar(loss)?;
    if !record.total.is_finite() {
        return Err(LedaError::NonFinite(format!(
            "epoch {epoch}, domain '{}': loss {}",
            d.id, record.total
        )));
    }
    tape.backward(loss)?;
    Ok(DomainPass {
        record,
        grads: collect_grads(&tape, &b),
    })
}

/// One joint tape across domains for the contrastive variant, whose negative couples them.
fn contrastive_pass(
    domains: &[Prepared],
    params: &ParamSet<f64>,
    config: &TrainConfig,
    trainable: &[&str],
    epoch: usize,
) -> Result<DomainPass> {
    let mut tape = Tape::new();
    let b = params.bind_subset(&mut tape, trainable);
    let mut record = LossRecord::default();
    let mut align_total: Option<Var> = None;
    let mut pairs = Vec::with_capacity(domains.len());
    for d in domains {
        let x = tape.constant_named(format!("X[{}]", d.id), (*d.x).clone());
        let v = tape.constant_named(format!("V[{}]", d.id), d.basis.v.clone());
        let vhat = dpu::trans_on_tape(&mut tape, v, &b)?;
        let terms = dpu::align_terms_on_tape(&mut tape, x, vhat)?;
        *record.align_recon.get_or_insert(0.0) += tape.scalar(terms.recon)?;
        *record.align_ortho.get_or_insert(0.0) += tape.scalar(terms.ortho)?;
        let weighted = tape.scale(terms.ortho, config.dpu.lambda);
        let align = tape.add(terms.recon, weighted)?;
        align_total = Some(match align_total {
            Some(t) => tape.add(t, align)?,
            None => align,
        });

        let anchor = lda::base_on_tape(&mut tape, terms.xhat, &d.s, &b)?;
        let mask = dropout_mask(tape.value(terms.xhat).shape(), noise_seed(config.seed, epoch, &d.id, 2));
        let mask = tape.constant_named(format!("dropout[{}]", d.id), mask);
        let dropped = tape.mul(terms.xhat, mask)?;
        let positive = lda::base_on_tape(&mut tape, dropped, &d.s, &b)?;
        pairs.push((anchor, positive));
    }
    let nce = infonce_on_tape(&mut tape, &pairs, config.tau)?;
    record.infonce = Some(tape.scalar(nce)?);
    let align = align_total.expect("at least one domain");
    let align = tape.scale(align, config.mu_align);
    let loss = tape.add(align, nce)?;
    record.total = tape.scalar(loss)?;
    if !record.total.is_finite() {
        return Err(LedaError::NonFinite(format!(
            "epoch {epoch}: contrastive loss {}",
            record.total
        )));
    }
    tape.backward(loss)?;
    Ok(DomainPass {
        record,
        grads: collect_grads(&tape, &b),
    })
}

/// Inverted-dropout keep mask: entries are `0` or `1 / (1 − rate)`.
fn dropout_mask((rows, cols): (usize, usize), seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - DROPOUT);
    let values = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < DROPOUT { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, values).expect("mask shape")
}

fn run_epoch(
    domains: &[Prepared],
    params: &mut ParamSet<f64>,
    optimizer: &mut AdamWState<f64>,
    config: &TrainConfig,
    objective: Objective,
    epoch: usize,
) -> Result<LossRecord> {
    let trainable: Vec<&str> = match objective {
        Objective::AlignOnly => dpu::PARAM_NAMES.to_vec(),
        Objective::Main => config.variant.trainable(),
    };
    let passes: Vec<DomainPass> = if config.variant == Variant::DpuCl && matches!(objective, Objective::Main) {
        vec![contrastive_pass(domains, params, config, &trainable, epoch)?]
    } else {
        // Domains run independently; results come back in domain_id order regardless of
        // scheduling, so the summed gradient is the same for any thread count.
        domains
            .par_iter()
            .map(|d| domain_pass(d, params, config, &trainable, objective, epoch))
            .collect::<Result<_>>()?
    };

    params.zero_grads();
    let mut record = LossRecord {
        epoch,
        phase: match objective {
            Objective::AlignOnly => 1,
            Objective::Main => 2,
        },
        ..Default::default()
    };
    for pass in &passes {
        params.accumulate_grads(&pass.grads);
        record.absorb(&pass.record);
    }
    optimizer.step_only(params, &trainable);
    Ok(record)
}

/// Trains on every domain of `collection` and returns the final checkpoint.
///
/// Graph-level collections train on one disjoint union per domain.
pub fn pretrain(collection: &GraphCollection, config: &TrainConfig) -> Result<Checkpoint> {
    config.validate()?;
    collection.validate()?;
    let domains = collection.training_domains()?;
    if domains.is_empty() {
        return Err(LedaError::Dataset("pre-training needs at least one domain".into()));
    }
    let prepared = prepare(&domains, config)?;
    let mut params = init_params(config)?;
    let entropy_init = entropies(&prepared, &params, config)?;

    let mut optimizer = AdamWState::new(config.optimizer);
    let mut trace = Vec::new();
    if config.two_phase && config.variant.uses_dpu() {
        for epoch in 0..config.align_epochs {
            trace.push(run_epoch(&prepared, &mut params, &mut optimizer, config, Objective::AlignOnly, epoch)?);
        }
        optimizer = AdamWState::new(config.optimizer);
    }
    for epoch in 0..config.epochs {
        trace.push(run_epoch(&prepared, &mut params, &mut optimizer, config, Objective::Main, epoch)?);
    }

    let entropy_final = entropies(&prepared, &params, config)?;
    let records = prepared
        .iter()
        .zip(entropy_init.iter().zip(&entropy_final))
        .map(|(d, (&before, &after))| DomainRecord {
            domain_id: d.id.clone(),
            feature_dim: d.x.cols(),
            num_nodes: d.x.rows(),
            padded_basis: d.basis.padded,
            entropy_init: before,
            entropy_final: after,
        })
        .collect();
    Ok(Checkpoint {
        config: config.clone(),
        dpu: DpuParams::from_params(&params)?,
        lda: LdaParams::from_params(&params)?,
        bases: prepared.into_iter().map(|d| d.basis).collect(),
        domains: records,
        epoch: config.epochs,
        final_loss: trace.last().cloned(),
        loss_trace: trace,
    })
}

/// Entropy of each domain's projected basis, `None` where the covariance is degenerate.
fn entropies(domains: &[Prepared], params: &ParamSet<f64>, config: &TrainConfig) -> Result<Vec<Option<f64>>> {
    let dpu_params = DpuParams::from_params(params)?;
    domains
        .iter()
        .map(|d| {
            let vhat = if config.variant.uses_dpu() {
                dpu::trans(&d.basis.v, &dpu_params)?
            } else {
                d.basis.v.clone()
            };
            let h = gaussian_entropy(&vhat);
            Ok((!h.degenerate).then_some(h.nats))
        })
        .collect()
}

/// Loss of the current parameters as a tape, for gradient checks: the joint objective of
/// `config.variant` over `domains` with reparameterization noise fixed by `epoch`.
pub fn joint_loss_on_tape(
    tape: &mut Tape<f64>,
    bindings: &Bindings,
    domains: &[DomainGraph],
    config: &TrainConfig,
    epoch: usize,
) -> Result<Var> {
    let prepared = prepare(domains, config)?;
    let mut total: Option<Var> = None;
    for d in &prepared {
        let x = tape.constant((*d.x).clone());
        let v = tape.constant(d.basis.v.clone());
        let vhat = dpu::trans_on_tape(tape, v, bindings)?;
        let terms = dpu::align_terms_on_tape(tape, x, vhat)?;
        let weighted = tape.scale(terms.ortho, config.dpu.lambda);
        let align = tape.add(terms.recon, weighted)?;
        let align = tape.scale(align, config.mu_align);
        let eps = lda::standard_normal(d.x.rows(), config.lda.z, noise_seed(config.seed, epoch, &d.id, 1));
        let vars = lda::domain_loss_on_tape(tape, terms.xhat, &d.s, bindings, &eps, config.lda.beta_kl)?;
        let li = tape.add(align, vars.loss)?;
        total = Some(match total {
            Some(t) => tape.add(t, li)?,
            None => li,
        });
    }
    total.ok_or_else(|| LedaError::Dataset("joint loss needs at least one domain".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_sbm;

    fn tiny_config(variant: Variant) -> TrainConfig {
        TrainConfig {
            epochs: 5,
            seed: 7,
            dpu: DpuConfig {
                k: 4,
                h: 6,
                m: 4,
                lambda: 1.0,
            },
            lda: LdaConfig {
                h_e: 6,
                z: 3,
                beta_kl: 1.0,
            },
            variant,
            ..Default::default()
        }
    }

    fn suite() -> GraphCollection {
        let a = generate_sbm(2, 5, 0.8, 0.1, 6, 3.0, 1).unwrap();
        let b = generate_sbm(2, 6, 0.8, 0.1, 8, 3.0, 2).unwrap();
        GraphCollection::node_level(vec![a, b]).unwrap()
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.name()));
        }
        assert!(matches!("nope".parse::<Variant>(), Err(LedaError::Config(_))));
    }

    #[test]
    fn zero_epochs_returns_seeded_parameters() {
        let mut cfg = tiny_config(Variant::Full);
        cfg.epochs = 0;
        let ckpt = pretrain(&suite(), &cfg).unwrap();
        assert!(ckpt.loss_trace.is_empty());
        let init = init_params(&cfg).unwrap();
        assert_eq!(&ckpt.dpu.w1, init.get(dpu::W1).unwrap());
        assert_eq!(&ckpt.lda.w_dec, init.get(lda::W_DEC).unwrap());
    }

    #[test]
    fn variant_trace_components() {
        let full = pretrain(&suite(), &tiny_config(Variant::Full)).unwrap();
        let r = &full.loss_trace[0];
        assert!(r.align_recon.is_some() && r.kl.is_some() && r.infonce.is_none());

        let no_dpu = pretrain(&suite(), &tiny_config(Variant::NoDpu)).unwrap();
        assert!(no_dpu.loss_trace.iter().all(|r| r.align_recon.is_none() && r.align_ortho.is_none()));
        let init = init_params(&tiny_config(Variant::NoDpu)).unwrap();
        assert_eq!(&no_dpu.dpu.w1, init.get(dpu::W1).unwrap());

        let no_lda = pretrain(&suite(), &tiny_config(Variant::NoLda)).unwrap();
        assert!(no_lda.loss_trace.iter().all(|r| r.kl.is_none() && r.lda_recon.is_none()));
        let init = init_params(&tiny_config(Variant::NoLda)).unwrap();
        assert_eq!(
            no_lda.lda,
            LdaParams::from_params(&init).unwrap(),
            "untrained encoder must stay at its seeded values"
        );

        let cl = pretrain(&suite(), &tiny_config(Variant::DpuCl)).unwrap();
        assert!(cl.loss_trace.iter().all(|r| r.kl.is_none() && r.lda_recon.is_none() && r.infonce.is_some()));
        let init = init_params(&tiny_config(Variant::DpuCl)).unwrap();
        assert_eq!(&cl.lda.w_dec, init.get(lda::W_DEC).unwrap());
        assert_ne!(&cl.lda.w_base, init.get(lda::W_BASE).unwrap());
    }

    #[test]
    fn two_phase_prefixes_alignment_epochs() {
        let mut cfg = tiny_config(Variant::Full);
        cfg.two_phase = true;
        cfg.align_epochs = 3;
        let ckpt = pretrain(&suite(), &cfg).unwrap();
        assert_eq!(ckpt.loss_trace.len(), 8);
        assert!(ckpt.loss_trace[..3].iter().all(|r| r.phase == 1 && r.kl.is_none()));
        assert!(ckpt.loss_trace[3..].iter().all(|r| r.phase == 2 && r.kl.is_some()));
    }

    #[test]
    fn rejects_bad_weights() {
        let mut cfg = tiny_config(Variant::Full);
        cfg.mu_align = -1.0;
        assert!(matches!(pretrain(&suite(), &cfg), Err(LedaError::Config(_))));
        let mut cfg = tiny_config(Variant::DpuCl);
        cfg.tau = 0.0;
        assert!(matches!(pretrain(&suite(), &cfg), Err(LedaError::Config(_))));
    }

    #[test]
    fn seeds_depend_on_domain_not_position() {
        assert_eq!(basis_seed(1, "a"), basis_seed(1, "a"));
        assert_ne!(basis_seed(1, "a"), basis_seed(1, "b"));
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }

    #[test]
    fn dropout_mask_values() {
        let m = dropout_mask((50, 40), 3);
        let kept = m.values().iter().filter(|&&v| v != 0.0).count();
        assert!(m.values().iter().all(|&v| v == 0.0 || v == 1.25));
        let frac = kept as f64 / 2000.0;
        assert!((frac - 0.8).abs() < 0.05, "{frac}");
    }
}
