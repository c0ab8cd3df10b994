//! Multinomial logistic regression on a small labeled fraction of frozen embeddings.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmbeddingSet, EvalReport};
use crate::autodiff::{AdamWConfig, AdamWState, ParamSet, Tape};
use crate::error::{LedaError, Result};
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub train_frac: f64,
    pub runs: usize,
    pub steps: usize,
    pub lr: f64,
    pub l2: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            train_frac: 0.1,
            runs: 20,
            steps: 300,
            lr: 0.01,
            l2: 1e-4,
        }
    }
}

/// Per-class split: `max(1, round(frac · count))` training nodes from each class.
fn stratified_split(labels: &[usize], num_classes: usize, frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for c in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        members.shuffle(&mut rng);
        let take = ((frac * members.len() as f64).round() as usize).clamp(1, members.len());
        train.extend_from_slice(&members[..take]);
        test.extend_from_slice(&members[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn one_hot(labels: &[usize], num_classes: usize) -> Matrix {
    let mut m = Matrix::zeros(labels.len(), num_classes);
    for (r, &l) in labels.iter().enumerate() {
        m.row_mut(r)[l] = 1.0;
    }
    m
}

/// Index of the largest entry; ties go to the lowest index.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn fit_and_score(
    e: &Matrix,
    labels: &[usize],
    num_classes: usize,
    train: &[usize],
    test: &[usize],
    config: &ProbeConfig,
) -> Result<f64> {
    let x = e.select_rows(train);
    let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let target = one_hot(&y, num_classes);
    let mut params = ParamSet::new();
    params.insert("probe.W", Matrix::zeros(e.cols(), num_classes))?;
    params.insert("probe.b", Matrix::zeros(1, num_classes))?;
    let mut opt = AdamWState::new(AdamWConfig {
        lr: config.lr,
        weight_decay: 0.0,
        ..Default::default()
    });
    let n = x.rows() as f64;
    for _ in 0..config.steps {
        let mut tape = Tape::new();
        let b = params.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let tv = tape.constant(target.clone());
        let logits = tape.matmul(xv, b["probe.W"])?;
        let logits = tape.add_row_bias(logits, b["probe.b"])?;
        let lsm = tape.log_softmax_rows(logits);
        let picked = tape.mul(lsm, tv)?;
        let nll = tape.reduce_sum(picked);
        let nll = tape.scale(nll, -1.0 / n);
        let reg = tape.frobenius_sq(b["probe.W"]);
        let reg = tape.scale(reg, config.l2);
        let loss = tape.add(nll, reg)?;
        if !tape.scalar(loss)?.is_finite() {
            return Err(LedaError::NonFinite("linear probe loss".into()));
        }
        tape.backward(loss)?;
        params.zero_grads();
        params.accumulate(&tape, &b);
        opt.step(&mut params);
    }

    let w = params.value("probe.W")?;
    let bias = params.value("probe.b")?;
    let logits = e.select_rows(test).matmul(w)?;
    let correct = test
        .iter()
        .enumerate()
        .filter(|&(r, &i)| {
            let row: Vec<f64> = logits.row(r).iter().zip(bias.values()).map(|(a, b)| a + b).collect();
            argmax(&row) == labels[i]
        })
        .count();
    Ok(100.0 * correct as f64 / test.len() as f64)
}

/// Accuracy of a logistic-regression probe trained on a stratified `train_frac` of the
/// nodes and tested on the rest, over `runs` splits seeded `seed + run`.
pub fn linear_probe(set: &EmbeddingSet, config: &ProbeConfig, seed: u64) -> Result<EvalReport> {
    let labels = set.require_labels()?;
    if !(config.train_frac > 0.0 && config.train_frac < 1.0) {
        return Err(LedaError::Config(format!(
            "train_frac must lie in (0, 1), got {}",
            config.train_frac
        )));
    }
    if config.runs == 0 {
        return Err(LedaError::Config("runs must be positive".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let present = (0..num_classes).filter(|c| labels.contains(c)).count();
    if present < 2 {
        return Err(LedaError::Dataset(format!(
            "linear probe on '{}' needs at least two classes",
            set.domain_id
        )));
    }
    let accuracies = (0..config.runs)
        .into_par_iter()
        .map(|run| {
            let (train, test) = stratified_split(labels, num_classes, config.train_frac, seed.wrapping_add(run as u64));
            if test.is_empty() {
                return Err(LedaError::Dataset(format!(
                    "domain '{}' is too small for a {} training split",
                    set.domain_id, config.train_frac
                )));
            }
            fit_and_score(&set.embeddings, labels, num_classes, &train, &test, config)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut report = EvalReport::from_accuracies("linear-probe", seed, accuracies);
    report.flags.push(format!("train_frac={}", config.train_frac));
    Ok(report)
}
