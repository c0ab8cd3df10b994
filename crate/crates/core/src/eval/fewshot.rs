//! Prototype classification: class means of a few labeled samples, cosine nearest prototype.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{basis_for, embed_with_basis, mean_std, EvalReport};
use crate::error::{LedaError, Result};
use crate::graph::{DomainGraph, GraphCollection, TaskKind};
use crate::linalg::normalize_adjacency;
use crate::train::Checkpoint;
use crate::Matrix;

use super::EmbeddingSet;

/// Mean embedding of each listed group of rows.
pub fn prototypes(e: &Matrix, groups: &[Vec<usize>]) -> Matrix {
    let mut out = Matrix::zeros(groups.len(), e.cols());
    for (g, rows) in groups.iter().enumerate() {
        let inv = 1.0 / rows.len().max(1) as f64;
        let dst = out.row_mut(g);
        for &r in rows {
            for (d, &v) in dst.iter_mut().zip(e.row(r)) {
                *d += v;
            }
        }
        for d in dst.iter_mut() {
            *d *= inv;
        }
    }
    out
}

/// Row of `protos` with the largest cosine similarity to `query`; ties go to the lowest row.
/// Zero vectors have similarity 0 to everything.
pub fn cosine_predict(protos: &Matrix, query: &[f64]) -> usize {
    let nq = query.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut best = 0;
    let mut best_sim = f64::NEG_INFINITY;
    for p in 0..protos.rows() {
        let row = protos.row(p);
        let np = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = row.iter().zip(query).map(|(a, b)| a * b).sum();
        let sim = if nq > 0.0 && np > 0.0 { dot / (nq * np) } else { 0.0 };
        if sim > best_sim {
            best = p;
            best_sim = sim;
        }
    }
    best
}

struct RepeatScore {
    accuracy: f64,
    macro_f1: f64,
}

/// Members of each present class, in ascending class order.
fn class_members(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    classes
}

fn prototype_repeats(
    e: &Matrix,
    labels: &[usize],
    shots: usize,
    repeats: usize,
    seed: u64,
    what: &str,
) -> Result<Vec<RepeatScore>> {
    if shots == 0 || repeats == 0 {
        return Err(LedaError::Config("shots and repeats must be positive".into()));
    }
    let classes = class_members(labels);
    if classes.len() < 2 {
        return Err(LedaError::Dataset(format!("{what} needs at least two classes")));
    }
    for (c, members) in &classes {
        if members.len() < shots {
            return Err(LedaError::Dataset(format!(
                "{what}: class {c} has {} samples, fewer than the {shots} required",
                members.len()
            )));
        }
    }
    if classes.values().all(|m| m.len() == shots) {
        return Err(LedaError::Dataset(format!(
            "{what}: support of {shots} per class covers every sample, leaving no queries"
        )));
    }
    let class_ids: Vec<usize> = classes.keys().copied().collect();
    let members: Vec<&Vec<usize>> = classes.values().collect();

    Ok((0..repeats)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let mut in_support = vec![false; labels.len()];
            let groups: Vec<Vec<usize>> = members
                .iter()
                .map(|m| {
                    let picks: Vec<usize> = sample(&mut rng, m.len(), shots).into_iter().map(|i| m[i]).collect();
                    for &p in &picks {
                        in_support[p] = true;
                    }
                    picks
                })
                .collect();
            let protos = prototypes(e, &groups);
            let k = class_ids.len();
            let (mut tp, mut fp, mut fneg) = (vec![0usize; k], vec![0usize; k], vec![0usize; k]);
            let mut total = 0usize;
            for i in (0..labels.len()).filter(|&i| !in_support[i]) {
                let truth = class_ids.binary_search(&labels[i]).expect("label is a class");
                let pred = cosine_predict(&protos, e.row(i));
                total += 1;
                if pred == truth {
                    tp[truth] += 1;
                } else {
                    fp[pred] += 1;
                    fneg[truth] += 1;
                }
            }
            let correct: usize = tp.iter().sum();
            let f1s: Vec<f64> = (0..k)
                .filter(|&c| tp[c] + fp[c] + fneg[c] > 0)
                .map(|c| 2.0 * tp[c] as f64 / (2 * tp[c] + fp[c] + fneg[c]) as f64)
                .collect();
            RepeatScore {
                accuracy: 100.0 * correct as f64 / total as f64,
                macro_f1: 100.0 * f1s.iter().sum::<f64>() / f1s.len() as f64,
            }
        })
        .collect())
}

/// `k`-shot prototype accuracy over the non-support nodes, `repeats` times with seeds
/// `seed + repeat`.
pub fn fewshot_eval(set: &EmbeddingSet, k: usize, repeats: usize, seed: u64) -> Result<EvalReport> {
    let labels = set.require_labels()?;
    let what = format!("{k}-shot evaluation on '{}'", set.domain_id);
    let scores = prototype_repeats(&set.embeddings, labels, k, repeats, seed, &what)?;
    let mut report = EvalReport::from_accuracies(
        format!("fewshot-{k}"),
        seed,
        scores.iter().map(|s| s.accuracy).collect(),
    );
    report.flags.push("similarity=cosine".into());
    Ok(report)
}

/// Graph classification by mean-pooled node embeddings and prototypes built from a disjoint
/// labeled support split of `support_per_class` graphs per class.
pub fn graph_eval(
    collection: &GraphCollection,
    ckpt: &Checkpoint,
    support_per_class: usize,
    repeats: usize,
    seed: u64,
    t: usize,
) -> Result<EvalReport> {
    if collection.task_kind != TaskKind::GraphLevel {
        return Err(LedaError::Dataset("graph evaluation needs a graph-level collection".into()));
    }
    collection.validate()?;
    let labels = collection
        .graph_labels
        .as_deref()
        .ok_or_else(|| LedaError::Dataset("graph-level collection has no graph labels".into()))?;

    let mut bases = BTreeMap::new();
    for id in collection.domain_ids() {
        let members: Vec<&DomainGraph> = collection.graphs.iter().filter(|g| g.domain_id == id).collect();
        let union = DomainGraph::disjoint_union(&id, &members)?;
        bases.insert(id.clone(), basis_for(ckpt, &id, &union.features)?);
    }
    let mut graph_rows = Vec::with_capacity(collection.graphs.len());
    for g in &collection.graphs {
        let s = normalize_adjacency(&g.adjacency)?;
        let e = embed_with_basis(g, &bases[&g.domain_id], &s, ckpt, t)?;
        graph_rows.push(e.embeddings.column_means());
    }
    let pooled = Matrix::vstack(&graph_rows.iter().collect::<Vec<_>>())?;

    let what = format!("graph evaluation with {support_per_class} support graphs per class");
    let scores = prototype_repeats(&pooled, labels, support_per_class, repeats, seed, &what)?;
    let mut report = EvalReport::from_accuracies(
        "graph-prototype",
        seed,
        scores.iter().map(|s| s.accuracy).collect(),
    );
    let (f1, f1_std) = mean_std(&scores.iter().map(|s| s.macro_f1).collect::<Vec<_>>());
    report.macro_f1 = Some(f1);
    report.macro_f1_std = Some(f1_std);
    report.flags.push("prototype-from-support".into());
    report.flags.push("pooling=mean".into());
    if collection.graphs.iter().any(|g| g.degree_featurized) {
        report.flags.push("degree-featurized".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn set(values: Vec<f64>, cols: usize, labels: Vec<usize>) -> EmbeddingSet {
        let rows = labels.len();
        EmbeddingSet::new("t", Matrix::from_vec(rows, cols, values).unwrap(), Some(labels)).unwrap()
    }

    #[test]
    fn identical_class_members() {
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for _ in 0..5 {
                let mut row = vec![0.0; 3];
                row[c] = 1.0;
                values.extend(row);
                labels.push(c);
            }
        }
        let s = set(values, 3, labels);
        for k in 1..=4 {
            let r = fewshot_eval(&s, k, 20, 0).unwrap();
            assert_eq!((r.mean_accuracy, r.std), (100.0, 0.0));
        }
    }

    #[test]
    fn antipodal_classes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..100 {
            let c = i % 2;
            let sign = if c == 0 { 1.0 } else { -1.0 };
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            values.extend([sign + 1e-3 * a, 1e-3 * b]);
            labels.push(c);
        }
        let r = fewshot_eval(&set(values, 2, labels), 1, 500, 66666).unwrap();
        assert!(r.mean_accuracy > 99.0);
    }

    #[test]
    fn too_few_samples() {
        let s = set(vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0], 2, vec![0, 1, 1]);
        let err = fewshot_eval(&s, 2, 1, 0).unwrap_err().to_string();
        assert!(err.contains("class 0"), "{err}");
    }

    #[test]
    fn ties_go_to_first_prototype() {
        let protos = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(cosine_predict(&protos, &[1.0, 1.0]), 0);
        assert_eq!(cosine_predict(&protos, &[0.0, 0.0]), 0);
        assert_eq!(cosine_predict(&protos, &[0.1, 2.0]), 1);
    }

    #[test]
    fn prototype_is_group_mean() {
        let e = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![9.0, 9.0]]).unwrap();
        let p = prototypes(&e, &[vec![0, 1], vec![2]]);
        assert_eq!(p.values(), &[2.0, 3.0, 9.0, 9.0]);
    }
}
