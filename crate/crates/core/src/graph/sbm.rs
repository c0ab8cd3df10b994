use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LedaError, Result};
use crate::graph::DomainGraph;
use crate::linalg::truncated_svd;
use crate::{Matrix, Sparse};

/// Stochastic block model graph with Gaussian block-mean features.
///
/// Nodes are assigned to `blocks` consecutive groups of `nodes_per_block`. Each unordered pair
/// is linked with probability `p_in` inside a block and `p_out` across blocks. Block means lie
/// on scaled orthonormal directions (a seeded random rotation of the first `blocks` axes), so
/// every pair of means is exactly `cluster_sep` apart; each node adds unit Gaussian noise.
pub fn generate_sbm(
    blocks: usize,
    nodes_per_block: usize,
    p_in: f64,
    p_out: f64,
    d: usize,
    cluster_sep: f64,
    seed: u64,
) -> Result<DomainGraph> {
    if !(0.0..=1.0).contains(&p_in) || !(0.0..=1.0).contains(&p_out) || p_out >= p_in {
        return Err(LedaError::InvalidArgument(format!(
            "sbm probabilities need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    if blocks == 0 || nodes_per_block == 0 {
        return Err(LedaError::InvalidArgument(
            "sbm needs at least one block and one node per block".into(),
        ));
    }
    if d < blocks {
        return Err(LedaError::InvalidArgument(format!(
            "feature dimension {d} below block count {blocks}"
        )));
    }
    if !cluster_sep.is_finite() || cluster_sep < 0.0 {
        return Err(LedaError::InvalidArgument(format!(
            "cluster separation must be finite and nonnegative, got {cluster_sep}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = blocks * nodes_per_block;
    let labels: Vec<usize> = (0..n).map(|i| i / nodes_per_block).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let adjacency = Sparse::adjacency_from_edges(n, &edges)?;

    // Random orthonormal frame: right singular vectors of a Gaussian d×d matrix.
    let gaussian = Matrix::random_normal(d, d, &mut rng);
    let frame = truncated_svd(&gaussian, d, rng.random())?.v;
    let radius = cluster_sep / std::f64::consts::SQRT_2;

    let noise = Matrix::random_normal(n, d, &mut rng);
    let mut features = noise;
    for (i, &block) in labels.iter().enumerate() {
        for c in 0..d {
            features[(i, c)] += radius * frame[(c, block)];
        }
    }

    DomainGraph::new(
        format!("sbm-{seed}"),
        features,
        adjacency,
        Some(labels),
        Some(blocks),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn certain_edges_give_disjoint_cliques() {
        let g = generate_sbm(2, 3, 1.0, 0.0, 4, 1.0, 0).unwrap();
        let dense = g.adjacency.to_dense();
        for i in 0..6 {
            for j in 0..6 {
                let expected = if i != j && i / 3 == j / 3 { 1.0 } else { 0.0 };
                assert_eq!(dense[(i, j)], expected, "({i},{j})");
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let a = generate_sbm(3, 10, 0.5, 0.1, 6, 2.0, 42).unwrap();
        let b = generate_sbm(3, 10, 0.5, 0.1, 6, 2.0, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(
            a.features.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.features.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn invalid_probabilities() {
        assert!(generate_sbm(2, 3, 0.2, 0.5, 4, 1.0, 0).is_err());
        assert!(generate_sbm(2, 3, 1.5, 0.0, 4, 1.0, 0).is_err());
        assert!(generate_sbm(2, 3, 0.5, 0.5, 4, 1.0, 0).is_err());
        assert!(generate_sbm(5, 3, 0.5, 0.1, 4, 1.0, 0).is_err());
    }

    #[test]
    fn high_separation_nearest_centroid_is_perfect() {
        let g = generate_sbm(2, 3, 0.5, 0.1, 8, 10.0, 9).unwrap();
        let labels = g.labels.clone().unwrap();
        // Brute force: leave nothing out, centroid of each block from its own members.
        let mut centroids = vec![vec![0.0; 8]; 2];
        for (i, &l) in labels.iter().enumerate() {
            for c in 0..8 {
                centroids[l][c] += g.features[(i, c)] / 3.0;
            }
        }
        for (i, &l) in labels.iter().enumerate() {
            let dist = |k: usize| -> f64 {
                (0..8).map(|c| (g.features[(i, c)] - centroids[k][c]).powi(2)).sum()
            };
            let predicted = if dist(0) <= dist(1) { 0 } else { 1 };
            assert_eq!(predicted, l);
        }
    }
}
