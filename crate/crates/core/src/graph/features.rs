use crate::error::{LedaError, Result};
use crate::{Matrix, Sparse};

/// Width used for graphs that ship without node attributes.
pub const DEGREE_FEATURE_DIM: usize = 16;

/// Structural features for attribute-free graphs.
///
/// Column 0 is degree / max degree, column 1 is constant 1, and columns `2..d` one-hot encode
/// `min(degree, d - 3)`. Self-loops do not count toward the degree.
pub fn degree_features(adjacency: &Sparse, d: usize) -> Result<Matrix> {
    if d < 2 {
        return Err(LedaError::InvalidArgument(format!(
            "degree features need at least 2 columns, got {d}"
        )));
    }
    let n = adjacency.rows();
    let degrees: Vec<usize> = (0..n)
        .map(|r| adjacency.row_entries(r).filter(|&(c, _)| c != r).count())
        .collect();
    let max_degree = degrees.iter().copied().max().unwrap_or(0);
    let mut out = Matrix::zeros(n, d);
    for (r, &deg) in degrees.iter().enumerate() {
        out[(r, 0)] = if max_degree == 0 {
            0.0
        } else {
            deg as f64 / max_degree as f64
        };
        out[(r, 1)] = 1.0;
        if d > 2 {
            out[(r, 2 + deg.min(d - 3))] = 1.0;
        }
    }
    Ok(out)
}
