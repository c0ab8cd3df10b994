use crate::error::{LedaError, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Validates a CSR layout: monotone offsets, in-range and strictly increasing columns per row.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return Err(LedaError::shape(
                "from_csr",
                format!("row_offsets length {} for {rows} rows", row_offsets.len()),
            ));
        }
        if col_indices.len() != values.len() || *row_offsets.last().unwrap() != values.len() {
            return Err(LedaError::shape(
                "from_csr",
                "offsets, indices and values disagree on nonzero count",
            ));
        }
        for r in 0..rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if end < start {
                return Err(LedaError::shape("from_csr", "row_offsets decrease"));
            }
            let row = &col_indices[start..end];
            if row.iter().any(|&c| c >= cols) {
                return Err(LedaError::shape(
                    "from_csr",
                    format!("column index out of range in row {r}"),
                ));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LedaError::shape(
                    "from_csr",
                    format!("column indices not strictly increasing in row {r}"),
                ));
            }
        }
        Ok(Self {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        if let Some(&(r, c, _)) = sorted.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
            return Err(LedaError::shape(
                "from_triplets",
                format!("entry ({r}, {c}) outside {rows}x{cols}"),
            ));
        }
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                let tail = values.last_mut().unwrap();
                *tail = *tail + v;
                continue;
            }
            col_indices.push(c);
            values.push(v);
            row_offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Self::from_csr(rows, cols, row_offsets, col_indices, values)
    }

    /// Binary symmetric adjacency from undirected edges; duplicates and reversed pairs collapse.
    pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = edges
            .iter()
            .flat_map(|&(a, b)| [(a, b), (b, a)])
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        let triplets: Vec<_> = pairs.into_iter().map(|(a, b)| (a, b, T::one())).collect();
        Self::from_triplets(n, n, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Iterates `(col, value)` over the stored entries of row `r`.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => T::zero(),
        }
    }

    /// Number of stored entries per row.
    pub fn row_nnz(&self) -> Vec<usize> {
        self.row_offsets.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|r| self.row_entries(r).all(|(c, v)| self.get(c, r) == v))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                out[(r, c)] = v;
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul_dense(&self, rhs: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.cols != rhs.rows() {
            return Err(LedaError::shape(
                "sparse_dense_matmul",
                format!(
                    "{}x{} sparse times {}x{}",
                    self.rows,
                    self.cols,
                    rhs.rows(),
                    rhs.cols()
                ),
            ));
        }
        let m = rhs.cols();
        let mut out = DenseMatrix::zeros(self.rows, m);
        for r in 0..self.rows {
            let out_row = out.row_mut(r);
            for (c, v) in self.row_entries(r) {
                for (o, &b) in out_row.iter_mut().zip(rhs.row(c)) {
                    *o = *o + v * b;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · rhs`, scattering each stored entry.
    pub fn t_matmul_dense(&self, rhs: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
        if self.rows != rhs.rows() {
            return Err(LedaError::shape(
                "sparse_t_dense_matmul",
                format!(
                    "({}x{})ᵀ sparse times {}x{}",
                    self.rows,
                    self.cols,
                    rhs.rows(),
                    rhs.cols()
                ),
            ));
        }
        let mut out = DenseMatrix::zeros(self.cols, rhs.cols());
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                for (o, &b) in out.row_mut(c).iter_mut().zip(rhs.row(r)) {
                    *o = *o + v * b;
                }
            }
        }
        Ok(out)
    }

    /// Applies a node relabelling `perm` (new index `i` holds old node `perm[i]`).
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<Self> {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row_entries(r) {
                triplets.push((inverse[r], inverse[c], v));
            }
        }
        Self::from_triplets(self.rows, self.cols, &triplets)
    }
}

/// Symmetric GCN normalization `D̃^{-1/2} (A + I) D̃^{-1/2}`, with `D̃` the degrees of `A + I`.
///
/// `A` must be square, symmetric and binary. Existing diagonal entries are kept and the
/// identity is added on top of them.
pub fn normalize_adjacency<T: Scalar>(adjacency: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
    let n = adjacency.rows();
    if adjacency.cols() != n {
        return Err(LedaError::InvalidArgument(format!(
            "adjacency must be square, got {}x{}",
            n,
            adjacency.cols()
        )));
    }
    if adjacency
        .values()
        .iter()
        .any(|&v| v != T::zero() && v != T::one())
    {
        return Err(LedaError::InvalidArgument(
            "adjacency entries must be binary".into(),
        ));
    }
    if !adjacency.is_symmetric() {
        return Err(LedaError::InvalidArgument(
            "adjacency is not symmetric".into(),
        ));
    }

    let mut triplets: Vec<(usize, usize, T)> = Vec::with_capacity(adjacency.nnz() + n);
    for r in 0..n {
        triplets.extend(adjacency.row_entries(r).map(|(c, v)| (r, c, v)));
        triplets.push((r, r, T::one()));
    }
    let with_loops = SparseMatrix::from_triplets(n, n, &triplets)?;

    let degree: Vec<T> = (0..n)
        .map(|r| with_loops.row_entries(r).map(|(_, v)| v).sum())
        .collect();
    let values = (0..n)
        .flat_map(|r| {
            let degree = &degree;
            with_loops
                .row_entries(r)
                .map(move |(c, v)| v / (degree[r] * degree[c]).sqrt())
                .collect::<Vec<_>>()
        })
        .collect();
    SparseMatrix::from_csr(
        n,
        n,
        with_loops.row_offsets.clone(),
        with_loops.col_indices.clone(),
        values,
    )
}
