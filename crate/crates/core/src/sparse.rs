//! CSR sparse matrices, dense row-major matrices, and the handful of kernels
//! the whole engine is built on: adjacency construction, the two
//! normalization operators, sparse-dense products, and block extraction.

use crate::error::{Error, Result};
use std::sync::OnceLock;

/// Worker thread cap, read once from `CLUSTER_GCN_THREADS`. Default 1 (serial).
pub fn thread_cap() -> usize {
    static CAP: OnceLock<usize> = OnceLock::new();
    *CAP.get_or_init(|| {
        std::env::var("CLUSTER_GCN_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&t| t >= 1)
            .unwrap_or(1)
    })
}

/// Square or rectangular sparse matrix in CSR form, 64-bit float values.
///
/// Invariants (checked by constructors): `row_offsets` is non-decreasing with
/// `row_offsets[0] == 0` and `row_offsets[n_rows] == nnz`; column indices are
/// strictly increasing within each row; every column index is `< n_cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::input("row_offsets length must be n_rows + 1"));
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::input("row_offsets must start at 0 and end at nnz"));
        }
        if col_indices.len() != values.len() {
            return Err(Error::input("col_indices and values length mismatch"));
        }
        for w in row_offsets.windows(2) {
            if w[0] > w[1] {
                return Err(Error::input("row_offsets must be non-decreasing"));
            }
        }
        for r in 0..n_rows {
            let row = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            for (k, &c) in row.iter().enumerate() {
                if c >= n_cols {
                    return Err(Error::input(format!("column index {c} out of range")));
                }
                if k > 0 && row[k - 1] >= c {
                    return Err(Error::input(format!(
                        "row {r}: column indices must be strictly increasing"
                    )));
                }
            }
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Build from (row, col, value) triplets; entries must be unique.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        for w in triplets.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::input("duplicate entry in triplets"));
            }
        }
        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for &(r, c, v) in &triplets {
            if r >= n_rows {
                return Err(Error::input(format!("row index {r} out of range")));
            }
            row_offsets[r + 1] += 1;
            col_indices.push(c);
            values.push(v);
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        SparseMatrix::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zero(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        (&self.col_indices[span.clone()], &self.values[span])
    }

    /// Sum of the values in row `r` (the weighted degree for an adjacency matrix).
    pub fn row_sum(&self, r: usize) -> f64 {
        let (_, vals) = self.row(r);
        vals.iter().sum()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Diagonal entries as a vector (zero where absent).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &c in &self.col_indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.n_cols {
            counts[c + 1] += counts[c];
        }
        let mut col_indices = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut next = counts.clone();
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c];
                col_indices[slot] = r;
                values[slot] = v;
                next[c] += 1;
            }
        }
        SparseMatrix {
            n_rows: self.n_cols,
            n_cols: self.n_rows,
            row_offsets: counts,
            col_indices,
            values,
        }
    }

    /// Materialize as a dense matrix; test helper and small-graph oracle.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c, v);
            }
        }
        out
    }
}

/// Build a symmetric binary adjacency matrix from an undirected edge list.
///
/// Each edge is stored in both directions, duplicates collapse, and self-loops
/// are dropped; normalization operators reintroduce loops explicitly.
pub fn from_edges(edges: &[(usize, usize)], n: usize) -> Result<SparseMatrix> {
    let mut pairs = Vec::with_capacity(edges.len());
    for &(s, d) in edges {
        if s >= n || d >= n {
            return Err(Error::input(format!(
                "edge ({s},{d}) out of range for {n} nodes"
            )));
        }
        if s == d {
            continue;
        }
        pairs.push((s.min(d), s.max(d)));
    }
    pairs.sort_unstable();
    pairs.dedup();

    let mut triplets = Vec::with_capacity(pairs.len() * 2);
    for &(a, b) in &pairs {
        triplets.push((a, b, 1.0));
        triplets.push((b, a, 1.0));
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

fn require_square(a: &SparseMatrix) -> Result<()> {
    if !a.is_square() {
        return Err(Error::input(format!(
            "matrix must be square, got {}x{}",
            a.n_rows, a.n_cols
        )));
    }
    Ok(())
}

/// Row normalization with self-loops: (D + I)^-1 (A + I), D the degree
/// diagonal of the original matrix. Every row of the result sums to 1.
pub fn row_normalize_aug(a: &SparseMatrix) -> Result<SparseMatrix> {
    require_square(a)?;
    let n = a.n_rows;
    let mut triplets = Vec::with_capacity(a.nnz() + n);
    for r in 0..n {
        let scale = 1.0 / (a.row_sum(r) + 1.0);
        let (cols, vals) = a.row(r);
        let mut has_diag = false;
        for (&c, &v) in cols.iter().zip(vals) {
            let v = if c == r {
                has_diag = true;
                (v + 1.0) * scale
            } else {
                v * scale
            };
            triplets.push((r, c, v));
        }
        if !has_diag {
            triplets.push((r, r, scale));
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Symmetric normalization with self-loops: D~^-1/2 (A + I) D~^-1/2 where D~
/// is the degree diagonal of A + I. The result is symmetric with spectral
/// radius at most 1.
pub fn sym_normalize_aug(a: &SparseMatrix) -> Result<SparseMatrix> {
    require_square(a)?;
    let n = a.n_rows;
    let inv_sqrt: Vec<f64> = (0..n).map(|r| 1.0 / (a.row_sum(r) + 1.0).sqrt()).collect();
    let mut triplets = Vec::with_capacity(a.nnz() + n);
    for r in 0..n {
        let (cols, vals) = a.row(r);
        let mut has_diag = false;
        for (&c, &v) in cols.iter().zip(vals) {
            let v = if c == r {
                has_diag = true;
                (v + 1.0) * inv_sqrt[r] * inv_sqrt[c]
            } else {
                v * inv_sqrt[r] * inv_sqrt[c]
            };
            triplets.push((r, c, v));
        }
        if !has_diag {
            triplets.push((r, r, inv_sqrt[r] * inv_sqrt[r]));
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Sparse-dense product `a * x`.
///
/// Rows may be computed in parallel (capped by `CLUSTER_GCN_THREADS`); the
/// per-row accumulation order is fixed, so the result is bit-identical to
/// serial execution.
pub fn spmm(a: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if a.n_cols != x.n_rows() {
        return Err(Error::input(format!(
            "spmm shape mismatch: {}x{} times {}x{}",
            a.n_rows,
            a.n_cols,
            x.n_rows(),
            x.n_cols()
        )));
    }
    let f = x.n_cols();
    let mut out = DenseMatrix::zeros(a.n_rows, f);
    let threads = thread_cap().min(a.n_rows.max(1));
    if threads <= 1 || a.n_rows < 64 || f == 0 {
        spmm_rows(a, x, out.values_mut(), 0, a.n_rows);
        return Ok(out);
    }
    let chunk = a.n_rows.div_ceil(threads);
    let rows_per_chunk: Vec<(usize, usize)> = (0..threads)
        .map(|t| (t * chunk, ((t + 1) * chunk).min(a.n_rows)))
        .filter(|(lo, hi)| lo < hi)
        .collect();
    let out_chunks: Vec<&mut [f64]> = out.values_mut().chunks_mut(chunk * f).collect();
    std::thread::scope(|s| {
        for (&(lo, hi), slice) in rows_per_chunk.iter().zip(out_chunks) {
            s.spawn(move || {
                spmm_rows_into(a, x, slice, lo, hi);
            });
        }
    });
    Ok(out)
}

fn spmm_rows(a: &SparseMatrix, x: &DenseMatrix, out: &mut [f64], lo: usize, hi: usize) {
    let f = x.n_cols();
    spmm_rows_into(a, x, &mut out[lo * f..hi * f], lo, hi);
}

fn spmm_rows_into(a: &SparseMatrix, x: &DenseMatrix, out: &mut [f64], lo: usize, hi: usize) {
    let f = x.n_cols();
    for r in lo..hi {
        let dst = &mut out[(r - lo) * f..(r - lo + 1) * f];
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let src = x.row(c);
            for (d, s) in dst.iter_mut().zip(src) {
                *d += v * s;
            }
        }
    }
}

/// Extract the submatrix over `nodes` (rows and columns), local index `i`
/// standing for `nodes[i]`.
pub fn extract_submatrix(a: &SparseMatrix, nodes: &[usize]) -> Result<SparseMatrix> {
    require_square(a)?;
    let mut local = vec![usize::MAX; a.n_rows];
    for (i, &g) in nodes.iter().enumerate() {
        if g >= a.n_rows {
            return Err(Error::input(format!("node {g} out of range")));
        }
        if local[g] != usize::MAX {
            return Err(Error::input(format!("duplicate node {g}")));
        }
        local[g] = i;
    }
    let m = nodes.len();
    let mut triplets = Vec::new();
    for (i, &g) in nodes.iter().enumerate() {
        let (cols, vals) = a.row(g);
        for (&c, &v) in cols.iter().zip(vals) {
            let lc = local[c];
            if lc != usize::MAX {
                triplets.push((i, lc, v));
            }
        }
    }
    SparseMatrix::from_triplets(m, m, triplets)
}

/// Dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix {
            n_rows,
            n_cols,
            values: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_values(n_rows: usize, n_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_rows * n_cols {
            return Err(Error::input("value length must be n_rows * n_cols"));
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(n_rows * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::input("ragged rows"));
            }
            values.extend_from_slice(r);
        }
        Ok(DenseMatrix {
            n_rows,
            n_cols,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.n_cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.n_cols + c] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Select rows by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<DenseMatrix> {
        let mut out = DenseMatrix::zeros(rows.len(), self.n_cols);
        for (i, &r) in rows.iter().enumerate() {
            if r >= self.n_rows {
                return Err(Error::input(format!("row {r} out of range")));
            }
            out.row_mut(i).copy_from_slice(self.row(r));
        }
        Ok(out)
    }

    /// `self * other`.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_rows {
            return Err(Error::input(format!(
                "matmul shape mismatch: {}x{} times {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            let dst = out.row_mut(i);
            for k in 0..self.n_cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                let src = other.row(k);
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `self^T * other`.
    pub fn matmul_tn(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_rows != other.n_rows {
            return Err(Error::input("matmul_tn shape mismatch"));
        }
        let mut out = DenseMatrix::zeros(self.n_cols, other.n_cols);
        for k in 0..self.n_rows {
            let left = self.row(k);
            let right = other.row(k);
            for (i, &a) in left.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let dst = out.row_mut(i);
                for (d, s) in dst.iter_mut().zip(right) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_nt(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.n_cols != other.n_cols {
            return Err(Error::input("matmul_nt shape mismatch"));
        }
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_rows);
        for i in 0..self.n_rows {
            let left = self.row(i);
            for j in 0..other.n_rows {
                let right = other.row(j);
                let mut acc = 0.0;
                for (a, b) in left.iter().zip(right) {
                    acc += a * b;
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &DenseMatrix) -> Result<()> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::input("add shape mismatch"));
        }
        for (d, s) in self.values.iter_mut().zip(&other.values) {
            *d += s;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn relu(&self) -> DenseMatrix {
        self.map(|v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}
