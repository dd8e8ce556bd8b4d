//! Sparse graph storage, adjacency normalizations, and sparse-dense products.
//!
//! Everything is stored as square CSR. Column indices are strictly increasing
//! within a row, so two matrices with equal patterns have equal index arrays.
//! Normalizations never mutate; they return a fresh CSR matrix.

use rayon::prelude::*;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Square sparse matrix in CSR form, usually an adjacency matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseGraph {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    undirected: bool,
}

/// Adjacency normalizations. `WithLoops` variants add the identity first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NormScheme {
    /// `D^-1/2 A D^-1/2`
    SymNoLoops,
    /// `D~^-1/2 (A + I) D~^-1/2`
    SymWithLoops,
    /// `D^-1 A`
    RowNoLoops,
    /// `D~^-1 (A + I)`
    RowWithLoops,
}

impl NormScheme {
    fn adds_loops(self) -> bool {
        matches!(self, NormScheme::SymWithLoops | NormScheme::RowWithLoops)
    }

    fn symmetric(self) -> bool {
        matches!(self, NormScheme::SymNoLoops | NormScheme::SymWithLoops)
    }
}

impl SparseGraph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            row_ptr: vec![0; n + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
            undirected: true,
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseGraph {
            n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
            undirected: true,
        }
    }

    /// Undirected unweighted graph from an edge list. Edges are symmetrized,
    /// duplicates are merged and self-loops dropped.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Argument(format!(
                    "edge ({u}, {v}) out of bounds for {n} nodes"
                )));
            }
            if u == v {
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        Ok(Self::from_adjacency_lists(adj))
    }

    fn from_adjacency_lists(mut adj: Vec<Vec<usize>>) -> Self {
        let n = adj.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let total: usize = adj.iter().map(Vec::len).sum();
        let mut col_idx = Vec::with_capacity(total);
        for list in adj.iter_mut() {
            list.sort_unstable();
            list.dedup();
            col_idx.extend_from_slice(list);
            row_ptr.push(col_idx.len());
        }
        let values = vec![1.0; col_idx.len()];
        SparseGraph {
            n,
            row_ptr,
            col_idx,
            values,
            undirected: true,
        }
    }

    /// General square sparse matrix from `(row, col, value)` triplets.
    /// Duplicate coordinates are summed. The undirected flag is set when the
    /// result is exactly symmetric.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::Argument(format!(
                    "entry ({i}, {j}) out of bounds for {n} nodes"
                )));
            }
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite value at ({i}, {j})")));
            }
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| j);
            for &(j, v) in row.iter() {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        let mut g = SparseGraph {
            n,
            row_ptr,
            col_idx,
            values,
            undirected: false,
        };
        g.undirected = g.is_symmetric();
        Ok(g)
    }

    /// Validates raw CSR arrays.
    pub fn from_csr(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n + 1 || row_ptr[0] != 0 || *row_ptr.last().unwrap() != col_idx.len()
        {
            return Err(Error::Argument("malformed row offsets".into()));
        }
        if values.len() != col_idx.len() {
            return Err(Error::Argument("values and column indices differ in length".into()));
        }
        for i in 0..n {
            if row_ptr[i] > row_ptr[i + 1] {
                return Err(Error::Argument("row offsets decrease".into()));
            }
            let cols = &col_idx[row_ptr[i]..row_ptr[i + 1]];
            if cols.iter().any(|&j| j >= n) {
                return Err(Error::Argument(format!("row {i} has a column index >= {n}")));
            }
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Argument(format!(
                    "row {i} column indices not strictly increasing"
                )));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite matrix value".into()));
        }
        let mut g = SparseGraph {
            n,
            row_ptr,
            col_idx,
            values,
            undirected: false,
        };
        g.undirected = g.is_symmetric();
        Ok(g)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored entries.
    #[inline]
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Undirected edge count (each off-diagonal pair once) for symmetric
    /// graphs, stored entry count otherwise.
    pub fn edge_count(&self) -> usize {
        if !self.undirected {
            return self.nnz();
        }
        let diag = (0..self.n)
            .filter(|&i| self.row_indices(i).binary_search(&i).is_ok())
            .count();
        (self.nnz() - diag) / 2 + diag
    }

    #[inline]
    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row_indices(&self, i: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn row_values(&self, i: usize) -> &[f64] {
        &self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    /// Weighted degree (row sum).
    pub fn degree(&self, i: usize) -> f64 {
        self.row_values(i).iter().sum()
    }

    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    /// Value at `(i, j)`, zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.row_indices(i).binary_search(&j) {
            Ok(k) => self.row_values(i)[k],
            Err(_) => 0.0,
        }
    }

    /// Squared Frobenius norm from the stored entries.
    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| {
            self.row_indices(i)
                .iter()
                .zip(self.row_values(i))
                .all(|(&j, &v)| match self.row_indices(j).binary_search(&i) {
                    Ok(k) => self.row_values(j)[k] == v,
                    Err(_) => false,
                })
        })
    }

    pub fn transpose(&self) -> SparseGraph {
        if self.undirected {
            return self.clone();
        }
        let mut counts = vec![0usize; self.n + 1];
        for &j in &self.col_idx {
            counts[j + 1] += 1;
        }
        for i in 0..self.n {
            counts[i + 1] += counts[i];
        }
        let row_ptr = counts.clone();
        let mut next = counts;
        let mut col_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for i in 0..self.n {
            for (&j, &v) in self.row_indices(i).iter().zip(self.row_values(i)) {
                let slot = next[j];
                col_idx[slot] = i;
                values[slot] = v;
                next[j] += 1;
            }
        }
        SparseGraph {
            n: self.n,
            row_ptr,
            col_idx,
            values,
            undirected: false,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (&j, &v) in self.row_indices(i).iter().zip(self.row_values(i)) {
                m.set(i, j, v);
            }
        }
        m
    }

    /// Returns `scale * self + shift * I`. The diagonal is added to the pattern
    /// when `shift != 0`.
    pub fn shifted(&self, scale: f64, shift: f64) -> SparseGraph {
        let with_diag = shift != 0.0;
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(self.nnz() + if with_diag { self.n } else { 0 });
        let mut values = Vec::with_capacity(col_idx.capacity());
        for i in 0..self.n {
            let mut placed = !with_diag;
            for (&j, &v) in self.row_indices(i).iter().zip(self.row_values(i)) {
                if !placed && j >= i {
                    if j == i {
                        col_idx.push(i);
                        values.push(scale * v + shift);
                        placed = true;
                        continue;
                    }
                    col_idx.push(i);
                    values.push(shift);
                    placed = true;
                }
                col_idx.push(j);
                values.push(scale * v);
            }
            if !placed {
                col_idx.push(i);
                values.push(shift);
            }
            row_ptr.push(col_idx.len());
        }
        SparseGraph {
            n: self.n,
            row_ptr,
            col_idx,
            values,
            undirected: self.undirected,
        }
    }
}

/// Normalizes `g` per `scheme`. Zero-degree rows stay empty; under the
/// `WithLoops` schemes such a node keeps its unit self-loop.
pub fn normalize(g: &SparseGraph, scheme: NormScheme) -> SparseGraph {
    let base = if scheme.adds_loops() {
        g.shifted(1.0, 1.0)
    } else {
        g.clone()
    };
    let deg = base.degrees();
    let mut values = Vec::with_capacity(base.nnz());
    if scheme.symmetric() {
        for i in 0..base.n {
            for (&j, &v) in base.row_indices(i).iter().zip(base.row_values(i)) {
                let dd = deg[i] * deg[j];
                values.push(if dd > 0.0 { v / dd.sqrt() } else { 0.0 });
            }
        }
    } else {
        for i in 0..base.n {
            let inv = if deg[i] != 0.0 { 1.0 / deg[i] } else { 0.0 };
            values.extend(base.row_values(i).iter().map(|&v| v * inv));
        }
    }
    SparseGraph {
        n: base.n,
        row_ptr: base.row_ptr,
        col_idx: base.col_idx,
        values,
        undirected: scheme.symmetric() && g.undirected,
    }
}

/// `I - D^-1/2 A D^-1/2`. Rows of zero-degree nodes hold only the unit diagonal.
pub fn normalized_laplacian(g: &SparseGraph) -> SparseGraph {
    normalize(g, NormScheme::SymNoLoops).shifted(-1.0, 1.0)
}

/// Sparse-dense product `s * x`. Rows are computed in parallel; within a row
/// the accumulation order is fixed, so results do not depend on thread count.
pub fn spmm(s: &SparseGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
    if s.n != x.rows() {
        return Err(Error::Dimension(format!(
            "sparse matrix has {} columns but dense matrix has {} rows",
            s.n,
            x.rows()
        )));
    }
    let cols = x.cols();
    let mut out = DenseMatrix::zeros(s.n, cols);
    if cols == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(cols)
        .with_min_len(64)
        .enumerate()
        .for_each(|(i, orow)| {
            for (&j, &v) in s.row_indices(i).iter().zip(s.row_values(i)) {
                for (o, &xv) in orow.iter_mut().zip(x.row(j)) {
                    *o += v * xv;
                }
            }
        });
    Ok(out)
}

/// Applies `s` to `x` `k` times.
pub fn spmm_power(s: &SparseGraph, x: &DenseMatrix, k: usize) -> Result<DenseMatrix> {
    let mut h = x.clone();
    for _ in 0..k {
        h = spmm(s, &h)?;
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge01() -> SparseGraph {
        SparseGraph::from_edges(2, [(0, 1)]).unwrap()
    }

    fn triangle() -> SparseGraph {
        SparseGraph::from_edges(3, [(0, 1), (1, 2), (2, 0)]).unwrap()
    }

    #[test]
    fn single_edge_sym_with_loops_is_half() {
        let s = normalize(&edge01(), NormScheme::SymWithLoops).to_dense();
        assert_eq!(s.as_slice(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn single_edge_row_no_loops_is_swap() {
        let s = normalize(&edge01(), NormScheme::RowNoLoops).to_dense();
        assert_eq!(s.as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn isolated_node_keeps_self_loop() {
        let g = SparseGraph::empty(1);
        assert_eq!(normalize(&g, NormScheme::SymWithLoops).to_dense().as_slice(), &[1.0]);
        assert_eq!(normalize(&g, NormScheme::RowWithLoops).to_dense().as_slice(), &[1.0]);
        assert_eq!(normalize(&g, NormScheme::SymNoLoops).nnz(), 0);
    }

    #[test]
    fn isolated_rows_are_zero_without_loops() {
        let g = SparseGraph::from_edges(3, [(0, 1)]).unwrap();
        for scheme in [NormScheme::SymNoLoops, NormScheme::RowNoLoops] {
            let s = normalize(&g, scheme).to_dense();
            assert!(s.row(2).iter().all(|&v| v == 0.0));
            assert!(s.column(2).iter().all(|&v| v == 0.0));
            assert!(s.is_finite());
        }
    }

    #[test]
    fn laplacian_examples() {
        assert_eq!(
            normalized_laplacian(&edge01()).to_dense().as_slice(),
            &[1.0, -1.0, -1.0, 1.0]
        );
        assert_eq!(
            normalized_laplacian(&SparseGraph::empty(2)).to_dense(),
            DenseMatrix::identity(2)
        );
        let l = normalized_laplacian(&triangle()).to_dense();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { -0.5 };
                assert!((l.get(i, j) - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn laplacian_of_isolated_node_is_only_diagonal() {
        let g = SparseGraph::from_edges(3, [(0, 1)]).unwrap();
        let l = normalized_laplacian(&g);
        assert_eq!(l.row_indices(2), &[2]);
        assert_eq!(l.row_values(2), &[1.0]);
    }

    #[test]
    fn spmm_identity_and_zero() {
        let x = DenseMatrix::from_fn(4, 3, |i, j| (i as f64 + 0.3) * (j as f64 - 1.7));
        assert_eq!(spmm(&SparseGraph::identity(4), &x).unwrap(), x);
        let z = spmm(&SparseGraph::empty(4), &x).unwrap();
        assert!(z.as_slice().iter().all(|&v| v == 0.0));
        assert!(spmm(&SparseGraph::identity(3), &x).is_err());
    }

    #[test]
    fn triplets_sum_duplicates_and_detect_symmetry() {
        let g = SparseGraph::from_triplets(2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 3.0)]).unwrap();
        assert_eq!(g.get(0, 1), 3.0);
        assert!(g.is_undirected());
        let h = SparseGraph::from_triplets(2, &[(0, 1, 1.0)]).unwrap();
        assert!(!h.is_undirected());
        assert_eq!(h.transpose().get(1, 0), 1.0);
    }

    #[test]
    fn shifted_inserts_diagonal_in_order() {
        let g = SparseGraph::from_edges(3, [(0, 2), (1, 2)]).unwrap();
        let s = g.shifted(2.0, 1.0);
        assert_eq!(s.row_indices(2), &[0, 1, 2]);
        assert_eq!(s.row_values(2), &[2.0, 2.0, 1.0]);
        assert_eq!(s.row_indices(0), &[0, 2]);
    }

    #[test]
    fn from_csr_validates() {
        assert!(SparseGraph::from_csr(2, vec![0, 1, 2], vec![1, 0], vec![1.0, 1.0]).is_ok());
        assert!(SparseGraph::from_csr(2, vec![0, 2, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseGraph::from_csr(2, vec![0, 1, 2], vec![2, 0], vec![1.0, 1.0]).is_err());
    }
}
