//! Compressed-row sparse matrices and a sparse Cholesky factorization split
//! into a reusable symbolic phase (fill-reducing ordering, elimination tree,
//! column counts) and a numeric phase.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{GpError, Result};

/// Square or rectangular matrix in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates monotone offsets and sorted, unique, in-range column indices.
    pub fn new(
        nrows: usize,
        ncols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if offsets.len() != nrows + 1 || offsets[0] != 0 || *offsets.last().unwrap() != indices.len() {
            return Err(GpError::DimensionMismatch("bad row offsets".into()));
        }
        if indices.len() != values.len() {
            return Err(GpError::DimensionMismatch("indices and values differ in length".into()));
        }
        for r in 0..nrows {
            if offsets[r] > offsets[r + 1] {
                return Err(GpError::DimensionMismatch(format!("row offsets decrease at row {r}")));
            }
            let row = &indices[offsets[r]..offsets[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&c| c >= ncols) {
                return Err(GpError::DimensionMismatch(format!(
                    "row {r} has unsorted, duplicate or out-of-range columns"
                )));
            }
        }
        Ok(Self { nrows, ncols, offsets, indices, values })
    }

    pub(crate) fn from_csr_unchecked(
        nrows: usize,
        ncols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert!(Self::new(nrows, ncols, offsets.clone(), indices.clone(), values.clone()).is_ok());
        Self { nrows, ncols, offsets, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            offsets: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Keeps the entries of a dense matrix that are not exactly zero.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                if m[(i, j)] != 0.0 {
                    indices.push(j);
                    values.push(m[(i, j)]);
                }
            }
            offsets.push(indices.len());
        }
        Self { nrows: m.nrows(), ncols: m.ncols(), offsets, indices, values }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.offsets == other.offsets
            && self.indices == other.indices
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nrows)
            .map(|i| {
                let (c, v) = self.row(i);
                c.iter().zip(v).map(|(&j, &a)| a * x[j]).sum()
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                m[(i, j)] = a;
            }
        }
        m
    }
}

thread_local! {
    static SYMBOLIC_ANALYSES: Cell<usize> = const { Cell::new(0) };
}

/// Number of symbolic analyses performed on the current thread.
pub fn symbolic_analysis_count() -> usize {
    SYMBOLIC_ANALYSES.with(|c| c.get())
}

const NONE: usize = usize::MAX;

/// Pattern-only part of a sparse Cholesky factorization.
#[derive(Debug)]
pub struct SymbolicCholesky {
    n: usize,
    /// `perm[new] = old`.
    perm: Vec<usize>,
    pattern_offsets: Vec<usize>,
    pattern_indices: Vec<usize>,
    /// Lower part of the permuted matrix, by permuted row: permuted column
    /// and source position in the original value array.
    lower_offsets: Vec<usize>,
    lower_cols: Vec<usize>,
    lower_src: Vec<usize>,
    parent: Vec<usize>,
    col_ptr: Vec<usize>,
}

impl SymbolicCholesky {
    /// Runs ordering and symbolic factorization for a symmetric pattern.
    pub fn analyze(m: &SparseMatrix) -> Result<Self> {
        let (n, nc) = m.shape();
        if n != nc {
            return Err(GpError::DimensionMismatch("sparse cholesky needs a square matrix".into()));
        }
        SYMBOLIC_ANALYSES.with(|c| c.set(c.get() + 1));
        let perm = minimum_degree_order(m);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut lower_offsets = Vec::with_capacity(n + 1);
        let mut lower_cols = Vec::new();
        let mut lower_src = Vec::new();
        lower_offsets.push(0);
        for k in 0..n {
            let old = perm[k];
            let start = m.offsets[old];
            for (p, &c) in m.indices[start..m.offsets[old + 1]].iter().enumerate() {
                let j = iperm[c];
                if j <= k {
                    lower_cols.push(j);
                    lower_src.push(start + p);
                }
            }
            lower_offsets.push(lower_cols.len());
        }
        let parent = elimination_tree(n, &lower_offsets, &lower_cols);
        // Column counts by walking every row pattern once.
        let mut counts = vec![1usize; n];
        let mut mark = vec![NONE; n];
        for k in 0..n {
            mark[k] = k;
            for &j in &lower_cols[lower_offsets[k]..lower_offsets[k + 1]] {
                let mut i = j;
                while i != NONE && mark[i] != k {
                    counts[i] += 1;
                    mark[i] = k;
                    i = parent[i];
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        for c in &counts {
            col_ptr.push(col_ptr.last().unwrap() + c);
        }
        Ok(Self {
            n,
            perm,
            pattern_offsets: m.offsets.clone(),
            pattern_indices: m.indices.clone(),
            lower_offsets,
            lower_cols,
            lower_src,
            parent,
            col_ptr,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros of the factor, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.col_ptr[self.n]
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    pub fn matches(&self, m: &SparseMatrix) -> bool {
        m.offsets == self.pattern_offsets && m.indices == self.pattern_indices
    }
}

fn elimination_tree(n: usize, offsets: &[usize], cols: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &j in &cols[offsets[k]..offsets[k + 1]] {
            let mut i = j;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Minimum-degree ordering on the explicit elimination graph; ties go to
/// the lowest index so the result depends on the pattern only.
fn minimum_degree_order(m: &SparseMatrix) -> Vec<usize> {
    let n = m.nrows;
    let mut adj: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            let (c, _) = m.row(i);
            c.iter().copied().filter(|&j| j != i).collect()
        })
        .collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (adj[i].len(), i)).collect();
    let mut eliminated = vec![false; n];
    let mut stamp = vec![0usize; n];
    let mut tick = 0usize;
    let mut order = Vec::with_capacity(n);
    while let Some((_, p)) = queue.pop_first() {
        eliminated[p] = true;
        order.push(p);
        let clique = std::mem::take(&mut adj[p]);
        for &q in &clique {
            queue.remove(&(adj[q].len(), q));
            tick += 1;
            let list = &mut adj[q];
            list.retain(|&v| v != p && !eliminated[v]);
            for &v in list.iter() {
                stamp[v] = tick;
            }
            stamp[q] = tick;
            for &v in &clique {
                if stamp[v] != tick {
                    stamp[v] = tick;
                    list.push(v);
                }
            }
            queue.insert((list.len(), q));
        }
    }
    order
}

/// Numeric sparse Cholesky factor `L` of `P M Pᵀ`, stored by column with the
/// diagonal first.
#[derive(Clone, Debug)]
pub struct SparseCholesky {
    symbolic: Arc<SymbolicCholesky>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCholesky {
    /// Factorizes `m`, running the symbolic phase unless `reuse` is given.
    pub fn new(m: &SparseMatrix, reuse: Option<&Arc<SymbolicCholesky>>) -> Result<Self> {
        let symbolic = match reuse {
            Some(s) => {
                if !s.matches(m) {
                    return Err(GpError::PatternMismatch);
                }
                Arc::clone(s)
            }
            None => Arc::new(SymbolicCholesky::analyze(m)?),
        };
        Self::numeric(m, symbolic)
    }

    fn numeric(m: &SparseMatrix, sym: Arc<SymbolicCholesky>) -> Result<Self> {
        let n = sym.n;
        let nnz = sym.factor_nnz();
        let mut row_idx = vec![0usize; nnz];
        let mut values = vec![0.0; nnz];
        let mut next: Vec<usize> = sym.col_ptr[..n].to_vec();
        let mut x = vec![0.0; n];
        let mut mark = vec![NONE; n];
        let mut stack = vec![0usize; n];
        let mut path = vec![0usize; n];
        for k in 0..n {
            // Pattern of row k of L via the elimination tree.
            let mut top = n;
            mark[k] = k;
            for p in sym.lower_offsets[k]..sym.lower_offsets[k + 1] {
                let j = sym.lower_cols[p];
                x[j] += m.values[sym.lower_src[p]];
                let mut len = 0;
                let mut i = j;
                while i != NONE && mark[i] != k {
                    path[len] = i;
                    len += 1;
                    mark[i] = k;
                    i = sym.parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    stack[top] = path[len];
                }
            }
            let mut d = x[k];
            x[k] = 0.0;
            for &i in &stack[top..n] {
                let lki = x[i] / values[sym.col_ptr[i]];
                x[i] = 0.0;
                for p in (sym.col_ptr[i] + 1)..next[i] {
                    x[row_idx[p]] -= values[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                row_idx[p] = k;
                values[p] = lki;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(GpError::NotPositiveDefinite { pivot: sym.perm[k], value: d });
            }
            let p = next[k];
            next[k] += 1;
            row_idx[p] = k;
            values[p] = d.sqrt();
        }
        Ok(Self { symbolic: sym, row_idx, values })
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    pub fn logdet(&self) -> f64 {
        let cp = &self.symbolic.col_ptr;
        2.0 * (0..self.dim()).map(|j| self.values[cp[j]].ln()).sum::<f64>()
    }

    /// Lower solve in permuted coordinates, skipping leading zeros.
    fn forward_permuted(&self, x: &mut [f64], first: usize) {
        let cp = &self.symbolic.col_ptr;
        for j in first..self.dim() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let xj = xj / self.values[cp[j]];
            x[j] = xj;
            for p in (cp[j] + 1)..cp[j + 1] {
                x[self.row_idx[p]] -= self.values[p] * xj;
            }
        }
    }

    fn backward_permuted(&self, x: &mut [f64]) {
        let cp = &self.symbolic.col_ptr;
        for j in (0..self.dim()).rev() {
            let mut s = x[j];
            for p in (cp[j] + 1)..cp[j + 1] {
                s -= self.values[p] * x[self.row_idx[p]];
            }
            x[j] = s / self.values[cp[j]];
        }
    }

    /// `M⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let perm = &self.symbolic.perm;
        let mut x: Vec<f64> = perm.iter().map(|&old| b[old]).collect();
        self.forward_permuted(&mut x, 0);
        self.backward_permuted(&mut x);
        let mut out = vec![0.0; x.len()];
        for (new, &old) in perm.iter().enumerate() {
            out[old] = x[new];
        }
        out
    }

    /// `bᵀ M⁻¹ b` for a sparse `b` given as `(index, value)` pairs.
    /// `work` must be zero-filled with length `dim()`; it is left zeroed.
    pub fn inv_quad_sparse(&self, entries: &[(usize, f64)], work: &mut [f64], iperm: &[usize]) -> f64 {
        let mut first = self.dim();
        for &(i, v) in entries {
            let k = iperm[i];
            work[k] += v;
            first = first.min(k);
        }
        self.forward_permuted(work, first);
        let mut s = 0.0;
        let first = first.min(work.len());
        for w in work[first..].iter_mut() {
            s += *w * *w;
            *w = 0.0;
        }
        s
    }

    /// Inverse permutation `iperm[old] = new`, for [`Self::inv_quad_sparse`].
    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut iperm = vec![0; self.dim()];
        for (new, &old) in self.symbolic.perm.iter().enumerate() {
            iperm[old] = new;
        }
        iperm
    }
}
