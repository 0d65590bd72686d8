//! Block-sparse matrices with a structurally symmetric pattern and a direct
//! block LU factorization.
//!
//! The factorization pivots only inside the dense diagonal blocks. That is
//! sufficient for matrices whose symmetric part is positive definite, which
//! every trace system assembled by this crate satisfies for a positive
//! reaction coefficient. Breakdown is detected and reported, never masked.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::Arc;

use crate::dense::DenseMatrix;
use crate::error::{HdgError, Result};
use crate::Scalar;

/// Sparsity of a square block matrix; every row stores its diagonal block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockPattern {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
}

impl BlockPattern {
    /// Builds a pattern from per-row neighbor lists. The diagonal is added
    /// and the result symmetrized.
    pub fn from_adjacency(adjacency: &[Vec<usize>]) -> Self {
        let n = adjacency.len();
        let mut rows: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for (i, nbrs) in adjacency.iter().enumerate() {
            for &j in nbrs {
                rows[i].push(j);
                rows[j].push(i);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            cols.extend(r);
            row_ptr.push(cols.len());
        }
        Self { row_ptr, cols }
    }

    #[inline]
    pub fn num_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    #[inline]
    pub fn num_blocks(&self) -> usize {
        self.cols.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
    }

    #[inline]
    pub fn row_start(&self, i: usize) -> usize {
        self.row_ptr[i]
    }

    /// Storage index of block `(i, j)`.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i).binary_search(&j).ok().map(|p| self.row_ptr[i] + p)
    }
}

#[derive(Clone, Debug)]
pub struct BlockSparseMatrix<T> {
    pattern: Arc<BlockPattern>,
    block_size: usize,
    values: Vec<T>,
}

impl<T: Scalar> BlockSparseMatrix<T> {
    pub fn zeros(pattern: Arc<BlockPattern>, block_size: usize) -> Self {
        let len = pattern.num_blocks() * block_size * block_size;
        Self {
            pattern,
            block_size,
            values: vec![T::zero(); len],
        }
    }

    #[inline]
    pub fn pattern(&self) -> &Arc<BlockPattern> {
        &self.pattern
    }

    #[inline]
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.pattern.num_rows() * self.block_size
    }

    #[inline]
    pub fn block(&self, slot: usize) -> &[T] {
        let b2 = self.block_size * self.block_size;
        &self.values[slot * b2..(slot + 1) * b2]
    }

    #[inline]
    pub fn block_mut(&mut self, slot: usize) -> &mut [T] {
        let b2 = self.block_size * self.block_size;
        &mut self.values[slot * b2..(slot + 1) * b2]
    }

    pub fn set_zero(&mut self) {
        self.values.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Entry `(r, c)` in scalar indexing; zero outside the pattern.
    pub fn get(&self, r: usize, c: usize) -> T {
        let b = self.block_size;
        match self.pattern.find(r / b, c / b) {
            Some(s) => self.block(s)[(r % b) * b + c % b],
            None => T::zero(),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let b = self.block_size;
        let mut y = vec![T::zero(); self.dim()];
        for i in 0..self.pattern.num_rows() {
            let start = self.pattern.row_start(i);
            for (off, &j) in self.pattern.row(i).iter().enumerate() {
                let blk = self.block(start + off);
                for r in 0..b {
                    let mut s = T::zero();
                    for c in 0..b {
                        s += blk[r * b + c] * x[j * b + c];
                    }
                    y[i * b + r] += s;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let n = self.dim();
        DenseMatrix::from_fn(n, n, |r, c| self.get(r, c))
    }
}

/// Fill-reducing ordering and the factor structure it induces.
#[derive(Clone, Debug)]
pub struct SymbolicLu {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// Permuted row patterns of `L` (columns `< i`, ascending).
    l_rows: Vec<Vec<usize>>,
    /// Permuted row patterns of `U` (columns `> i`, ascending).
    u_rows: Vec<Vec<usize>>,
}

impl SymbolicLu {
    pub fn analyze(pattern: &BlockPattern) -> Self {
        let n = pattern.num_rows();
        let adjacency: Vec<Vec<usize>> = (0..n)
            .map(|i| pattern.row(i).iter().copied().filter(|&j| j != i).collect())
            .collect();
        let perm = minimum_degree(&adjacency);
        let mut iperm = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let padj: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                let mut r: Vec<usize> = adjacency[perm[i]].iter().map(|&j| iperm[j]).collect();
                r.sort_unstable();
                r
            })
            .collect();
        let parent = elimination_tree(&padj);
        let mut mark = vec![usize::MAX; n];
        let mut l_rows = Vec::with_capacity(n);
        for i in 0..n {
            mark[i] = i;
            let mut row = Vec::new();
            for &j in padj[i].iter().filter(|&&j| j < i) {
                let mut p = j;
                while mark[p] != i {
                    mark[p] = i;
                    row.push(p);
                    p = parent[p];
                    if p == usize::MAX {
                        break;
                    }
                }
            }
            row.sort_unstable();
            l_rows.push(row);
        }
        let mut u_rows = vec![Vec::new(); n];
        for (i, row) in l_rows.iter().enumerate() {
            for &j in row {
                u_rows[j].push(i);
            }
        }
        Self {
            perm,
            l_rows,
            u_rows,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.perm.len()
    }

    /// Block multiply-subtract operations of one numeric factorization.
    pub fn factor_work(&self) -> usize {
        self.u_rows.iter().map(|r| r.len() * r.len()).sum()
    }

    /// Stored blocks of `L + U`.
    pub fn factor_blocks(&self) -> usize {
        self.num_rows() + 2 * self.l_rows.iter().map(Vec::len).sum::<usize>()
    }
}

/// Minimum degree on an explicit elimination graph. Ties go to the lowest index.
fn minimum_degree(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let mut adj: Vec<Vec<usize>> = adjacency.to_vec();
    let mut alive = vec![true; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> =
        (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut order = Vec::with_capacity(n);
    let mut merged = Vec::new();
    while let Some(Reverse((deg, p))) = heap.pop() {
        if !alive[p] || deg != adj[p].len() {
            continue;
        }
        alive[p] = false;
        order.push(p);
        let nbrs = std::mem::take(&mut adj[p]);
        for &a in &nbrs {
            merged.clear();
            let (x, y) = (&adj[a], &nbrs);
            let (mut i, mut j) = (0, 0);
            while i < x.len() || j < y.len() {
                let v = if j >= y.len() || (i < x.len() && x[i] < y[j]) {
                    i += 1;
                    x[i - 1]
                } else if i >= x.len() || y[j] < x[i] {
                    j += 1;
                    y[j - 1]
                } else {
                    i += 1;
                    j += 1;
                    x[i - 1]
                };
                if v != p && v != a {
                    merged.push(v);
                }
            }
            std::mem::swap(&mut adj[a], &mut merged);
            heap.push(Reverse((adj[a].len(), a)));
        }
    }
    order
}

/// Elimination tree of a symmetric pattern (Liu's algorithm with path compression).
fn elimination_tree(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut parent = vec![usize::MAX; n];
    let mut ancestor = vec![usize::MAX; n];
    for i in 0..n {
        for &j in adj[i].iter().filter(|&&j| j < i) {
            let mut r = j;
            while ancestor[r] != usize::MAX && ancestor[r] != i {
                let next = ancestor[r];
                ancestor[r] = i;
                r = next;
            }
            if ancestor[r] == usize::MAX {
                ancestor[r] = i;
                parent[r] = i;
            }
        }
    }
    parent
}

/// Numeric factors `P A P^T = L U`, `L` unit block-lower.
#[derive(Clone, Debug)]
pub struct BlockLu<T> {
    symbolic: Arc<SymbolicLu>,
    block_size: usize,
    l_vals: Vec<Vec<T>>,
    u_vals: Vec<Vec<T>>,
    diag_inv: Vec<T>,
}

impl<T: Scalar> BlockLu<T> {
    pub fn factor(matrix: &BlockSparseMatrix<T>, symbolic: Arc<SymbolicLu>) -> Result<Self> {
        let n = symbolic.num_rows();
        let b = matrix.block_size();
        let b2 = b * b;
        let pattern = matrix.pattern();
        assert_eq!(pattern.num_rows(), n, "symbolic analysis of a different pattern");
        let mut iperm = vec![0; n];
        for (new, &old) in symbolic.perm.iter().enumerate() {
            iperm[old] = new;
        }
        let mut work = vec![T::zero(); n * b2];
        let mut l_vals = Vec::with_capacity(n);
        let mut u_vals: Vec<Vec<T>> = Vec::with_capacity(n);
        let mut diag_inv = vec![T::zero(); n * b2];
        let mut lij = vec![T::zero(); b2];
        let breakdown = |block: usize| HdgError::TraceFactorization {
            block,
            blocks: n,
            block_size: b,
            stored: pattern.num_blocks(),
        };
        for i in 0..n {
            let old = symbolic.perm[i];
            let start = pattern.row_start(old);
            for (off, &j_old) in pattern.row(old).iter().enumerate() {
                let j = iperm[j_old];
                work[j * b2..(j + 1) * b2].copy_from_slice(matrix.block(start + off));
            }
            let lrow = &symbolic.l_rows[i];
            let mut lv = vec![T::zero(); lrow.len() * b2];
            for (lp, &j) in lrow.iter().enumerate() {
                // L_ij = W_j * inv(U_jj)
                let wj = &work[j * b2..(j + 1) * b2];
                let dinv = &diag_inv[j * b2..(j + 1) * b2];
                mul_block(wj, dinv, &mut lij, b);
                lv[lp * b2..(lp + 1) * b2].copy_from_slice(&lij);
                for (up, &c) in symbolic.u_rows[j].iter().enumerate() {
                    let ujc = &u_vals[j][up * b2..(up + 1) * b2];
                    let wc = &mut work[c * b2..(c + 1) * b2];
                    sub_mul_block(&lij, ujc, wc, b);
                }
            }
            let diag = DenseMatrix::from_row_major(b, b, work[i * b2..(i + 1) * b2].to_vec());
            let lu = diag.lu().ok_or_else(|| breakdown(i))?;
            let inv = lu.inverse();
            if !inv.is_finite() {
                return Err(breakdown(i));
            }
            diag_inv[i * b2..(i + 1) * b2].copy_from_slice(inv.as_slice());
            let urow = &symbolic.u_rows[i];
            let mut uv = vec![T::zero(); urow.len() * b2];
            for (up, &c) in urow.iter().enumerate() {
                uv[up * b2..(up + 1) * b2].copy_from_slice(&work[c * b2..(c + 1) * b2]);
            }
            for &j in lrow.iter().chain(std::iter::once(&i)).chain(urow.iter()) {
                work[j * b2..(j + 1) * b2].iter_mut().for_each(|v| *v = T::zero());
            }
            l_vals.push(lv);
            u_vals.push(uv);
        }
        Ok(Self {
            symbolic,
            block_size: b,
            l_vals,
            u_vals,
            diag_inv,
        })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let b = self.block_size;
        let b2 = b * b;
        let n = self.symbolic.num_rows();
        let perm = &self.symbolic.perm;
        let mut y = vec![T::zero(); n * b];
        for i in 0..n {
            y[i * b..(i + 1) * b].copy_from_slice(&rhs[perm[i] * b..(perm[i] + 1) * b]);
        }
        for i in 0..n {
            for (lp, &j) in self.symbolic.l_rows[i].iter().enumerate() {
                let l = &self.l_vals[i][lp * b2..(lp + 1) * b2];
                for r in 0..b {
                    let mut s = T::zero();
                    for c in 0..b {
                        s += l[r * b + c] * y[j * b + c];
                    }
                    y[i * b + r] -= s;
                }
            }
        }
        let mut tmp = vec![T::zero(); b];
        for i in (0..n).rev() {
            tmp.copy_from_slice(&y[i * b..(i + 1) * b]);
            for (up, &c) in self.symbolic.u_rows[i].iter().enumerate() {
                let u = &self.u_vals[i][up * b2..(up + 1) * b2];
                for r in 0..b {
                    let mut s = T::zero();
                    for cc in 0..b {
                        s += u[r * b + cc] * y[c * b + cc];
                    }
                    tmp[r] -= s;
                }
            }
            let dinv = &self.diag_inv[i * b2..(i + 1) * b2];
            for r in 0..b {
                y[i * b + r] = (0..b).map(|c| dinv[r * b + c] * tmp[c]).sum();
            }
        }
        let mut x = vec![T::zero(); n * b];
        for i in 0..n {
            x[perm[i] * b..(perm[i] + 1) * b].copy_from_slice(&y[i * b..(i + 1) * b]);
        }
        x
    }
}

#[inline]
fn mul_block<T: Scalar>(a: &[T], bm: &[T], out: &mut [T], b: usize) {
    for r in 0..b {
        for c in 0..b {
            let mut s = T::zero();
            for p in 0..b {
                s += a[r * b + p] * bm[p * b + c];
            }
            out[r * b + c] = s;
        }
    }
}

#[inline]
fn sub_mul_block<T: Scalar>(a: &[T], bm: &[T], out: &mut [T], b: usize) {
    match b {
        1 => out[0] -= a[0] * bm[0],
        2 => sub_mul_fixed::<T, 2>(a, bm, out),
        3 => sub_mul_fixed::<T, 3>(a, bm, out),
        4 => sub_mul_fixed::<T, 4>(a, bm, out),
        _ => {
            for (arow, orow) in a.chunks_exact(b).zip(out.chunks_exact_mut(b)) {
                for (&arp, brow) in arow.iter().zip(bm.chunks_exact(b)) {
                    for (o, &v) in orow.iter_mut().zip(brow) {
                        *o -= arp * v;
                    }
                }
            }
        }
    }
}

#[inline(always)]
fn sub_mul_fixed<T: Scalar, const B: usize>(a: &[T], bm: &[T], out: &mut [T]) {
    let a: &[T] = &a[..B * B];
    let bm: &[T] = &bm[..B * B];
    let out: &mut [T] = &mut out[..B * B];
    for r in 0..B {
        for p in 0..B {
            let arp = a[r * B + p];
            for c in 0..B {
                out[r * B + c] -= arp * bm[p * B + c];
            }
        }
    }
}

/// Relative residual `||A x - b|| / ||b||` (absolute when `b = 0`).
pub fn relative_residual<T: Scalar>(a: &BlockSparseMatrix<T>, x: &[T], b: &[T]) -> T {
    let ax = a.matvec(x);
    let r: T = ax.iter().zip(b).map(|(&p, &q)| (p - q) * (p - q)).sum::<T>().sqrt();
    let nb: T = b.iter().map(|&v| v * v).sum::<T>().sqrt();
    if nb > T::zero() {
        r / nb
    } else {
        r
    }
}
