//! Minimal sparse linear algebra: CSC matrices, a simplicial Cholesky
//! factorisation with reverse Cuthill-McKee ordering, and the Takahashi
//! selected inverse used for the trace terms of the likelihood gradients.
//!
//! The precision matrices handled here are desk-scale (10²-10⁴ unknowns);
//! a simplicial up-looking factorisation with a bandwidth-reducing
//! ordering is entirely adequate and keeps the factor internals available
//! to the selected-inverse recursion.

mod cholesky;
mod rcm;
mod takahashi;

pub use cholesky::{CholeskyFactor, Ordering, SymbolicCholesky};
pub use rcm::reverse_cuthill_mckee;
pub use takahashi::SelectedInverse;

use crate::error::{Error, Result};

/// Sparse matrix in compressed sparse column format. Row indices are
/// sorted and unique within every column.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Build from triplets, summing duplicates.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); ncols];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) out of bounds");
            by_col[j].push((i, v));
        }
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for col in by_col.iter_mut() {
            col.sort_unstable_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for &(i, v) in col.iter() {
                if last == Some(i) {
                    *values.last_mut().unwrap() += v;
                } else {
                    row_idx.push(i);
                    values.push(v);
                    last = Some(i);
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix { nrows, ncols, col_ptr, row_idx, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diag(&vec![1.0; n])
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let n = d.len();
        CscMatrix {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: d.to_vec(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Column slice as (rows, values).
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[r.clone()], &self.values[r])
    }

    /// Entry lookup by binary search.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (rows, vals) = self.col(j);
        match rows.binary_search(&i) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Row extraction by full scan (convenience; not for hot paths).
    pub fn row(&self, i: usize) -> (Vec<usize>, Vec<f64>) {
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for j in 0..self.ncols {
            let v = self.get(i, j);
            if v != 0.0 {
                cols.push(j);
                vals.push(v);
            }
        }
        (cols, vals)
    }

    /// Iterate over entries as (row, col, value).
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals.iter()).map(move |(&i, &v)| (i, j, v))
        })
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                y[i] += v * xj;
            }
        }
        y
    }

    /// y = Aᵀ x.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            let mut acc = 0.0;
            for (&i, &v) in rows.iter().zip(vals) {
                acc += v * x[i];
            }
            y[j] = acc;
        }
        y
    }

    pub fn transpose(&self) -> CscMatrix {
        let mut counts = vec![0usize; self.nrows + 1];
        for &i in &self.row_idx {
            counts[i + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for j in 0..self.ncols {
            let (rows, vals) = self.col(j);
            for (&i, &v) in rows.iter().zip(vals) {
                let slot = next[i];
                row_idx[slot] = j;
                values[slot] = v;
                next[i] += 1;
            }
        }
        CscMatrix { nrows: self.ncols, ncols: self.nrows, col_ptr, row_idx, values }
    }

    /// C = self · other.
    pub fn matmul(&self, other: &CscMatrix) -> CscMatrix {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let nrows = self.nrows;
        let ncols = other.ncols;
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        let mut mark = vec![usize::MAX; nrows];
        let mut dense = vec![0.0; nrows];
        let mut pattern: Vec<usize> = Vec::new();
        for j in 0..ncols {
            pattern.clear();
            let (brows, bvals) = other.col(j);
            for (&k, &bkj) in brows.iter().zip(bvals) {
                let (arows, avals) = self.col(k);
                for (&i, &aik) in arows.iter().zip(avals) {
                    if mark[i] != j {
                        mark[i] = j;
                        dense[i] = 0.0;
                        pattern.push(i);
                    }
                    dense[i] += aik * bkj;
                }
            }
            pattern.sort_unstable();
            for &i in &pattern {
                row_idx.push(i);
                values.push(dense[i]);
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix { nrows, ncols, col_ptr, row_idx, values }
    }

    /// C = alpha·self + beta·other.
    pub fn add_scaled(&self, other: &CscMatrix, alpha: f64, beta: f64) -> CscMatrix {
        assert_eq!(self.nrows, other.nrows);
        assert_eq!(self.ncols, other.ncols);
        let mut col_ptr = Vec::with_capacity(self.ncols + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..self.ncols {
            let (ra, va) = self.col(j);
            let (rb, vb) = other.col(j);
            let (mut ia, mut ib) = (0, 0);
            while ia < ra.len() || ib < rb.len() {
                let next_a = ra.get(ia).copied().unwrap_or(usize::MAX);
                let next_b = rb.get(ib).copied().unwrap_or(usize::MAX);
                if next_a < next_b {
                    row_idx.push(next_a);
                    values.push(alpha * va[ia]);
                    ia += 1;
                } else if next_b < next_a {
                    row_idx.push(next_b);
                    values.push(beta * vb[ib]);
                    ib += 1;
                } else {
                    row_idx.push(next_a);
                    values.push(alpha * va[ia] + beta * vb[ib]);
                    ia += 1;
                    ib += 1;
                }
            }
            col_ptr.push(row_idx.len());
        }
        CscMatrix { nrows: self.nrows, ncols: self.ncols, col_ptr, row_idx, values }
    }

    /// alpha · A.
    pub fn scale_values(&self, alpha: f64) -> CscMatrix {
        let mut out = self.clone();
        for v in out.values.iter_mut() {
            *v *= alpha;
        }
        out
    }

    /// diag(s) · A.
    pub fn scale_rows(&self, s: &[f64]) -> CscMatrix {
        assert_eq!(s.len(), self.nrows);
        let mut out = self.clone();
        for k in 0..out.values.len() {
            out.values[k] *= s[out.row_idx[k]];
        }
        out
    }

    /// Symmetric permutation B[i,j] = A[perm[i], perm[j]] (perm maps new
    /// index to old index).
    pub fn permute_sym(&self, perm: &[usize]) -> CscMatrix {
        assert_eq!(self.nrows, self.ncols);
        let n = self.nrows;
        assert_eq!(perm.len(), n);
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let triplets: Vec<(usize, usize, f64)> =
            self.iter().map(|(i, j, v)| (iperm[i], iperm[j], v)).collect();
        CscMatrix::from_triplets(n, n, &triplets)
    }

    /// Dense copy (tests and p×p blocks only).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    pub fn from_dense(m: &nalgebra::DMatrix<f64>, drop_tol: f64) -> CscMatrix {
        let mut triplets = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)].abs() > drop_tol {
                    triplets.push((i, j, m[(i, j)]));
                }
            }
        }
        CscMatrix::from_triplets(m.nrows(), m.ncols(), &triplets)
    }

    /// Frobenius-type check used by the derivative tests.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &v| a.max(v.abs()))
    }

    /// tr(self · other) for matrices with matching dimensions.
    pub fn trace_product(&self, other: &CscMatrix) -> f64 {
        assert_eq!(self.nrows, other.ncols);
        assert_eq!(self.ncols, other.nrows);
        let mut acc = 0.0;
        for (i, j, v) in self.iter() {
            if v != 0.0 {
                acc += v * other.get(j, i);
            }
        }
        acc
    }

    /// Validation used after untrusted construction paths.
    pub fn check_symmetric(&self, tol: f64) -> Result<()> {
        if self.nrows != self.ncols {
            return Err(Error::Dimension("matrix not square".into()));
        }
        for (i, j, v) in self.iter() {
            let vt = self.get(j, i);
            if (v - vt).abs() > tol * (1.0 + v.abs()) {
                return Err(Error::Numerical(format!(
                    "matrix not symmetric at ({i},{j}): {v} vs {vt}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_sparse(rng: &mut ChaCha12Rng, n: usize, m: usize, density: f64) -> CscMatrix {
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.gen::<f64>() < density {
                    triplets.push((i, j, rng.gen::<f64>() - 0.5));
                }
            }
        }
        CscMatrix::from_triplets(n, m, &triplets)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.5), (1, 0, -1.0)]);
        assert_eq!(a.get(0, 0), 3.5);
        assert_eq!(a.get(1, 0), -1.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn matmul_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let a = random_sparse(&mut rng, 13, 9, 0.3);
        let b = random_sparse(&mut rng, 9, 11, 0.4);
        let c = a.matmul(&b);
        let dense = a.to_dense() * b.to_dense();
        assert_relative_eq!(c.to_dense(), dense, epsilon = 1e-12);
    }

    #[test]
    fn add_transpose_matvec_match_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let a = random_sparse(&mut rng, 10, 10, 0.3);
        let b = random_sparse(&mut rng, 10, 10, 0.3);
        let s = a.add_scaled(&b, 2.0, -0.5);
        assert_relative_eq!(s.to_dense(), a.to_dense() * 2.0 - b.to_dense() * 0.5, epsilon = 1e-12);
        assert_relative_eq!(a.transpose().to_dense(), a.to_dense().transpose(), epsilon = 1e-14);

        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3 - 1.0).collect();
        let y = a.matvec(&x);
        let yd = a.to_dense() * DMatrix::from_column_slice(10, 1, &x);
        for i in 0..10 {
            assert_relative_eq!(y[i], yd[(i, 0)], epsilon = 1e-12);
        }
        let z = a.tr_matvec(&x);
        let zd = a.to_dense().transpose() * DMatrix::from_column_slice(10, 1, &x);
        for i in 0..10 {
            assert_relative_eq!(z[i], zd[(i, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn symmetric_permutation_round_trip() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let a0 = random_sparse(&mut rng, 8, 8, 0.4);
        let a = a0.add_scaled(&a0.transpose(), 1.0, 1.0);
        let perm: Vec<usize> = vec![3, 1, 7, 0, 5, 2, 6, 4];
        let b = a.permute_sym(&perm);
        for i in 0..8 {
            for j in 0..8 {
                assert_relative_eq!(b.get(i, j), a.get(perm[i], perm[j]), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn trace_product_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let a = random_sparse(&mut rng, 9, 9, 0.4);
        let b = random_sparse(&mut rng, 9, 9, 0.4);
        let t = a.trace_product(&b);
        let td = (a.to_dense() * b.to_dense()).trace();
        assert_relative_eq!(t, td, epsilon = 1e-12);
    }
}
