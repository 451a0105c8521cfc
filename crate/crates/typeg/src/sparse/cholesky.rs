//! Simplicial sparse Cholesky: symbolic analysis (elimination tree and
//! column counts) reused across refactorisations with a fixed pattern,
//! and an up-looking numeric factorisation.

use super::{reverse_cuthill_mckee, CscMatrix};
use crate::error::{Error, Result};

/// Fill-reducing ordering choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    Natural,
    Rcm,
}

/// Symbolic factorisation of a symmetric positive definite pattern.
/// Holds the permutation, elimination tree, and the column pointers of
/// the factor; numeric factorisations with the same pattern reuse it.
#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// iperm[old] = new
    iperm: Vec<usize>,
    parent: Vec<i64>,
    l_colptr: Vec<usize>,
}

impl SymbolicCholesky {
    /// Analyze the pattern of a symmetric matrix (both triangles stored).
    pub fn analyze(a: &CscMatrix, ordering: Ordering) -> SymbolicCholesky {
        let n = a.nrows();
        assert_eq!(n, a.ncols());
        let perm = match ordering {
            Ordering::Natural => (0..n).collect::<Vec<_>>(),
            Ordering::Rcm => reverse_cuthill_mckee(a),
        };
        let mut iperm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            iperm[old] = new;
        }
        let b = a.permute_sym(&perm);

        // Elimination tree (Liu's algorithm with path compression).
        let mut parent = vec![-1i64; n];
        let mut ancestor = vec![-1i64; n];
        for k in 0..n {
            let (rows, _) = b.col(k);
            for &i in rows.iter().filter(|&&i| i < k) {
                let mut node = i as i64;
                while node != -1 && (node as usize) < k {
                    let next = ancestor[node as usize];
                    ancestor[node as usize] = k as i64;
                    if next == -1 {
                        parent[node as usize] = k as i64;
                        break;
                    }
                    node = next;
                }
            }
        }

        // Column counts of L via row subtree traversal (ereach per row).
        let mut counts = vec![1usize; n]; // diagonal
        let mut mark = vec![usize::MAX; n];
        for k in 0..n {
            mark[k] = k;
            let (rows, _) = b.col(k);
            for &i in rows.iter().filter(|&&i| i < k) {
                let mut j = i;
                while mark[j] != k {
                    mark[j] = k;
                    counts[j] += 1; // L[k,j] != 0
                    j = parent[j] as usize;
                }
            }
        }
        let mut l_colptr = vec![0usize; n + 1];
        for j in 0..n {
            l_colptr[j + 1] = l_colptr[j] + counts[j];
        }

        SymbolicCholesky { n, perm, iperm, parent, l_colptr }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Inverse permutation: iperm[old] = new.
    pub fn iperm(&self) -> &[usize] {
        &self.iperm
    }

    /// Numeric factorisation of `a` (same pattern as analysed, both
    /// triangles stored). Fails if the matrix is not positive definite.
    pub fn factor(&self, a: &CscMatrix) -> Result<CholeskyFactor> {
        let n = self.n;
        let b = a.permute_sym(&self.perm);
        let nnz = self.l_colptr[n];
        let mut l_rows = vec![0usize; nnz];
        let mut l_vals = vec![0.0f64; nnz];
        let mut next_slot: Vec<usize> = self.l_colptr[..n].to_vec();

        // Up-looking: compute row k of L from the sparse triangular solve
        // L[0..k,0..k] y = b[0..k, k].
        let mut x = vec![0.0f64; n];
        let mut mark = vec![usize::MAX; n];
        let mut pattern: Vec<usize> = Vec::with_capacity(n);
        for k in 0..n {
            // Row pattern: union of etree paths from the upper entries of col k.
            pattern.clear();
            let (rows, vals) = b.col(k);
            let mut diag = 0.0;
            mark[k] = k;
            for (&i, &v) in rows.iter().zip(vals) {
                if i > k {
                    continue;
                }
                if i == k {
                    diag = v;
                    continue;
                }
                x[i] = v;
                let mut j = i;
                while mark[j] != k {
                    mark[j] = k;
                    pattern.push(j);
                    j = self.parent[j] as usize;
                }
            }
            // Topological order: ascending column index works because the
            // etree parent always has a larger index.
            pattern.sort_unstable();

            let mut d = diag;
            for &j in &pattern {
                let xj = x[j];
                x[j] = 0.0;
                let ljj = l_vals[self.l_colptr[j]];
                let lkj = xj / ljj;
                // Subtract L[:,j] * lkj from the remaining pattern.
                let start = self.l_colptr[j] + 1;
                for idx in start..next_slot[j] {
                    let i = l_rows[idx];
                    x[i] -= l_vals[idx] * lkj;
                }
                d -= lkj * lkj;
                // Store L[k,j].
                let slot = next_slot[j];
                l_rows[slot] = k;
                l_vals[slot] = lkj;
                next_slot[j] += 1;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "Cholesky failed: non-positive pivot {d:.3e} at column {k}"
                )));
            }
            // Diagonal entry first in its column.
            let slot = self.l_colptr[k];
            l_rows[slot] = k;
            l_vals[slot] = d.sqrt();
            next_slot[k] = slot + 1;
        }

        Ok(CholeskyFactor {
            symbolic: self.clone(),
            l: CscMatrix {
                nrows: n,
                ncols: n,
                col_ptr: self.l_colptr.clone(),
                row_idx: l_rows,
                values: l_vals,
            },
        })
    }
}

/// Numeric Cholesky factor P A Pᵀ = L Lᵀ.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: SymbolicCholesky,
    l: CscMatrix,
}

impl CholeskyFactor {
    /// Convenience: analyse + factor in one call with RCM ordering.
    pub fn new(a: &CscMatrix) -> Result<CholeskyFactor> {
        SymbolicCholesky::analyze(a, Ordering::Rcm).factor(a)
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn l(&self) -> &CscMatrix {
        &self.l
    }

    pub fn symbolic(&self) -> &SymbolicCholesky {
        &self.symbolic
    }

    /// log det A = 2 Σ log L_jj.
    pub fn log_det(&self) -> f64 {
        let n = self.symbolic.n;
        let mut acc = 0.0;
        for j in 0..n {
            acc += self.l.values[self.l.col_ptr[j]].ln();
        }
        2.0 * acc
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.symbolic.n;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = b[self.symbolic.perm[i]];
        }
        self.solve_lower_in_place(&mut y);
        self.solve_upper_in_place(&mut y);
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.symbolic.perm[i]] = y[i];
        }
        x
    }

    /// L y = rhs (permuted coordinates).
    fn solve_lower_in_place(&self, y: &mut [f64]) {
        let n = self.symbolic.n;
        for j in 0..n {
            let start = self.l.col_ptr[j];
            let end = self.l.col_ptr[j + 1];
            let yj = y[j] / self.l.values[start];
            y[j] = yj;
            for idx in start + 1..end {
                y[self.l.row_idx[idx]] -= self.l.values[idx] * yj;
            }
        }
    }

    /// Lᵀ x = rhs (permuted coordinates).
    fn solve_upper_in_place(&self, y: &mut [f64]) {
        let n = self.symbolic.n;
        for j in (0..n).rev() {
            let start = self.l.col_ptr[j];
            let end = self.l.col_ptr[j + 1];
            let mut acc = y[j];
            for idx in start + 1..end {
                acc -= self.l.values[idx] * y[self.l.row_idx[idx]];
            }
            y[j] = acc / self.l.values[start];
        }
    }

    /// Draw x ~ N(mean, A⁻¹): x = mean + Pᵀ L⁻ᵀ z with z standard normal.
    pub fn sample_gaussian<R: rand::Rng + ?Sized>(&self, mean: &[f64], rng: &mut R) -> Vec<f64> {
        use rand_distr::StandardNormal;
        let n = self.symbolic.n;
        assert_eq!(mean.len(), n);
        let mut z: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        self.solve_upper_in_place(&mut z);
        let mut x = mean.to_vec();
        for i in 0..n {
            x[self.symbolic.perm[i]] += z[i];
        }
        x
    }

    /// Quadratic form xᵀ A⁻¹ x via one triangular solve.
    pub fn inv_quadratic_form(&self, x: &[f64]) -> f64 {
        let n = self.symbolic.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = x[self.symbolic.perm[i]];
        }
        self.solve_lower_in_place(&mut y);
        y.iter().map(|v| v * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_spd(rng: &mut ChaCha12Rng, n: usize) -> CscMatrix {
        // Sparse SPD: banded Laplacian-like plus random couplings.
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 4.0 + rng.gen::<f64>()));
            if i + 1 < n {
                let v = -1.0 + 0.3 * rng.gen::<f64>();
                triplets.push((i, i + 1, v));
                triplets.push((i + 1, i, v));
            }
        }
        for _ in 0..n {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i != j {
                let v = 0.2 * (rng.gen::<f64>() - 0.5);
                triplets.push((i, j, v));
                triplets.push((j, i, v));
            }
        }
        CscMatrix::from_triplets(n, n, &triplets)
    }

    #[test]
    fn factor_solve_logdet_match_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        for &ordering in &[Ordering::Natural, Ordering::Rcm] {
            let a = random_spd(&mut rng, 40);
            let sym = SymbolicCholesky::analyze(&a, ordering);
            let f = sym.factor(&a).unwrap();

            let ad = a.to_dense();
            let chol = ad.clone().cholesky().unwrap();
            let logdet_dense: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            assert_relative_eq!(f.log_det(), logdet_dense, max_relative = 1e-10);

            let b: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin()).collect();
            let x = f.solve(&b);
            let xd = chol.solve(&DMatrix::from_column_slice(40, 1, &b));
            for i in 0..40 {
                assert_relative_eq!(x[i], xd[(i, 0)], max_relative = 1e-9, epsilon = 1e-12);
            }

            let q = f.inv_quadratic_form(&b);
            let qd = (DMatrix::from_column_slice(40, 1, &b).transpose() * &xd)[(0, 0)];
            assert_relative_eq!(q, qd, max_relative = 1e-9);
        }
    }

    #[test]
    fn non_pd_matrix_is_rejected() {
        let a = CscMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)],
        );
        assert!(CholeskyFactor::new(&a).is_err());
    }

    #[test]
    fn gaussian_sampler_moments() {
        // Precision [[2,-1],[-1,2]] => covariance (1/3)[[2,1],[1,2]].
        let a = CscMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 2.0), (0, 1, -1.0), (1, 0, -1.0), (1, 1, 2.0)],
        );
        let f = CholeskyFactor::new(&a).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mean = vec![1.0, -2.0];
        let m = 200_000;
        let (mut s0, mut s1, mut s00, mut s01, mut s11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..m {
            let x = f.sample_gaussian(&mean, &mut rng);
            let (d0, d1) = (x[0] - 1.0, x[1] + 2.0);
            s0 += d0;
            s1 += d1;
            s00 += d0 * d0;
            s01 += d0 * d1;
            s11 += d1 * d1;
        }
        let mf = m as f64;
        assert!(s0.abs() / mf < 0.01 && s1.abs() / mf < 0.01);
        assert_relative_eq!(s00 / mf, 2.0 / 3.0, max_relative = 0.02);
        assert_relative_eq!(s01 / mf, 1.0 / 3.0, max_relative = 0.05);
        assert_relative_eq!(s11 / mf, 2.0 / 3.0, max_relative = 0.02);
    }
}
