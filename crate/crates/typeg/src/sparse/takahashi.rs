//! Takahashi selected inverse: entries of A⁻¹ on the sparsity pattern of
//! the Cholesky factor, computed by the backward recursion
//!
//! ```text
//! Z_jj = (1/L_jj - Σ_{k>j} L_kj Z_kj) / L_jj
//! Z_ij = -(Σ_{k>j} L_kj Z_ki) / L_jj,   i > j,
//! ```
//!
//! processed right-to-left. Because the factor pattern is closed under
//! the fill rule (L_kj ≠ 0 and L_ij ≠ 0 with j < i < k implies L_ki ≠ 0),
//! every Z entry referenced above lies inside the pattern.
//!
//! This gives tr(A⁻¹ B) for any B whose pattern is contained in the
//! pattern of A, which covers the AᵀA and Kᵀdiag(v)⁻¹K trace terms in the
//! likelihood gradients.

use super::cholesky::CholeskyFactor;
use super::CscMatrix;

/// Entries of A⁻¹ on the (permuted) factor pattern, stored lower
/// triangular with the same layout as L.
#[derive(Debug)]
pub struct SelectedInverse<'a> {
    factor: &'a CholeskyFactor,
    /// Values aligned with the factor's (col_ptr, row_idx) layout.
    z: Vec<f64>,
}

impl<'a> SelectedInverse<'a> {
    /// Run the recursion.
    pub fn compute(factor: &'a CholeskyFactor) -> SelectedInverse<'a> {
        let l = factor.l();
        let n = factor.n();
        let colp = l.col_ptr.clone();
        let rows = &l.row_idx;
        let vals = &l.values;
        let mut z = vec![0.0f64; vals.len()];

        // Look up Z[max(i,k), min(i,k)] by binary search in the column.
        let z_get = |z: &[f64], a: usize, b: usize| -> f64 {
            let (i, j) = if a >= b { (a, b) } else { (b, a) };
            let lo = colp[j];
            let hi = colp[j + 1];
            match rows[lo..hi].binary_search(&i) {
                Ok(k) => z[lo + k],
                Err(_) => 0.0,
            }
        };

        for j in (0..n).rev() {
            let lo = colp[j];
            let hi = colp[j + 1];
            let ljj = vals[lo];
            // Off-diagonals, bottom-up.
            for idx in (lo + 1..hi).rev() {
                let i = rows[idx];
                let mut acc = 0.0;
                for kdx in lo + 1..hi {
                    let k = rows[kdx];
                    acc += vals[kdx] * z_get(&z, k, i);
                }
                z[idx] = -acc / ljj;
            }
            // Diagonal.
            let mut acc = 0.0;
            for kdx in lo + 1..hi {
                acc += vals[kdx] * z[kdx];
            }
            z[lo] = (1.0 / ljj - acc) / ljj;
        }

        SelectedInverse { factor, z }
    }

    /// A⁻¹ entry at original (unpermuted) indices; the position must lie
    /// inside the factor pattern (callers pass positions where A itself
    /// is structurally non-zero).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let sym = self.factor.symbolic();
        let mut i = sym.iperm()[r];
        let mut j = sym.iperm()[c];
        if i < j {
            std::mem::swap(&mut i, &mut j);
        }
        let l = self.factor.l();
        let lo = l.col_ptr[j];
        let hi = l.col_ptr[j + 1];
        match l.row_idx[lo..hi].binary_search(&i) {
            Ok(k) => self.z[lo + k],
            Err(_) => 0.0,
        }
    }

    /// tr(A⁻¹ B) for symmetric B with pattern inside A's pattern.
    pub fn trace_product(&self, b: &CscMatrix) -> f64 {
        let mut acc = 0.0;
        for (i, j, v) in b.iter() {
            if v != 0.0 {
                acc += v * self.get(i, j);
            }
        }
        acc
    }

    /// Diagonal of A⁻¹ in original ordering.
    pub fn diagonal(&self) -> Vec<f64> {
        let n = self.factor.n();
        (0..n).map(|i| self.get(i, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn banded_spd(rng: &mut ChaCha12Rng, n: usize) -> CscMatrix {
        let mut triplets = Vec::new();
        for i in 0..n {
            triplets.push((i, i, 5.0 + rng.gen::<f64>()));
            for w in 1..=2usize {
                if i + w < n {
                    let v = -0.8 * rng.gen::<f64>();
                    triplets.push((i, i + w, v));
                    triplets.push((i + w, i, v));
                }
            }
        }
        CscMatrix::from_triplets(n, n, &triplets)
    }

    #[test]
    fn selected_inverse_matches_dense_inverse() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let a = banded_spd(&mut rng, 35);
        let f = CholeskyFactor::new(&a).unwrap();
        let sel = SelectedInverse::compute(&f);
        let inv = a.to_dense().try_inverse().unwrap();
        // Check on the pattern of A (subset of the factor pattern).
        for (i, j, _) in a.iter() {
            assert_relative_eq!(sel.get(i, j), inv[(i, j)], max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn trace_product_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let a = banded_spd(&mut rng, 30);
        // B: symmetric, pattern = a subset of A's (scaled copy with some zeros).
        let b = a.scale_rows(&vec![0.5; 30]).add_scaled(&a.scale_rows(&vec![0.5; 30]).transpose(), 0.5, 0.5);
        let f = CholeskyFactor::new(&a).unwrap();
        let sel = SelectedInverse::compute(&f);
        let t = sel.trace_product(&b);
        let td = (a.to_dense().try_inverse().unwrap() * b.to_dense()).trace();
        assert_relative_eq!(t, td, max_relative = 1e-8);
    }

    #[test]
    fn diagonal_matches_dense() {
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        let a = banded_spd(&mut rng, 25);
        let f = CholeskyFactor::new(&a).unwrap();
        let sel = SelectedInverse::compute(&f);
        let inv = a.to_dense().try_inverse().unwrap();
        for (i, v) in sel.diagonal().iter().enumerate() {
            assert_relative_eq!(*v, inv[(i, i)], max_relative = 1e-8);
        }
    }
}
