//! Piecewise-linear finite element matrices: stiffness G, diagonal mass
//! C, dual-cell areas h, and the barycentric observation matrix A.
//!
//! The diagonal mass matrix defaults to row-sum lumping C_ii = ⟨φ_i, 1⟩,
//! which makes C equal to the dual-cell areas h and keeps the weight and
//! noise discretisations consistent. The alternative ⟨φ_i, φ_i⟩ diagonal
//! is available behind [`MassLumping::ConsistentDiagonal`]; outputs record
//! which one was used.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::CscMatrix;
use serde::{Deserialize, Serialize};

/// Choice of diagonal mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MassLumping {
    /// Row-sum lumping C_ii = ⟨φ_i, 1⟩ (default; C = h).
    #[default]
    RowSum,
    /// Diagonal of the consistent mass matrix, C_ii = ⟨φ_i, φ_i⟩.
    ConsistentDiagonal,
}

/// Assembled finite element matrices for a mesh.
#[derive(Debug, Clone)]
pub struct FemMatrices {
    /// Diagonal mass matrix entries (length n).
    pub c: Vec<f64>,
    /// Stiffness matrix G_ij = ⟨∇φ_i, ∇φ_j⟩ (symmetric, row sums 0).
    pub g: CscMatrix,
    /// Dual-cell areas h_i > 0 with Σ h_i = |domain|.
    pub h: Vec<f64>,
    /// Mass matrix convention used.
    pub lumping: MassLumping,
}

impl FemMatrices {
    pub fn n(&self) -> usize {
        self.c.len()
    }
}

/// Assemble G, C, and h with the default row-sum lumping.
pub fn assemble_fem(mesh: &Mesh) -> FemMatrices {
    assemble_fem_with(mesh, MassLumping::RowSum)
}

/// Assemble with an explicit mass-lumping choice.
pub fn assemble_fem_with(mesh: &Mesh, lumping: MassLumping) -> FemMatrices {
    let n = mesh.n_nodes();
    let mut c = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();

    match mesh.dim() {
        1 => {
            for el in mesh.element_iter() {
                let (i, j) = (el[0], el[1]);
                let len = (mesh.node(j)[0] - mesh.node(i)[0]).abs();
                let k = 1.0 / len;
                triplets.push((i, i, k));
                triplets.push((j, j, k));
                triplets.push((i, j, -k));
                triplets.push((j, i, -k));
                h[i] += 0.5 * len;
                h[j] += 0.5 * len;
                let cm = match lumping {
                    MassLumping::RowSum => 0.5 * len,
                    MassLumping::ConsistentDiagonal => len / 3.0,
                };
                c[i] += cm;
                c[j] += cm;
            }
        }
        2 => {
            for el in mesh.element_iter() {
                let p: Vec<&[f64]> = el.iter().map(|&i| mesh.node(i)).collect();
                let area = 0.5
                    * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                        - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
                        .abs();
                // Edge opposite vertex i (cyclic): e_i = p_{i+2} - p_{i+1}.
                let e: Vec<[f64; 2]> = (0..3)
                    .map(|i| {
                        let a = p[(i + 2) % 3];
                        let b = p[(i + 1) % 3];
                        [a[0] - b[0], a[1] - b[1]]
                    })
                    .collect();
                for a in 0..3 {
                    for b in 0..3 {
                        let dot = e[a][0] * e[b][0] + e[a][1] * e[b][1];
                        triplets.push((el[a], el[b], dot / (4.0 * area)));
                    }
                    h[el[a]] += area / 3.0;
                    c[el[a]] += match lumping {
                        MassLumping::RowSum => area / 3.0,
                        MassLumping::ConsistentDiagonal => area / 6.0,
                    };
                }
            }
        }
        _ => unreachable!(),
    }

    FemMatrices { c, g: CscMatrix::from_triplets(n, n, &triplets), h, lumping }
}

/// Observation matrix A with A_ij = φ_j(s_i): one row per location, at
/// most d+1 non-zeros per row (barycentric weights summing to 1).
pub fn observation_matrix(mesh: &Mesh, locations: &[Vec<f64>]) -> Result<CscMatrix> {
    let mut triplets = Vec::new();
    for (row, loc) in locations.iter().enumerate() {
        if loc.len() != mesh.dim() {
            return Err(Error::Dimension(format!(
                "location {row} has {} coordinates, mesh dimension is {}",
                loc.len(),
                mesh.dim()
            )));
        }
        let weights = barycentric_weights(mesh, loc)?;
        for (node, w) in weights {
            if w != 0.0 {
                triplets.push((row, node, w));
            }
        }
    }
    Ok(CscMatrix::from_triplets(locations.len(), mesh.n_nodes(), &triplets))
}

/// Basis weights of a point: the element containing it and the barycentric
/// coordinates with respect to its vertices.
pub fn barycentric_weights(mesh: &Mesh, loc: &[f64]) -> Result<Vec<(usize, f64)>> {
    let tol = 1e-10;
    match mesh.dim() {
        1 => {
            let x = loc[0];
            for el in mesh.element_iter() {
                let (a, b) = (mesh.node(el[0])[0], mesh.node(el[1])[0]);
                let (lo, hi) = (a.min(b), a.max(b));
                let span = hi - lo;
                if x >= lo - tol * span && x <= hi + tol * span {
                    let t = ((x - a) / (b - a)).clamp(0.0, 1.0);
                    return Ok(vec![(el[0], 1.0 - t), (el[1], t)]);
                }
            }
            Err(Error::OutsideMesh(loc.to_vec()))
        }
        2 => {
            for el in mesh.element_iter() {
                let p: Vec<&[f64]> = el.iter().map(|&i| mesh.node(i)).collect();
                let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                let l1 = ((p[2][1] - p[0][1]) * (loc[0] - p[0][0])
                    - (p[2][0] - p[0][0]) * (loc[1] - p[0][1]))
                    / det;
                let l2 = (-(p[1][1] - p[0][1]) * (loc[0] - p[0][0])
                    + (p[1][0] - p[0][0]) * (loc[1] - p[0][1]))
                    / det;
                let l0 = 1.0 - l1 - l2;
                if l0 >= -tol && l1 >= -tol && l2 >= -tol {
                    let mut w = [l0.max(0.0), l1.max(0.0), l2.max(0.0)];
                    let s: f64 = w.iter().sum();
                    for wi in w.iter_mut() {
                        *wi /= s;
                    }
                    return Ok(vec![(el[0], w[0]), (el[1], w[1]), (el[2], w[2])]);
                }
            }
            Err(Error::OutsideMesh(loc.to_vec()))
        }
        _ => unreachable!(),
    }
}
