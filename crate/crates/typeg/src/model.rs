//! Model parameters, the dependence-matrix parametrisation, and assembly
//! of the discretised operator matrix K with its parameter derivatives.
//!
//! The operator system couples p scalar Matérn operators L_k = c_k(κ_k² - Δ)^{α_k/2}
//! through an invertible p×p dependence matrix D(θ, ρ) = Q_p(θ)·D_l(ρ):
//! the triangular factor D_l controls cross-correlations, the rotation
//! Q_p leaves every covariance unchanged and only shapes higher moments
//! of non-Gaussian fields. Weights are ordered dimension-major:
//! w = (w₁₁…w_n1, …, w₁p…w_np), so (D ⊗ I_n) acts blockwise.

use crate::error::{Error, Result};
use crate::fem::FemMatrices;
use crate::sparse::CscMatrix;
use crate::special::ln_gamma;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Noise construction selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Gaussian driving noise (mixing variances fixed at their means).
    Gaussian,
    /// One global mixing scalar shared by all dimensions.
    G1,
    /// One mixing scalar per dimension.
    G2,
    /// A single mixing field shared by all dimensions.
    G3,
    /// Independent mixing fields per dimension.
    G4,
}

impl Variant {
    pub fn is_gaussian(self) -> bool {
        matches!(self, Variant::Gaussian)
    }

    /// Number of free η parameters.
    pub fn n_eta(self, p: usize) -> usize {
        match self {
            Variant::Gaussian => 0,
            Variant::G1 | Variant::G3 => 1,
            Variant::G2 | Variant::G4 => p,
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Variant::Gaussian => "gaussian",
            Variant::G1 => "g1",
            Variant::G2 => "g2",
            Variant::G3 => "g3",
            Variant::G4 => "g4",
        };
        write!(f, "{s}")
    }
}

/// All model parameters. The noise asymmetry uses γ_k = -μ_k throughout,
/// so γ is never stored, and mixing variables are scaled to unit mean.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Number of field dimensions.
    pub p: usize,
    /// Spatial dimension (1 or 2).
    pub d: usize,
    /// Inverse ranges κ_k > 0 (length p).
    pub kappa: Vec<f64>,
    /// Marginal standard deviations σ_k > 0 (length p).
    pub sigma: Vec<f64>,
    /// Operator exponents α_k ∈ {2, 4} (length p); ν_k = α_k - d/2.
    pub alpha: Vec<u32>,
    /// Noise asymmetries μ_k (length p; ignored for the Gaussian variant).
    pub mu: Vec<f64>,
    /// Mixing-variance shapes η > 0: one shared value for G1/G3, one per
    /// dimension for G2/G4, empty for Gaussian.
    pub eta: Vec<f64>,
    /// Measurement noise standard deviations σ_{e,k} > 0 (length p).
    pub sigma_e: Vec<f64>,
    /// Cross-correlation parameters, length p(p-1)/2, strictly-lower-row
    /// order ((2,1), (3,1), (3,2), ...). Unconstrained reals.
    pub rho: Vec<f64>,
    /// Rotation angles, length p(p-1)/2 for p ≤ 3 (empty for p = 1).
    pub theta: Vec<f64>,
    /// Regression coefficients (any length, may be empty).
    pub beta: Vec<f64>,
    /// Noise construction.
    pub variant: Variant,
}

impl ModelParams {
    /// Smoothness ν_k = α_k - d/2.
    pub fn nu(&self, k: usize) -> f64 {
        self.alpha[k] as f64 - self.d as f64 / 2.0
    }

    /// Shared η for the G1/G3 constructions.
    pub fn eta_shared(&self) -> f64 {
        self.eta[0]
    }

    pub fn n_rho(&self) -> usize {
        self.p * (self.p - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        if self.d != 1 && self.d != 2 {
            return Err(Error::InvalidParameter(format!("d must be 1 or 2, got {}", self.d)));
        }
        for (name, v) in
            [("kappa", &self.kappa), ("sigma", &self.sigma), ("sigma_e", &self.sigma_e), ("mu", &self.mu)]
        {
            if v.len() != self.p {
                return Err(Error::Dimension(format!(
                    "{name} has length {}, expected p = {}",
                    v.len(),
                    self.p
                )));
            }
        }
        if self.alpha.len() != self.p {
            return Err(Error::Dimension("alpha must have length p".into()));
        }
        for (name, v) in [("kappa", &self.kappa), ("sigma", &self.sigma)] {
            if v.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} entries must be positive")));
            }
        }
        // σ_e = 0 is allowed for noise-free simulation; inference requires
        // strictly positive measurement noise.
        if self.sigma_e.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("sigma_e entries must be non-negative".into()));
        }
        for &a in &self.alpha {
            if a != 2 && a != 4 {
                return Err(Error::Unsupported(format!(
                    "operator exponent alpha = {a}; only 2 and 4 are supported"
                )));
            }
        }
        let expected_eta = self.variant.n_eta(self.p);
        if self.eta.len() != expected_eta {
            return Err(Error::Dimension(format!(
                "eta has length {}, variant {} requires {}",
                self.eta.len(),
                self.variant,
                expected_eta
            )));
        }
        if self.eta.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("eta entries must be positive".into()));
        }
        if self.rho.len() != self.n_rho() {
            return Err(Error::Dimension(format!(
                "rho has length {}, expected p(p-1)/2 = {}",
                self.rho.len(),
                self.n_rho()
            )));
        }
        if self.theta.len() != self.n_rho() {
            return Err(Error::Dimension(format!(
                "theta has length {}, expected p(p-1)/2 = {}",
                self.theta.len(),
                self.n_rho()
            )));
        }
        if self.p > 3 && self.theta.iter().any(|&t| t != 0.0) {
            return Err(Error::Unsupported(
                "rotation parametrisation is only defined for p <= 3".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable parameters")
    }

    pub fn from_json(text: &str) -> Result<ModelParams> {
        let p: ModelParams =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("parameter JSON: {e}")))?;
        p.validate()?;
        Ok(p)
    }
}

/// Dependence matrix D and its inverse R.
#[derive(Debug, Clone)]
pub struct DependenceMatrix {
    pub d: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl DependenceMatrix {
    pub fn new(d: DMatrix<f64>) -> Result<DependenceMatrix> {
        let r = d
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("dependence matrix is singular".into()))?;
        Ok(DependenceMatrix { d, r })
    }

    /// Instantaneous correlation structure R Rᵀ = (DᵀD)⁻¹ (unit diagonal
    /// under the triangular parametrisation).
    pub fn correlations(&self) -> DMatrix<f64> {
        &self.r * self.r.transpose()
    }
}

/// Triangular factor D_l(ρ): the inverse of the unit-lower-triangular
/// matrix with the ρ entries, right-multiplied by
/// diag(1, k₂(ρ), …, k_p(ρ)) with k_j = √(1 + Σ_{i<j} ρ_{j,i}²).
///
/// The normalisation gives R Rᵀ unit diagonal for every ρ ∈ ℝ^{p(p-1)/2},
/// so ρ is unconstrained; the implied correlation of dimensions i and j
/// is (R Rᵀ)_{ij} (for p = 2, ρ/√(1+ρ²)).
pub fn build_dl(rho: &[f64], p: usize) -> Result<DMatrix<f64>> {
    if rho.len() != p * (p - 1) / 2 {
        return Err(Error::Dimension(format!(
            "rho has length {}, expected {}",
            rho.len(),
            p * (p - 1) / 2
        )));
    }
    let t = unit_lower(rho, p);
    let k = row_norms(rho, p);
    let t_inv = t.try_inverse().expect("unit lower triangular is invertible");
    Ok(t_inv * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(k)))
}

/// Derivative of D_l with respect to ρ entry `m`.
pub fn build_dl_derivative(rho: &[f64], p: usize, m: usize) -> DMatrix<f64> {
    let t = unit_lower(rho, p);
    let t_inv = t.try_inverse().expect("unit lower triangular is invertible");
    let k = row_norms(rho, p);
    let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(k.clone()));

    let (row, col) = rho_position(p, m);
    // dT/dρ_m has a single unit entry.
    let mut dt = DMatrix::zeros(p, p);
    dt[(row, col)] = 1.0;
    // dΛ/dρ_m affects only k_row.
    let mut dlam = DMatrix::zeros(p, p);
    dlam[(row, row)] = rho[m] / k[row];

    let first = &t_inv * dt * &t_inv * lam;
    let second = &t_inv * dlam;
    second - first
}

fn unit_lower(rho: &[f64], p: usize) -> DMatrix<f64> {
    let mut t = DMatrix::identity(p, p);
    let mut m = 0;
    for j in 1..p {
        for i in 0..j {
            t[(j, i)] = rho[m];
            m += 1;
        }
    }
    t
}

fn row_norms(rho: &[f64], p: usize) -> Vec<f64> {
    let mut k = vec![1.0; p];
    let mut m = 0;
    for j in 1..p {
        let mut s = 1.0;
        for _ in 0..j {
            s += rho[m] * rho[m];
            m += 1;
        }
        k[j] = s.sqrt();
    }
    k
}

/// (row, col) of the m-th ρ entry in strictly-lower-row order.
fn rho_position(p: usize, m: usize) -> (usize, usize) {
    let mut idx = 0;
    for j in 1..p {
        for i in 0..j {
            if idx == m {
                return (j, i);
            }
            idx += 1;
        }
    }
    panic!("rho index {m} out of range for p = {p}");
}

/// Map target instantaneous correlations to ρ parameters: the inverse of
/// `DependenceMatrix::correlations` under θ = 0. `corr` is a symmetric
/// positive-definite correlation matrix with unit diagonal.
pub fn rho_from_correlations(corr: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = corr.nrows();
    let chol = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("correlation matrix not positive definite".into()))?;
    let l = chol.l();
    // Rows of R = Λ⁻¹T have unit norm; match T entries = L_{ji}/L_{jj}.
    let mut rho = Vec::with_capacity(p * (p - 1) / 2);
    for j in 1..p {
        for i in 0..j {
            rho.push(l[(j, i)] / l[(j, j)]);
        }
    }
    Ok(rho)
}

/// Rotation factor Q_p(θ): the identity for p = 1, a planar rotation for
/// p = 2, and the composition Q_3x(θ₁)Q_3y(θ₂)Q_3z(θ₃) for p = 3.
/// Orthogonality is asserted at construction.
pub fn build_q(theta: &[f64], p: usize) -> Result<DMatrix<f64>> {
    let q = match p {
        1 => DMatrix::identity(1, 1),
        2 => {
            check_theta_len(theta, 1)?;
            rot2(theta[0])
        }
        3 => {
            check_theta_len(theta, 3)?;
            q3x(theta[0]) * q3y(theta[1]) * q3z(theta[2])
        }
        _ => {
            if theta.iter().any(|&t| t != 0.0) {
                return Err(Error::Unsupported(
                    "rotation parametrisation is only defined for p <= 3".into(),
                ));
            }
            DMatrix::identity(p, p)
        }
    };
    debug_assert!((&q.transpose() * &q - DMatrix::identity(p, p)).norm() < 1e-12);
    Ok(q)
}

/// Derivative of Q_p with respect to θ entry `i`.
pub fn build_q_derivative(theta: &[f64], p: usize, i: usize) -> Result<DMatrix<f64>> {
    match p {
        2 => {
            check_theta_len(theta, 1)?;
            Ok(rot2_deriv(theta[0]))
        }
        3 => {
            check_theta_len(theta, 3)?;
            Ok(match i {
                0 => q3x_deriv(theta[0]) * q3y(theta[1]) * q3z(theta[2]),
                1 => q3x(theta[0]) * q3y_deriv(theta[1]) * q3z(theta[2]),
                2 => q3x(theta[0]) * q3y(theta[1]) * q3z_deriv(theta[2]),
                _ => return Err(Error::InvalidParameter(format!("theta index {i} out of range"))),
            })
        }
        _ => Err(Error::Unsupported(format!("no rotation derivative for p = {p}"))),
    }
}

fn check_theta_len(theta: &[f64], expected: usize) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::Dimension(format!(
            "theta has length {}, expected {expected}",
            theta.len()
        )));
    }
    Ok(())
}

fn rot2(t: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[t.cos(), -t.sin(), t.sin(), t.cos()])
}

fn rot2_deriv(t: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-t.sin(), -t.cos(), t.cos(), -t.sin()])
}

fn q3x(t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(3, 3);
    m.view_mut((0, 0), (2, 2)).copy_from(&rot2(t));
    m
}

fn q3x_deriv(t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m.view_mut((0, 0), (2, 2)).copy_from(&rot2_deriv(t));
    m
}

fn q3z(t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(3, 3);
    m.view_mut((1, 1), (2, 2)).copy_from(&rot2(t));
    m
}

fn q3z_deriv(t: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m.view_mut((1, 1), (2, 2)).copy_from(&rot2_deriv(t));
    m
}

fn q3y(t: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[t.cos(), 0.0, -t.sin(), 0.0, 1.0, 0.0, t.sin(), 0.0, t.cos()],
    )
}

fn q3y_deriv(t: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(
        3,
        3,
        &[-t.sin(), 0.0, -t.cos(), 0.0, 0.0, 0.0, t.cos(), 0.0, -t.sin()],
    )
}

/// D(θ, ρ) = Q_p(θ) · D_l(ρ) and its inverse.
pub fn dependence_matrix(params: &ModelParams) -> Result<DependenceMatrix> {
    let dl = build_dl(&params.rho, params.p)?;
    let q = build_q(&params.theta, params.p)?;
    DependenceMatrix::new(q * dl)
}

/// The unique upper-triangular matrix D̂ with positive diagonal satisfying
/// D̂ᵀD̂ = DᵀD: the covariance-equivalent canonical form of D.
pub fn cholesky_canonical(d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let gram = d.transpose() * d;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Numerical("singular dependence matrix".into()))?;
    Ok(chol.l().transpose())
}

/// Operator scaling constant
/// c_k = √(σ_k⁻² (4π)^{-d/2} κ_k^{-2ν_k} Γ(ν_k)/Γ(α_k)),
/// which normalises the stationary variance of dimension k to σ_k².
pub fn scaling_constant(sigma: f64, kappa: f64, alpha: u32, d: usize) -> Result<f64> {
    let nu = alpha as f64 - d as f64 / 2.0;
    if !(nu > 0.0) {
        return Err(Error::InvalidParameter(format!("nu = alpha - d/2 = {nu} must be positive")));
    }
    if !(sigma > 0.0 && kappa > 0.0) {
        return Err(Error::InvalidParameter("sigma and kappa must be positive".into()));
    }
    let log_c2 = -2.0 * sigma.ln()
        - (d as f64 / 2.0) * (4.0 * std::f64::consts::PI).ln()
        - 2.0 * nu * kappa.ln()
        + ln_gamma(nu)
        - ln_gamma(alpha as f64);
    Ok((0.5 * log_c2).exp())
}

/// Assembled operator system: K = (D ⊗ I_n) blockdiag(L_1, …, L_p), the
/// scaled blocks L_k, and log |det K|.
#[derive(Debug, Clone)]
pub struct Operator {
    pub k: CscMatrix,
    pub l_blocks: Vec<CscMatrix>,
    pub dep: DependenceMatrix,
    pub logdet_k: f64,
    pub n: usize,
    pub p: usize,
}

/// Scaled operator block L_k = c_k (G + κ² C) for α = 2 and
/// c_k (G + κ²C) C⁻¹ (G + κ²C) for α = 4.
fn operator_block(params: &ModelParams, fem: &FemMatrices, k: usize) -> Result<CscMatrix> {
    let kappa2 = params.kappa[k] * params.kappa[k];
    let c_k = scaling_constant(params.sigma[k], params.kappa[k], params.alpha[k], params.d)?;
    let c_diag = CscMatrix::from_diag(&fem.c);
    let base = fem.g.add_scaled(&c_diag, 1.0, kappa2);
    match params.alpha[k] {
        2 => Ok(base.scale_values(c_k)),
        4 => {
            let inv_c: Vec<f64> = fem.c.iter().map(|&x| 1.0 / x).collect();
            Ok(base.matmul(&base.scale_rows(&inv_c)).scale_values(c_k))
        }
        a => Err(Error::Unsupported(format!("alpha = {a} not supported"))),
    }
}

/// log det of the SPD block L_k.
fn operator_block_logdet(params: &ModelParams, fem: &FemMatrices, k: usize) -> Result<f64> {
    let n = fem.n() as f64;
    let kappa2 = params.kappa[k] * params.kappa[k];
    let c_k = scaling_constant(params.sigma[k], params.kappa[k], params.alpha[k], params.d)?;
    let c_diag = CscMatrix::from_diag(&fem.c);
    let base = fem.g.add_scaled(&c_diag, 1.0, kappa2);
    let chol = crate::sparse::CholeskyFactor::new(&base)
        .map_err(|_| Error::Numerical("operator block not positive definite".into()))?;
    let logdet_base = chol.log_det();
    let logdet_c: f64 = fem.c.iter().map(|&x| x.ln()).sum();
    Ok(match params.alpha[k] {
        2 => n * c_k.ln() + logdet_base,
        4 => n * c_k.ln() + 2.0 * logdet_base - logdet_c,
        _ => unreachable!("validated alpha"),
    })
}

/// Assemble K and the per-block operators.
pub fn build_operator(params: &ModelParams, fem: &FemMatrices) -> Result<Operator> {
    params.validate()?;
    let n = fem.n();
    let p = params.p;
    let dep = dependence_matrix(params)?;
    let l_blocks: Vec<CscMatrix> =
        (0..p).map(|k| operator_block(params, fem, k)).collect::<Result<_>>()?;

    let k_mat = kron_block(&dep.d, &l_blocks, n);
    let logdet_blocks: f64 =
        (0..p).map(|k| operator_block_logdet(params, fem, k)).sum::<Result<f64>>()?;
    let logdet_d = dep
        .d
        .determinant()
        .abs()
        .ln();
    let logdet_k = n as f64 * logdet_d + logdet_blocks;

    Ok(Operator { k: k_mat, l_blocks, dep, logdet_k, n, p })
}

/// (M ⊗ I_n) · blockdiag(B_1, …, B_p): block (i, j) = M_ij B_j.
fn kron_block(m: &DMatrix<f64>, blocks: &[CscMatrix], n: usize) -> CscMatrix {
    let p = blocks.len();
    let mut triplets = Vec::new();
    for bi in 0..p {
        for bj in 0..p {
            let w = m[(bi, bj)];
            if w == 0.0 {
                continue;
            }
            for (r, c, v) in blocks[bj].iter() {
                triplets.push((bi * n + r, bj * n + c, w * v));
            }
        }
    }
    CscMatrix::from_triplets(p * n, p * n, &triplets)
}

/// Identifier of a single scalar parameter of the operator matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorParam {
    /// θ entry index.
    Theta(usize),
    /// ρ entry index.
    Rho(usize),
    /// σ_j.
    Sigma(usize),
    /// κ_j.
    Kappa(usize),
}

/// Derivative K_ψ = ∂K/∂ψ for an operator parameter ψ.
///
/// Rotation and correlation parameters differentiate the dependence
/// matrix; σ_j rescales block j by -1/σ_j; κ_j differentiates both the
/// scaling constant (-ν_j/κ_j) and the operator polynomial
/// (α_j κ_j c_j C (C⁻¹G + κ_j²I)^{α_j/2 - 1}).
pub fn k_derivative(
    params: &ModelParams,
    fem: &FemMatrices,
    op: &Operator,
    which: OperatorParam,
) -> Result<CscMatrix> {
    let n = fem.n();
    let p = params.p;
    match which {
        OperatorParam::Theta(i) => {
            if i >= params.theta.len() {
                return Err(Error::InvalidParameter(format!("theta index {i} out of range")));
            }
            let dq = build_q_derivative(&params.theta, p, i)?;
            let dl = build_dl(&params.rho, p)?;
            Ok(kron_block(&(dq * dl), &op.l_blocks, n))
        }
        OperatorParam::Rho(m) => {
            if m >= params.rho.len() {
                return Err(Error::InvalidParameter(format!("rho index {m} out of range")));
            }
            let q = build_q(&params.theta, p)?;
            let ddl = build_dl_derivative(&params.rho, p, m);
            Ok(kron_block(&(q * ddl), &op.l_blocks, n))
        }
        OperatorParam::Sigma(j) => {
            if j >= p {
                return Err(Error::InvalidParameter(format!("sigma index {j} out of range")));
            }
            let mut blocks: Vec<CscMatrix> =
                (0..p).map(|_| CscMatrix::from_triplets(n, n, &[])).collect();
            blocks[j] = op.l_blocks[j].scale_values(-1.0 / params.sigma[j]);
            Ok(kron_block(&op.dep.d, &blocks, n))
        }
        OperatorParam::Kappa(j) => {
            if j >= p {
                return Err(Error::InvalidParameter(format!("kappa index {j} out of range")));
            }
            let kappa = params.kappa[j];
            let nu = params.nu(j);
            let c_j = scaling_constant(params.sigma[j], kappa, params.alpha[j], params.d)?;
            let alpha = params.alpha[j];
            // dL_j/dκ = α κ c_j C (C⁻¹G + κ²I)^{α/2-1} - (ν/κ) L_j.
            let poly = match alpha {
                2 => CscMatrix::from_diag(&fem.c),
                4 => {
                    let c_diag = CscMatrix::from_diag(&fem.c);
                    fem.g.add_scaled(&c_diag, 1.0, kappa * kappa)
                }
                _ => unreachable!("validated alpha"),
            };
            let dl_block = poly
                .scale_values(alpha as f64 * kappa * c_j)
                .add_scaled(&op.l_blocks[j], 1.0, -nu / kappa);
            let mut blocks: Vec<CscMatrix> =
                (0..p).map(|_| CscMatrix::from_triplets(n, n, &[])).collect();
            blocks[j] = dl_block;
            Ok(kron_block(&op.dep.d, &blocks, n))
        }
    }
}

/// Derivative of D with respect to a θ or ρ entry (used by tests and by
/// the gradient machinery through [`k_derivative`]).
pub fn dependence_derivative(params: &ModelParams, which: OperatorParam) -> Result<DMatrix<f64>> {
    match which {
        OperatorParam::Theta(i) => {
            let dq = build_q_derivative(&params.theta, params.p, i)?;
            Ok(dq * build_dl(&params.rho, params.p)?)
        }
        OperatorParam::Rho(m) => {
            let q = build_q(&params.theta, params.p)?;
            Ok(q * build_dl_derivative(&params.rho, params.p, m))
        }
        _ => Err(Error::InvalidParameter("not a dependence-matrix parameter".into())),
    }
}
