//! Discretised mixing-variance vectors and driving-noise increments for
//! the four type-G constructions with inverse-Gaussian mixing.
//!
//! Per dual cell i and dimension k the variance component is
//!
//! ```text
//! v_i^k = h_i·v          (G1, one global scalar v ~ IG(η², η²))
//! v_i^k = h_i·v_k        (G2, per-dimension scalars v_k ~ IG(η_k², η_k²))
//! v_i^k = V_i            (G3, shared field V_i ~ IG(η², η²h_i²))
//! v_i^k ~ IG(η_k², η_k²h_i²)   (G4, independent fields)
//! ```
//!
//! The IG family is closed under convolution, which is what makes the
//! cell aggregates in G3/G4 exactly IG. All mixing laws have mean h_i,
//! and the noise increment γ_k h_i + μ_k v_i^k + √(v_i^k)·z with
//! γ_k = -μ_k therefore has mean zero.

use crate::dists::{ig_logpdf, ig_sample};
use crate::error::{Error, Result};
use crate::model::{ModelParams, Variant};
use rand::Rng;
use rand_distr::StandardNormal;

/// Mixing-variance state: the free components that carry the density and
/// the expanded length-np vector (v₁ᵀ, …, v_pᵀ) the sampler operates on.
#[derive(Debug, Clone)]
pub struct VarianceState {
    pub variant: Variant,
    /// Free components: [] (Gaussian), [v] (G1), p scalars (G2),
    /// n values (G3), np values dimension-major (G4).
    pub free: Vec<f64>,
    /// Expanded vector, length np, dimension-major blocks of length n.
    pub v: Vec<f64>,
}

impl VarianceState {
    /// Expand free components against the dual-cell areas.
    pub fn from_free(variant: Variant, free: Vec<f64>, h: &[f64], p: usize) -> Result<Self> {
        let n = h.len();
        let expected = match variant {
            Variant::Gaussian => 0,
            Variant::G1 => 1,
            Variant::G2 => p,
            Variant::G3 => n,
            Variant::G4 => n * p,
        };
        if free.len() != expected {
            return Err(Error::Dimension(format!(
                "variance state for {variant} needs {expected} free components, got {}",
                free.len()
            )));
        }
        if free.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidParameter("variance components must be positive".into()));
        }
        let mut v = Vec::with_capacity(n * p);
        match variant {
            Variant::Gaussian => {
                for _ in 0..p {
                    v.extend_from_slice(h);
                }
            }
            Variant::G1 => {
                for _ in 0..p {
                    v.extend(h.iter().map(|&hi| hi * free[0]));
                }
            }
            Variant::G2 => {
                for k in 0..p {
                    v.extend(h.iter().map(|&hi| hi * free[k]));
                }
            }
            Variant::G3 => {
                for _ in 0..p {
                    v.extend_from_slice(&free);
                }
            }
            Variant::G4 => v.extend_from_slice(&free),
        }
        Ok(VarianceState { variant, free, v })
    }

    /// The degenerate state of the Gaussian variant (v ≡ h blockwise).
    pub fn gaussian(h: &[f64], p: usize) -> Self {
        Self::from_free(Variant::Gaussian, Vec::new(), h, p).expect("valid by construction")
    }

    /// Check that the expanded vector is structurally consistent with the
    /// free components (e.g. G3 blocks identical, G1 proportional to h).
    pub fn check_structure(&self, h: &[f64], p: usize) -> Result<()> {
        let rebuilt = Self::from_free(self.variant, self.free.clone(), h, p)?;
        if rebuilt.v.len() != self.v.len()
            || rebuilt
                .v
                .iter()
                .zip(&self.v)
                .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + a.abs()))
        {
            return Err(Error::InvalidParameter(format!(
                "variance state inconsistent with the {} structure",
                self.variant
            )));
        }
        Ok(())
    }
}

/// Draw a variance state from the prior.
pub fn sample_variance_prior<R: Rng + ?Sized>(
    params: &ModelParams,
    h: &[f64],
    rng: &mut R,
) -> Result<VarianceState> {
    let p = params.p;
    let free = match params.variant {
        Variant::Gaussian => Vec::new(),
        Variant::G1 => {
            let e2 = params.eta_shared() * params.eta_shared();
            vec![ig_sample(e2, e2, rng)]
        }
        Variant::G2 => (0..p)
            .map(|k| {
                let e2 = params.eta[k] * params.eta[k];
                ig_sample(e2, e2, rng)
            })
            .collect(),
        Variant::G3 => {
            let e2 = params.eta_shared() * params.eta_shared();
            h.iter().map(|&hi| ig_sample(e2, e2 * hi * hi, rng)).collect()
        }
        Variant::G4 => {
            let mut free = Vec::with_capacity(h.len() * p);
            for k in 0..p {
                let e2 = params.eta[k] * params.eta[k];
                free.extend(h.iter().map(|&hi| ig_sample(e2, e2 * hi * hi, rng)));
            }
            free
        }
    };
    VarianceState::from_free(params.variant, free, h, p)
}

/// Log density of the free components under the prior.
pub fn variance_prior_logpdf(vs: &VarianceState, params: &ModelParams, h: &[f64]) -> Result<f64> {
    if vs.variant != params.variant {
        return Err(Error::InvalidParameter("variance state variant mismatch".into()));
    }
    vs.check_structure(h, params.p)?;
    let mut acc = 0.0;
    match params.variant {
        Variant::Gaussian => {}
        Variant::G1 => {
            let e2 = params.eta_shared() * params.eta_shared();
            acc += ig_logpdf(vs.free[0], e2, e2)?;
        }
        Variant::G2 => {
            for k in 0..params.p {
                let e2 = params.eta[k] * params.eta[k];
                acc += ig_logpdf(vs.free[k], e2, e2)?;
            }
        }
        Variant::G3 => {
            let e2 = params.eta_shared() * params.eta_shared();
            for (i, &hi) in h.iter().enumerate() {
                acc += ig_logpdf(vs.free[i], e2, e2 * hi * hi)?;
            }
        }
        Variant::G4 => {
            let n = h.len();
            for k in 0..params.p {
                let e2 = params.eta[k] * params.eta[k];
                for (i, &hi) in h.iter().enumerate() {
                    acc += ig_logpdf(vs.free[k * n + i], e2, e2 * hi * hi)?;
                }
            }
        }
    }
    Ok(acc)
}

/// Gradient of the prior log density with respect to the η parameters
/// (natural scale), one entry per free η.
pub fn variance_prior_eta_gradient(
    vs: &VarianceState,
    params: &ModelParams,
    h: &[f64],
) -> Vec<f64> {
    let n = h.len() as f64;
    let sum_h: f64 = h.iter().sum();
    match params.variant {
        Variant::Gaussian => Vec::new(),
        Variant::G1 => {
            let eta = params.eta_shared();
            let v = vs.free[0];
            vec![1.0 / eta - eta * (v + 1.0 / v) + 2.0 * eta]
        }
        Variant::G2 => (0..params.p)
            .map(|k| {
                let eta = params.eta[k];
                let v = vs.free[k];
                1.0 / eta - eta * (v + 1.0 / v) + 2.0 * eta
            })
            .collect(),
        Variant::G3 => {
            let eta = params.eta_shared();
            let s: f64 = vs
                .free
                .iter()
                .zip(h)
                .map(|(&v, &hi)| v + hi * hi / v)
                .sum();
            vec![n / eta - eta * s + 2.0 * eta * sum_h]
        }
        Variant::G4 => (0..params.p)
            .map(|k| {
                let eta = params.eta[k];
                let nn = h.len();
                let s: f64 = vs.free[k * nn..(k + 1) * nn]
                    .iter()
                    .zip(h)
                    .map(|(&v, &hi)| v + hi * hi / v)
                    .sum();
                n / eta - eta * s + 2.0 * eta * sum_h
            })
            .collect(),
    }
}

/// Draw the discretised driving-noise vector: block k entry i is
/// γ_k h_i + μ_k v_i^k + √(v_i^k)·z with γ_k = -μ_k.
pub fn sample_noise_vector<R: Rng + ?Sized>(
    vs: &VarianceState,
    params: &ModelParams,
    h: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let n = h.len();
    let p = params.p;
    let mut out = Vec::with_capacity(n * p);
    for k in 0..p {
        let mu = if params.variant.is_gaussian() { 0.0 } else { params.mu[k] };
        for i in 0..n {
            let v = vs.v[k * n + i];
            let z: f64 = rng.sample(StandardNormal);
            out.push(mu * (v - h[i]) + v.sqrt() * z);
        }
    }
    out
}
