//! Densities and samplers for the generalised inverse Gaussian (GIG),
//! inverse Gaussian (IG), and normal inverse Gaussian (NIG) families,
//! plus the folded-normal mean used by the Rao-Blackwellised CRPS
//! estimator and the closed-form Gaussian CRPS.
//!
//! The GIG density is
//!
//! ```text
//! GIG(v; c, a, b) = (a/b)^{c/2} / (2 K_c(√(ab))) · v^{c-1} e^{-(av + b/v)/2}
//! ```
//!
//! with the IG special case IG(η₁, η₂) = GIG(-1/2, η₁, η₂). All Bessel
//! normalising constants are evaluated in log space: the Gibbs
//! conditionals visit extreme index/argument combinations every sweep.

use crate::error::{Error, Result};
use crate::special::{ln_gamma, log_bessel_k, norm_cdf, norm_pdf};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

/// Parameters of a GIG distribution: index `c` and rate pair `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GigParams {
    pub c: f64,
    pub a: f64,
    pub b: f64,
}

impl GigParams {
    pub fn new(c: f64, a: f64, b: f64) -> Result<Self> {
        let ok = (a > 0.0 && b > 0.0)
            || (a > 0.0 && b == 0.0 && c > 0.0)
            || (a == 0.0 && b > 0.0 && c < 0.0);
        if !ok || !a.is_finite() || !b.is_finite() || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "invalid GIG parameters c={c}, a={a}, b={b}"
            )));
        }
        Ok(GigParams { c, a, b })
    }

    /// Unnormalised log density (c-1)·log v - (av + b/v)/2.
    fn log_kernel(&self, v: f64) -> f64 {
        (self.c - 1.0) * v.ln() - 0.5 * (self.a * v + self.b / v)
    }

    /// Mode of the density, computed without cancellation for c < 1.
    fn mode(&self) -> f64 {
        let cm = self.c - 1.0;
        let disc = (cm * cm + self.a * self.b).sqrt();
        if cm > 0.0 {
            (cm + disc) / self.a
        } else {
            self.b / (disc - cm)
        }
    }
}

/// Log density of the GIG distribution.
pub fn gig_logpdf(v: f64, p: GigParams) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::InvalidParameter(format!("GIG support is v > 0, got {v}")));
    }
    let GigParams { c, a, b } = p;
    let log_norm = if a > 0.0 && b > 0.0 {
        0.5 * c * (a / b).ln() - std::f64::consts::LN_2 - log_bessel_k(c, (a * b).sqrt())
    } else if b == 0.0 {
        // Gamma(shape c, rate a/2).
        c * (a / 2.0).ln() - ln_gamma(c)
    } else {
        // Inverse gamma(shape -c, rate b/2).
        -c * (b / 2.0).ln() - ln_gamma(-c)
    };
    Ok(log_norm + p.log_kernel(v))
}

/// Draw from the GIG distribution.
///
/// Boundary cases (a = 0 or b = 0) reduce to gamma and inverse-gamma
/// draws; the interior case uses ratio-of-uniforms with mode shift, which
/// needs no table setup and stays valid across the full parameter range
/// visited by the variance conditionals.
pub fn gig_sample<R: Rng + ?Sized>(p: GigParams, rng: &mut R) -> f64 {
    let GigParams { c, a, b } = p;
    if b == 0.0 {
        let g = Gamma::new(c, 2.0 / a).expect("validated gamma parameters");
        return g.sample(rng).max(f64::MIN_POSITIVE);
    }
    if a == 0.0 {
        let g = Gamma::new(-c, 2.0 / b).expect("validated gamma parameters");
        return 1.0 / g.sample(rng).max(f64::MIN_POSITIVE);
    }

    // Ratio of uniforms with mode shift, all bounds relative to the mode
    // so that only log-kernel differences enter.
    let m = p.mode();
    let log_gm = p.log_kernel(m);
    let rel = |x: f64| (0.5 * (p.log_kernel(x) - log_gm)).exp();

    // Stationary points of (x-m)²g(x): 2 + (x-m)(log g)'(x) = 0, one root
    // on each side of the mode.
    let zeta = |x: f64| 2.0 + (x - m) * ((c - 1.0) / x - 0.5 * a + 0.5 * b / (x * x));
    let x_minus = {
        let mut lo = m * 1e-12;
        while zeta(lo) > 0.0 && lo > 1e-290 {
            lo *= 1e-3;
        }
        bisect_decreasing_from_mode(&zeta, m, lo)
    };
    let x_plus = {
        let mut hi = 2.0 * m + 1.0;
        while zeta(hi) > 0.0 {
            hi *= 2.0;
        }
        bisect_decreasing_from_mode(&zeta, m, hi)
    };
    let v_lo = (x_minus - m) * rel(x_minus);
    let v_hi = (x_plus - m) * rel(x_plus);

    loop {
        let u: f64 = rng.gen::<f64>();
        let v = v_lo + (v_hi - v_lo) * rng.gen::<f64>();
        if u <= 0.0 {
            continue;
        }
        let x = v / u + m;
        if x > 0.0 && 2.0 * u.ln() <= p.log_kernel(x) - log_gm {
            return x;
        }
    }
}

/// Bisection for ζ with ζ(near) > 0 at `near` (towards the mode) and
/// ζ(far) ≤ 0.
fn bisect_decreasing_from_mode<F: Fn(f64) -> f64>(f: &F, near: f64, far: f64) -> f64 {
    let mut pos = near;
    let mut neg = far;
    for _ in 0..200 {
        let mid = 0.5 * (pos + neg);
        if f(mid) > 0.0 {
            pos = mid;
        } else {
            neg = mid;
        }
        if (pos - neg).abs() <= 1e-13 * (pos.abs() + neg.abs()) {
            break;
        }
    }
    0.5 * (pos + neg)
}

/// Log density of the IG distribution with rate pair (η₁, η₂):
/// IG(v; η₁, η₂) = GIG(v; -1/2, η₁, η₂), i.e.
/// √(η₂/(2πv³)) exp(-η₁v/2 - η₂/(2v) + √(η₁η₂)).
pub fn ig_logpdf(v: f64, eta1: f64, eta2: f64) -> Result<f64> {
    if !(v > 0.0 && eta1 > 0.0 && eta2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "IG requires v, η₁, η₂ > 0 (got v={v}, η₁={eta1}, η₂={eta2})"
        )));
    }
    Ok(0.5 * eta2.ln()
        - 0.5 * (2.0 * std::f64::consts::PI * v * v * v).ln()
        - 0.5 * eta1 * v
        - 0.5 * eta2 / v
        + (eta1 * eta2).sqrt())
}

/// Draw from IG(η₁, η₂) by the Michael-Schucany-Haas transformation.
pub fn ig_sample<R: Rng + ?Sized>(eta1: f64, eta2: f64, rng: &mut R) -> f64 {
    debug_assert!(eta1 > 0.0 && eta2 > 0.0);
    // Mean/shape parametrisation: mean = √(η₂/η₁), shape = η₂.
    let mu = (eta2 / eta1).sqrt();
    let lambda = eta2;
    let z: f64 = rng.sample(StandardNormal);
    let y = z * z;
    let x = mu + mu * mu * y / (2.0 * lambda)
        - mu / (2.0 * lambda) * (4.0 * mu * lambda * y + mu * mu * y * y).sqrt();
    let u: f64 = rng.gen();
    if u <= mu / (mu + x) {
        x.max(f64::MIN_POSITIVE)
    } else {
        mu * mu / x.max(f64::MIN_POSITIVE)
    }
}

/// Log density of the NIG distribution with mixing v ~ IG(η, η):
/// the law of γ + μv + σ√v·z.
pub fn nig_logpdf(x: f64, gamma: f64, mu: f64, sigma: f64, eta: f64) -> Result<f64> {
    if !(sigma > 0.0 && eta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "NIG requires σ, η > 0 (got σ={sigma}, η={eta})"
        )));
    }
    let s2 = sigma * sigma;
    let dx = x - gamma;
    let a = eta + mu * mu / s2;
    let b = eta + dx * dx / s2;
    Ok(eta + mu * dx / s2 + 0.5 * (eta * mu * mu / s2 + eta * eta).ln()
        - std::f64::consts::PI.ln()
        - 0.5 * (eta * s2 + dx * dx).ln()
        + log_bessel_k(1.0, (a * b).sqrt()))
}

/// Mean of |Z| for Z ~ N(μ, σ²):
/// M(μ, σ²) = 2σφ(μ/σ) + μ(2Φ(μ/σ) - 1), with M(μ, 0) = |μ|.
pub fn folded_normal_mean(mu: f64, sigma2: f64) -> Result<f64> {
    if sigma2 < 0.0 {
        return Err(Error::InvalidParameter(format!("negative variance {sigma2}")));
    }
    if sigma2 == 0.0 {
        return Ok(mu.abs());
    }
    let sigma = sigma2.sqrt();
    let r = mu / sigma;
    Ok(2.0 * sigma * norm_pdf(r) + mu * (2.0 * norm_cdf(r) - 1.0))
}

/// Closed-form negatively oriented CRPS of N(μ, σ²) at y, via the
/// folded-normal identity CRPS = M(μ - y, σ²) - M(0, 2σ²)/2.
pub fn gaussian_crps(y: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("CRPS requires σ > 0, got {sigma}")));
    }
    let s2 = sigma * sigma;
    Ok(folded_normal_mean(mu - y, s2)? - 0.5 * folded_normal_mean(0.0, 2.0 * s2)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{empirical_mean_se, ks_statistic, quadrature_cdf_table, quadrature_moment};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn gig_param_validation() {
        assert!(GigParams::new(-0.5, 1.0, 1.0).is_ok());
        assert!(GigParams::new(1.0, 1.0, 0.0).is_ok());
        assert!(GigParams::new(-1.0, 0.0, 2.0).is_ok());
        assert!(GigParams::new(-1.0, 0.0, 0.0).is_err());
        assert!(GigParams::new(-1.0, 1.0, -2.0).is_err());
        assert!(GigParams::new(0.5, 0.0, 2.0).is_err());
        assert!(gig_logpdf(-1.0, GigParams::new(-0.5, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn gig_matches_ig_at_index_minus_half() {
        // IG(v; η₁, η₂) = GIG(v; -1/2, η₁, η₂).
        for &v in &[0.5, 1.0, 2.0] {
            let g = gig_logpdf(v, GigParams::new(-0.5, 1.0, 1.0).unwrap()).unwrap();
            let i = ig_logpdf(v, 1.0, 1.0).unwrap();
            assert_relative_eq!(g, i, epsilon = 1e-10);
        }
        for &v in &[0.1, 0.7, 3.0, 9.0] {
            let g = gig_logpdf(v, GigParams::new(-0.5, 2.0, 5.0).unwrap()).unwrap();
            let i = ig_logpdf(v, 2.0, 5.0).unwrap();
            assert_relative_eq!(g, i, epsilon = 1e-10);
        }
    }

    #[test]
    fn densities_integrate_to_one() {
        let cases = [
            GigParams::new(-1.0, 2.0, 3.0).unwrap(),
            GigParams::new(0.7, 1.5, 0.4).unwrap(),
            GigParams::new(-5.5, 0.8, 2.0).unwrap(),
        ];
        for p in cases {
            let mass = crate::quad::integrate_half_line(
                &|v: f64| if v <= 0.0 { 0.0 } else { gig_logpdf(v, p).unwrap().exp() },
                0.0,
                1.0,
                1e-10,
            );
            assert_relative_eq!(mass, 1.0, epsilon = 1e-6);
        }
        // IG with η₁ ≠ η₂ (this pins the normalising exponent √(η₁η₂)).
        let mass = crate::quad::integrate_half_line(
            &|v: f64| if v <= 0.0 { 0.0 } else { ig_logpdf(v, 2.0, 3.0).unwrap().exp() },
            0.0,
            1.0,
            1e-10,
        );
        assert_relative_eq!(mass, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn nig_integrates_to_one() {
        let f = |x: f64| nig_logpdf(x, 0.0, 0.0, 1.0, 1.0).unwrap().exp();
        let mass = crate::quad::integrate_half_line(&|x| f(x) + f(-x), 0.0, 1.0, 1e-10);
        assert_relative_eq!(mass, 1.0, epsilon = 1e-5);
    }

    #[test]
    fn gig_exponential_limit() {
        // c = 1, b → 0 approaches Exponential(a/2).
        let p = GigParams::new(1.0, 2.0, 1e-8).unwrap();
        for &v in &[0.2, 1.0, 3.0] {
            let lim = -v; // Exp(rate 1): log pdf = -v
            assert_relative_eq!(gig_logpdf(v, p).unwrap(), lim, epsilon = 2e-3);
        }
    }

    #[test]
    fn nig_is_ig_mixture_of_normals() {
        // Density equals ∫ N(x; γ+μv, σ²v) IG(v; η, η) dv.
        let (gamma, mu, sigma, eta) = (0.3, -0.7, 1.0, 1.4);
        for &x in &[-2.0, 0.0, 0.4, 3.0] {
            let mix = crate::quad::integrate_half_line(
                &|v: f64| {
                    if v <= 0.0 {
                        return 0.0;
                    }
                    let sd = sigma * v.sqrt();
                    let z = (x - gamma - mu * v) / sd;
                    norm_pdf(z) / sd * ig_logpdf(v, eta, eta).unwrap().exp()
                },
                0.0,
                0.5,
                1e-11,
            );
            assert_relative_eq!(
                nig_logpdf(x, gamma, mu, sigma, eta).unwrap().exp(),
                mix,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn nig_symmetric_when_mu_zero() {
        for &x in &[0.1, 1.0, 2.5] {
            let l = nig_logpdf(2.0 * 0.4 - x, 0.4, 0.0, 1.0, 0.8).unwrap();
            let r = nig_logpdf(x, 0.4, 0.0, 1.0, 0.8).unwrap();
            assert_relative_eq!(l, r, epsilon = 1e-12);
        }
    }

    #[test]
    fn ig_sampler_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(101);
        // IG(η, η) has mean 1.
        for &eta in &[0.5, 1.0, 5.0] {
            let draws: Vec<f64> = (0..100_000).map(|_| ig_sample(eta, eta, &mut rng)).collect();
            let (mean, se) = empirical_mean_se(&draws);
            let oracle = quadrature_moment(&|v| ig_logpdf(v, eta, eta).unwrap().exp(), 1.0);
            assert!((mean - oracle).abs() < 3.0 * se, "IG mean off: {mean} vs {oracle}");
            assert_relative_eq!(oracle, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn gig_sampler_mean_matches_quadrature() {
        let mut rng = ChaCha12Rng::seed_from_u64(102);
        let cases = [
            GigParams::new(-0.5, 4.0, 4.0).unwrap(),
            GigParams::new(-3.0, 1.0, 6.0).unwrap(),
            GigParams::new(2.5, 3.0, 0.5).unwrap(),
            GigParams::new(1.5, 2.0, 0.0).unwrap(),
            GigParams::new(-2.0, 0.0, 3.0).unwrap(),
        ];
        for p in cases {
            let draws: Vec<f64> = (0..100_000).map(|_| gig_sample(p, &mut rng)).collect();
            let (mean, se) = empirical_mean_se(&draws);
            let oracle = quadrature_moment(&|v| gig_logpdf(v, p).unwrap().exp(), 1.0);
            assert!(
                (mean - oracle).abs() < 3.5 * se,
                "GIG mean off for {p:?}: {mean} vs {oracle} (se {se})"
            );
        }
    }

    #[test]
    fn gig_sampler_ks_against_quadrature_cdf() {
        let mut rng = ChaCha12Rng::seed_from_u64(103);
        let p = GigParams::new(-1.0, 2.0, 3.0).unwrap();
        let mut draws: Vec<f64> = (0..100_000).map(|_| gig_sample(p, &mut rng)).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let table = quadrature_cdf_table(&|v| gig_logpdf(v, p).unwrap().exp(), &draws);
        let ks = ks_statistic(&draws, &table);
        assert!(ks < 0.01, "KS = {ks}");
    }

    #[test]
    fn folded_normal_cases() {
        // Centered: M(0, σ²) = σ √(2/π).
        assert_relative_eq!(
            folded_normal_mean(0.0, 4.0).unwrap(),
            2.0 * (2.0 / std::f64::consts::PI).sqrt(),
            epsilon = 1e-12
        );
        // Degenerate: M(μ, 0) = |μ|.
        assert_eq!(folded_normal_mean(-3.0, 0.0).unwrap(), 3.0);
        assert!(folded_normal_mean(1.0, -1.0).is_err());
        // Bounds M ≥ |μ| and M ≥ σ√(2/π).
        for &(mu, s2) in &[(0.5, 2.0), (-1.5, 0.3), (2.0, 4.0)] {
            let m = folded_normal_mean(mu, s2).unwrap();
            assert!(m >= mu.abs() - 1e-12);
            assert!(m >= (s2).sqrt() * (2.0 / std::f64::consts::PI).sqrt() - 1e-12);
        }
    }

    #[test]
    fn folded_normal_matches_monte_carlo() {
        let mut rng = ChaCha12Rng::seed_from_u64(104);
        let draws: Vec<f64> = (0..1_000_000)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                (1.0 + z).abs()
            })
            .collect();
        let (mean, se) = empirical_mean_se(&draws);
        let m = folded_normal_mean(1.0, 1.0).unwrap();
        assert!((mean - m).abs() < 3.0 * se, "{mean} vs {m}");
    }

    #[test]
    fn gaussian_crps_properties() {
        // At y = μ: σ(√(2/π) - 1/√π).
        let sigma = 1.7;
        let expect =
            sigma * ((2.0 / std::f64::consts::PI).sqrt() - 1.0 / std::f64::consts::PI.sqrt());
        assert_relative_eq!(gaussian_crps(0.0, 0.0, sigma).unwrap(), expect, epsilon = 1e-12);
        // Positive homogeneity.
        let (y, mu, s, lam) = (0.3, -0.2, 0.9, 2.5);
        assert_relative_eq!(
            gaussian_crps(lam * y, lam * mu, lam * s).unwrap(),
            lam * gaussian_crps(y, mu, s).unwrap(),
            epsilon = 1e-12
        );
        assert!(gaussian_crps(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_crps_matches_monte_carlo() {
        let mut rng = ChaCha12Rng::seed_from_u64(105);
        let n = 1_000_000;
        let vals: Vec<f64> = (0..n)
            .map(|_| {
                let y1: f64 = rng.sample(StandardNormal);
                let y2: f64 = rng.sample(StandardNormal);
                y1.abs() - 0.5 * (y1 - y2).abs()
            })
            .collect();
        let (mean, se) = empirical_mean_se(&vals);
        let exact = gaussian_crps(0.0, 0.0, 1.0).unwrap();
        assert!((mean - exact).abs() < 3.0 * se, "{mean} vs {exact}");
    }
}
