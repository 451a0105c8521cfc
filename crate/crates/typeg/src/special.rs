//! Special functions used throughout the crate: Gaussian density/CDF,
//! log-gamma, Bessel J₀, and the modified Bessel function of the second
//! kind Kᵥ evaluated in log space.
//!
//! Kᵥ appears in the Matérn correlation, the GIG/NIG densities, and the
//! GIG normalising constants. The Gibbs conditionals produce orders up to
//! a few hundred and arguments over many decades, so `log_bessel_k`
//! integrates the representation
//!
//! ```text
//! K_ν(x) = ∫₀^∞ exp(-x cosh t) cosh(νt) dt
//! ```
//!
//! after shifting by the integrand's maximum, which keeps every
//! intermediate bounded.

use statrs::function::erf;
use statrs::function::gamma;

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    gamma::ln_gamma(x)
}

/// Gamma function.
pub fn gamma_fn(x: f64) -> f64 {
    gamma::gamma(x)
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Bessel function of the first kind, order zero.
pub fn bessel_j0(x: f64) -> f64 {
    libm::j0(x)
}

/// log(cosh(x)) without overflow.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Modified Bessel function of the second kind, K_ν(x), in log space.
///
/// Valid for any real order (K is even in ν) and x > 0. Accuracy is
/// ~1e-10 relative over the ranges exercised by the samplers.
pub fn log_bessel_k(nu: f64, x: f64) -> f64 {
    assert!(x > 0.0, "log_bessel_k requires x > 0, got {x}");
    let nu = nu.abs();

    // f(t) = -x cosh t + log cosh(νt); maximum at f'(t*) = 0.
    let f = |t: f64| -x * t.cosh() + log_cosh(nu * t);
    let fp = |t: f64| -x * t.sinh() + nu * (nu * t).tanh();

    // f'(0) = 0 and f''(0) = ν² - x: interior maximum only when ν² > x.
    let t_star = if nu * nu <= x {
        0.0
    } else {
        // Bracket the root of f' beyond 0: asymptotically x sinh t = ν.
        let mut hi = (nu / x).asinh().max(1e-4) * 2.0 + 1.0;
        while fp(hi) > 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if fp(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let f_star = f(t_star);

    // Integration limit: beyond t_hi the integrand is below e^-60 of peak.
    let mut t_hi = t_star + 1.0;
    while f(t_hi) - f_star > -60.0 {
        t_hi += 1.0;
    }

    let g = |t: f64| (f(t) - f_star).exp();
    let integral = crate::quad::adaptive_simpson(&g, 0.0, t_hi, 1e-12, 60);
    f_star + integral.ln()
}

/// Modified Bessel function of the second kind K_ν(x).
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    log_bessel_k(nu, x).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bessel_k_known_values() {
        // K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}
        for &x in &[0.1, 1.0, 5.0, 50.0] {
            let exact = (std::f64::consts::PI / (2.0 * x)).sqrt().ln() - x;
            assert_relative_eq!(log_bessel_k(0.5, x), exact, max_relative = 1e-9);
        }
        // Tabulated values.
        assert_relative_eq!(bessel_k(0.0, 1.0), 0.42102443824070834, max_relative = 1e-9);
        assert_relative_eq!(bessel_k(1.0, 1.0), 0.6019072301972346, max_relative = 1e-9);
        assert_relative_eq!(bessel_k(2.0, 3.0), 0.06151045847174205, max_relative = 1e-9);
    }

    #[test]
    fn bessel_k_half_integer_recurrence() {
        // K_{3/2}(x) = K_{1/2}(x) (1 + 1/x), K_{5/2}(x) = K_{1/2}(x)(1 + 3/x + 3/x²)
        for &x in &[0.5, 3.0, 12.0] {
            let k_half = bessel_k(0.5, x);
            assert_relative_eq!(bessel_k(1.5, x), k_half * (1.0 + 1.0 / x), max_relative = 1e-9);
            assert_relative_eq!(
                bessel_k(2.5, x),
                k_half * (1.0 + 3.0 / x + 3.0 / (x * x)),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn bessel_k_recurrence_large_order() {
        // K_{ν+1}(x) = K_{ν-1}(x) + (2ν/x) K_ν(x), checked in log space.
        for &(nu, x) in &[(10.0, 0.3), (40.5, 2.0), (200.5, 7.0), (400.5, 25.0)] {
            let lk_m = log_bessel_k(nu - 1.0, x);
            let lk = log_bessel_k(nu, x);
            let lk_p = log_bessel_k(nu + 1.0, x);
            // log(K_{ν+1}) = log(K_{ν-1} + (2ν/x) K_ν), evaluated stably.
            let m = lk.max(lk_m);
            let rhs = m + ((lk_m - m).exp() + (2.0 * nu / x) * (lk - m).exp()).ln();
            assert_relative_eq!(lk_p, rhs, max_relative = 1e-8);
        }
    }

    #[test]
    fn bessel_k_even_in_order() {
        assert_eq!(log_bessel_k(-2.5, 1.3), log_bessel_k(2.5, 1.3));
    }

    #[test]
    fn j0_known_values() {
        assert_relative_eq!(bessel_j0(0.0), 1.0, epsilon = 1e-14);
        assert_relative_eq!(bessel_j0(1.0), 0.7651976865579666, max_relative = 1e-12);
        assert_relative_eq!(bessel_j0(10.0), -0.24593576445134832, max_relative = 1e-10);
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_relative_eq!(norm_cdf(1.6448536269514722), 0.95, epsilon = 1e-9);
        assert_relative_eq!(norm_cdf(-3.0) + norm_cdf(3.0), 1.0, epsilon = 1e-15);
    }
}
