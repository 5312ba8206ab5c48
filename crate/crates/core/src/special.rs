//! Special functions used across the crate.
//!
//! Gamma and error functions come from `libm`. The modified Bessel function
//! of the second kind is evaluated from its integral representation, which is
//! all the relativistic Lévy density needs.

use std::f64::consts::PI;

use crate::quad::{self, Tolerance};

/// Gamma function.
pub fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Natural log of |Γ(x)|.
pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Normalising constant of the isotropic α-stable Lévy density in R^d,
/// `c(d, α) = α 2^(α-1) Γ((d+α)/2) / (π^(d/2) Γ(1-α/2))`.
///
/// At α = 2 there is no jump part and the constant is zero.
pub fn stable_constant(d: usize, alpha: f64) -> f64 {
    assert!(alpha > 0.0 && alpha <= 2.0, "alpha must lie in (0, 2]");
    if alpha == 2.0 {
        return 0.0;
    }
    let d = d as f64;
    let ln = alpha.ln() + (alpha - 1.0) * std::f64::consts::LN_2 + ln_gamma((d + alpha) / 2.0)
        - 0.5 * d * PI.ln()
        - ln_gamma(1.0 - alpha / 2.0);
    ln.exp()
}

/// Modified Bessel function `K_ν(z)` for real order and `z > 0`, from
/// `K_ν(z) = ∫_0^∞ exp(-z cosh u) cosh(ν u) du`.
pub fn bessel_k(nu: f64, z: f64) -> f64 {
    assert!(z > 0.0, "bessel_k needs z > 0");
    let nu = nu.abs();
    // Integrand is negligible once z (cosh u - 1) exceeds ~745 + ν u.
    // Work with the scaled integrand exp(-z (cosh u - 1)) to avoid underflow.
    let f = |u: f64| (-z * (u.cosh() - 1.0)).exp() * (nu * u).cosh();
    let mut upper: f64 = 1.0;
    while z * (upper.cosh() - 1.0) - nu * upper < 60.0 {
        upper *= 1.5;
    }
    let tol = Tolerance::new(0.0, 1e-13);
    let r = quad::integrate(f, 0.0, upper, &tol);
    r.value * (-z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_half_order_closed_form() {
        // K_{1/2}(z) = sqrt(pi / (2z)) e^{-z}
        for &z in &[1e-3, 0.1, 1.0, 5.0, 30.0] {
            let exact = (PI / (2.0 * z)).sqrt() * (-z).exp();
            let got = bessel_k(0.5, z);
            assert!((got / exact - 1.0).abs() < 1e-10, "z={z} got={got} exact={exact}");
        }
    }

    #[test]
    fn bessel_three_halves_closed_form() {
        for &z in &[0.01, 0.7, 3.0] {
            let exact = (PI / (2.0 * z)).sqrt() * (-z).exp() * (1.0 + 1.0 / z);
            assert!((bessel_k(1.5, z) / exact - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn stable_constant_half() {
        assert!((stable_constant(1, 0.5) - 0.199_471_140_2).abs() < 1e-9);
        // Cauchy: c(1,1) = 1/pi
        assert!((stable_constant(1, 1.0) - 1.0 / PI).abs() < 1e-14);
        assert_eq!(stable_constant(1, 2.0), 0.0);
    }
}
