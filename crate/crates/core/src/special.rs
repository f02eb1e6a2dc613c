//! Special functions used by the parametric families.
//!
//! The complementary error function comes from `libm` (the statrs rational
//! approximation is only good to ~1e-10 relative in the tails); incomplete
//! gamma, incomplete beta and the inverse error function come from `statrs`,
//! the latter polished by a Newton step. Digamma and trigamma are evaluated here with the usual
//! recurrence shift followed by the asymptotic series.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

pub use statrs::function::beta::beta_reg;
pub use statrs::function::gamma::{gamma_lr, ln_gamma};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Largest double strictly below one.
pub const ONE_MINUS_ULP: f64 = 1.0 - f64::EPSILON / 2.0;

/// Standard normal distribution function.
#[inline]
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

#[inline]
pub fn std_normal_ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal quantile, polished with one Newton step on the CDF so the
/// round trip `Φ(Φ⁻¹(p))` is accurate to a few ulps of `p`.
pub fn std_normal_quantile(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let z = -SQRT_2 * statrs::function::erf::erfc_inv(2.0 * p);
    let dens = std_normal_ln_pdf(z).exp();
    if dens > 1e-300 {
        z - (std_normal_cdf(z) - p) / dens
    } else {
        z
    }
}

/// Digamma ψ(x) for x > 0.
pub fn digamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ψ(x) ~ ln x − 1/(2x) − Σ B_{2k}/(2k x^{2k})
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// Trigamma ψ'(x) for x > 0.
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ψ'(x) ~ 1/x + 1/(2x²) + Σ B_{2k}/x^{2k+1}
    let series = inv
        * inv2
        * (1.0 / 6.0
            - inv2
                * (1.0 / 30.0
                    - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0))))));
    acc + inv + 0.5 * inv2 + series
}
