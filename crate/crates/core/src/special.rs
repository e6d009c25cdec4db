//! Standard normal density and distribution function.

use std::f64::consts::{PI, SQRT_2};

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Φ(z) through `erf`/`erfc`, using the complementary branch in the tails.
pub fn normal_cdf(z: f64) -> f64 {
    if z < -1.0 {
        0.5 * libm::erfc(-z / SQRT_2)
    } else if z > 1.0 {
        1.0 - 0.5 * libm::erfc(z / SQRT_2)
    } else {
        0.5 * (1.0 + libm::erf(z / SQRT_2))
    }
}

/// 2Φ(z) − 1 = P(|ξ| ≤ z) for z ≥ 0.
pub fn normal_central_mass(z: f64) -> f64 {
    libm::erf(z / SQRT_2)
}
