//! Special functions, counter-based sampling and adaptive quadrature.

mod gamma;
mod quadrature;
mod rng;

pub use gamma::{digamma, log_gamma};
pub(crate) use gamma::{digamma_unchecked, log_gamma_unchecked};
pub use quadrature::{integrate_adaptive, integrate_adaptive_scaled, Integral, QuadratureSpec};
pub use rng::{derive_seed, philox4x32_10, sample_gamma, sample_standard_normal, splitmix64, Rng};

use std::f64::consts::PI;

/// Log density of `N(mean, variance)` at `x`.
pub fn normal_log_density(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * variance).ln() - d * d / (2.0 * variance)
}

/// Log density of the shape–rate Gamma distribution at `x > 0`.
pub fn gamma_log_density(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - log_gamma_unchecked(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Logistic function, evaluated without overflow for large `|x|`.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
