//! Log-gamma and digamma on the positive real axis.

use crate::error::{domain, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

// zeta(2)..zeta(12); higher orders are summed directly.
const ZETA: [f64; 11] = [
    1.644_934_066_848_226_4,
    1.202_056_903_159_594_3,
    1.082_323_233_711_138_2,
    1.036_927_755_143_37,
    1.017_343_061_984_449,
    1.008_349_277_381_922_8,
    1.004_077_356_197_944_3,
    1.002_008_392_826_082_2,
    1.000_994_575_127_818_1,
    1.000_494_188_604_119_5,
    1.000_246_086_553_308,
];

const SERIES_RADIUS: f64 = 0.2;

fn zeta(k: usize) -> f64 {
    if k <= 12 {
        ZETA[k - 2]
    } else {
        (1..=8).map(|n| (n as f64).powi(-(k as i32))).sum()
    }
}

/// ln Γ(1 + eps) by its Taylor series; accurate to full precision for |eps| < 0.2,
/// where the Lanczos form loses relative accuracy near the roots at 1 and 2.
fn log_gamma_one_plus(eps: f64) -> f64 {
    let mut acc = -EULER_GAMMA * eps;
    // pow = (-eps)^k
    let mut pow = -eps;
    for k in 2..=40 {
        pow *= -eps;
        let term = zeta(k) * pow / k as f64;
        acc += term;
        if term.abs() < 1e-18 * acc.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    acc
}

fn lanczos(x: f64) -> f64 {
    let t = x - 1.0;
    let mut a = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        a += c / (t + i as f64);
    }
    let tt = t + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (t + 0.5) * tt.ln() - tt + a.ln()
}

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("log_gamma", format!("x must be positive and finite, got {x}")));
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if (x - 1.0).abs() < SERIES_RADIUS {
        return log_gamma_one_plus(x - 1.0);
    }
    if (x - 2.0).abs() < SERIES_RADIUS {
        let eps = x - 2.0;
        return log_gamma_one_plus(eps) + eps.ln_1p();
    }
    if x < 0.5 {
        // Γ(x) = Γ(x + 1) / x
        return log_gamma_unchecked(x + 1.0) - x.ln();
    }
    lanczos(x)
}

/// Digamma ψ(x) = d/dx ln Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(domain("digamma", format!("x must be positive and finite, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 6.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // asymptotic series in 1/x², Bernoulli-number coefficients
    let tail = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    shift + x.ln() - 0.5 * inv - tail
}
