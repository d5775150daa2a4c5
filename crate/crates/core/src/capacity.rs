//! Channel capacity of parameter noise.
//!
//! Two channels are covered. With a fixed noise variance the noisy parameter
//! `θ̃ = θ + σε` under a Gaussian prior `θ ~ N(0, σ_p²)` is the textbook
//! Gaussian channel with capacity `½ ln(1 + σ_p²/σ²)` per dimension. With a
//! learned variance and a `β`-scaled complexity term, the equivalent noisy
//! model draws `θ ~ N(0, 1/β)` and `σ² ~ Gamma(β/2 + 1, β/2)` (shape–rate),
//! and the per-dimension capacity `H(θ̃) − H(θ̃ | θ, σ²)` has no closed form;
//! it is computed here by nested quadrature.
//!
//! The learned-variance channel is defined for unit prior variance. Because
//! mutual information is invariant under rescaling both ends of the channel,
//! a model with prior variance `σ_p²` has the same capacity once its
//! parameters are divided by `σ_p`.

use std::cell::RefCell;
use std::f64::consts::{E, LN_2, PI};

use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::special_math::{
    digamma_unchecked, gamma_log_density, integrate_adaptive, normal_log_density, QuadratureSpec, Rng,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub prior_variance: f64,
    pub noise_variance: f64,
    pub dims: usize,
}

impl ChannelSpec {
    pub fn new(prior_variance: f64, noise_variance: f64, dims: usize) -> Result<Self> {
        let spec = Self {
            prior_variance,
            noise_variance,
            dims,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prior_variance > 0.0) || !self.prior_variance.is_finite() {
            return Err(domain("ChannelSpec", format!("prior variance must be positive, got {}", self.prior_variance)));
        }
        if !(self.noise_variance > 0.0) || !self.noise_variance.is_finite() {
            return Err(domain("ChannelSpec", format!("noise variance must be positive, got {}", self.noise_variance)));
        }
        if self.dims == 0 {
            return Err(domain("ChannelSpec", "dimension count must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaChannelSpec {
    pub beta: f64,
}

impl BetaChannelSpec {
    pub fn new(beta: f64) -> Result<Self> {
        let spec = Self { beta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(domain("BetaChannelSpec", format!("beta must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    /// Shape and rate of the variance prior.
    pub fn gamma_params(&self) -> (f64, f64) {
        (self.beta / 2.0 + 1.0, self.beta / 2.0)
    }

    /// Variance of the marginal of `θ̃`: `E[σ²] + 1/β = 1 + 3/β`.
    pub fn marginal_variance(&self) -> f64 {
        1.0 + 3.0 / self.beta
    }

    /// `H(θ̃ | θ, σ²) = ½ ln(2πe) + ½ E[ln σ²]` with `E[ln σ²] = ψ(k) − ln λ`.
    pub fn conditional_entropy_nats(&self) -> f64 {
        let (shape, rate) = self.gamma_params();
        0.5 * (2.0 * PI * E).ln() + 0.5 * (digamma_unchecked(shape) - rate.ln())
    }

    /// Integration range for `u = ln σ²`. Working in log-variance removes the
    /// `σ^β` cusp at zero; below the lower end the Gamma mass is under
    /// `e^{-45}`, and above the upper end the tail is beyond the cutoff.
    fn log_variance_range(&self, quad: &QuadratureSpec) -> (f64, f64) {
        let (shape, rate) = self.gamma_params();
        let c = quad.tail_cutoff_sigmas;
        let hi = ((shape + c * shape.sqrt() + c * c) / rate).ln();
        let lo = (shape / rate).ln() - 45.0;
        (lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CapacitySource {
    Fixed(ChannelSpec),
    Beta(BetaChannelSpec),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityReport {
    pub per_dim_bits: f64,
    pub per_dim_nats: f64,
    pub total_bits: f64,
    pub source: CapacitySource,
    pub quadrature_err: Option<f64>,
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / LN_2
}

pub fn fixed_variance_capacity(spec: &ChannelSpec) -> Result<CapacityReport> {
    spec.validate()?;
    let nats = 0.5 * (spec.prior_variance / spec.noise_variance).ln_1p();
    let bits = nats_to_bits(nats);
    Ok(CapacityReport {
        per_dim_bits: bits,
        per_dim_nats: nats,
        total_bits: bits * spec.dims as f64,
        source: CapacitySource::Fixed(*spec),
        quadrature_err: None,
    })
}

/// Noise variance giving `target_bits` of capacity per dimension:
/// `σ² = σ_p² / (2^{2·target} − 1)`.
pub fn solve_noise_for_capacity(target_bits: f64, prior_variance: f64) -> Result<f64> {
    if !(target_bits > 0.0) || target_bits.is_nan() {
        return Err(domain("solve_noise_for_capacity", format!("target must be positive, got {target_bits}")));
    }
    if !(prior_variance > 0.0) || !prior_variance.is_finite() {
        return Err(domain(
            "solve_noise_for_capacity",
            format!("prior variance must be positive, got {prior_variance}"),
        ));
    }
    let snr = (2.0 * target_bits * LN_2).exp_m1();
    let variance = prior_variance / snr;
    if !snr.is_finite() || !(variance >= f64::MIN_POSITIVE) {
        return Err(Error::CapacityOverflow { bits: target_bits });
    }
    Ok(variance)
}

fn gamma_mixture_density_unchecked(theta: f64, spec: &BetaChannelSpec, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    let (shape, rate) = spec.gamma_params();
    let inv_beta = 1.0 / spec.beta;
    let (lo, hi) = spec.log_variance_range(quad);
    let inner = quad.tightened(1e-3);
    let r = integrate_adaptive(
        |u| {
            let s = u.exp();
            (gamma_log_density(s, shape, rate) + u + normal_log_density(theta, 0.0, s + inv_beta)).exp()
        },
        lo,
        hi,
        &inner,
    )?;
    Ok((r.value.max(0.0), r.err_estimate))
}

/// Marginal density of `θ̃` in the learned-variance noisy model:
/// `∫ Gamma(σ²; β/2+1, β/2) · N(θ̃; 0, σ² + 1/β) dσ²`.
pub fn gamma_mixture_marginal_density(theta: f64, beta: f64, quad: &QuadratureSpec) -> Result<f64> {
    let spec = BetaChannelSpec::new(beta)?;
    quad.validate()?;
    Ok(gamma_mixture_density_unchecked(theta, &spec, quad)?.0)
}

/// Both routes to the conditional entropy, in nats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalEntropy {
    pub closed_form: f64,
    pub quadrature: f64,
}

pub const CONDITIONAL_ENTROPY_AGREEMENT: f64 = 1e-6;

/// `∫ p(σ²) ½ ln(2πeσ²) dσ²` by quadrature, next to the digamma closed form.
pub fn conditional_entropy(spec: &BetaChannelSpec, quad: &QuadratureSpec) -> Result<ConditionalEntropy> {
    spec.validate()?;
    quad.validate()?;
    let (shape, rate) = spec.gamma_params();
    let c = 0.5 * (2.0 * PI * E).ln();
    let (lo, hi) = spec.log_variance_range(quad);
    let r = integrate_adaptive(
        |u| (gamma_log_density(u.exp(), shape, rate) + u).exp() * (c + 0.5 * u),
        lo,
        hi,
        &quad.tightened(1e-2),
    )?;
    Ok(ConditionalEntropy {
        closed_form: spec.conditional_entropy_nats(),
        quadrature: r.value,
    })
}

/// Marginal entropy `H(θ̃)` in nats with its quadrature error estimate.
pub fn marginal_entropy(spec: &BetaChannelSpec, quad: &QuadratureSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    quad.validate()?;
    let reach = quad.tail_cutoff_sigmas * spec.marginal_variance().sqrt();
    let inner_err = RefCell::new(0.0f64);
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    // the marginal is even, so integrate the positive half and double
    let outer = integrate_adaptive(
        |t| match gamma_mixture_density_unchecked(t, spec, quad) {
            Ok((p, e)) => {
                let mut acc = inner_err.borrow_mut();
                *acc = acc.max(e);
                if p > 0.0 {
                    -p * p.ln()
                } else {
                    0.0
                }
            }
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                f64::NAN
            }
        },
        0.0,
        reach,
        quad,
    );
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    let outer = outer?;
    // a density error δ moves −p ln p by at most |ln p + 1|·δ; bound crudely over the range
    let err = 2.0 * outer.err_estimate + 2.0 * reach * inner_err.into_inner() * 50.0;
    Ok((2.0 * outer.value, err))
}

pub fn learned_variance_capacity(spec: &BetaChannelSpec, quad: &QuadratureSpec) -> Result<CapacityReport> {
    let (marginal, marginal_err) = marginal_entropy(spec, quad)?;
    let cond = conditional_entropy(spec, quad)?;
    if (cond.closed_form - cond.quadrature).abs() > CONDITIONAL_ENTROPY_AGREEMENT {
        return Err(domain(
            "learned_variance_capacity",
            format!(
                "conditional entropy routes disagree: closed form {} vs quadrature {}",
                cond.closed_form, cond.quadrature
            ),
        ));
    }
    let nats = marginal - cond.closed_form;
    if nats < -1e-6 {
        return Err(Error::NegativeCapacity { nats });
    }
    let nats = nats.max(0.0);
    let bits = nats_to_bits(nats);
    Ok(CapacityReport {
        per_dim_bits: bits,
        per_dim_nats: nats,
        total_bits: bits,
        source: CapacitySource::Beta(*spec),
        quadrature_err: Some(marginal_err + (cond.closed_form - cond.quadrature).abs()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub bits: f64,
    pub std_err_bits: f64,
}

pub const MC_MIN_SAMPLES: usize = 10_000;

/// Monte-Carlo capacity: sample the generative chain prior → noise, average
/// `−ln p(θ̃)` under the analytic marginal, and subtract the analytic
/// conditional entropy.
pub fn mc_capacity_estimate(source: &CapacitySource, n_samples: usize, rng: &mut Rng) -> Result<McEstimate> {
    if n_samples < MC_MIN_SAMPLES {
        return Err(domain(
            "mc_capacity_estimate",
            format!("need at least {MC_MIN_SAMPLES} samples, got {n_samples}"),
        ));
    }
    let (neg_log, cond) = match source {
        CapacitySource::Fixed(spec) => {
            spec.validate()?;
            let prior_sd = spec.prior_variance.sqrt();
            let noise_sd = spec.noise_variance.sqrt();
            let marginal_var = spec.prior_variance + spec.noise_variance;
            let draws: Vec<f64> = (0..n_samples)
                .map(|_| {
                    let theta = prior_sd * rng.standard_normal();
                    let noisy = theta + noise_sd * rng.standard_normal();
                    -normal_log_density(noisy, 0.0, marginal_var)
                })
                .collect();
            (draws, 0.5 * (2.0 * PI * E * spec.noise_variance).ln())
        }
        CapacitySource::Beta(spec) => {
            spec.validate()?;
            let quad = QuadratureSpec::default();
            let (shape, rate) = spec.gamma_params();
            let prior_sd = (1.0 / spec.beta).sqrt();
            let noisy: Vec<f64> = (0..n_samples)
                .map(|_| {
                    let var = rng.gamma(shape, rate);
                    let theta = prior_sd * rng.standard_normal();
                    theta + var.sqrt() * rng.standard_normal()
                })
                .collect();
            let draws = noisy
                .par_iter()
                .map(|&t| gamma_mixture_density_unchecked(t, spec, &quad).map(|(p, _)| -p.ln()))
                .collect::<Result<Vec<f64>>>()?;
            (draws, spec.conditional_entropy_nats())
        }
    };
    let n = neg_log.len() as f64;
    let mean = neg_log.iter().sum::<f64>() / n;
    let var = neg_log.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(McEstimate {
        bits: nats_to_bits(mean - cond),
        std_err_bits: nats_to_bits((var / n).sqrt()),
    })
}

/// Capacity for each β, in input order. Fails if capacity increases with β.
pub fn beta_capacity_table(betas: &[f64], quad: &QuadratureSpec) -> Result<Vec<(f64, CapacityReport)>> {
    if betas.is_empty() {
        return Err(domain("beta_capacity_table", "beta list is empty"));
    }
    let rows = betas
        .par_iter()
        .map(|&beta| learned_variance_capacity(&BetaChannelSpec::new(beta)?, quad).map(|r| (beta, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut sorted: Vec<(f64, f64)> = rows.iter().map(|(b, r)| (*b, r.per_dim_bits)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        if w[1].0 > w[0].0 && w[1].1 > w[0].1 + 1e-9 {
            return Err(domain(
                "beta_capacity_table",
                format!(
                    "capacity increased from {} bits at beta {} to {} bits at beta {}",
                    w[0].1, w[0].0, w[1].1, w[1].0
                ),
            ));
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_capacity_examples() {
        let r = fixed_variance_capacity(&ChannelSpec::new(1.0, 1.0, 1).unwrap()).unwrap();
        assert!((r.per_dim_bits - 0.5).abs() < 1e-15);
        let r = fixed_variance_capacity(&ChannelSpec::new(3.0, 1.0, 2).unwrap()).unwrap();
        assert!((r.per_dim_bits - 1.0).abs() < 1e-15);
        assert!((r.total_bits - 2.0).abs() < 1e-15);
        let r = fixed_variance_capacity(&ChannelSpec::new(1.0, 1.0 / 1023.0, 1).unwrap()).unwrap();
        assert!((r.per_dim_bits - 5.0).abs() < 1e-12);
        assert!((r.per_dim_nats - r.per_dim_bits * LN_2).abs() <= 1e-12 * r.per_dim_nats);
    }

    #[test]
    fn channel_spec_invariants() {
        assert!(ChannelSpec::new(0.0, 1.0, 1).is_err());
        assert!(ChannelSpec::new(1.0, 0.0, 1).is_err());
        assert!(ChannelSpec::new(1.0, 1.0, 0).is_err());
        assert!(BetaChannelSpec::new(0.0).is_err());
        assert!(BetaChannelSpec::new(-1.0).is_err());
    }

    #[test]
    fn solve_examples() {
        assert!((solve_noise_for_capacity(1.0, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((solve_noise_for_capacity(0.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let s = solve_noise_for_capacity(2.0, 4.0).unwrap();
        assert!((s - 4.0 / 15.0).abs() < 1e-15);
        let back = fixed_variance_capacity(&ChannelSpec::new(4.0, s, 1).unwrap()).unwrap();
        assert!((back.per_dim_bits - 2.0).abs() < 1e-12);
    }

    #[test]
    fn solve_overflow_and_domain() {
        assert!(solve_noise_for_capacity(500.0, 1.0).is_ok());
        assert!(matches!(
            solve_noise_for_capacity(600.0, 1.0),
            Err(Error::CapacityOverflow { .. })
        ));
        assert!(solve_noise_for_capacity(0.0, 1.0).is_err());
        assert!(solve_noise_for_capacity(1.0, 0.0).is_err());
    }

    #[test]
    fn marginal_density_is_even_and_normalized() {
        let quad = QuadratureSpec::default();
        let p = gamma_mixture_marginal_density(0.7, 1.0, &quad).unwrap();
        let q = gamma_mixture_marginal_density(-0.7, 1.0, &quad).unwrap();
        assert_eq!(p, q);
        let sd = BetaChannelSpec::new(1.0).unwrap().marginal_variance().sqrt();
        let mass = crate::special_math::integrate_adaptive_scaled(
            |t| gamma_mixture_marginal_density(t, 1.0, &quad).unwrap(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            sd,
            &quad,
        )
        .unwrap();
        assert!((mass.value - 1.0).abs() < 1e-6, "{mass:?}");
    }

    #[test]
    fn conditional_entropy_routes_agree() {
        for beta in [0.1, 1.0, 10.0] {
            let c = conditional_entropy(&BetaChannelSpec::new(beta).unwrap(), &QuadratureSpec::default()).unwrap();
            assert!((c.closed_form - c.quadrature).abs() < 1e-6, "beta {beta}: {c:?}");
        }
    }

    #[test]
    fn beta_one_capacity() {
        let r = learned_variance_capacity(&BetaChannelSpec::new(1.0).unwrap(), &QuadratureSpec::default()).unwrap();
        assert!((r.per_dim_bits - 0.45).abs() < 0.01, "{r:?}");
        assert!(r.quadrature_err.unwrap() < 1e-4);
    }

    #[test]
    fn table_rejects_empty() {
        assert!(beta_capacity_table(&[], &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn mc_requires_enough_samples() {
        let src = CapacitySource::Fixed(ChannelSpec::new(1.0, 1.0, 1).unwrap());
        assert!(mc_capacity_estimate(&src, 100, &mut Rng::new(0)).is_err());
    }
}
