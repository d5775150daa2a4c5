//! Gaussian mean-field parameter blocks and the training objectives built on them.
//!
//! Two code paths compute the fixed-variance objective. The tape path treats
//! each block as a variational posterior `N(μ, σ²)` and differentiates through
//! reparameterized samples. [`noisy_model_objective`] instead treats `μ` as a
//! point estimate `θ` of a model whose parameters are perturbed by Gaussian
//! noise before reaching the likelihood, scored with the log prior of `θ`.
//! Fed the same noise draws the two agree to the last bit.

use crate::autodiff::{Tape, Tensor, Var};
use crate::capacity::{fixed_variance_capacity, solve_noise_for_capacity, ChannelSpec};
use crate::error::{domain, Error, Result};
use crate::special_math::{gamma_log_density, normal_log_density, Rng};

/// Initial log-variance of learned-noise blocks.
pub const LEARNED_LOG_VARIANCE_INIT: f64 = -4.605_170_185_988_091; // ln 0.01

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseMode {
    /// Constant noise variance; zero disables noise entirely.
    Fixed { variance: f64 },
    /// Trainable per-element `ln σ²`, same shape as the mean.
    Learned { log_variance: Tensor },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Gaussian { variance: f64 },
    ImproperUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalParam {
    pub mean: Tensor,
    pub noise: NoiseMode,
    pub prior: Prior,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveValue {
    pub expected_log_likelihood: f64,
    pub regularizer: f64,
    pub total: f64,
    pub n_noise_samples: usize,
}

/// Tape handles of one registered block.
#[derive(Debug, Clone, Copy)]
pub struct ParamVars {
    pub mean: Var,
    pub log_variance: Option<Var>,
}

/// Objective recorded on a tape; `total` is the quantity to maximize.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveVars {
    pub total: Var,
    pub value: ObjectiveValue,
}

impl VariationalParam {
    pub fn fixed(mean: Tensor, variance: f64, prior: Prior) -> Result<Self> {
        let p = Self {
            mean,
            noise: NoiseMode::Fixed { variance },
            prior,
        };
        p.validate()?;
        Ok(p)
    }

    /// Fixed-noise block whose per-element capacity is `bits` under `prior_variance`.
    pub fn for_capacity(mean: Tensor, bits: f64, prior_variance: f64) -> Result<Self> {
        let variance = solve_noise_for_capacity(bits, prior_variance)?;
        Self::fixed(mean, variance, Prior::Gaussian { variance: prior_variance })
    }

    /// Learned-noise block with a unit Gaussian prior and `ln σ²` at its initial value.
    pub fn learned(mean: Tensor) -> Self {
        let log_variance = Tensor::new(
            mean.shape().to_vec(),
            vec![LEARNED_LOG_VARIANCE_INIT; mean.len()],
        )
        .expect("shape copied from mean");
        Self {
            mean,
            noise: NoiseMode::Learned { log_variance },
            prior: Prior::Gaussian { variance: 1.0 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.noise {
            NoiseMode::Fixed { variance } => {
                if !(*variance >= 0.0) || !variance.is_finite() {
                    return Err(domain("VariationalParam", format!("noise variance must be >= 0, got {variance}")));
                }
            }
            NoiseMode::Learned { log_variance } => {
                if log_variance.shape() != self.mean.shape() {
                    return Err(Error::Shape {
                        op: "VariationalParam",
                        lhs: self.mean.shape().to_vec(),
                        rhs: log_variance.shape().to_vec(),
                    });
                }
                if let Prior::Gaussian { variance } = self.prior {
                    if variance != 1.0 {
                        return Err(Error::Mode(format!(
                            "learned noise requires a unit prior variance, got {variance}"
                        )));
                    }
                }
            }
        }
        if let Prior::Gaussian { variance } = self.prior {
            if !(variance > 0.0) || !variance.is_finite() {
                return Err(domain("VariationalParam", format!("prior variance must be positive, got {variance}")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn is_learned(&self) -> bool {
        matches!(self.noise, NoiseMode::Learned { .. })
    }

    /// Per-element capacity in bits of a fixed-noise block with a Gaussian
    /// prior; `None` when it is unbounded or not defined by a closed form.
    pub fn capacity_bits(&self) -> Option<f64> {
        match (&self.noise, self.prior) {
            (NoiseMode::Fixed { variance }, Prior::Gaussian { variance: prior }) if *variance > 0.0 => {
                let spec = ChannelSpec {
                    prior_variance: prior,
                    noise_variance: *variance,
                    dims: 1,
                };
                fixed_variance_capacity(&spec).ok().map(|r| r.per_dim_bits)
            }
            _ => None,
        }
    }

    pub fn register(&self, tape: &mut Tape) -> ParamVars {
        let mean = tape.param(self.mean.clone());
        let log_variance = match &self.noise {
            NoiseMode::Learned { log_variance } => Some(tape.param(log_variance.clone())),
            NoiseMode::Fixed { .. } => None,
        };
        ParamVars { mean, log_variance }
    }

    /// One draw `μ + σ·ε` outside any tape.
    pub fn sample(&self, rng: &mut Rng) -> Tensor {
        let mut out = self.mean.clone();
        match &self.noise {
            NoiseMode::Fixed { variance } if *variance == 0.0 => {}
            NoiseMode::Fixed { variance } => {
                let sd = variance.sqrt();
                let mut eps = vec![0.0; self.len()];
                rng.fill_standard_normal(&mut eps);
                for (o, e) in out.data_mut().iter_mut().zip(&eps) {
                    *o += sd * e;
                }
            }
            NoiseMode::Learned { log_variance } => {
                let mut eps = vec![0.0; self.len()];
                rng.fill_standard_normal(&mut eps);
                for ((o, e), lv) in out.data_mut().iter_mut().zip(&eps).zip(log_variance.data()) {
                    *o += (lv * 0.5).exp() * e;
                }
            }
        }
        out
    }
}

/// Reparameterized sample `μ + σ⊙ε` recorded on the tape.
pub fn sample_noisy_params(tape: &mut Tape, p: &VariationalParam, vars: &ParamVars, rng: &mut Rng) -> Result<Var> {
    match &p.noise {
        NoiseMode::Fixed { variance } if *variance == 0.0 => Ok(vars.mean),
        NoiseMode::Fixed { variance } => {
            let sd = variance.sqrt();
            let mut eps = vec![0.0; p.len()];
            rng.fill_standard_normal(&mut eps);
            for e in eps.iter_mut() {
                *e *= sd;
            }
            let noise = tape.constant(Tensor::new(p.mean.shape().to_vec(), eps)?);
            tape.add(vars.mean, noise)
        }
        NoiseMode::Learned { .. } => {
            let lv = vars
                .log_variance
                .ok_or_else(|| Error::Mode("learned block registered without log-variance".into()))?;
            let mut eps = vec![0.0; p.len()];
            rng.fill_standard_normal(&mut eps);
            let eps = tape.constant(Tensor::new(p.mean.shape().to_vec(), eps)?);
            let half = tape.scale(lv, 0.5)?;
            let sd = tape.exp(half)?;
            let noise = tape.mul(sd, eps)?;
            tape.add(vars.mean, noise)
        }
    }
}

/// `−Σμ²/(2σ_p²)`, or zero under the improper prior.
pub fn fixed_variance_regularizer(tape: &mut Tape, p: &VariationalParam, vars: &ParamVars) -> Result<Var> {
    if p.is_learned() {
        return Err(Error::Mode("fixed-variance regularizer called on a learned-noise block".into()));
    }
    match p.prior {
        Prior::ImproperUniform => Ok(tape.constant(Tensor::scalar(0.0))),
        Prior::Gaussian { variance } => {
            let sq = tape.square(vars.mean)?;
            let s = tape.sum(sq)?;
            tape.scale(s, -0.5 / variance)
        }
    }
}

/// `(β/2) Σ (ln σ² − σ² − μ² − 1)`, or zero under the improper prior.
pub fn learned_variance_regularizer(tape: &mut Tape, p: &VariationalParam, vars: &ParamVars, beta: f64) -> Result<Var> {
    if !p.is_learned() {
        return Err(Error::Mode("learned-variance regularizer called on a fixed-noise block".into()));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(domain("learned_variance_regularizer", format!("beta must be positive, got {beta}")));
    }
    if p.prior == Prior::ImproperUniform {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let lv = vars
        .log_variance
        .ok_or_else(|| Error::Mode("learned block registered without log-variance".into()))?;
    let var = tape.exp(lv)?;
    let a = tape.sub(lv, var)?;
    let m2 = tape.square(vars.mean)?;
    let b = tape.sub(a, m2)?;
    let c = tape.add_scalar(b, -1.0)?;
    let s = tape.sum(c)?;
    tape.scale(s, 0.5 * beta)
}

/// Regularizer of either mode; `beta` only affects learned-noise blocks.
pub fn regularizer(tape: &mut Tape, p: &VariationalParam, vars: &ParamVars, beta: f64) -> Result<Var> {
    if p.is_learned() {
        learned_variance_regularizer(tape, p, vars, beta)
    } else {
        fixed_variance_regularizer(tape, p, vars)
    }
}

/// Value of [`regularizer`] without a tape.
pub fn regularizer_value(p: &VariationalParam, beta: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let vars = p.register(&mut tape);
    let r = regularizer(&mut tape, p, &vars, beta)?;
    Ok(tape.item(r))
}

fn check_modes(params: &[VariationalParam]) -> Result<()> {
    if let Some(first) = params.first() {
        let learned = first.is_learned();
        if params.iter().any(|p| p.is_learned() != learned) {
            return Err(Error::Mode("fixed and learned noise blocks mixed in one objective".into()));
        }
    }
    for p in params {
        p.validate()?;
    }
    Ok(())
}

/// Records `E[log-likelihood] + reg_scale · Σ regularizers` on the tape.
///
/// The expectation averages `n_noise_samples` reparameterized draws. For each
/// draw one noisy tensor per block is sampled, in block order, and handed to
/// `likelihood`, which must return a scalar. `reg_scale` lets minibatch
/// objectives carry the right share of the prior term.
#[allow(clippy::too_many_arguments)]
pub fn assemble_objective<F>(
    tape: &mut Tape,
    params: &[VariationalParam],
    vars: &[ParamVars],
    beta: f64,
    n_noise_samples: usize,
    reg_scale: f64,
    rng: &mut Rng,
    mut likelihood: F,
) -> Result<ObjectiveVars>
where
    F: FnMut(&mut Tape, &[Var], &mut Rng) -> Result<Var>,
{
    check_modes(params)?;
    if params.len() != vars.len() {
        return Err(Error::Mode(format!(
            "{} parameter blocks but {} registered handles",
            params.len(),
            vars.len()
        )));
    }
    if n_noise_samples == 0 {
        return Err(domain("assemble_objective", "n_noise_samples must be at least 1"));
    }
    let mut ell: Option<Var> = None;
    for _ in 0..n_noise_samples {
        let mut noisy = Vec::with_capacity(params.len());
        for (p, v) in params.iter().zip(vars) {
            noisy.push(sample_noisy_params(tape, p, v, rng)?);
        }
        let l = likelihood(tape, &noisy, rng)?;
        if !tape.shape(l).is_empty() {
            return Err(Error::NonScalarLoss(tape.shape(l).to_vec()));
        }
        ell = Some(match ell {
            None => l,
            Some(acc) => tape.add(acc, l)?,
        });
    }
    let ell = tape.scale(ell.expect("at least one sample"), 1.0 / n_noise_samples as f64)?;
    let mut reg: Option<Var> = None;
    for (p, v) in params.iter().zip(vars) {
        let r = regularizer(tape, p, v, beta)?;
        reg = Some(match reg {
            None => r,
            Some(acc) => tape.add(acc, r)?,
        });
    }
    let reg = match reg {
        Some(r) => tape.scale(r, reg_scale)?,
        None => tape.constant(Tensor::scalar(0.0)),
    };
    let total = tape.add(ell, reg)?;
    Ok(ObjectiveVars {
        total,
        value: ObjectiveValue {
            expected_log_likelihood: tape.item(ell),
            regularizer: tape.item(reg),
            total: tape.item(total),
            n_noise_samples,
        },
    })
}

/// The fixed-variance objective computed as point estimation in the noisy model.
///
/// Each block's mean is read as a point estimate `θ`. Every draw perturbs it to
/// `θ̃ = θ + σε` before the likelihood sees it, and the log prior of `θ` (up to
/// its normalizer) is added once. Uses the same draw order as
/// [`assemble_objective`].
pub fn noisy_model_objective<F>(
    params: &[VariationalParam],
    n_noise_samples: usize,
    reg_scale: f64,
    rng: &mut Rng,
    mut likelihood: F,
) -> Result<ObjectiveValue>
where
    F: FnMut(&[Tensor], &mut Rng) -> Result<f64>,
{
    check_modes(params)?;
    if params.iter().any(VariationalParam::is_learned) {
        return Err(Error::Mode("the noisy-model objective needs fixed noise".into()));
    }
    if n_noise_samples == 0 {
        return Err(domain("noisy_model_objective", "n_noise_samples must be at least 1"));
    }
    let mut ell: Option<f64> = None;
    for _ in 0..n_noise_samples {
        let mut perturbed = Vec::with_capacity(params.len());
        for p in params {
            let NoiseMode::Fixed { variance } = p.noise else { unreachable!() };
            let mut theta = p.mean.clone();
            if variance != 0.0 {
                let sd = variance.sqrt();
                let mut eps = vec![0.0; p.len()];
                rng.fill_standard_normal(&mut eps);
                for (t, e) in theta.data_mut().iter_mut().zip(&eps) {
                    *t += sd * e;
                }
            }
            perturbed.push(theta);
        }
        let l = likelihood(&perturbed, rng)?;
        ell = Some(match ell {
            None => l,
            Some(acc) => acc + l,
        });
    }
    let ell = ell.expect("at least one sample") * (1.0 / n_noise_samples as f64);
    let mut log_prior: Option<f64> = None;
    for p in params {
        let lp = match p.prior {
            Prior::ImproperUniform => 0.0,
            Prior::Gaussian { variance } => {
                let ss: f64 = p.mean.data().iter().map(|t| t * t).sum();
                ss * (-0.5 / variance)
            }
        };
        log_prior = Some(match log_prior {
            None => lp,
            Some(acc) => acc + lp,
        });
    }
    let reg = log_prior.map_or(0.0, |r| r * reg_scale);
    Ok(ObjectiveValue {
        expected_log_likelihood: ell,
        regularizer: reg,
        total: ell + reg,
        n_noise_samples,
    })
}

/// `KL(N(μ, σ²) ‖ N(0, 1))`.
pub fn gaussian_kl_standard(mean: f64, variance: f64) -> f64 {
    0.5 * (variance + mean * mean - 1.0 - variance.ln())
}

/// `Σᵢ [ln N(θᵢ; 0, 1/β) + ln Gamma(σ²ᵢ; β/2 + 1, β/2)]`, the log density of
/// the priors under which the β-scaled regularizer arises.
pub fn analytic_prior_logdensity_check(theta: &[f64], variance: &[f64], beta: f64) -> Result<f64> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(domain("analytic_prior_logdensity_check", format!("beta must be positive, got {beta}")));
    }
    if theta.len() != variance.len() {
        return Err(Error::Shape {
            op: "analytic_prior_logdensity_check",
            lhs: vec![theta.len()],
            rhs: vec![variance.len()],
        });
    }
    if let Some(bad) = variance.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(domain("analytic_prior_logdensity_check", format!("variance must be positive, got {bad}")));
    }
    let (shape, rate) = (0.5 * beta + 1.0, 0.5 * beta);
    Ok(theta
        .iter()
        .zip(variance)
        .map(|(&t, &v)| normal_log_density(t, 0.0, 1.0 / beta) + gamma_log_density(v, shape, rate))
        .sum())
}
