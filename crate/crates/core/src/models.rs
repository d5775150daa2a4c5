//! MLP classifier and VAE whose weights are all mean-field parameter blocks.
//!
//! Weights of a layer are stored `[fan_in × fan_out]`, so a batch `[n × fan_in]`
//! maps to `x·W + b`. Parameter blocks are ordered encoder first, then decoder,
//! weight before bias within a layer. The `*_plain` functions evaluate the same
//! computations on bare tensors, for evaluation and as an independent path.

use crate::autodiff::kernels;
use crate::autodiff::{Tape, Tensor, Var, Variance};
use crate::error::{domain, Error, Result};
use crate::mean_field::{
    assemble_objective, gaussian_kl_standard, NoiseMode, ObjectiveVars, ParamVars, Prior, VariationalParam,
};
use crate::special_math::{sigmoid, softplus, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Classifier,
    Vae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Likelihood {
    Categorical,
    Bernoulli,
    /// Factorized Gaussian with a fixed observation variance.
    Gaussian { variance: f64 },
}

/// How the noise of every parameter block is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseSpec {
    /// No parameter noise: point estimation.
    Zero,
    Fixed { variance: f64 },
    /// Fixed noise solved from a per-parameter capacity under the prior variance.
    CapacityBits(f64),
    /// Trainable noise with the β-scaled regularizer.
    Learned { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Classifier: every layer width, input to classes. VAE: input width then
    /// the hidden widths of the encoder; the decoder mirrors them.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub likelihood: Likelihood,
    pub latent_dim: usize,
    pub noise: NoiseSpec,
    pub prior: Prior,
}

impl ModelSpec {
    pub fn classifier(layer_widths: Vec<usize>, noise: NoiseSpec, prior: Prior) -> Self {
        Self {
            kind: ModelKind::Classifier,
            layer_widths,
            activation: Activation::Relu,
            likelihood: Likelihood::Categorical,
            latent_dim: 0,
            noise,
            prior,
        }
    }

    pub fn vae(input: usize, hidden: &[usize], latent_dim: usize, noise: NoiseSpec, prior: Prior) -> Self {
        let mut layer_widths = vec![input];
        layer_widths.extend_from_slice(hidden);
        Self {
            kind: ModelKind::Vae,
            layer_widths,
            activation: Activation::Relu,
            likelihood: Likelihood::Bernoulli,
            latent_dim,
            noise,
            prior,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.contains(&0) {
            return Err(Error::Spec(format!("layer widths must be positive: {:?}", self.layer_widths)));
        }
        match self.kind {
            ModelKind::Classifier => {
                if self.layer_widths.len() < 2 {
                    return Err(Error::Spec("a classifier needs at least input and output widths".into()));
                }
                if self.likelihood != Likelihood::Categorical {
                    return Err(Error::Spec("a classifier uses the categorical likelihood".into()));
                }
            }
            ModelKind::Vae => {
                if self.layer_widths.is_empty() {
                    return Err(Error::Spec("a vae needs an input width".into()));
                }
                if self.latent_dim == 0 {
                    return Err(Error::Spec("a vae needs latent_dim >= 1".into()));
                }
                match self.likelihood {
                    Likelihood::Categorical => {
                        return Err(Error::Spec("a vae uses a bernoulli or gaussian likelihood".into()))
                    }
                    Likelihood::Gaussian { variance } if !(variance > 0.0) => {
                        return Err(Error::Spec(format!("observation variance must be positive, got {variance}")))
                    }
                    _ => {}
                }
            }
        }
        match self.noise {
            NoiseSpec::Fixed { variance } if !(variance > 0.0) || !variance.is_finite() => {
                Err(Error::Spec(format!("noise variance must be positive, got {variance}")))
            }
            NoiseSpec::CapacityBits(bits) if !(bits > 0.0) || !bits.is_finite() => {
                Err(Error::Spec(format!("capacity must be positive and finite, got {bits}")))
            }
            NoiseSpec::CapacityBits(_) if !matches!(self.prior, Prior::Gaussian { .. }) => Err(Error::Spec(
                "a capacity target needs a gaussian prior to map onto a noise variance".into(),
            )),
            NoiseSpec::Learned { beta } if !(beta > 0.0) || !beta.is_finite() => {
                Err(Error::Spec(format!("beta must be positive, got {beta}")))
            }
            NoiseSpec::Learned { .. } if matches!(self.prior, Prior::Gaussian { variance } if variance != 1.0) => {
                Err(Error::Spec("learned noise requires a unit prior variance".into()))
            }
            _ => Ok(()),
        }
    }

    /// Widths of the encoder (or of the whole classifier).
    pub fn encoder_widths(&self) -> Vec<usize> {
        let mut w = self.layer_widths.clone();
        if self.kind == ModelKind::Vae {
            w.push(2 * self.latent_dim);
        }
        w
    }

    /// Decoder widths, empty for a classifier.
    pub fn decoder_widths(&self) -> Vec<usize> {
        match self.kind {
            ModelKind::Classifier => vec![],
            ModelKind::Vae => {
                let mut w = vec![self.latent_dim];
                w.extend(self.layer_widths[1..].iter().rev());
                w.push(self.layer_widths[0]);
                w
            }
        }
    }

    /// Noise variance every block gets; `None` for learned noise.
    pub fn noise_variance(&self) -> Result<Option<f64>> {
        match (self.noise, self.prior) {
            (NoiseSpec::Zero, _) => Ok(Some(0.0)),
            (NoiseSpec::Fixed { variance }, _) => Ok(Some(variance)),
            (NoiseSpec::CapacityBits(bits), Prior::Gaussian { variance }) => {
                crate::capacity::solve_noise_for_capacity(bits, variance).map(Some)
            }
            (NoiseSpec::CapacityBits(_), Prior::ImproperUniform) => Err(Error::Spec(
                "a capacity target needs a gaussian prior to map onto a noise variance".into(),
            )),
            (NoiseSpec::Learned { .. }, _) => Ok(None),
        }
    }

    pub fn beta(&self) -> f64 {
        match self.noise {
            NoiseSpec::Learned { beta } => beta,
            _ => 1.0,
        }
    }
}

fn layer_param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

/// Number of scalar parameters the spec's network has.
pub fn parameter_count(spec: &ModelSpec) -> usize {
    layer_param_count(&spec.encoder_widths()) + layer_param_count(&spec.decoder_widths())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: VariationalParam,
    pub bias: VariationalParam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub encoder: Vec<Dense>,
    pub decoder: Vec<Dense>,
}

/// Per-datapoint quantities of one VAE forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeOutput {
    pub latent_mean: Tensor,
    pub latent_log_variance: Tensor,
    /// Decoder outputs: logits (bernoulli) or means (gaussian).
    pub reconstruction: Tensor,
    pub reconstruction_ll: Vec<f64>,
    pub latent_kl: Vec<f64>,
}

impl VaeOutput {
    pub fn elbo(&self) -> Vec<f64> {
        self.reconstruction_ll.iter().zip(&self.latent_kl).map(|(r, k)| r - k).collect()
    }
}

fn make_block(mean: Tensor, spec: &ModelSpec, noise_variance: Option<f64>) -> Result<VariationalParam> {
    let p = match noise_variance {
        Some(v) => VariationalParam {
            mean,
            noise: NoiseMode::Fixed { variance: v },
            prior: spec.prior,
        },
        None => {
            let mut p = VariationalParam::learned(mean);
            p.prior = spec.prior;
            p
        }
    };
    p.validate()?;
    Ok(p)
}

fn build_layers(widths: &[usize], spec: &ModelSpec, nv: Option<f64>, rng: &mut Rng) -> Result<Vec<Dense>> {
    widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let mut uniform = |n: usize| -> Vec<f64> { (0..n).map(|_| bound * (2.0 * rng.uniform() - 1.0)).collect() };
            let weight = Tensor::matrix(fan_in, fan_out, uniform(fan_in * fan_out))?;
            let bias = Tensor::vector(uniform(fan_out));
            Ok(Dense {
                weight: make_block(weight, spec, nv)?,
                bias: make_block(bias, spec, nv)?,
            })
        })
        .collect()
}

/// Builds a model with means drawn uniformly from `±1/√fan_in`.
pub fn build_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model> {
    spec.validate()?;
    let nv = spec.noise_variance()?;
    let encoder = build_layers(&spec.encoder_widths(), spec, nv, rng)?;
    let decoder = build_layers(&spec.decoder_widths(), spec, nv, rng)?;
    Ok(Model {
        spec: spec.clone(),
        encoder,
        decoder,
    })
}

impl Model {
    pub fn params(&self) -> Vec<&VariationalParam> {
        self.encoder
            .iter()
            .chain(&self.decoder)
            .flat_map(|d| [&d.weight, &d.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut VariationalParam> {
        self.encoder
            .iter_mut()
            .chain(self.decoder.iter_mut())
            .flat_map(|d| [&mut d.weight, &mut d.bias])
            .collect()
    }

    /// Owned copies of every block, in parameter order.
    pub fn param_blocks(&self) -> Vec<VariationalParam> {
        self.params().into_iter().cloned().collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Per-parameter capacity in bits; `None` when unbounded or learned.
    pub fn capacity_bits_per_param(&self) -> Option<f64> {
        self.params().first().and_then(|p| p.capacity_bits())
    }

    pub fn capacity_bits_total(&self) -> Option<f64> {
        self.capacity_bits_per_param().map(|b| b * self.parameter_count() as f64)
    }

    pub fn register(&self, tape: &mut Tape) -> Vec<ParamVars> {
        self.params().into_iter().map(|p| p.register(tape)).collect()
    }

    pub fn mean_weights(&self) -> Vec<Tensor> {
        self.params().into_iter().map(|p| p.mean.clone()).collect()
    }

    pub fn sample_weights(&self, rng: &mut Rng) -> Vec<Tensor> {
        self.params().into_iter().map(|p| p.sample(rng)).collect()
    }

    fn n_encoder_blocks(&self) -> usize {
        2 * self.encoder.len()
    }
}

/// MLP on the tape; `weights` alternates weight and bias handles.
pub fn mlp(tape: &mut Tape, x: Var, weights: &[Var]) -> Result<Var> {
    let layers = weights.len() / 2;
    let mut h = x;
    for (i, wb) in weights.chunks(2).enumerate() {
        let z = tape.matmul(h, wb[0])?;
        h = tape.add_bias(z, wb[1])?;
        if i + 1 < layers {
            h = tape.relu(h)?;
        }
    }
    Ok(h)
}

/// MLP on bare tensors; `weights` alternates weight and bias.
pub fn mlp_plain(x: &Tensor, weights: &[Tensor]) -> Result<Tensor> {
    let layers = weights.len() / 2;
    let (n, mut k) = x.rows_cols();
    let mut h = x.data().to_vec();
    for (i, wb) in weights.chunks(2).enumerate() {
        let (wk, m) = wb[0].rows_cols();
        if wk != k || wb[1].len() != m {
            return Err(Error::Shape {
                op: "mlp_plain",
                lhs: vec![n, k],
                rhs: wb[0].shape().to_vec(),
            });
        }
        let mut z = kernels::matmul(&h, wb[0].data(), n, k, m);
        if m > 0 {
            for row in z.chunks_mut(m) {
                for (v, b) in row.iter_mut().zip(wb[1].data()) {
                    *v += b;
                }
            }
        }
        if i + 1 < layers {
            for v in z.iter_mut() {
                *v = if *v > 0.0 { *v } else { 0.0 };
            }
        }
        h = z;
        k = m;
    }
    Tensor::matrix(n, k, h)
}

/// Mean per-datapoint log-likelihood plus `reg_scale ·` regularizer, with
/// `reg_scale = 1/N_train` for an unbiased estimate of the full objective over N.
#[allow(clippy::too_many_arguments)]
pub fn classifier_loss(
    tape: &mut Tape,
    model: &Model,
    vars: &[ParamVars],
    x: &Tensor,
    labels: &[usize],
    n_train: usize,
    n_noise_samples: usize,
    rng: &mut Rng,
) -> Result<ObjectiveVars> {
    if model.spec.kind != ModelKind::Classifier {
        return Err(Error::Spec("classifier_loss on a vae".into()));
    }
    let blocks = model.param_blocks();
    let reg_scale = 1.0 / n_train.max(1) as f64;
    let beta = model.spec.beta();
    assemble_objective(tape, &blocks, vars, beta, n_noise_samples, reg_scale, rng, |t, noisy, _| {
        let xv = t.constant(x.clone());
        let logits = mlp(t, xv, noisy)?;
        let ce = t.softmax_cross_entropy(logits, labels)?;
        t.scale(ce, -1.0)
    })
}

/// `(Σ log p(y|x), correct predictions)` on bare tensors.
pub fn classifier_log_likelihood_plain(weights: &[Tensor], x: &Tensor, labels: &[usize]) -> Result<(f64, usize)> {
    let logits = mlp_plain(x, weights)?;
    let (n, c) = logits.rows_cols();
    if n != labels.len() {
        return Err(Error::Shape {
            op: "classifier_log_likelihood_plain",
            lhs: vec![n, c],
            rhs: vec![labels.len()],
        });
    }
    let mut total = 0.0;
    let mut correct = 0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(domain("classifier_log_likelihood_plain", format!("label {y} out of range")));
        }
        let row = &logits.data()[i * c..(i + 1) * c];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        total += lse - row[y];
        let argmax = row
            .iter()
            .enumerate()
            .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
        if argmax == y {
            correct += 1;
        }
    }
    Ok((-total, correct))
}

/// Mean log-likelihood matching [`classifier_loss`]'s likelihood term exactly.
pub fn classifier_mean_log_likelihood_plain(weights: &[Tensor], x: &Tensor, labels: &[usize]) -> Result<f64> {
    let logits = mlp_plain(x, weights)?;
    let (_, c) = logits.rows_cols();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits.data()[i * c..(i + 1) * c];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    Ok(-(total / labels.len() as f64))
}

fn check_vae_batch(model: &Model, x: &Tensor) -> Result<()> {
    if model.spec.kind != ModelKind::Vae {
        return Err(Error::Spec("vae operation on a classifier".into()));
    }
    let (_, d) = x.rows_cols();
    if x.shape().len() != 2 || d != model.spec.layer_widths[0] {
        return Err(Error::Shape {
            op: "vae",
            lhs: x.shape().to_vec(),
            rhs: vec![model.spec.layer_widths[0]],
        });
    }
    if model.spec.likelihood == Likelihood::Bernoulli {
        if let Some(bad) = x.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(domain("vae_loss", format!("bernoulli likelihood needs binary data, got {bad}")));
        }
    }
    Ok(())
}

struct VaeVars {
    mu: Var,
    lv: Var,
    recon: Var,
    recon_rows: Var,
    kl_rows: Var,
}

fn vae_forward(tape: &mut Tape, model: &Model, noisy: &[Var], x: &Tensor, rng: &mut Rng) -> Result<VaeVars> {
    let l = model.spec.latent_dim;
    let (n, _) = x.rows_cols();
    let ne = model.n_encoder_blocks();
    let xv = tape.constant(x.clone());
    let enc = mlp(tape, xv, &noisy[..ne])?;
    let mu = tape.slice_cols(enc, 0, l)?;
    let lv = tape.slice_cols(enc, l, l)?;
    let mut eps = vec![0.0; n * l];
    rng.fill_standard_normal(&mut eps);
    let eps = tape.constant(Tensor::matrix(n, l, eps)?);
    let half = tape.scale(lv, 0.5)?;
    let sd = tape.exp(half)?;
    let noise = tape.mul(sd, eps)?;
    let z = tape.add(mu, noise)?;
    let recon = mlp(tape, z, &noisy[ne..])?;
    let recon_rows = match model.spec.likelihood {
        Likelihood::Bernoulli => tape.bernoulli_log_likelihood_rows(xv, recon)?,
        Likelihood::Gaussian { variance } => tape.gaussian_log_likelihood_rows(xv, recon, Variance::Scalar(variance))?,
        Likelihood::Categorical => unreachable!("validated"),
    };
    let var = tape.exp(lv)?;
    let m2 = tape.square(mu)?;
    let a = tape.add(var, m2)?;
    let b = tape.add_scalar(a, -1.0)?;
    let c = tape.sub(b, lv)?;
    let kr = tape.sum_rows(c)?;
    let kl_rows = tape.scale(kr, 0.5)?;
    Ok(VaeVars {
        mu,
        lv,
        recon,
        recon_rows,
        kl_rows,
    })
}

/// Batch ELBO `Σᵢ [E log p(xᵢ|z) − KL(q(z|xᵢ) ‖ N(0, I))]` plus the parameter
/// regularizer scaled by `batch_size / n_train`. The latent uses one
/// reparameterized sample per datapoint and noise draw. The returned output
/// belongs to the last noise draw.
#[allow(clippy::too_many_arguments)]
pub fn vae_loss(
    tape: &mut Tape,
    model: &Model,
    vars: &[ParamVars],
    x: &Tensor,
    n_train: usize,
    n_noise_samples: usize,
    rng: &mut Rng,
) -> Result<(ObjectiveVars, VaeOutput)> {
    check_vae_batch(model, x)?;
    let blocks = model.param_blocks();
    let (n, _) = x.rows_cols();
    let reg_scale = n as f64 / n_train.max(1) as f64;
    let beta = model.spec.beta();
    let mut last: Option<VaeVars> = None;
    let obj = assemble_objective(tape, &blocks, vars, beta, n_noise_samples, reg_scale, rng, |t, noisy, r| {
        let v = vae_forward(t, model, noisy, x, r)?;
        let elbo = t.sub(v.recon_rows, v.kl_rows)?;
        let s = t.sum(elbo)?;
        last = Some(v);
        Ok(s)
    })?;
    let v = last.expect("at least one sample");
    let out = VaeOutput {
        latent_mean: tape.tensor(v.mu),
        latent_log_variance: tape.tensor(v.lv),
        reconstruction: tape.tensor(v.recon),
        reconstruction_ll: tape.value(v.recon_rows).to_vec(),
        latent_kl: tape.value(v.kl_rows).to_vec(),
    };
    Ok((obj, out))
}

/// Per-datapoint `(reconstruction log-likelihood, latent KL)` on bare tensors,
/// drawing the latent noise from `rng` like [`vae_loss`] does.
pub fn vae_terms_plain(model: &Model, weights: &[Tensor], x: &Tensor, rng: &mut Rng) -> Result<(Vec<f64>, Vec<f64>)> {
    check_vae_batch(model, x)?;
    let l = model.spec.latent_dim;
    let ne = model.n_encoder_blocks();
    let enc = mlp_plain(x, &weights[..ne])?;
    let (n, d) = x.rows_cols();
    let mut eps = vec![0.0; n * l];
    rng.fill_standard_normal(&mut eps);
    let mut z = vec![0.0; n * l];
    let mut kl = vec![0.0; n];
    for i in 0..n {
        let row = &enc.data()[i * 2 * l..(i + 1) * 2 * l];
        let mut acc = 0.0;
        for j in 0..l {
            let (mu, lv) = (row[j], row[l + j]);
            z[i * l + j] = mu + (lv * 0.5).exp() * eps[i * l + j];
            acc += lv.exp() + mu * mu + -1.0 - lv;
        }
        kl[i] = acc * 0.5;
    }
    let out = mlp_plain(&Tensor::matrix(n, l, z)?, &weights[ne..])?;
    let (xd, od) = (x.data(), out.data());
    let recon = (0..n)
        .map(|i| {
            let r = i * d..(i + 1) * d;
            match model.spec.likelihood {
                Likelihood::Bernoulli => r.map(|j| xd[j] * od[j] - softplus(od[j])).sum(),
                Likelihood::Gaussian { variance } => r
                    .map(|j| {
                        let e = xd[j] - od[j];
                        -0.5 * (2.0 * std::f64::consts::PI * variance).ln() - e * e / (2.0 * variance)
                    })
                    .sum(),
                Likelihood::Categorical => unreachable!("validated"),
            }
        })
        .collect();
    Ok((recon, kl))
}

/// Same as [`vae_terms_plain`] but with the latent fixed at its mean.
pub fn vae_terms_at_latent_mean(model: &Model, weights: &[Tensor], x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    check_vae_batch(model, x)?;
    let l = model.spec.latent_dim;
    let ne = model.n_encoder_blocks();
    let enc = mlp_plain(x, &weights[..ne])?;
    let (n, d) = x.rows_cols();
    let mut z = vec![0.0; n * l];
    let mut kl = vec![0.0; n];
    for i in 0..n {
        let row = &enc.data()[i * 2 * l..(i + 1) * 2 * l];
        for j in 0..l {
            z[i * l + j] = row[j];
            kl[i] += gaussian_kl_standard(row[j], row[l + j].exp());
        }
    }
    let out = mlp_plain(&Tensor::matrix(n, l, z)?, &weights[ne..])?;
    let (xd, od) = (x.data(), out.data());
    let recon = (0..n)
        .map(|i| {
            (i * d..(i + 1) * d)
                .map(|j| match model.spec.likelihood {
                    Likelihood::Gaussian { variance } => {
                        crate::special_math::normal_log_density(xd[j], od[j], variance)
                    }
                    _ => xd[j] * od[j] - softplus(od[j]),
                })
                .sum()
        })
        .collect();
    Ok((recon, kl))
}

/// Pixel means of the reconstructions, averaged over parameter-noise draws.
/// The encoder's latent mean is decoded directly.
pub fn reconstruct_means(model: &Model, x: &Tensor, rng: &mut Rng, n_noise_samples: usize) -> Result<Tensor> {
    if model.spec.kind != ModelKind::Vae {
        return Err(Error::Spec("reconstruct_means needs a vae".into()));
    }
    if n_noise_samples == 0 {
        return Err(domain("reconstruct_means", "n_noise_samples must be at least 1"));
    }
    let l = model.spec.latent_dim;
    let ne = model.n_encoder_blocks();
    let (n, d) = x.rows_cols();
    let mut acc = vec![0.0; n * d];
    for _ in 0..n_noise_samples {
        let w = model.sample_weights(rng);
        let enc = mlp_plain(x, &w[..ne])?;
        let mut z = vec![0.0; n * l];
        for i in 0..n {
            z[i * l..(i + 1) * l].copy_from_slice(&enc.data()[i * 2 * l..i * 2 * l + l]);
        }
        let out = mlp_plain(&Tensor::matrix(n, l, z)?, &w[ne..])?;
        for (a, &o) in acc.iter_mut().zip(out.data()) {
            *a += match model.spec.likelihood {
                Likelihood::Gaussian { .. } => o.clamp(0.0, 1.0),
                _ => sigmoid(o),
            };
        }
    }
    let inv = 1.0 / n_noise_samples as f64;
    Tensor::matrix(n, d, acc.into_iter().map(|a| a * inv).collect())
}
