use std::time::Instant;

use super::optim::{Optimizer, OptimizerSpec};
use crate::autodiff::Tape;
use crate::data::{epoch_batches, Dataset};
use crate::error::{Error, Result};
use crate::models::{
    classifier_log_likelihood_plain, classifier_loss, vae_loss, vae_terms_plain, Model, ModelKind,
};
use crate::special_math::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerSpec,
    /// Parameter-noise draws per training step.
    pub train_noise_samples: usize,
    /// Parameter-noise draws per evaluation.
    pub eval_noise_samples: usize,
    /// Evaluate every this many epochs; the last epoch is always evaluated.
    pub eval_every: usize,
    /// When set, overrides `optimizer.epochs` with the fewest epochs that
    /// reach this many optimizer steps.
    pub step_budget: Option<usize>,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerSpec::default(),
            train_noise_samples: 1,
            eval_noise_samples: 8,
            eval_every: 1,
            step_budget: None,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.train_noise_samples == 0 {
            return Err(Error::Config("train_noise_samples must be at least 1".into()));
        }
        if self.eval_noise_samples == 0 {
            return Err(Error::Config("eval_noise_samples must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.step_budget == Some(0) {
            return Err(Error::Config("step_budget must be at least 1".into()));
        }
        Ok(())
    }

    /// Epoch count for a training set of `n` items.
    pub fn epochs_for(&self, n: usize) -> usize {
        match self.step_budget {
            None => self.optimizer.epochs,
            Some(steps) => {
                let per_epoch = n.div_ceil(self.optimizer.batch_size).max(1);
                steps.div_ceil(per_epoch)
            }
        }
    }
}

/// Per-datapoint metrics of one evaluation. "Noisy" values average over
/// parameter-noise draws; "mean" values use the posterior means.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Expected log-likelihood: `log p(y|x)` for a classifier, the
    /// reconstruction term for a VAE.
    pub ll: f64,
    /// Standard error of `ll` across noise draws (NaN for a single draw).
    pub ll_std_err: f64,
    pub elbo_noisy: f64,
    pub elbo_mean: f64,
    /// Classification accuracy at the means.
    pub accuracy: Option<f64>,
}

impl Metrics {
    pub fn missing() -> Self {
        Self {
            ll: f64::NAN,
            ll_std_err: f64::NAN,
            elbo_noisy: f64::NAN,
            elbo_mean: f64::NAN,
            accuracy: None,
        }
    }

    pub fn is_missing(&self) -> bool {
        self.ll.is_nan()
    }
}

fn mean_and_std_err(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Evaluates without touching the model. Draws noise from `rng`.
pub fn evaluate(model: &Model, data: &Dataset, rng: &mut Rng, n_noise_samples: usize) -> Result<Metrics> {
    if n_noise_samples == 0 {
        return Err(Error::Config("eval_noise_samples must be at least 1".into()));
    }
    let n = data.len();
    if n == 0 {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let nf = n as f64;
    match model.spec.kind {
        ModelKind::Classifier => {
            let labels = data
                .labels
                .as_deref()
                .ok_or_else(|| Error::Data("classifier evaluation needs labels".into()))?;
            let mut lls = Vec::with_capacity(n_noise_samples);
            for _ in 0..n_noise_samples {
                let w = model.sample_weights(rng);
                lls.push(classifier_log_likelihood_plain(&w, &data.images, labels)?.0 / nf);
            }
            let (ll, se) = mean_and_std_err(&lls);
            let (ll_mean, correct) = classifier_log_likelihood_plain(&model.mean_weights(), &data.images, labels)?;
            Ok(Metrics {
                ll,
                ll_std_err: se,
                elbo_noisy: ll,
                elbo_mean: ll_mean / nf,
                accuracy: Some(correct as f64 / nf),
            })
        }
        ModelKind::Vae => {
            // latent noise of the at-mean pass must not depend on how many
            // parameter draws came before it
            let mut mean_rng = rng.fork();
            let mut lls = Vec::with_capacity(n_noise_samples);
            let mut elbos = Vec::with_capacity(n_noise_samples);
            for _ in 0..n_noise_samples {
                let w = model.sample_weights(rng);
                let (r, k) = vae_terms_plain(model, &w, &data.images, rng)?;
                lls.push(r.iter().sum::<f64>() / nf);
                elbos.push(r.iter().zip(&k).map(|(a, b)| a - b).sum::<f64>() / nf);
            }
            let (ll, se) = mean_and_std_err(&lls);
            let (elbo_noisy, _) = mean_and_std_err(&elbos);
            let (r, k) = vae_terms_plain(model, &model.mean_weights(), &data.images, &mut mean_rng)?;
            let elbo_mean = r.iter().zip(&k).map(|(a, b)| a - b).sum::<f64>() / nf;
            Ok(Metrics {
                ll,
                ll_std_err: se,
                elbo_noisy,
                elbo_mean,
                accuracy: None,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train: Metrics,
    pub test: Metrics,
    /// Mean training objective over the epoch's steps.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub axis_value: f64,
    pub repeat: usize,
    pub seed: u64,
    pub config_digest: u64,
    pub epochs: Vec<EpochMetrics>,
    pub wall_time_s: f64,
    pub parameter_count: usize,
    pub capacity_bits_per_param: Option<f64>,
    pub capacity_bits_total: Option<f64>,
    pub status: RunStatus,
}

impl RunRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    /// Metrics of the last evaluated epoch.
    pub fn final_metrics(&self) -> Option<&EpochMetrics> {
        self.epochs.iter().rev().find(|e| !e.test.is_missing())
    }
}

/// Trains `model` in place by maximizing its objective and records metrics.
///
/// The batch order, the parameter noise and the evaluation noise come from
/// three streams split off `rng`, so the run is a pure function of the model,
/// the data, the config and the generator state.
pub fn train(model: &mut Model, train_set: &Dataset, test_set: &Dataset, cfg: &TrainConfig, rng: &mut Rng) -> Result<RunRecord> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let start = Instant::now();
    let batch_seed = rng.next_u64();
    let mut noise_rng = rng.fork();
    let mut eval_rng = rng.fork();
    let n = train_set.len();
    let epochs = cfg.epochs_for(n);
    let mut opt = Optimizer::for_model(cfg.optimizer, model);
    let mut tape = Tape::new();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut objective_sum = 0.0;
        let batches = epoch_batches(n, cfg.optimizer.batch_size, batch_seed, epoch as u64, cfg.shuffle)?;
        for idx in &batches {
            tape.reset();
            let vars = model.register(&mut tape);
            let (x, y) = train_set.batch(idx)?;
            let obj = match model.spec.kind {
                ModelKind::Classifier => {
                    let y = y.ok_or_else(|| Error::Data("classifier training needs labels".into()))?;
                    classifier_loss(&mut tape, model, &vars, &x, &y, n, cfg.train_noise_samples, &mut noise_rng)?
                }
                ModelKind::Vae => vae_loss(&mut tape, model, &vars, &x, n, cfg.train_noise_samples, &mut noise_rng)?.0,
            };
            if !obj.value.total.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: "objective".into(),
                });
            }
            objective_sum += obj.value.total;
            let loss = tape.scale(obj.total, -1.0)?;
            tape.backward(loss)?;
            opt.step_model(model, &tape, &vars)?;
        }
        let evaluate_now = (epoch + 1) % cfg.eval_every == 0 || epoch + 1 == epochs;
        let (train_m, test_m) = if evaluate_now {
            let tr = evaluate(model, train_set, &mut eval_rng, cfg.eval_noise_samples)?;
            let te = evaluate(model, test_set, &mut eval_rng, cfg.eval_noise_samples)?;
            if !tr.ll.is_finite() || !te.ll.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    what: "log-likelihood".into(),
                });
            }
            (tr, te)
        } else {
            (Metrics::missing(), Metrics::missing())
        };
        history.push(EpochMetrics {
            epoch,
            train: train_m,
            test: test_m,
            objective: objective_sum / batches.len() as f64,
        });
    }
    Ok(RunRecord {
        run_id: 0,
        axis_value: f64::NAN,
        repeat: 0,
        seed: rng.seed(),
        config_digest: 0,
        epochs: history,
        wall_time_s: start.elapsed().as_secs_f64(),
        parameter_count: model.parameter_count(),
        capacity_bits_per_param: model.capacity_bits_per_param(),
        capacity_bits_total: model.capacity_bits_total(),
        status: RunStatus::Ok,
    })
}
