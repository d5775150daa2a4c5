use rayon::prelude::*;

use super::train::{train, RunRecord, RunStatus, TrainConfig};
use crate::capacity::solve_noise_for_capacity;
use crate::data::{fnv1a64, Dataset};
use crate::error::{Error, Result};
use crate::mean_field::Prior;
use crate::models::{build_model, parameter_count, Model, ModelKind, ModelSpec, NoiseSpec};
use crate::special_math::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Per-parameter capacity in bits; `inf` means no noise and an improper prior.
    CapacityBits,
    DatasetSize,
    /// Number of weight layers.
    Depth,
    Beta,
    PriorVariance,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::CapacityBits => "capacity_bits",
            SweepAxis::DatasetSize => "dataset_size",
            SweepAxis::Depth => "depth",
            SweepAxis::Beta => "beta",
            SweepAxis::PriorVariance => "prior_variance",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "capacity_bits" => SweepAxis::CapacityBits,
            "dataset_size" => SweepAxis::DatasetSize,
            "depth" => SweepAxis::Depth,
            "beta" => SweepAxis::Beta,
            "prior_variance" => SweepAxis::PriorVariance,
            other => return Err(Error::Config(format!("axis: unknown sweep axis {other:?}"))),
        })
    }
}

/// One training configuration, before a sweep axis is applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub train: TrainConfig,
    /// Use only the first this many training items.
    pub train_size: Option<usize>,
    /// Width of every hidden layer when the depth axis rebuilds the network.
    pub hidden_width: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub repeats: usize,
    pub base: ExperimentConfig,
    pub base_seed: u64,
    /// Worker threads; results are ordered the same for any value.
    pub jobs: usize,
}

/// Summary of one axis value over its successful repeats.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub axis_value: f64,
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("values: sweep needs at least one value".into()));
        }
        if self.repeats == 0 {
            return Err(Error::Config("repeats must be at least 1".into()));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        for &v in &self.values {
            self.config_for(v)?;
        }
        Ok(())
    }

    /// The configuration with the axis set to `value`, and the per-parameter
    /// capacity that value stands for.
    pub fn config_for(&self, value: f64) -> Result<(ExperimentConfig, Option<f64>)> {
        let mut cfg = self.base.clone();
        let bad = |what: &str| Error::Config(format!("values: {value} is not a valid {what}"));
        let mut mapped_bits = None;
        match self.axis {
            SweepAxis::CapacityBits => {
                if value == f64::INFINITY {
                    cfg.model.noise = NoiseSpec::Zero;
                    cfg.model.prior = Prior::ImproperUniform;
                } else if value > 0.0 && value.is_finite() {
                    mapped_bits = Some(value);
                    match cfg.model.prior {
                        Prior::Gaussian { .. } => cfg.model.noise = NoiseSpec::CapacityBits(value),
                        // noise mapped as if under a unit prior
                        Prior::ImproperUniform => {
                            cfg.model.noise = NoiseSpec::Fixed {
                                variance: solve_noise_for_capacity(value, 1.0)?,
                            }
                        }
                    }
                } else {
                    return Err(bad("capacity"));
                }
            }
            SweepAxis::DatasetSize => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(bad("dataset size"));
                }
                cfg.train_size = Some(value as usize);
            }
            SweepAxis::Depth => {
                if !(value >= 1.0) || value.fract() != 0.0 {
                    return Err(bad("depth"));
                }
                let hidden = vec![cfg.hidden_width; value as usize - 1];
                let w = &cfg.model.layer_widths;
                cfg.model.layer_widths = match cfg.model.kind {
                    ModelKind::Classifier => {
                        let mut v = vec![w[0]];
                        v.extend(&hidden);
                        v.push(*w.last().expect("validated"));
                        v
                    }
                    ModelKind::Vae => {
                        let mut v = vec![w[0]];
                        v.extend(&hidden);
                        v
                    }
                };
            }
            SweepAxis::Beta => {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(bad("beta"));
                }
                cfg.model.noise = NoiseSpec::Learned { beta: value };
                cfg.model.prior = Prior::Gaussian { variance: 1.0 };
            }
            SweepAxis::PriorVariance => {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(bad("prior variance"));
                }
                cfg.model.prior = Prior::Gaussian { variance: value };
            }
        }
        cfg.model.validate()?;
        cfg.train.validate()?;
        if let NoiseSpec::CapacityBits(b) = cfg.model.noise {
            mapped_bits = Some(b);
        }
        Ok((cfg, mapped_bits))
    }
}

/// Digest identifying a configuration; equal configs give equal digests.
pub fn config_digest(cfg: &ExperimentConfig) -> u64 {
    fnv1a64(format!("{cfg:?}").as_bytes())
}

/// Builds and trains one model.
pub fn run_single(cfg: &ExperimentConfig, train_set: &Dataset, test_set: &Dataset, seed: u64) -> Result<RunRecord> {
    run_single_model(cfg, train_set, test_set, seed).map(|(rec, _)| rec)
}

/// Like [`run_single`], also returning the trained model.
pub fn run_single_model(
    cfg: &ExperimentConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    seed: u64,
) -> Result<(RunRecord, Model)> {
    let train_set = match cfg.train_size {
        Some(n) => train_set.take_first(n)?,
        None => train_set.clone(),
    };
    let mut rng = Rng::new(seed);
    let mut init_rng = rng.fork();
    let mut model = build_model(&cfg.model, &mut init_rng)?;
    let mut rec = train(&mut model, &train_set, test_set, &cfg.train, &mut rng)?;
    rec.seed = seed;
    rec.config_digest = config_digest(cfg);
    Ok((rec, model))
}

/// Runs every `(value, repeat)` pair; records come back ordered by value
/// index, then repeat. Failed runs are kept with their error message.
pub fn run_sweep(spec: &SweepSpec, train_set: &Dataset, test_set: &Dataset) -> Result<Vec<RunRecord>> {
    run_sweep_with(spec, train_set, test_set, |_, _| {})
}

/// [`run_sweep`] that hands every successfully trained model to `on_model`.
pub fn run_sweep_with<F>(spec: &SweepSpec, train_set: &Dataset, test_set: &Dataset, on_model: F) -> Result<Vec<RunRecord>>
where
    F: Fn(&RunRecord, &Model) + Sync,
{
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = (0..spec.values.len())
        .flat_map(|v| (0..spec.repeats).map(move |r| (v, r)))
        .collect();
    let run = |&(vi, r): &(usize, usize)| -> RunRecord {
        let value = spec.values[vi];
        let seed = derive_seed(spec.base_seed, &[vi as u64, r as u64]);
        let run_id = vi * spec.repeats + r;
        let (cfg, mapped_bits) = spec.config_for(value).expect("validated");
        let result = run_single_model(&cfg, train_set, test_set, seed);
        let count = parameter_count(&cfg.model);
        let failed = |e: Error| RunRecord {
            run_id,
            axis_value: value,
            repeat: r,
            seed,
            config_digest: config_digest(&cfg),
            epochs: vec![],
            wall_time_s: 0.0,
            parameter_count: count,
            capacity_bits_per_param: None,
            capacity_bits_total: None,
            status: RunStatus::Failed(e.to_string()),
        };
        let (mut rec, model) = match result {
            Ok((rec, model)) => (rec, Some(model)),
            Err(e) => (failed(e), None),
        };
        rec.run_id = run_id;
        rec.axis_value = value;
        rec.repeat = r;
        if rec.capacity_bits_per_param.is_none() {
            rec.capacity_bits_per_param = mapped_bits;
            rec.capacity_bits_total = mapped_bits.map(|b| b * count as f64);
        }
        if let Some(m) = &model {
            on_model(&rec, m);
        }
        rec
    };
    if spec.jobs == 1 {
        return Ok(jobs.iter().map(run).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Config(format!("jobs: {e}")))?;
    Ok(pool.install(|| jobs.par_iter().map(run).collect()))
}

/// Mean and sample standard deviation of `metric` over successful runs, per
/// axis value in first-seen order.
pub fn aggregate(records: &[RunRecord], metric: impl Fn(&RunRecord) -> Option<f64>) -> Vec<Aggregate> {
    let mut order: Vec<f64> = vec![];
    for r in records {
        if !order.iter().any(|v| v.to_bits() == r.axis_value.to_bits()) {
            order.push(r.axis_value);
        }
    }
    order
        .into_iter()
        .map(|v| {
            let xs: Vec<f64> = records
                .iter()
                .filter(|r| r.axis_value.to_bits() == v.to_bits() && r.is_ok())
                .filter_map(&metric)
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let std = if xs.len() > 1 {
                (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                f64::NAN
            };
            Aggregate {
                axis_value: v,
                mean,
                std,
                count: xs.len(),
            }
        })
        .collect()
}
