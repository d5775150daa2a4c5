//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use infocap_core::data::{fnv1a64, synthetic_blobs, Dataset, DEFAULT_BINARIZE_THRESHOLD};
use infocap_core::experiments::{ExperimentConfig, OptimizerKind, SweepAxis, SweepSpec, TrainConfig};
use infocap_core::mean_field::Prior;
use infocap_core::models::{Likelihood, ModelSpec, NoiseSpec};
use infocap_core::special_math::Rng;

/// Every accepted key with its default (empty when derived) and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("model", "classifier", "classifier or vae"),
    ("dataset", "mnist", "mnist or blobs"),
    ("data_dir", "data/mnist-5k", "directory holding the four IDX files"),
    ("train_size", "", "use the first this many training items (default all)"),
    ("test_size", "", "use the first this many test items (default all)"),
    ("binarize", "", "pixel threshold, or none; vae default 0.5"),
    ("hidden", "", "hidden widths, comma separated; classifier 128,128, vae 64,64"),
    ("latent_dim", "2", "vae latent dimensions"),
    ("likelihood", "bernoulli", "vae observation model: bernoulli or gaussian"),
    ("observation_variance", "0.01", "variance of the gaussian observation model"),
    ("noise", "zero", "zero, fixed, capacity or learned"),
    ("noise_variance", "", "noise variance for noise = fixed"),
    ("capacity_bits", "", "per-parameter capacity for noise = capacity"),
    ("beta", "1", "regularizer weight for noise = learned"),
    ("prior", "gaussian", "gaussian or improper"),
    ("prior_variance", "1", "gaussian prior variance"),
    ("optimizer", "adam", "adam or sgd"),
    ("learning_rate", "0.001", "step size"),
    ("adam_beta1", "0.9", "adam first-moment decay"),
    ("adam_beta2", "0.999", "adam second-moment decay"),
    ("adam_epsilon", "1e-8", "adam denominator floor"),
    ("epochs", "", "passes over the training set; classifier 200, vae 500"),
    ("batch_size", "50", "minibatch size"),
    ("step_budget", "", "train for the fewest epochs reaching this many steps"),
    ("train_noise_samples", "1", "parameter-noise draws per step"),
    ("eval_noise_samples", "8", "parameter-noise draws per evaluation"),
    ("eval_every", "1", "evaluate every this many epochs"),
    ("shuffle", "true", "reshuffle batches every epoch"),
    ("blobs_per_class", "100", "synthetic items per class (train and test each)"),
    ("blobs_classes", "3", "synthetic classes"),
    ("blobs_dim", "2", "synthetic input dimension"),
    ("blobs_separation", "4", "distance of blob centres from the origin"),
    ("axis", "capacity_bits", "sweep axis: capacity_bits, dataset_size, depth, beta, prior_variance"),
    ("values", "", "sweep values, comma separated (inf allowed on the capacity axis)"),
    ("repeats", "3", "runs per sweep value"),
    ("depth_width", "", "hidden width used by the depth axis (default first hidden width)"),
];

#[derive(Debug, thiserror::Error)]
#[error("{key}: {msg}")]
pub struct ConfigError {
    pub key: String,
    pub msg: String,
}

fn err(key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        msg: msg.into(),
    }
}

/// Raw key-value pairs; later assignments override earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues(BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut kv = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            kv.set_pair(line).map_err(|e| err(&e.key, format!("line {}: {}", n + 1, e.msg)))?;
        }
        Ok(kv)
    }

    /// Applies one `key=value` assignment.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| err(pair.trim(), "expected key = value"))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.iter().any(|(name, _, _)| *name == k) {
            return Err(err(k, "unknown key"));
        }
        self.0.insert(k.to_string(), v.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str).filter(|v| !v.is_empty())
    }

    /// Canonical text: sorted `key = value` lines.
    pub fn canonical(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn digest(&self) -> u64 {
        fnv1a64(self.canonical().as_bytes())
    }
}

fn parse_num<T: std::str::FromStr>(kv: &KeyValues, key: &str, default: T) -> Result<T, ConfigError> {
    match kv.get(key) {
        None => Ok(default),
        Some(s) => s.parse().map_err(|_| err(key, format!("cannot parse {s:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>, ConfigError> {
    s.split(',')
        .map(|p| p.trim().parse().map_err(|_| err(key, format!("cannot parse {:?}", p.trim()))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Mnist { dir: PathBuf },
    Blobs { per_class: usize, classes: usize, dim: usize, separation: f64 },
}

/// A validated configuration ready to load data and train.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub data: DataSource,
    pub test_size: Option<usize>,
    pub binarize: Option<f64>,
    pub sweep: Option<(SweepAxis, Vec<f64>, usize)>,
    pub digest: u64,
    pub text: String,
}

impl RunConfig {
    /// `base_dir` resolves a relative `data_dir`.
    pub fn from_kv(kv: &KeyValues, base_dir: &Path) -> Result<Self, ConfigError> {
        let kind = kv.get("model").unwrap_or("classifier");
        let is_vae = match kind {
            "classifier" => false,
            "vae" => true,
            other => return Err(err("model", format!("expected classifier or vae, got {other:?}"))),
        };

        let data = match kv.get("dataset").unwrap_or("mnist") {
            "mnist" => {
                let dir = base_dir.join(kv.get("data_dir").unwrap_or("data/mnist-5k"));
                if !dir.is_dir() {
                    return Err(err("data_dir", format!("{} is not a directory", dir.display())));
                }
                DataSource::Mnist { dir }
            }
            "blobs" => DataSource::Blobs {
                per_class: parse_num(kv, "blobs_per_class", 100)?,
                classes: parse_num(kv, "blobs_classes", 3)?,
                dim: parse_num(kv, "blobs_dim", 2)?,
                separation: parse_num(kv, "blobs_separation", 4.0)?,
            },
            other => return Err(err("dataset", format!("expected mnist or blobs, got {other:?}"))),
        };
        let (input, classes) = match &data {
            DataSource::Mnist { .. } => (784, 10),
            DataSource::Blobs { dim, classes, .. } => (*dim, *classes),
        };

        let hidden: Vec<usize> = match kv.get("hidden") {
            Some("none") => vec![],
            Some(s) => parse_list("hidden", s)?,
            None if is_vae => vec![64, 64],
            None => vec![128, 128],
        };

        let prior = match kv.get("prior").unwrap_or("gaussian") {
            "gaussian" => Prior::Gaussian {
                variance: parse_num(kv, "prior_variance", 1.0)?,
            },
            "improper" => Prior::ImproperUniform,
            other => return Err(err("prior", format!("expected gaussian or improper, got {other:?}"))),
        };
        let noise = match kv.get("noise").unwrap_or("zero") {
            "zero" => NoiseSpec::Zero,
            "fixed" => NoiseSpec::Fixed {
                variance: kv
                    .get("noise_variance")
                    .ok_or_else(|| err("noise_variance", "required when noise = fixed"))?
                    .parse()
                    .map_err(|_| err("noise_variance", "not a number"))?,
            },
            "capacity" => NoiseSpec::CapacityBits(
                kv.get("capacity_bits")
                    .ok_or_else(|| err("capacity_bits", "required when noise = capacity"))?
                    .parse()
                    .map_err(|_| err("capacity_bits", "not a number"))?,
            ),
            "learned" => NoiseSpec::Learned {
                beta: parse_num(kv, "beta", 1.0)?,
            },
            other => return Err(err("noise", format!("expected zero, fixed, capacity or learned, got {other:?}"))),
        };

        let model = if is_vae {
            let mut m = ModelSpec::vae(input, &hidden, parse_num(kv, "latent_dim", 2)?, noise, prior);
            m.likelihood = match kv.get("likelihood").unwrap_or("bernoulli") {
                "bernoulli" => Likelihood::Bernoulli,
                "gaussian" => Likelihood::Gaussian {
                    variance: parse_num(kv, "observation_variance", 0.01)?,
                },
                other => return Err(err("likelihood", format!("expected bernoulli or gaussian, got {other:?}"))),
            };
            m
        } else {
            let mut widths = vec![input];
            widths.extend(&hidden);
            widths.push(classes);
            ModelSpec::classifier(widths, noise, prior)
        };
        model.validate().map_err(|e| err(noise_key(&model), e.to_string()))?;

        let mut train = TrainConfig::default();
        let o = &mut train.optimizer;
        o.kind = match kv.get("optimizer").unwrap_or("adam") {
            "adam" => OptimizerKind::Adam,
            "sgd" => OptimizerKind::Sgd,
            other => return Err(err("optimizer", format!("expected adam or sgd, got {other:?}"))),
        };
        o.learning_rate = parse_num(kv, "learning_rate", o.learning_rate)?;
        o.beta1 = parse_num(kv, "adam_beta1", o.beta1)?;
        o.beta2 = parse_num(kv, "adam_beta2", o.beta2)?;
        o.epsilon = parse_num(kv, "adam_epsilon", o.epsilon)?;
        o.epochs = parse_num(kv, "epochs", if is_vae { 500 } else { 200 })?;
        o.batch_size = parse_num(kv, "batch_size", o.batch_size)?;
        train.step_budget = kv.get("step_budget").map(|_| parse_num(kv, "step_budget", 0)).transpose()?;
        train.train_noise_samples = parse_num(kv, "train_noise_samples", train.train_noise_samples)?;
        train.eval_noise_samples = parse_num(kv, "eval_noise_samples", train.eval_noise_samples)?;
        train.eval_every = parse_num(kv, "eval_every", train.eval_every)?;
        train.shuffle = parse_num(kv, "shuffle", true)?;
        train.validate().map_err(|e| {
            let msg = e.to_string();
            let key = KEYS
                .iter()
                .map(|k| k.0)
                .filter(|k| msg.contains(k))
                .max_by_key(|k| k.len())
                .unwrap_or("optimizer");
            err(key, msg)
        })?;
        let train_size = kv.get("train_size").map(|_| parse_num(kv, "train_size", 0usize)).transpose()?;
        let test_size = kv.get("test_size").map(|_| parse_num(kv, "test_size", 0usize)).transpose()?;
        if test_size == Some(0) {
            return Err(err("test_size", "must be at least 1"));
        }
        let binarize = match kv.get("binarize") {
            Some("none") => None,
            Some(_) => Some(parse_num(kv, "binarize", DEFAULT_BINARIZE_THRESHOLD)?),
            None if is_vae && model.likelihood == Likelihood::Bernoulli => Some(DEFAULT_BINARIZE_THRESHOLD),
            None => None,
        };
        if let Some(t) = binarize {
            if !(t > 0.0 && t < 1.0) {
                return Err(err("binarize", format!("threshold must lie in (0, 1), got {t}")));
            }
        }

        let hidden_width = match kv.get("depth_width") {
            Some(_) => parse_num(kv, "depth_width", 0usize)?,
            None => hidden.first().copied().unwrap_or(if is_vae { 64 } else { 128 }),
        };
        let experiment = ExperimentConfig {
            model,
            train,
            train_size,
            hidden_width,
        };

        let sweep = match kv.get("values") {
            None => None,
            Some(s) => {
                let axis = SweepAxis::parse(kv.get("axis").unwrap_or("capacity_bits")).map_err(|e| err("axis", e.to_string()))?;
                let values: Vec<f64> = parse_list("values", s)?;
                let repeats = parse_num(kv, "repeats", 3usize)?;
                let probe = SweepSpec {
                    axis,
                    values: values.clone(),
                    repeats,
                    base: experiment.clone(),
                    base_seed: 0,
                    jobs: 1,
                };
                probe.validate().map_err(|e| {
                    let msg = e.to_string();
                    let key = if msg.contains("repeats") { "repeats" } else { "values" };
                    err(key, msg)
                })?;
                Some((axis, values, repeats))
            }
        };

        Ok(Self {
            experiment,
            data,
            test_size,
            binarize,
            sweep,
            digest: kv.digest(),
            text: kv.canonical(),
        })
    }

    /// The sweep described by `axis`, `values` and `repeats`.
    pub fn sweep_spec(&self, base_seed: u64, jobs: usize) -> Result<SweepSpec, ConfigError> {
        let (axis, values, repeats) = self.sweep.clone().ok_or_else(|| err("values", "a sweep needs a list of values"))?;
        if jobs == 0 {
            return Err(err("jobs", "must be at least 1"));
        }
        Ok(SweepSpec {
            axis,
            values,
            repeats,
            base: self.experiment.clone(),
            base_seed,
            jobs,
        })
    }

    /// The experiment a sweep runs at `value`, or the base experiment.
    pub fn experiment_at(&self, value: Option<f64>) -> anyhow::Result<ExperimentConfig> {
        match value {
            None => Ok(self.experiment.clone()),
            Some(v) => Ok(self.sweep_spec(0, 1)?.config_for(v)?.0),
        }
    }

    /// Loads `(train, test)` as configured. `train_size` is applied later,
    /// per run, so dataset-size sweeps can share one load.
    pub fn load_data(&self, seed: u64) -> anyhow::Result<(Dataset, Dataset)> {
        let (train, test) = match &self.data {
            DataSource::Mnist { dir } => (Dataset::load_mnist_dir(dir, true)?, Dataset::load_mnist_dir(dir, false)?),
            DataSource::Blobs {
                per_class,
                classes,
                dim,
                separation,
            } => {
                let mut rng = Rng::new(seed);
                let mut test_rng = rng.fork();
                (
                    synthetic_blobs(&mut rng, *per_class, *classes, *dim, *separation)?,
                    synthetic_blobs(&mut test_rng, *per_class, *classes, *dim, *separation)?,
                )
            }
        };
        let test = match self.test_size {
            Some(n) => test.take_first(n)?,
            None => test,
        };
        Ok(match self.binarize {
            Some(t) => (train.binarize(t), test.binarize(t)),
            None => (train, test),
        })
    }
}

fn noise_key(model: &ModelSpec) -> &'static str {
    match model.noise {
        NoiseSpec::Fixed { .. } => "noise_variance",
        NoiseSpec::CapacityBits(_) => "capacity_bits",
        NoiseSpec::Learned { .. } => "beta",
        NoiseSpec::Zero => "model",
    }
}
