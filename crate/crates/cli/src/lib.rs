//! Command-line front end: capacity calculations, training runs, sweeps and
//! reconstruction grids.

pub mod artifact;
pub mod config;
pub mod pgm;
pub mod records;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use infocap_core::capacity::{
    beta_capacity_table, fixed_variance_capacity, mc_capacity_estimate, solve_noise_for_capacity, CapacitySource,
    ChannelSpec,
};
use infocap_core::experiments::{aggregate, run_single_model, run_sweep_with, RunStatus};
use infocap_core::models::reconstruct_means;
use infocap_core::special_math::{QuadratureSpec, Rng};

use config::{KeyValues, RunConfig};

pub const DEFAULT_BETAS: &str = "0.01,0.1,1,10,100";

#[derive(Debug, Parser)]
#[command(name = "infocap", version, about = "Capacity of noisy-parameter models, and experiments that sweep it")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file (standard output when omitted, except for images)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// Key-value configuration file
    #[arg(long)]
    pub config: PathBuf,
    /// Override a configuration key, as key=value; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity of a fixed-variance Gaussian channel
    Capacity {
        /// Prior variance
        #[arg(long)]
        prior_var: f64,
        /// Noise variance
        #[arg(long)]
        noise_var: f64,
        /// Number of independent dimensions
        #[arg(long, default_value_t = 1)]
        dims: usize,
        /// Also report a Monte-Carlo estimate from this many samples
        #[arg(long)]
        mc_samples: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Noise variance giving a target capacity per dimension
    Solve {
        /// Target capacity in bits per dimension
        #[arg(long)]
        capacity_bits: f64,
        /// Prior variance
        #[arg(long, default_value_t = 1.0)]
        prior_var: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Capacity of the learned-variance channel for a list of beta values
    BetaTable {
        /// Comma-separated beta values
        #[arg(long, default_value = DEFAULT_BETAS)]
        betas: String,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model and write its per-epoch records
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Save the trained model into this directory
        #[arg(long)]
        save_model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train over a grid of values on one axis, with repeats
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Worker threads
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Save every trained model into this directory
        #[arg(long)]
        save_models: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Grid of test images and their reconstruction means
    Reconstruct {
        /// Directory of saved models, or one model manifest
        #[arg(long)]
        model_run: PathBuf,
        /// Comma-separated capacities to show (default: every saved value)
        #[arg(long)]
        capacity_bits: Option<String>,
        /// Number of test images
        #[arg(long, default_value_t = 8)]
        n_images: usize,
        /// Parameter-noise draws averaged per reconstruction
        #[arg(long, default_value_t = 16)]
        noise_samples: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Runtime(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_f64_list(flag: &str, s: &str) -> Result<Vec<f64>, CliError> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err(usage(format!("--{flag}: list is empty")));
    }
    items
        .iter()
        .map(|p| p.parse().map_err(|_| usage(format!("--{flag}: cannot parse {p:?}"))))
        .collect()
}

/// Opens `--out`, or standard output.
fn output(out: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(std::io::stdout().lock()),
    })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Capacity {
            prior_var,
            noise_var,
            dims,
            mc_samples,
            common,
        } => cmd_capacity(prior_var, noise_var, dims, mc_samples, &common),
        Command::Solve {
            capacity_bits,
            prior_var,
            common,
        } => cmd_solve(capacity_bits, prior_var, &common),
        Command::BetaTable { betas, common } => cmd_beta_table(&betas, &common),
        Command::Train { cfg, save_model, common } => cmd_train(&cfg, save_model.as_deref(), &common),
        Command::Sweep {
            cfg,
            jobs,
            save_models,
            common,
        } => cmd_sweep(&cfg, jobs, save_models.as_deref(), &common),
        Command::Reconstruct {
            model_run,
            capacity_bits,
            n_images,
            noise_samples,
            common,
        } => cmd_reconstruct(&model_run, capacity_bits.as_deref(), n_images, noise_samples, &common),
    }
}

fn positive(flag: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("--{flag} must be a positive finite number, got {v}")))
    }
}

fn cmd_capacity(prior_var: f64, noise_var: f64, dims: usize, mc: Option<usize>, common: &Common) -> Result<(), CliError> {
    positive("prior-var", prior_var)?;
    positive("noise-var", noise_var)?;
    if dims == 0 {
        return Err(usage("--dims must be at least 1"));
    }
    let spec = ChannelSpec::new(prior_var, noise_var, dims).map_err(|e| usage(e.to_string()))?;
    let report = fixed_variance_capacity(&spec).map_err(anyhow::Error::from)?;
    let estimate = match mc {
        Some(n) => Some(
            mc_capacity_estimate(&CapacitySource::Fixed(spec), n, &mut Rng::new(common.seed))
                .map_err(|e| usage(format!("--mc-samples: {e}")))?,
        ),
        None => None,
    };
    println!("{:.6} bits/dim", report.per_dim_bits);
    println!("{:.6} nats/dim", report.per_dim_nats);
    println!("{:.6} bits total", report.total_bits);
    if let Some(e) = estimate {
        println!("{:.6} bits/dim monte carlo (standard error {:.6})", e.bits, e.std_err_bits);
    }
    if let Some(path) = &common.out {
        let mut w = csv::Writer::from_writer(output(&Some(path.clone()))?);
        w.write_record(["prior_var", "noise_var", "dims", "bits_per_dim", "nats_per_dim", "total_bits", "mc_bits", "mc_std_err"])
            .map_err(anyhow::Error::from)?;
        let mc_cells = estimate.map_or([String::new(), String::new()], |e| [e.bits.to_string(), e.std_err_bits.to_string()]);
        w.write_record([
            prior_var.to_string(),
            noise_var.to_string(),
            dims.to_string(),
            report.per_dim_bits.to_string(),
            report.per_dim_nats.to_string(),
            report.total_bits.to_string(),
            mc_cells[0].clone(),
            mc_cells[1].clone(),
        ])
        .map_err(anyhow::Error::from)?;
        w.flush().map_err(anyhow::Error::from)?;
    }
    Ok(())
}

fn cmd_solve(bits: f64, prior_var: f64, common: &Common) -> Result<(), CliError> {
    positive("capacity-bits", bits)?;
    positive("prior-var", prior_var)?;
    let v = solve_noise_for_capacity(bits, prior_var).map_err(|e| usage(format!("--capacity-bits: {e}")))?;
    let mut w = output(&common.out)?;
    writeln!(w, "{v}").map_err(anyhow::Error::from)?;
    Ok(())
}

fn cmd_beta_table(betas: &str, common: &Common) -> Result<(), CliError> {
    let betas = parse_f64_list("betas", betas)?;
    for &b in &betas {
        positive("betas", b)?;
    }
    let rows = beta_capacity_table(&betas, &QuadratureSpec::default()).map_err(anyhow::Error::from)?;
    let mut w = csv::Writer::from_writer(output(&common.out)?);
    w.write_record(["beta", "bits_per_dim", "quad_err"]).map_err(anyhow::Error::from)?;
    for (beta, r) in rows {
        let err = r.quadrature_err.map(|e| format!("{e:e}")).unwrap_or_default();
        w.write_record([beta.to_string(), r.per_dim_bits.to_string(), err])
            .map_err(anyhow::Error::from)?;
    }
    w.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

/// Reads the config file, applies overrides and pins `data_dir` to an
/// absolute path.
fn load_config(args: &ConfigArgs) -> Result<(KeyValues, RunConfig), CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| usage(format!("--config: cannot read {}: {e}", args.config.display())))?;
    let mut kv = KeyValues::parse(&text)?;
    for pair in &args.set {
        kv.set_pair(pair)?;
    }
    let cfg = RunConfig::from_kv(&kv, Path::new("."))?;
    if let config::DataSource::Mnist { dir } = &cfg.data {
        let abs = dir.canonicalize().map_err(|e| usage(format!("data_dir: {e}")))?;
        kv.set_pair(&format!("data_dir={}", abs.display()))?;
    }
    Ok((kv, cfg))
}

fn load_data(cfg: &RunConfig, seed: u64) -> Result<(infocap_core::data::Dataset, infocap_core::data::Dataset), CliError> {
    cfg.load_data(seed).map_err(|e| usage(format!("data_dir: {e:#}")))
}

fn write_sidecar(out: &Option<PathBuf>, kv: &KeyValues, seed: u64) -> anyhow::Result<()> {
    if let Some(p) = out {
        let mut name = p.as_os_str().to_owned();
        name.push(".config");
        std::fs::write(PathBuf::from(name), format!("# seed = {seed}\n{}", kv.canonical()))?;
    }
    Ok(())
}

fn cmd_train(args: &ConfigArgs, save: Option<&Path>, common: &Common) -> Result<(), CliError> {
    let (kv, cfg) = load_config(args)?;
    let (train_set, test_set) = load_data(&cfg, common.seed)?;
    let mut out = output(&common.out)?;
    write_sidecar(&common.out, &kv, common.seed)?;
    let exp = &cfg.experiment;
    let record = match run_single_model(exp, &train_set, &test_set, common.seed) {
        Ok((mut rec, model)) => {
            if let Some(dir) = save {
                rec.run_id = 0;
                let path = artifact::save(dir, 0, &model, &kv, None)?;
                eprintln!("saved model to {}", path.display());
            }
            rec
        }
        Err(e) => infocap_core::experiments::RunRecord {
            run_id: 0,
            axis_value: f64::NAN,
            repeat: 0,
            seed: common.seed,
            config_digest: 0,
            epochs: vec![],
            wall_time_s: 0.0,
            parameter_count: infocap_core::models::parameter_count(&exp.model),
            capacity_bits_per_param: None,
            capacity_bits_total: None,
            status: RunStatus::Failed(e.to_string()),
        },
    };
    records::write_records(&mut out, std::slice::from_ref(&record), "none", kv.digest())?;
    out.flush().map_err(anyhow::Error::from)?;
    if let RunStatus::Failed(msg) = &record.status {
        return Err(CliError::Runtime(anyhow::anyhow!("run failed: {msg}")));
    }
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs, jobs: usize, save: Option<&Path>, common: &Common) -> Result<(), CliError> {
    let (kv, cfg) = load_config(args)?;
    let spec = cfg.sweep_spec(common.seed, jobs).map_err(|e| {
        if e.key == "jobs" {
            usage(format!("--jobs: {}", e.msg))
        } else {
            e.into()
        }
    })?;
    let (train_set, test_set) = load_data(&cfg, common.seed)?;
    let mut out = output(&common.out)?;
    write_sidecar(&common.out, &kv, common.seed)?;
    let save_errors = std::sync::Mutex::new(vec![]);
    let records = run_sweep_with(&spec, &train_set, &test_set, |rec, model| {
        eprintln!(
            "run {} ({} = {}, repeat {}) finished in {:.1}s",
            rec.run_id,
            spec.axis.name(),
            rec.axis_value,
            rec.repeat,
            rec.wall_time_s
        );
        if let Some(dir) = save {
            if let Err(e) = artifact::save(dir, rec.run_id, model, &kv, Some(rec.axis_value)) {
                save_errors.lock().expect("poisoned").push(e);
            }
        }
    })
    .map_err(anyhow::Error::from)?;
    records::write_records(&mut out, &records, spec.axis.name(), kv.digest())?;
    out.flush().map_err(anyhow::Error::from)?;
    for a in aggregate(&records, |r| {
        r.final_metrics().map(|e| match cfg.experiment.model.kind {
            infocap_core::models::ModelKind::Classifier => e.test.ll,
            infocap_core::models::ModelKind::Vae => e.test.elbo_noisy,
        })
    }) {
        eprintln!(
            "{} = {}: final test metric mean {:.4} (std {:.4}, {} runs)",
            spec.axis.name(),
            a.axis_value,
            a.mean,
            a.std,
            a.count
        );
    }
    if let Some(e) = save_errors.into_inner().expect("poisoned").pop() {
        return Err(CliError::Runtime(e.context("saving models")));
    }
    Ok(())
}

fn cmd_reconstruct(
    model_run: &Path,
    caps: Option<&str>,
    n_images: usize,
    noise_samples: usize,
    common: &Common,
) -> Result<(), CliError> {
    if n_images == 0 {
        return Err(usage("--n-images must be at least 1"));
    }
    if noise_samples == 0 {
        return Err(usage("--noise-samples must be at least 1"));
    }
    let wanted = caps.map(|c| parse_f64_list("capacity-bits", c)).transpose()?;
    let manifests: Vec<PathBuf> = if model_run.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(model_run)
            .map_err(|e| usage(format!("--model-run: {e}")))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "manifest"))
            .collect();
        v.sort();
        v
    } else if model_run.is_file() {
        vec![model_run.to_path_buf()]
    } else {
        return Err(usage(format!("--model-run: no model artifact at {}", model_run.display())));
    };
    if manifests.is_empty() {
        return Err(usage(format!("--model-run: no model artifact in {}", model_run.display())));
    }
    let mut loaded = vec![];
    for m in &manifests {
        loaded.push(artifact::load(m).map_err(|e| usage(format!("--model-run: {}: {e:#}", m.display())))?);
    }
    // first saved model for each requested value
    let chosen: Vec<&artifact::Loaded> = match &wanted {
        Some(values) => values
            .iter()
            .map(|v| {
                loaded
                    .iter()
                    .find(|l| l.axis_value == Some(*v))
                    .ok_or_else(|| usage(format!("--capacity-bits: no saved model for {v}")))
            })
            .collect::<Result<_, _>>()?,
        None => {
            let mut seen: Vec<Option<f64>> = vec![];
            loaded
                .iter()
                .filter(|l| {
                    let fresh = !seen.contains(&l.axis_value);
                    seen.push(l.axis_value);
                    fresh
                })
                .collect()
        }
    };

    let first = chosen[0];
    let (_, test_set) = load_data(&first.config, common.seed)?;
    let images = test_set
        .take_first(n_images)
        .map_err(|e| usage(format!("--n-images: {e}")))?
        .images;
    let (n, dim) = images.rows_cols();
    let side = (dim as f64).sqrt().round() as usize;
    if side * side != dim {
        return Err(usage(format!("--model-run: images of {dim} pixels are not square")));
    }
    let split = |t: &infocap_core::autodiff::Tensor| -> Vec<Vec<f64>> { t.data().chunks(dim).map(<[f64]>::to_vec).collect() };
    let mut rows = vec![split(&images)];
    for l in &chosen {
        ensure_same_inputs(l, first)?;
        let mut rng = Rng::new(common.seed);
        let means = reconstruct_means(&l.model, &images, &mut rng, noise_samples).map_err(anyhow::Error::from)?;
        rows.push(split(&means));
    }
    debug_assert_eq!(rows[0].len(), n);
    let (w, h, px) = pgm::grid(&rows, side);
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("reconstructions.pgm"));
    std::fs::write(&path, pgm::encode(w, h, &px)).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}x{} grid to {}", w, h, path.display());
    Ok(())
}

fn ensure_same_inputs(a: &artifact::Loaded, b: &artifact::Loaded) -> Result<(), CliError> {
    if a.config.data != b.config.data || a.config.binarize != b.config.binarize {
        return Err(usage("--model-run: saved models were trained on different data"));
    }
    Ok(())
}
