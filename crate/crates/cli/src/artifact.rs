//! Trained-model artifacts: a flat binary of little-endian f64 values and a
//! text manifest naming the configuration and the shape of every block.
//!
//! Manifest lines:
//!
//! ```text
//! config_digest = 00ab...
//! axis_value = 5
//! data = run_0003.bin
//! block <index> mean|log_variance <dims...>
//! config <key> = <value>
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use infocap_core::mean_field::NoiseMode;
use infocap_core::models::{build_model, Model};
use infocap_core::special_math::Rng;

use crate::config::{KeyValues, RunConfig};

pub fn manifest_path(dir: &Path, run_id: usize) -> PathBuf {
    dir.join(format!("run_{run_id:04}.manifest"))
}

fn tensors(model: &Model) -> Vec<(usize, &'static str, Vec<usize>, Vec<f64>)> {
    let mut out = vec![];
    for (i, p) in model.params().into_iter().enumerate() {
        out.push((i, "mean", p.mean.shape().to_vec(), p.mean.data().to_vec()));
        if let NoiseMode::Learned { log_variance } = &p.noise {
            out.push((i, "log_variance", log_variance.shape().to_vec(), log_variance.data().to_vec()));
        }
    }
    out
}

/// Writes `run_<id>.bin` and `run_<id>.manifest` into `dir`. `kv` must carry
/// an absolute `data_dir` so the artifact can be used from anywhere.
pub fn save(dir: &Path, run_id: usize, model: &Model, kv: &KeyValues, axis_value: Option<f64>) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let data_name = format!("run_{run_id:04}.bin");
    let mut manifest = String::new();
    writeln!(manifest, "config_digest = {:016x}", kv.digest())?;
    if let Some(v) = axis_value {
        writeln!(manifest, "axis_value = {v}")?;
    }
    writeln!(manifest, "data = {data_name}")?;
    let mut bytes = vec![];
    for (i, kind, shape, data) in tensors(model) {
        let dims: Vec<String> = shape.iter().map(usize::to_string).collect();
        writeln!(manifest, "block {i} {kind} {}", dims.join(" "))?;
        bytes.extend(data.iter().flat_map(|v| v.to_le_bytes()));
    }
    for line in kv.canonical().lines() {
        writeln!(manifest, "config {line}")?;
    }
    std::fs::write(dir.join(&data_name), bytes)?;
    let path = manifest_path(dir, run_id);
    std::fs::write(&path, manifest)?;
    Ok(path)
}

#[derive(Debug)]
pub struct Loaded {
    pub model: Model,
    pub config: RunConfig,
    pub kv: KeyValues,
    pub axis_value: Option<f64>,
}

pub fn load(manifest: &Path) -> anyhow::Result<Loaded> {
    let text = std::fs::read_to_string(manifest).with_context(|| format!("reading model manifest {}", manifest.display()))?;
    let mut kv = KeyValues::default();
    let mut digest = None;
    let mut axis_value = None;
    let mut data_name = None;
    let mut registry: Vec<(usize, String, Vec<usize>)> = vec![];
    for line in text.lines() {
        if let Some(pair) = line.strip_prefix("config ") {
            kv.set_pair(pair)?;
        } else if let Some(rest) = line.strip_prefix("block ") {
            let mut it = rest.split_whitespace();
            let idx: usize = it.next().context("block index")?.parse()?;
            let kind = it.next().context("block kind")?.to_string();
            let shape = it.map(str::parse).collect::<Result<Vec<usize>, _>>()?;
            registry.push((idx, kind, shape));
        } else if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "config_digest" => digest = Some(u64::from_str_radix(v.trim(), 16)?),
                "axis_value" => axis_value = Some(v.trim().parse::<f64>()?),
                "data" => data_name = Some(v.trim().to_string()),
                other => bail!("unknown manifest entry {other:?}"),
            }
        } else if !line.trim().is_empty() {
            bail!("malformed manifest line {line:?}");
        }
    }
    ensure!(digest == Some(kv.digest()), "manifest config does not match its digest");
    let config = RunConfig::from_kv(&kv, Path::new("."))?;
    let spec = config.experiment_at(axis_value)?.model;
    let mut model = build_model(&spec, &mut Rng::new(0))?;

    let dir = manifest.parent().unwrap_or(Path::new("."));
    let data_path = dir.join(data_name.context("manifest has no data entry")?);
    let bytes = std::fs::read(&data_path).with_context(|| format!("reading {}", data_path.display()))?;
    ensure!(bytes.len() % 8 == 0, "{} is not a whole number of f64 values", data_path.display());
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));

    let expected: Vec<(usize, String, Vec<usize>)> =
        tensors(&model).into_iter().map(|(i, k, s, _)| (i, k.to_string(), s)).collect();
    ensure!(registry == expected, "shape registry does not match the configured model");
    for p in model.params_mut() {
        for v in p.mean.data_mut() {
            *v = values.next().context("artifact data too short")?;
        }
        if let NoiseMode::Learned { log_variance } = &mut p.noise {
            for v in log_variance.data_mut() {
                *v = values.next().context("artifact data too short")?;
            }
        }
    }
    ensure!(values.next().is_none(), "artifact data too long");
    Ok(Loaded {
        model,
        config,
        kv,
        axis_value,
    })
}
