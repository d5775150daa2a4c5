//! Run records as CSV, one row per epoch per run.

use std::io::{Read, Write};

use infocap_core::experiments::{RunRecord, RunStatus};
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 14] = [
    "run_id",
    "axis_value",
    "repeat",
    "seed",
    "epoch",
    "train_ll",
    "test_ll",
    "train_elbo_noisy",
    "test_elbo_noisy",
    "train_elbo_mean",
    "test_elbo_mean",
    "accuracy",
    "capacity_bits_per_param",
    "capacity_bits_total",
];

/// One CSV row. Empty cells (`None`) mark metrics that were not evaluated
/// or do not apply to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run_id: usize,
    pub axis_value: Option<f64>,
    pub repeat: usize,
    pub seed: u64,
    pub epoch: usize,
    pub train_ll: Option<f64>,
    pub test_ll: Option<f64>,
    pub train_elbo_noisy: Option<f64>,
    pub test_elbo_noisy: Option<f64>,
    pub train_elbo_mean: Option<f64>,
    pub test_elbo_mean: Option<f64>,
    /// Test accuracy; classifier only.
    pub accuracy: Option<f64>,
    pub capacity_bits_per_param: Option<f64>,
    pub capacity_bits_total: Option<f64>,
}

fn present(v: f64) -> Option<f64> {
    (!v.is_nan()).then_some(v)
}

pub fn rows_of(rec: &RunRecord) -> Vec<Row> {
    rec.epochs
        .iter()
        .map(|e| Row {
            run_id: rec.run_id,
            axis_value: present(rec.axis_value),
            repeat: rec.repeat,
            seed: rec.seed,
            epoch: e.epoch,
            train_ll: present(e.train.ll),
            test_ll: present(e.test.ll),
            train_elbo_noisy: present(e.train.elbo_noisy),
            test_elbo_noisy: present(e.test.elbo_noisy),
            train_elbo_mean: present(e.train.elbo_mean),
            test_elbo_mean: present(e.test.elbo_mean),
            accuracy: e.test.accuracy.and_then(present),
            capacity_bits_per_param: rec.capacity_bits_per_param,
            capacity_bits_total: rec.capacity_bits_total,
        })
        .collect()
}

/// Writes the header comment, one comment per failed run, then the table.
pub fn write_records<W: Write>(mut out: W, records: &[RunRecord], axis: &str, config_digest: u64) -> anyhow::Result<()> {
    writeln!(out, "# infocap records axis={axis} config_digest={config_digest:016x}")?;
    for rec in records {
        if let RunStatus::Failed(msg) = &rec.status {
            let msg = msg.replace(['\n', '\r'], " ");
            writeln!(out, "# run {} failed (axis_value={} repeat={}): {msg}", rec.run_id, rec.axis_value, rec.repeat)?;
        }
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(COLUMNS)?;
    for rec in records {
        for row in rows_of(rec) {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Parsed CSV: comment lines (without `#`) and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordsFile {
    pub comments: Vec<String>,
    pub rows: Vec<Row>,
}

impl RecordsFile {
    pub fn config_digest(&self) -> Option<u64> {
        self.comments
            .iter()
            .find_map(|c| c.split_whitespace().find_map(|t| t.strip_prefix("config_digest=")))
            .and_then(|h| u64::from_str_radix(h, 16).ok())
    }

    pub fn failed_runs(&self) -> usize {
        self.comments.iter().filter(|c| c.starts_with(" run ")).count()
    }

    /// The last row of each run that has a value for `metric`.
    pub fn final_values(&self, metric: impl Fn(&Row) -> Option<f64>) -> Vec<(&Row, f64)> {
        let mut out: Vec<(&Row, f64)> = vec![];
        for row in &self.rows {
            if let Some(v) = metric(row) {
                match out.last_mut() {
                    Some(last) if last.0.run_id == row.run_id => *last = (row, v),
                    _ => out.push((row, v)),
                }
            }
        }
        out
    }
}

pub fn read_records<R: Read>(mut input: R) -> anyhow::Result<RecordsFile> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .map(str::to_string)
        .collect();
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(header == COLUMNS, "unexpected header {header:?}");
    let rows = reader.deserialize().collect::<Result<Vec<Row>, _>>()?;
    Ok(RecordsFile { comments, rows })
}

/// Everything after the leading comment lines.
pub fn body(csv_text: &str) -> &str {
    let mut rest = csv_text;
    while rest.starts_with('#') {
        rest = rest.split_once('\n').map_or("", |(_, r)| r);
    }
    rest
}
