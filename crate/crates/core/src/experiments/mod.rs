//! Optimizers, the training loop, evaluation and sweeps.

mod optim;
mod sweep;
mod train;

pub use optim::{Optimizer, OptimizerKind, OptimizerSpec};
pub use sweep::{aggregate, config_digest, run_single, run_single_model, run_sweep, run_sweep_with, Aggregate, ExperimentConfig, SweepAxis, SweepSpec};
pub use train::{evaluate, train, EpochMetrics, Metrics, RunRecord, RunStatus, TrainConfig};
