//! Experiment orchestration for `cmdp-core` on the arena: TOML configs, the
//! training and evaluation protocol, the multiplier-normalization
//! diagnostic, reward-engineering sweeps, CSV metrics and SVG charts.

pub mod config;
pub mod envs;
pub mod metrics;
pub mod plots;
pub mod protocol;
pub mod sweep;

pub use config::{ExperimentConfig, SweepSection};
pub use envs::{derive_seed, ArenaEnv};
pub use metrics::{EvalReport, MetricLog, MetricSchema, MultiplierRecord};
pub use protocol::{
    evaluate_agent, evaluate_checkpoint, rollout, run_diagnostic, run_training, DiagnosticOutput, RolloutStats,
    RunFailure, RunOutput,
};
pub use sweep::{run_sweep, write_sweep, CellResult, SweepReport};
