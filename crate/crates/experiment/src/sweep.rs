//! Reward-engineering baseline: one unconstrained agent per penalty-weight cell.

use std::path::Path;

use rayon::prelude::*;

use cmdp_core::baseline::{PenaltyWeights, ScalarizedEnv, SweepGrid};
use cmdp_core::error::{Error, Result};
use cmdp_core::sac::SacLagrangian;
use cmdp_core::{Environment, MultiplierConfig, TaskSpec};

use crate::config::ExperimentConfig;
use crate::envs::{derive_seed, ArenaEnv};
use crate::metrics::{fmt_f64, CsvSink};
use crate::protocol::{greedy_action, rollout};

pub const SWEEP_FILE: &str = "sweep.csv";

/// Outcome of one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub index: usize,
    /// Seed the cell's agent and environments derive from.
    pub seed: u64,
    pub weights: PenaltyWeights,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Per task constraint (behavioral, then success), the evaluation rate.
    pub rates: Vec<f64>,
    /// Behavioral constraints satisfied within the tolerance.
    pub feasible: bool,
    /// Feasible and success rate at least the good-performance bar.
    pub good: bool,
    /// Set when training aborted; the metrics are then NaN.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub grid: SweepGrid,
    pub constraint_names: Vec<String>,
    pub good_success: f64,
    /// Ordered by cell index.
    pub cells: Vec<CellResult>,
}

impl SweepReport {
    pub fn feasible_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| c.feasible).count() as f64 / self.cells.len() as f64
    }

    /// Fraction of cells that are feasible and reach the success bar.
    pub fn good_fraction(&self) -> f64 {
        self.cells.iter().filter(|c| c.good).count() as f64 / self.cells.len() as f64
    }

    pub fn header(&self) -> Vec<String> {
        let behavioral = self.grid.weights.len();
        let mut h = vec!["cell".to_string(), "seed".into(), "cell_seed".into()];
        h.extend(self.constraint_names[..behavioral].iter().map(|n| format!("w_{n}")));
        h.extend(["return".into(), "success_rate".into()]);
        h.extend(self.constraint_names.iter().map(|n| format!("rate_{n}")));
        h.extend([
            "feasible".into(),
            format!("good_success_ge_{}", self.good_success),
            "error".into(),
        ]);
        h
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut sink = CsvSink::new(Vec::new(), &self.header())?;
        for c in &self.cells {
            sink.write(&self.cell_row(c))?;
        }
        sink.finish()
    }

    fn cell_row(&self, c: &CellResult) -> Vec<String> {
        let mut row = vec![c.index.to_string(), self.grid.seed.to_string(), c.seed.to_string()];
        row.extend(c.weights.as_slice().iter().map(|&w| fmt_f64(w)));
        row.extend([fmt_f64(c.mean_return), fmt_f64(c.success_rate)]);
        row.extend(c.rates.iter().map(|&r| fmt_f64(r)));
        row.extend([
            u8::from(c.feasible).to_string(),
            u8::from(c.good).to_string(),
            c.error.clone().unwrap_or_default(),
        ]);
        row
    }
}

fn cell_seed(grid: &SweepGrid, index: usize) -> u64 {
    derive_seed(grid.seed, 1000 + index as u64)
}

/// Trains and evaluates one cell. Depends only on the grid, the cell index
/// and the config, never on which other cells ran.
pub fn run_cell(config: &ExperimentConfig, grid: &SweepGrid, index: usize) -> CellResult {
    let weights = grid.cell(index);
    let seed = cell_seed(grid, index);
    let good_success = config.sweep.as_ref().map_or(0.8, |s| s.good_success);
    match train_cell(config, grid, &weights, seed) {
        Ok((mean_return, success_rate, rates)) => {
            let feasible = config
                .task
                .constraints
                .iter()
                .zip(&rates)
                .all(|(c, &r)| c.satisfied(r, config.feasibility_tolerance));
            CellResult {
                index,
                seed,
                weights,
                mean_return,
                success_rate,
                rates,
                feasible,
                good: feasible && success_rate >= good_success,
                error: None,
            }
        }
        Err(e) => CellResult {
            index,
            seed,
            weights,
            mean_return: f64::NAN,
            success_rate: f64::NAN,
            rates: vec![f64::NAN; config.task.num_multipliers()],
            feasible: false,
            good: false,
            error: Some(e.to_string()),
        },
    }
}

fn train_cell(
    config: &ExperimentConfig,
    grid: &SweepGrid,
    weights: &PenaltyWeights,
    seed: u64,
) -> Result<(f64, f64, Vec<f64>)> {
    let base = ArenaEnv::build(&config.arena, None, derive_seed(seed, 1));
    let names = base.event_names();
    let mut env = ScalarizedEnv::new(base, &config.task, weights.clone())?;
    let mut agent = SacLagrangian::new(
        config.agent.clone(),
        TaskSpec::unconstrained(config.task.gamma),
        &MultiplierConfig::default(),
        env.observation_dim(),
        env.action_dim(),
        &names,
        derive_seed(seed, 3),
    )?;
    for _ in 0..grid.steps {
        agent.train_step(&mut env)?;
    }
    let mut eval_env = ArenaEnv::build(&config.arena, None, derive_seed(seed, 2));
    let success = names.iter().position(|n| n == "success");
    let stats = rollout(
        &mut eval_env,
        |o| greedy_action(agent.policy(), o),
        grid.eval_episodes,
        derive_seed(seed, 2),
        success,
    );
    let channels = config.task.bind_events(&names)?;
    let rates = channels.iter().map(|&c| stats.rates[c]).collect();
    Ok((stats.mean_return, stats.success_rate, rates))
}

/// Runs every cell (in parallel when threads are available) and merges the
/// results by cell index.
pub fn run_sweep(config: &ExperimentConfig, grid: &SweepGrid) -> Result<SweepReport> {
    grid.validate()?;
    if grid.weights.len() != config.task.num_behavioral() {
        return Err(Error::Config(format!(
            "sweep has {} weight lists for {} behavioral constraints",
            grid.weights.len(),
            config.task.num_behavioral()
        )));
    }
    let mut cells: Vec<CellResult> = (0..grid.cell_count())
        .into_par_iter()
        .map(|i| {
            let r = run_cell(config, grid, i);
            log::info!("cell {i}: success {:.2} feasible {}", r.success_rate, r.feasible);
            r
        })
        .collect();
    cells.sort_by_key(|c| c.index);
    Ok(SweepReport {
        grid: grid.clone(),
        constraint_names: config.task.constraint_names(),
        good_success: config.sweep.as_ref().map_or(0.8, |s| s.good_success),
        cells,
    })
}

/// Writes the reports (one per seed, same grid shape) as a single
/// `sweep.csv` ordered by seed position, then cell.
pub fn write_sweep(reports: &[SweepReport], dir: &Path) -> Result<()> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidArgument("no sweep reports to write".into()));
    };
    let mut sink = CsvSink::new(Vec::new(), &first.header())?;
    for report in reports {
        if report.header() != first.header() {
            return Err(Error::InvalidArgument("sweep reports have different columns".into()));
        }
        for c in &report.cells {
            sink.write(&report.cell_row(c))?;
        }
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(SWEEP_FILE), sink.finish()?)?;
    Ok(())
}
