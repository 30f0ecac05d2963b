use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use cmdp_core::error::Error;
use cmdp_core::MultiplierMode;
use cmdp_experiment::metrics::MetricSchema;
use cmdp_experiment::plots::{plot_dir, plot_run, plot_sweep};
use cmdp_experiment::protocol::CHECKPOINT_FILE;
use cmdp_experiment::{
    evaluate_checkpoint, run_diagnostic, run_sweep, run_training, write_sweep, ArenaEnv, EvalReport, ExperimentConfig,
    RunFailure,
};

/// Constrained RL experiments on the arena.
#[derive(Parser)]
#[command(name = "cmdp", version)]
struct Cli {
    /// Run this seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Total training steps (also the per-cell budget of a sweep).
    #[arg(long, global = true)]
    steps: Option<u64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Disable the bootstrap reward coefficient.
    #[arg(long, global = true)]
    no_bootstrap: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Normalized,
    Unnormalized,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent per seed; writes metrics, multipliers, checkpoint and charts.
    Train { config: PathBuf },
    /// Greedy evaluation of a saved agent.
    Eval { checkpoint: PathBuf, config: PathBuf },
    /// Reward-engineering grid sweep.
    Sweep { config: PathBuf },
    /// Normalized vs unnormalized multipliers on the two-phase environment.
    Diagnose { config: PathBuf },
    /// Re-render charts from the CSVs in a run or sweep directory.
    Plot { run_dir: PathBuf },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Divergence(_) => 3,
        _ => 1,
    }
}

fn load(cli: &Cli, path: &Path) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(steps) = cli.steps {
        cfg.total_steps = steps;
        if let Some(s) = cfg.sweep.as_mut() {
            s.steps = Some(steps);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(mode) = cli.mode {
        cfg.multipliers.mode = match mode {
            Mode::Normalized => MultiplierMode::Normalized,
            Mode::Unnormalized => MultiplierMode::Unnormalized,
        };
    }
    if cli.no_bootstrap {
        cfg.task.use_bootstrap = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(label: &str, cfg: &ExperimentConfig, r: &EvalReport) {
    let env = ArenaEnv::build(&cfg.arena, cfg.diagnostic.as_ref(), 0);
    let schema = MetricSchema {
        event_names: cmdp_core::Environment::event_names(&env),
        constraint_names: cfg.task.constraint_names(),
    };
    let rates: Vec<String> = schema
        .event_names
        .iter()
        .zip(&r.rates)
        .map(|(n, v)| format!("{n}={v:.4}"))
        .collect();
    println!(
        "{label}: step {} return {:.4} success {:.3} rates [{}] lambda_0 {:.4}",
        r.step,
        r.mean_return,
        r.success_rate,
        rates.join(" "),
        r.lambdas.reward
    );
}

fn report_failure(label: &str, f: &RunFailure) {
    eprintln!("{label}: {f}");
    if let Some(last) = f.recent.last() {
        eprintln!(
            "{label}: last evaluation at step {} (return {:.4}, lambda_0 {:.4})",
            last.step, last.mean_return, last.lambdas.reward
        );
    }
}

fn train(cli: &Cli, path: &Path) -> Result<(), Error> {
    let cfg = load(cli, path)?;
    let results: Vec<(u64, Result<EvalReport, RunFailure>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let dir = cfg.output_dir.join(format!("seed_{seed}"));
            (seed, run_training(&cfg, seed, Some(&dir)).map(|o| o.final_report))
        })
        .collect();
    let mut first_err = None;
    for (seed, result) in results {
        let label = format!("seed {seed}");
        match result {
            Ok(report) => {
                print_report(&label, &cfg, &report);
                let dir = cfg.output_dir.join(format!("seed_{seed}"));
                plot_run(&dir)?;
                println!(
                    "{label}: wrote {} and {}",
                    dir.display(),
                    dir.join(CHECKPOINT_FILE).display()
                );
            }
            Err(f) => {
                report_failure(&label, &f);
                first_err.get_or_insert(f.error);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

fn eval(cli: &Cli, checkpoint: &Path, path: &Path) -> Result<(), Error> {
    let cfg = load(cli, path)?;
    let seed = cfg.seeds[0];
    let report = evaluate_checkpoint(checkpoint, &cfg, cfg.eval_episodes, seed)?;
    print_report(&format!("{} episodes", cfg.eval_episodes), &cfg, &report);
    Ok(())
}

fn sweep(cli: &Cli, path: &Path) -> Result<(), Error> {
    let cfg = load(cli, path)?;
    if cfg.sweep.is_none() {
        return Err(Error::Config("sweep needs a [sweep] section".into()));
    }
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let grid = cfg.sweep_grid(seed).expect("sweep section present");
        let report = run_sweep(&cfg, &grid)?;
        println!(
            "seed {seed}: {} cells, feasible {:.3}, feasible and good {:.3}",
            report.cells.len(),
            report.feasible_fraction(),
            report.good_fraction()
        );
        reports.push(report);
    }
    write_sweep(&reports, &cfg.output_dir)?;
    plot_sweep(&cfg.output_dir)?;
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn diagnose(cli: &Cli, path: &Path) -> Result<(), Error> {
    let cfg = load(cli, path)?;
    let seed = cfg.seeds[0];
    let out = run_diagnostic(&cfg, seed, Some(&cfg.output_dir))?;
    for (name, result) in [("normalized", &out.normalized), ("unnormalized", &out.unnormalized)] {
        match result {
            Ok(o) => {
                print_report(name, &cfg, &o.final_report);
                let max_lambda = o
                    .multiplier_log
                    .iter()
                    .flat_map(|r| r.lambdas.constraints.iter().copied())
                    .fold(f64::NEG_INFINITY, f64::max);
                println!("{name}: max constraint multiplier {max_lambda:.4}");
            }
            // a diverged unnormalized run is one of the outcomes being compared
            Err(f) => report_failure(name, f),
        }
        let dir = cfg.output_dir.join(name);
        if dir.join(cmdp_experiment::protocol::METRICS_FILE).exists() {
            let _ = plot_run(&dir).map_err(|e| eprintln!("{name}: no charts: {e}"));
        }
    }
    if let Err(f) = &out.normalized {
        return Err(Error::Divergence(f.to_string()));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config } => train(&cli, config),
        Command::Eval { checkpoint, config } => eval(&cli, checkpoint, config),
        Command::Sweep { config } => sweep(&cli, config),
        Command::Diagnose { config } => diagnose(&cli, config),
        Command::Plot { run_dir } => plot_dir(run_dir).map(|files| {
            for f in files {
                println!("{}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
