//! Training and evaluation protocol.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use cmdp_core::error::{Error, Result};
use cmdp_core::sac::{PolicyModel, SacLagrangian};
use cmdp_core::{Environment, MultiplierMode};

use crate::config::ExperimentConfig;
use crate::envs::{derive_seed, ArenaEnv};
use crate::metrics::{
    multiplier_header, multiplier_row, CsvSink, EvalReport, MetricLog, MetricSchema, MultiplierRecord,
};

const TRAIN_ENV_STREAM: u64 = 1;
const EVAL_ENV_STREAM: u64 = 2;
const AGENT_STREAM: u64 = 3;

/// Rows kept with a failed run.
pub const POST_MORTEM_ROWS: usize = 100;

pub const METRICS_FILE: &str = "metrics.csv";
pub const MULTIPLIERS_FILE: &str = "multipliers.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_FILE: &str = "agent.ckpt";

/// Aggregates of greedy rollouts.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutStats {
    pub episodes: usize,
    pub steps: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    /// Per event channel, fired steps over all steps.
    pub rates: Vec<f64>,
}

/// Runs `episodes` greedy episodes. The first reset uses `seed`.
pub fn rollout<E: Environment + ?Sized>(
    env: &mut E,
    mut act: impl FnMut(&[f64]) -> Vec<f64>,
    episodes: usize,
    seed: u64,
    success_event: Option<usize>,
) -> RolloutStats {
    let channels = env.event_names().len();
    let mut counts = vec![0u64; channels];
    let (mut steps, mut total_return, mut successes) = (0usize, 0.0, 0usize);
    for ep in 0..episodes {
        let mut obs = env.reset(if ep == 0 { Some(seed) } else { None });
        let mut succeeded = false;
        loop {
            let out = env.step(&act(&obs));
            steps += 1;
            total_return += out.reward;
            for (c, &e) in counts.iter_mut().zip(&out.events) {
                *c += u64::from(e);
            }
            succeeded |= success_event.is_some_and(|i| out.events[i] == 1);
            if out.episode_over() {
                break;
            }
            obs = out.observation;
        }
        successes += usize::from(succeeded);
    }
    RolloutStats {
        episodes,
        steps,
        mean_return: total_return / episodes as f64,
        success_rate: successes as f64 / episodes as f64,
        rates: counts.iter().map(|&c| c as f64 / steps.max(1) as f64).collect(),
    }
}

pub fn greedy_action(policy: &PolicyModel, obs: &[f64]) -> Vec<f64> {
    policy.head(obs).expect("observation width matches policy").greedy()
}

fn success_event(env: &ArenaEnv) -> Option<usize> {
    env.event_names().iter().position(|n| n == "success")
}

/// Builds the agent a config describes for the given environment.
pub fn build_agent(config: &ExperimentConfig, env: &ArenaEnv, seed: u64) -> Result<SacLagrangian> {
    SacLagrangian::new(
        config.agent.clone(),
        config.task.clone(),
        &config.multipliers,
        env.observation_dim(),
        env.action_dim(),
        &env.event_names(),
        derive_seed(seed, AGENT_STREAM),
    )
}

fn schema(config: &ExperimentConfig, env: &ArenaEnv) -> MetricSchema {
    MetricSchema {
        event_names: env.event_names(),
        constraint_names: config.task.constraint_names(),
    }
}

/// Evaluates the agent's greedy policy on a fresh environment without
/// touching the agent.
pub fn evaluate_agent(agent: &SacLagrangian, config: &ExperimentConfig, seed: u64) -> EvalReport {
    let mut env = ArenaEnv::build(
        &config.arena,
        config.diagnostic.as_ref(),
        derive_seed(seed, EVAL_ENV_STREAM),
    );
    env.sync_phase(agent.env_steps());
    let success = success_event(&env);
    let stats = rollout(
        &mut env,
        |o| greedy_action(agent.policy(), o),
        config.eval_episodes,
        derive_seed(seed, EVAL_ENV_STREAM),
        success,
    );
    let critic_losses = match agent.last_losses() {
        Some(l) => l.critic.iter().map(|[a, b]| 0.5 * (a + b)).collect(),
        None => vec![f64::NAN; config.task.num_heads()],
    };
    EvalReport {
        step: agent.env_steps(),
        mean_return: stats.mean_return,
        success_rate: stats.success_rate,
        rates: stats.rates,
        lambdas: agent.lambdas(),
        critic_losses,
    }
}

/// A finished run.
pub struct RunOutput {
    pub final_report: EvalReport,
    pub log: MetricLog,
    pub multiplier_log: Vec<MultiplierRecord>,
    pub agent: SacLagrangian,
}

/// A run aborted by an error, with the latest evaluations for post-mortem.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub step: u64,
    pub recent: Vec<EvalReport>,
    pub multiplier_log: Vec<MultiplierRecord>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run aborted at step {}: {}", self.step, self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self {
            error,
            step: 0,
            recent: Vec::new(),
            multiplier_log: Vec::new(),
        }
    }
}

struct Sinks {
    metrics: CsvSink<BufWriter<File>>,
    multipliers: CsvSink<BufWriter<File>>,
}

fn open_sinks(dir: &Path, config: &ExperimentConfig, schema: &MetricSchema) -> Result<Sinks> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), config.to_toml_string())?;
    let open = |name: &str| -> Result<BufWriter<File>> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
    Ok(Sinks {
        metrics: CsvSink::new(open(METRICS_FILE)?, &schema.header())?,
        multipliers: CsvSink::new(open(MULTIPLIERS_FILE)?, &multiplier_header(&schema.constraint_names))?,
    })
}

/// Trains for `config.total_steps`, evaluating every `eval_period` steps and
/// after the last step. With `out_dir`, metrics and multiplier CSVs are
/// written as the run progresses, followed by the final checkpoint.
pub fn run_training(
    config: &ExperimentConfig,
    seed: u64,
    out_dir: Option<&Path>,
) -> std::result::Result<RunOutput, RunFailure> {
    config.validate()?;
    let mut env = ArenaEnv::build(
        &config.arena,
        config.diagnostic.as_ref(),
        derive_seed(seed, TRAIN_ENV_STREAM),
    );
    let mut agent = build_agent(config, &env, seed)?;
    let schema = schema(config, &env);
    let mut sinks = out_dir.map(|d| open_sinks(d, config, &schema)).transpose()?;
    let mut log = MetricLog::new(schema.clone());
    let mut multiplier_log = Vec::new();

    let fail = |error: Error, step: u64, log: &MetricLog, mlog: &Vec<MultiplierRecord>| RunFailure {
        error,
        step,
        recent: log.tail(POST_MORTEM_ROWS).to_vec(),
        multiplier_log: mlog.clone(),
    };

    for step in 1..=config.total_steps {
        let report = match agent.train_step(&mut env) {
            Ok(r) => r,
            Err(e) => return Err(fail(e, step, &log, &multiplier_log)),
        };
        if let Some(rates) = report.multiplier_rates {
            let rec = MultiplierRecord {
                step,
                lambdas: agent.lambdas(),
                params: agent.bank().params().to_vec(),
                rates,
            };
            if let Some(s) = sinks.as_mut() {
                s.multipliers
                    .write(&multiplier_row(&rec))
                    .map_err(|e| fail(e, step, &log, &multiplier_log))?;
            }
            multiplier_log.push(rec);
        }
        if step % config.eval_period == 0 || step == config.total_steps {
            let row = evaluate_agent(&agent, config, seed);
            if row.critic_losses.iter().any(|l| l.is_infinite()) || !row.mean_return.is_finite() {
                let e = Error::Divergence(format!("non-finite evaluation metrics at step {step}"));
                return Err(fail(e, step, &log, &multiplier_log));
            }
            if let Some(s) = sinks.as_mut() {
                s.metrics
                    .write(&schema.row(&row))
                    .map_err(|e| fail(e, step, &log, &multiplier_log))?;
            }
            log::info!(
                "step {step}: return {:.3} success {:.2} lambda_0 {:.3}",
                row.mean_return,
                row.success_rate,
                row.lambdas.reward
            );
            log.rows.push(row);
        }
    }

    if let Some(dir) = out_dir {
        drop(sinks);
        let mut f = BufWriter::new(File::create(dir.join(CHECKPOINT_FILE)).map_err(Error::from)?);
        agent.save_weights(&mut f)?;
    }
    Ok(RunOutput {
        final_report: log.rows.last().expect("at least one evaluation").clone(),
        log,
        multiplier_log,
        agent,
    })
}

/// Greedy evaluation of a saved agent. A checkpoint that does not fit the
/// agent the config describes is a configuration error.
pub fn evaluate_checkpoint(path: &Path, config: &ExperimentConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    let env = ArenaEnv::build(
        &config.arena,
        config.diagnostic.as_ref(),
        derive_seed(seed, TRAIN_ENV_STREAM),
    );
    let mut agent = build_agent(config, &env, seed)?;
    let mut f = std::io::BufReader::new(File::open(path)?);
    agent.load_weights(&mut f).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Config(format!("checkpoint {} does not fit config: {m}", path.display())),
        other => other,
    })?;
    let cfg = ExperimentConfig {
        eval_episodes: episodes,
        ..config.clone()
    };
    Ok(evaluate_agent(&agent, &cfg, seed))
}

/// Paired runs of one diagnostic config.
pub struct DiagnosticOutput {
    pub normalized: std::result::Result<RunOutput, RunFailure>,
    pub unnormalized: std::result::Result<RunOutput, RunFailure>,
}

/// Runs the config once per multiplier mode with the same seed. A divergent
/// unnormalized run is an outcome, not an error.
pub fn run_diagnostic(config: &ExperimentConfig, seed: u64, out_dir: Option<&Path>) -> Result<DiagnosticOutput> {
    if config.diagnostic.is_none() {
        return Err(Error::Config("diagnose needs a [diagnostic] section".into()));
    }
    config.validate()?;
    let run = |mode: MultiplierMode, name: &str| {
        let mut cfg = config.clone();
        cfg.multipliers.mode = mode;
        let dir = out_dir.map(|d| d.join(name));
        run_training(&cfg, seed, dir.as_deref())
    };
    Ok(DiagnosticOutput {
        normalized: run(MultiplierMode::Normalized, "normalized"),
        unnormalized: run(MultiplierMode::Unnormalized, "unnormalized"),
    })
}
