use std::path::Path;
use std::process::Command;

use cmdp_core::error::Error;
use cmdp_core::{ConstraintSpec, Environment, StepOutcome, TaskSpec};
use cmdp_experiment::plots::{plot_dir, Table};
use cmdp_experiment::protocol::{CHECKPOINT_FILE, METRICS_FILE, MULTIPLIERS_FILE};
use cmdp_experiment::{
    evaluate_agent, evaluate_checkpoint, rollout, run_diagnostic, run_sweep, run_training, write_sweep, ArenaEnv,
    ExperimentConfig, SweepSection,
};

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.total_steps = 3_000;
    cfg.eval_period = 1_000;
    cfg.eval_episodes = 2;
    cfg.agent.policy_hidden = vec![8];
    cfg.agent.critic_hidden = vec![8];
    cfg.agent.batch_size = 32;
    cfg.agent.random_steps = 500;
    cfg.agent.warmup_steps = 500;
    cfg.agent.update_period = 50;
    cfg.agent.multiplier_batch = 200;
    cfg.agent.multiplier_period = 200;
    cfg.agent.replay_capacity = 10_000;
    cfg.task = TaskSpec {
        gamma: 0.9,
        constraints: vec![
            ConstraintSpec::upper("in_lava", 0.01),
            ConstraintSpec::upper("above_speed", 0.01),
        ],
        success: Some(ConstraintSpec::lower("success", 0.99)),
        use_bootstrap: true,
    };
    cfg
}

#[test]
fn same_seed_gives_identical_csv_bytes() {
    let cfg = small_config();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_training(&cfg, 7, Some(d.path())).unwrap();
    }
    for file in [METRICS_FILE, MULTIPLIERS_FILE, CHECKPOINT_FILE] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file}");
    }
    let rows = Table::read(&dirs[0].path().join(METRICS_FILE)).unwrap().rows.len();
    assert_eq!(rows, 3);

    let other = tempfile::tempdir().unwrap();
    run_training(&cfg, 8, Some(other.path())).unwrap();
    assert_ne!(
        std::fs::read(dirs[0].path().join(METRICS_FILE)).unwrap(),
        std::fs::read(other.path().join(METRICS_FILE)).unwrap()
    );
}

#[test]
fn in_memory_log_matches_written_csv() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let out = run_training(&cfg, 3, Some(dir.path())).unwrap();
    assert_eq!(
        out.log.to_csv().unwrap(),
        std::fs::read(dir.path().join(METRICS_FILE)).unwrap()
    );
    assert_eq!(out.final_report, *out.log.rows.last().unwrap());
    assert_eq!(out.multiplier_log.len(), 3_000 / 200);
}

#[test]
fn evaluation_does_not_touch_the_agent() {
    let cfg = small_config();
    let out = run_training(&cfg, 1, None).unwrap();
    let mut before = Vec::new();
    out.agent.save_weights(&mut before).unwrap();
    let a = evaluate_agent(&out.agent, &cfg, 1);
    let b = evaluate_agent(&out.agent, &cfg, 1);
    let mut after = Vec::new();
    out.agent.save_weights(&mut after).unwrap();
    assert_eq!(before, after);
    assert_eq!(a, b);
    assert!(a.rates.iter().all(|r| (0.0..=1.0).contains(r)));
    let total: f64 = a.lambdas.reward + a.lambdas.constraints.iter().sum::<f64>();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn always_recharge_never_runs_low_and_never_succeeds() {
    let cfg = ExperimentConfig::default();
    let mut env = ArenaEnv::build(&cfg.arena, None, 5);
    let names = env.event_names();
    let idx = |n: &str| names.iter().position(|x| x == n).unwrap();
    let stats = rollout(&mut env, |_| vec![0.3, -0.2, 0.1, 1.0], 10, 5, Some(idx("success")));
    assert_eq!(stats.episodes, 10);
    assert_eq!(stats.rates[idx("below_energy")], 0.0);
    assert_eq!(stats.rates[idx("above_speed")], 0.0);
    assert_eq!(stats.success_rate, 0.0);
}

/// Forwards to the arena and keeps every step's indicators.
struct Recorder {
    inner: ArenaEnv,
    events: Vec<Vec<u8>>,
    returns: Vec<f64>,
}

impl Environment for Recorder {
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }
    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }
    fn event_names(&self) -> Vec<String> {
        self.inner.event_names()
    }
    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        self.returns.push(0.0);
        self.inner.reset(seed)
    }
    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let out = self.inner.step(action);
        self.events.push(out.events.clone());
        *self.returns.last_mut().unwrap() += out.reward;
        out
    }
}

#[test]
fn rates_match_offline_recount() {
    let cfg = small_config();
    let agent = run_training(&cfg, 2, None).unwrap().agent;
    let mut env = Recorder {
        inner: ArenaEnv::build(&cfg.arena, None, 11),
        events: Vec::new(),
        returns: Vec::new(),
    };
    let stats = rollout(
        &mut env,
        |o| cmdp_experiment::protocol::greedy_action(agent.policy(), o),
        4,
        11,
        Some(4),
    );
    assert_eq!(stats.steps, env.events.len());
    for c in 0..env.event_names().len() {
        let count: u64 = env.events.iter().map(|e| u64::from(e[c])).sum();
        assert_eq!(stats.rates[c], count as f64 / env.events.len() as f64);
    }
    let mean_return = env.returns.iter().sum::<f64>() / 4.0;
    assert!((stats.mean_return - mean_return).abs() < 1e-12);
}

#[test]
fn checkpoint_round_trip_and_mismatch() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let out = run_training(&cfg, 4, Some(dir.path())).unwrap();
    let ckpt = dir.path().join(CHECKPOINT_FILE);
    let eval_cfg = ExperimentConfig {
        eval_episodes: 3,
        ..cfg.clone()
    };
    let direct = evaluate_agent(&out.agent, &eval_cfg, 4);
    let loaded = evaluate_checkpoint(&ckpt, &cfg, 3, 4).unwrap();
    assert_eq!(direct.mean_return, loaded.mean_return);
    assert_eq!(direct.rates, loaded.rates);

    let mut wider = cfg.clone();
    wider.agent.policy_hidden = vec![16];
    assert!(matches!(
        evaluate_checkpoint(&ckpt, &wider, 3, 4),
        Err(Error::Config(_))
    ));
}

fn count(svg: &str, needle: &str) -> usize {
    svg.matches(needle).count()
}

#[test]
fn charts_have_one_point_per_row_and_threshold_lines() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    run_training(&cfg, 0, Some(dir.path())).unwrap();
    let files = plot_dir(dir.path()).unwrap();
    assert!(files.iter().all(|f| f.extension().unwrap() == "svg"));
    let rows = Table::read(&dir.path().join(METRICS_FILE)).unwrap().rows.len();

    let ret = std::fs::read_to_string(dir.path().join("return.svg")).unwrap();
    assert_eq!(count(&ret, "class=\"point\""), rows);

    let rates = std::fs::read_to_string(dir.path().join("rates.svg")).unwrap();
    assert_eq!(count(&rates, "class=\"point\""), rows * cfg.task.constraints.len());
    assert_eq!(count(&rates, "class=\"threshold\""), cfg.task.constraints.len());
    for c in &cfg.task.constraints {
        assert!(rates.contains(&format!("data-value=\"{}\"", c.threshold)), "{}", c.name);
    }
    let success = std::fs::read_to_string(dir.path().join("success.svg")).unwrap();
    assert!(success.contains(&format!("data-value=\"{}\"", 0.99)));
}

#[test]
fn heat_grid_matches_sweep_shape() {
    let mut cfg = small_config();
    cfg.total_steps = 600;
    cfg.eval_episodes = 1;
    cfg.sweep = Some(SweepSection {
        weights: vec![vec![0.0, 1.0, 2.0], vec![0.5, 1.5]],
        steps: None,
        good_success: 0.8,
    });
    cfg.validate().unwrap();
    let grid = cfg.sweep_grid(0).unwrap();
    let report = run_sweep(&cfg, &grid).unwrap();
    assert_eq!(report.cells.len(), 6);
    assert!(report
        .cells
        .iter()
        .enumerate()
        .all(|(i, c)| c.index == i && c.error.is_none()));
    let again = run_sweep(&cfg, &grid).unwrap();
    assert_eq!(report.to_csv().unwrap(), again.to_csv().unwrap());

    let dir = tempfile::tempdir().unwrap();
    write_sweep(&[report], dir.path()).unwrap();
    plot_dir(dir.path()).unwrap();
    let svg = std::fs::read_to_string(dir.path().join("sweep_success_seed0.svg")).unwrap();
    assert_eq!(count(&svg, "class=\"cell\""), 6);
    assert!(svg.contains("data-rows=\"3\"") && svg.contains("data-cols=\"2\""));
}

#[test]
fn diagnose_requires_its_section() {
    let cfg = small_config();
    assert!(matches!(run_diagnostic(&cfg, 0, None), Err(Error::Config(_))));
}

fn cli(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cmdp"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    std::fs::write(p.join("bad.toml"), "eval_period = 0\n").unwrap();
    assert_eq!(cli(&["train", "bad.toml"], p).status.code(), Some(2));
    assert_eq!(cli(&["train", "missing.toml"], p).status.code(), Some(2));

    let mut cfg = small_config();
    cfg.total_steps = 1_000;
    std::fs::write(p.join("ok.toml"), cfg.to_toml_string()).unwrap();
    let out = cli(
        &[
            "train",
            "ok.toml",
            "--seed",
            "3",
            "--out",
            "run",
            "--steps",
            "800",
            "--no-bootstrap",
        ],
        p,
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run = p.join("run/seed_3");
    assert_eq!(
        Table::read(&run.join(METRICS_FILE)).unwrap().rows.last().unwrap()[0],
        800.0
    );
    let saved = ExperimentConfig::load(&run.join("config.toml")).unwrap();
    assert!(!saved.task.use_bootstrap);
    assert!(run.join("rates.svg").exists());

    let out = cli(&["eval", "run/seed_3/agent.ckpt", "ok.toml", "--seed", "3"], p);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(cli(&["plot", "run"], p).status.code(), Some(0));

    // a huge step size blows the critics up within the first updates
    let mut wild = cfg.clone();
    wild.agent.learning_rate = 1e150;
    std::fs::write(p.join("wild.toml"), wild.to_toml_string()).unwrap();
    let out = cli(&["train", "wild.toml", "--out", "wild"], p);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
