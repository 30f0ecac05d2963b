//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cmdp_arena::{ArenaConfig, DiagnosticConfig};
use cmdp_core::error::{Error, Result};
use cmdp_core::sac::AgentConfig;
use cmdp_core::{MultiplierConfig, TaskSpec};

/// Grid of penalty weights for the reward-engineering baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// One list of candidate weights per behavioral constraint, in task order.
    pub weights: Vec<Vec<f64>>,
    /// Training steps per cell; defaults to `total_steps`.
    #[serde(default)]
    pub steps: Option<u64>,
    /// Success rate a feasible cell must reach to count as good.
    #[serde(default = "default_good_success")]
    pub good_success: f64,
}

fn default_good_success() -> f64 {
    0.8
}

/// Everything one experiment needs. Every field has a default, so an empty
/// file is a valid (unconstrained) experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub total_steps: u64,
    /// Environment steps between evaluations, E.
    pub eval_period: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Absolute slack allowed when reporting feasibility.
    pub feasibility_tolerance: f64,
    pub task: TaskSpec,
    pub agent: AgentConfig,
    pub multipliers: MultiplierConfig,
    pub arena: ArenaConfig,
    pub diagnostic: Option<DiagnosticConfig>,
    pub sweep: Option<SweepSection>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            total_steps: 200_000,
            eval_period: 5_000,
            eval_episodes: 10,
            seeds: vec![0],
            output_dir: PathBuf::from("runs"),
            feasibility_tolerance: 0.02,
            task: TaskSpec::default(),
            agent: AgentConfig::default(),
            multipliers: MultiplierConfig::default(),
            arena: ArenaConfig::default(),
            diagnostic: None,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.eval_period == 0 {
            return bad("eval_period must be at least 1".into());
        }
        if self.eval_episodes == 0 {
            return bad("eval_episodes must be at least 1".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if !(self.feasibility_tolerance >= 0.0) {
            return bad("feasibility_tolerance must be nonnegative".into());
        }
        self.task.validate()?;
        self.agent.validate()?;
        self.arena.validate()?;
        if self.multipliers.learning_rate <= 0.0 {
            return bad("multiplier learning rate must be positive".into());
        }
        let mut events: Vec<String> = cmdp_arena::EVENT_NAMES.iter().map(|s| s.to_string()).collect();
        if self.diagnostic.is_some() {
            events.push(cmdp_arena::DIAGNOSTIC_EVENT.to_string());
        }
        self.task.bind_events(&events)?;
        if let Some(sweep) = &self.sweep {
            if sweep.weights.len() != self.task.num_behavioral() {
                return bad(format!(
                    "sweep has {} weight lists for {} behavioral constraints",
                    sweep.weights.len(),
                    self.task.num_behavioral()
                ));
            }
            self.sweep_grid(self.seeds[0]).expect("sweep present").validate()?;
        }
        Ok(())
    }

    /// The sweep grid for one seed, if a sweep section is present.
    pub fn sweep_grid(&self, seed: u64) -> Option<cmdp_core::baseline::SweepGrid> {
        self.sweep.as_ref().map(|s| cmdp_core::baseline::SweepGrid {
            weights: s.weights.clone(),
            steps: s.steps.unwrap_or(self.total_steps),
            eval_episodes: self.eval_episodes,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cmdp_core::ConstraintKind;

    #[test]
    fn empty_file_gives_table_defaults() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.task.gamma, 0.9);
        assert_eq!(cfg.agent.entropy_coef, 0.02);
        assert_eq!(cfg.agent.tau, 0.005);
        assert_eq!(cfg.agent.learning_rate, 3e-4);
        assert_eq!(cfg.agent.batch_size, 256);
        assert_eq!(cfg.agent.update_period, 200);
        assert_eq!(cfg.agent.multiplier_batch, 2000);
        assert_eq!(cfg.agent.multiplier_period, 2000);
        assert_eq!(cfg.agent.replay_capacity, 1_000_000);
        assert_eq!(cfg.multipliers.learning_rate, 0.03);
        assert_eq!(cfg.multipliers.initial_value, 0.02);
        assert_eq!(cfg.eval_episodes, 10);
    }

    #[test]
    fn parses_constraints() {
        let cfg = ExperimentConfig::from_toml_str(
            r#"
            total_steps = 1000
            [task]
            use_bootstrap = false
            [[task.constraints]]
            name = "in_lava"
            threshold = 0.01
            [task.success]
            name = "success"
            kind = "lower_bound"
            threshold = 0.99
            [arena]
            lava = [[0.4, 0.4, 0.6, 0.6]]
            "#,
        )
        .unwrap();
        assert_eq!(cfg.task.constraints[0].kind, ConstraintKind::UpperBound);
        assert!(!cfg.task.use_bootstrap);
        assert_eq!(cfg.arena.lava.len(), 1);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "eval_period = 0",
            "unknown_key = 1",
            "[[task.constraints]]\nname = \"teleport\"\nthreshold = 0.1",
            "[[task.constraints]]\nname = \"in_lava\"\nthreshold = 0.1\n[[task.constraints]]\nname = \"in_lava\"\nthreshold = 0.2",
            "[sweep]\nweights = [[1.0]]",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(text), Err(Error::Config(_))), "{text}");
        }
    }
}
