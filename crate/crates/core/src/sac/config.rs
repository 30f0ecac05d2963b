use serde::{Deserialize, Serialize};

use crate::error::{config_err, Result};

/// How the policy produces its log-standard-deviation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogStdMode {
    /// Second half of the policy network output.
    #[default]
    StateDependent,
    /// One free parameter per action dimension.
    Global,
}

/// Soft actor-critic hyperparameters. Discounts live in the task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    /// Adam step size for policy and critics.
    pub learning_rate: f64,
    /// Entropy coefficient α (held constant).
    pub entropy_coef: f64,
    /// Target-network tracking coefficient τ.
    pub tau: f64,
    /// Minibatch size N_θ for agent updates.
    pub batch_size: usize,
    /// Environment steps between agent update rounds, M_θ.
    pub update_period: usize,
    /// Gradient steps taken in each agent update round.
    pub gradient_steps: usize,
    /// Window size N_λ for the multiplier rate estimate.
    pub multiplier_batch: usize,
    /// Environment steps between multiplier updates, M_λ.
    pub multiplier_period: usize,
    /// Initial steps acting uniformly at random.
    pub random_steps: usize,
    /// Minimum buffer fill before any agent update.
    pub warmup_steps: usize,
    pub replay_capacity: usize,
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub log_std_mode: LogStdMode,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            entropy_coef: 0.02,
            tau: 0.005,
            batch_size: 256,
            update_period: 200,
            gradient_steps: 1,
            multiplier_batch: 2000,
            multiplier_period: 2000,
            random_steps: 10_000,
            warmup_steps: 2560,
            replay_capacity: 1_000_000,
            policy_hidden: vec![256, 256],
            critic_hidden: vec![256, 256],
            log_std_mode: LogStdMode::StateDependent,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.entropy_coef < 0.0 {
            return Err(config_err("entropy coefficient must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(config_err(format!("tau {} outside [0, 1]", self.tau)));
        }
        if self.learning_rate <= 0.0 {
            return Err(config_err("learning rate must be positive"));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("update_period", self.update_period),
            ("gradient_steps", self.gradient_steps),
            ("multiplier_batch", self.multiplier_batch),
            ("multiplier_period", self.multiplier_period),
            ("replay_capacity", self.replay_capacity),
        ] {
            if v == 0 {
                return Err(config_err(format!("{name} must be at least 1")));
            }
        }
        if self.replay_capacity < self.batch_size.max(self.multiplier_batch) {
            return Err(config_err("replay capacity smaller than a minibatch"));
        }
        if self.policy_hidden.is_empty() || self.critic_hidden.is_empty() {
            return Err(config_err("policy and critics need at least one hidden layer"));
        }
        Ok(())
    }

    /// Buffer fill required before the first agent update.
    pub fn warmup_threshold(&self) -> usize {
        self.batch_size.max(self.multiplier_batch).max(self.warmup_steps)
    }
}
