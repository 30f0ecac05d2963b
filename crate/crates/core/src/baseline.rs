//! Reward-engineering baseline: fixed penalty weights folded into the reward.

use serde::{Deserialize, Serialize};

use crate::cmdp::{Environment, StepOutcome, TaskSpec};
use crate::error::{Error, Result};

/// One nonnegative weight per behavioral constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyWeights(Vec<f64>);

impl PenaltyWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "penalty weight {w} must be finite and nonnegative"
            )));
        }
        Ok(Self(weights))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `r − Σ_k w_k·e_k`.
pub fn penalty_reward(reward: f64, indicators: &[u8], weights: &PenaltyWeights) -> Result<f64> {
    if indicators.len() != weights.len() {
        return Err(Error::InvalidArgument(format!(
            "{} indicators for {} weights",
            indicators.len(),
            weights.len()
        )));
    }
    Ok(reward
        - indicators
            .iter()
            .zip(weights.as_slice())
            .map(|(&e, w)| w * f64::from(e))
            .sum::<f64>())
}

/// Environment whose reward is replaced by the penalized reward of the
/// task's behavioral constraints. Events pass through unchanged.
#[derive(Clone, Debug)]
pub struct ScalarizedEnv<E> {
    inner: E,
    weights: PenaltyWeights,
    channels: Vec<usize>,
}

impl<E: Environment> ScalarizedEnv<E> {
    pub fn new(inner: E, task: &TaskSpec, weights: PenaltyWeights) -> Result<Self> {
        if weights.len() != task.num_behavioral() {
            return Err(Error::Config(format!(
                "{} penalty weights for {} behavioral constraints",
                weights.len(),
                task.num_behavioral()
            )));
        }
        let channels = task.bind_events(&inner.event_names())?[..task.num_behavioral()].to_vec();
        Ok(Self {
            inner,
            weights,
            channels,
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn weights(&self) -> &PenaltyWeights {
        &self.weights
    }
}

impl<E: Environment> Environment for ScalarizedEnv<E> {
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
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let mut out = self.inner.step(action);
        let picked: Vec<u8> = self.channels.iter().map(|&c| out.events[c]).collect();
        out.reward = penalty_reward(out.reward, &picked, &self.weights).expect("arity fixed at construction");
        out
    }
}

/// Candidate penalty weights per behavioral constraint; the sweep visits
/// their cartesian product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub weights: Vec<Vec<f64>>,
    /// Training steps per cell.
    pub steps: u64,
    pub eval_episodes: usize,
    pub seed: u64,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() || self.weights.iter().any(|w| w.is_empty()) {
            return Err(Error::Config(
                "sweep grid needs at least one value per constraint".into(),
            ));
        }
        for w in self.weights.iter().flatten() {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Config(format!(
                    "penalty weight {w} must be finite and nonnegative"
                )));
            }
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("sweep needs at least one evaluation episode".into()));
        }
        Ok(())
    }

    /// Number of cells, `Π_k |weights_k|`.
    pub fn cell_count(&self) -> usize {
        self.weights.iter().map(Vec::len).product()
    }

    /// Per-constraint value indices of cell `i`; the last constraint varies fastest.
    pub fn cell_coords(&self, mut i: usize) -> Vec<usize> {
        assert!(i < self.cell_count(), "cell index out of range");
        let mut coords = vec![0; self.weights.len()];
        for (k, w) in self.weights.iter().enumerate().rev() {
            coords[k] = i % w.len();
            i /= w.len();
        }
        coords
    }

    pub fn cell(&self, i: usize) -> PenaltyWeights {
        PenaltyWeights(
            self.cell_coords(i)
                .into_iter()
                .zip(&self.weights)
                .map(|(c, w)| w[c])
                .collect(),
        )
    }

    pub fn cells(&self) -> Vec<PenaltyWeights> {
        (0..self.cell_count()).map(|i| self.cell(i)).collect()
    }
}
