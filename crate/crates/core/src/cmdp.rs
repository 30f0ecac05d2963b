//! Constraint and task specification, the environment interface, and the
//! batch estimator that turns indicator events into rate estimates.

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// Event rate must stay at or below the threshold.
    #[default]
    UpperBound,
    /// Event rate must reach at least the threshold.
    LowerBound,
}

/// One indicator-event constraint: the rate of `name` events bounded by a
/// probability `threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub name: String,
    #[serde(default)]
    pub kind: ConstraintKind,
    pub threshold: f64,
    /// Critic discount for this cost head; defaults to the reward discount.
    #[serde(default)]
    pub discount: Option<f64>,
}

impl ConstraintSpec {
    pub fn upper(name: &str, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: ConstraintKind::UpperBound,
            threshold,
            discount: None,
        }
    }

    pub fn lower(name: &str, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            kind: ConstraintKind::LowerBound,
            threshold,
            discount: None,
        }
    }

    /// Signed slack `d̃ − J̃` (upper) or `J̃ − d̃` (lower); negative means violated.
    pub fn slack(&self, rate: f64) -> f64 {
        match self.kind {
            ConstraintKind::UpperBound => self.threshold - rate,
            ConstraintKind::LowerBound => rate - self.threshold,
        }
    }

    pub fn satisfied(&self, rate: f64, tolerance: f64) -> bool {
        self.slack(rate) >= -tolerance
    }
}

/// K behavioral constraints plus an optional success constraint.
///
/// Multiplier/critic indexing: head 0 is the reward, heads `1..=K` the
/// behavioral constraints in declaration order, head `K + 1` the success
/// constraint when present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub constraints: Vec<ConstraintSpec>,
    #[serde(default)]
    pub success: Option<ConstraintSpec>,
    #[serde(default = "default_true")]
    pub use_bootstrap: bool,
}

fn default_gamma() -> f64 {
    0.9
}

fn default_true() -> bool {
    true
}

impl Default for TaskSpec {
    fn default() -> Self {
        Self::unconstrained(default_gamma())
    }
}

impl TaskSpec {
    pub fn unconstrained(gamma: f64) -> Self {
        Self {
            gamma,
            constraints: Vec::new(),
            success: None,
            use_bootstrap: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(config_err(format!("discount {} outside [0, 1)", self.gamma)));
        }
        let mut names = std::collections::BTreeSet::new();
        for c in self.all_constraints() {
            if !(0.0..=1.0).contains(&c.threshold) {
                return Err(config_err(format!(
                    "constraint `{}` threshold {} outside [0, 1]",
                    c.name, c.threshold
                )));
            }
            if let Some(g) = c.discount {
                if !(0.0..1.0).contains(&g) {
                    return Err(config_err(format!(
                        "constraint `{}` discount {g} outside [0, 1)",
                        c.name
                    )));
                }
            }
            if !names.insert(c.name.as_str()) {
                return Err(config_err(format!("duplicate constraint name `{}`", c.name)));
            }
        }
        if let Some(s) = &self.success {
            if s.kind != ConstraintKind::LowerBound {
                return Err(config_err(format!(
                    "success constraint `{}` must be a lower bound",
                    s.name
                )));
            }
        }
        Ok(())
    }

    /// Number of behavioral constraints K.
    pub fn num_behavioral(&self) -> usize {
        self.constraints.len()
    }

    /// Number of Lagrange multipliers (behavioral + success).
    pub fn num_multipliers(&self) -> usize {
        self.constraints.len() + usize::from(self.success.is_some())
    }

    /// Number of critic heads including the reward head.
    pub fn num_heads(&self) -> usize {
        1 + self.num_multipliers()
    }

    /// Behavioral constraints followed by the success constraint.
    pub fn all_constraints(&self) -> impl Iterator<Item = &ConstraintSpec> {
        self.constraints.iter().chain(self.success.iter())
    }

    /// Constraint behind multiplier index `i` (head `i + 1`).
    pub fn constraint(&self, i: usize) -> &ConstraintSpec {
        self.all_constraints().nth(i).expect("constraint index in range")
    }

    /// Multiplier index of the success constraint, if any.
    pub fn success_index(&self) -> Option<usize> {
        self.success.as_ref().map(|_| self.constraints.len())
    }

    /// Discount per critic head.
    pub fn head_discounts(&self) -> Vec<f64> {
        std::iter::once(self.gamma)
            .chain(self.all_constraints().map(|c| c.discount.unwrap_or(self.gamma)))
            .collect()
    }

    /// Maps each constraint to the index of its event channel.
    pub fn bind_events(&self, event_names: &[String]) -> Result<Vec<usize>> {
        self.all_constraints()
            .map(|c| {
                event_names.iter().position(|n| *n == c.name).ok_or_else(|| {
                    config_err(format!(
                        "constraint `{}` names no environment event (available: {})",
                        c.name,
                        event_names.join(", ")
                    ))
                })
            })
            .collect()
    }

    pub fn constraint_names(&self) -> Vec<String> {
        self.all_constraints().map(|c| c.name.clone()).collect()
    }
}

/// Result of one environment transition.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// One 0/1 entry per event channel of the environment.
    pub events: Vec<u8>,
    /// Episode ended in an absorbing state (bootstrapping stops).
    pub terminal: bool,
    /// Episode cut by the time limit (bootstrapping continues).
    pub truncated: bool,
}

impl StepOutcome {
    pub fn episode_over(&self) -> bool {
        self.terminal || self.truncated
    }
}

/// Episodic environment emitting named indicator events.
pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn event_names(&self) -> Vec<String>;
    /// Starts a new episode; `Some(seed)` reseeds the initial-state stream.
    fn reset(&mut self, seed: Option<u64>) -> Vec<f64>;
    fn step(&mut self, action: &[f64]) -> StepOutcome;
}

impl<E: Environment + ?Sized> Environment for Box<E> {
    fn observation_dim(&self) -> usize {
        (**self).observation_dim()
    }
    fn action_dim(&self) -> usize {
        (**self).action_dim()
    }
    fn event_names(&self) -> Vec<String> {
        (**self).event_names()
    }
    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        (**self).reset(seed)
    }
    fn step(&mut self, action: &[f64]) -> StepOutcome {
        (**self).step(action)
    }
}

/// Per-constraint arithmetic mean of 0/1 indicators over a batch.
pub fn estimate_cost_rates<T: Scalar, R: AsRef<[u8]>>(batch: &[R]) -> Result<Vec<T>> {
    let first = batch
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty indicator batch".into()))?;
    let width = first.as_ref().len();
    let mut counts = vec![0u64; width];
    for row in batch {
        let row = row.as_ref();
        if row.len() != width {
            return Err(Error::InvalidArgument(format!(
                "indicator arity {} differs from {width}",
                row.len()
            )));
        }
        for (c, &e) in counts.iter_mut().zip(row) {
            match e {
                0 => {}
                1 => *c += 1,
                other => return Err(Error::InvalidArgument(format!("indicator value {other} is not 0 or 1"))),
            }
        }
    }
    let n = T::of(batch.len() as f64);
    Ok(counts.into_iter().map(|c| T::of(c as f64) / n).collect())
}

/// Whether every constraint holds at the given rates within `tolerance`.
/// `rates` follow the multiplier order (behavioral, then success).
pub fn is_feasible(rates: &[f64], task: &TaskSpec, tolerance: f64) -> bool {
    assert_eq!(rates.len(), task.num_multipliers(), "one rate per constraint");
    task.all_constraints()
        .zip(rates)
        .all(|(c, &r)| c.satisfied(r, tolerance))
}
