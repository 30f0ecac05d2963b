//! Lagrange multiplier bank.
//!
//! In normalized mode the multipliers are a softmax over the base parameters
//! `z₁…z_M` and a fixed anchor `a₀ = 0`:
//!
//! ```text
//! λ_k = exp(z_k) / (exp(a₀) + Σ exp(z_k'))      λ₀ = 1 − Σ λ_k
//! ```
//!
//! so every multiplier stays in `(0, 1)` and the reward weight shrinks as the
//! constraint weights grow. The unnormalized mode keeps raw `λ_k ≥ 0`
//! (projected by clipping) with `λ₀ = 1`, which is the ablation baseline.

use serde::{Deserialize, Serialize};

use crate::cmdp::{ConstraintKind, TaskSpec};
use crate::error::{Error, Result};
use crate::numcore::{AdamHyper, AdamState};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierMode {
    #[default]
    Normalized,
    Unnormalized,
}

impl std::str::FromStr for MultiplierMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized" => Ok(Self::Normalized),
            "unnormalized" => Ok(Self::Unnormalized),
            other => Err(Error::Config(format!(
                "unknown multiplier mode `{other}` (expected normalized|unnormalized)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierConfig {
    #[serde(default)]
    pub mode: MultiplierMode,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Initial `z_k` (normalized) or raw `λ_k` (unnormalized).
    #[serde(default = "default_init")]
    pub initial_value: f64,
}

fn default_lr() -> f64 {
    0.03
}

fn default_init() -> f64 {
    0.02
}

impl Default for MultiplierConfig {
    fn default() -> Self {
        Self {
            mode: MultiplierMode::Normalized,
            learning_rate: default_lr(),
            initial_value: default_init(),
        }
    }
}

/// Reward weight `λ₀` and one multiplier per constraint (task order).
#[derive(Clone, Debug, PartialEq)]
pub struct Lambdas<T> {
    pub reward: T,
    pub constraints: Vec<T>,
}

impl<T: Scalar> Lambdas<T> {
    pub fn total(&self) -> T {
        self.reward + self.constraints.iter().copied().sum::<T>()
    }

    /// Weight of the reward head, `λ̃₀` when bootstrapping.
    pub fn reward_weight(&self, task: &TaskSpec) -> T {
        match task.success_index() {
            Some(i) => bootstrap_weight(self.reward, self.constraints[i], task.use_bootstrap),
            None => self.reward,
        }
    }

    /// Signed per-head weights of the policy objective: reward head first,
    /// upper-bound heads negative, lower-bound heads positive.
    pub fn head_weights(&self, task: &TaskSpec) -> Vec<T> {
        std::iter::once(self.reward_weight(task))
            .chain(
                task.all_constraints()
                    .zip(&self.constraints)
                    .map(|(c, &l)| match c.kind {
                        ConstraintKind::UpperBound => -l,
                        ConstraintKind::LowerBound => l,
                    }),
            )
            .collect()
    }
}

/// `max(λ₀, λ_succ)` when bootstrapping, `λ₀` otherwise.
pub fn bootstrap_weight<T: Scalar>(reward: T, success: T, use_bootstrap: bool) -> T {
    if use_bootstrap {
        reward.max(success)
    } else {
        reward
    }
}

#[derive(Clone, Debug)]
pub struct MultiplierBank<T> {
    mode: MultiplierMode,
    params: Vec<T>,
    anchor: T,
    adam: AdamState<T>,
    frozen: bool,
}

impl<T: Scalar> MultiplierBank<T> {
    pub fn new(count: usize, config: &MultiplierConfig) -> Self {
        Self::with_params(
            config.mode,
            vec![T::of(config.initial_value); count],
            config.learning_rate,
        )
    }

    pub fn with_params(mode: MultiplierMode, params: Vec<T>, learning_rate: f64) -> Self {
        let adam = AdamState::new(params.len(), AdamHyper::with_learning_rate(T::of(learning_rate)));
        Self {
            mode,
            params,
            anchor: T::zero(),
            adam,
            frozen: false,
        }
    }

    pub fn mode(&self) -> MultiplierMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Base parameters `z_k`, or raw `λ_k` in unnormalized mode.
    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    /// Stops all further updates; the multipliers keep their current values.
    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Softmax-normalized multipliers with `λ₀` from the anchor.
    pub fn normalized_lambdas(&self) -> Lambdas<T> {
        let shift = self.params.iter().fold(self.anchor, |m, &z| m.max(z));
        let anchor = (self.anchor - shift).exp();
        let exps: Vec<T> = self.params.iter().map(|&z| (z - shift).exp()).collect();
        let denom = anchor + exps.iter().copied().sum::<T>();
        Lambdas {
            reward: anchor / denom,
            constraints: exps.into_iter().map(|e| e / denom).collect(),
        }
    }

    pub fn lambdas(&self) -> Lambdas<T> {
        match self.mode {
            MultiplierMode::Normalized => self.normalized_lambdas(),
            MultiplierMode::Unnormalized => Lambdas {
                reward: T::one(),
                constraints: self.params.clone(),
            },
        }
    }

    /// Per-constraint descent objectives `λ_k·s_k` with `s_k` the signed
    /// slack (`d̃ − J̃` for upper bounds, `J̃ − d̃` for lower bounds).
    pub fn descent_objectives(&self, rates: &[T], task: &TaskSpec) -> Vec<T> {
        let lambdas = self.lambdas();
        slacks(rates, task)
            .into_iter()
            .zip(lambdas.constraints)
            .map(|(s, l)| l * s)
            .collect()
    }

    /// `∂(λ_k·s_k)/∂z_k` for each k. In normalized mode `∂λ_k/∂z_k = λ_k(1 − λ_k)`.
    pub fn descent_gradient(&self, rates: &[T], task: &TaskSpec) -> Vec<T> {
        let s = slacks(rates, task);
        match self.mode {
            MultiplierMode::Normalized => self
                .normalized_lambdas()
                .constraints
                .into_iter()
                .zip(s)
                .map(|(l, s)| l * (T::one() - l) * s)
                .collect(),
            MultiplierMode::Unnormalized => s,
        }
    }

    /// One Adam descent step on the multiplier objectives given batch rates.
    pub fn update(&mut self, rates: &[T], task: &TaskSpec) -> Result<()> {
        if rates.len() != self.params.len() || task.num_multipliers() != self.params.len() {
            return Err(Error::Config(format!(
                "{} rates for {} multipliers ({} constraints)",
                rates.len(),
                self.params.len(),
                task.num_multipliers()
            )));
        }
        if self.frozen || self.params.is_empty() {
            return Ok(());
        }
        let grad = self.descent_gradient(rates, task);
        self.adam.step(&mut self.params, &grad)?;
        if self.mode == MultiplierMode::Unnormalized {
            self.params.iter_mut().for_each(|l| *l = l.max(T::zero()));
        }
        if let Some(i) = self.params.iter().position(|z| !z.is_finite()) {
            return Err(Error::Divergence(format!("multiplier parameter {i} is non-finite")));
        }
        Ok(())
    }
}

fn slacks<T: Scalar>(rates: &[T], task: &TaskSpec) -> Vec<T> {
    task.all_constraints()
        .zip(rates)
        .map(|(c, &r)| {
            let d = T::of(c.threshold);
            match c.kind {
                ConstraintKind::UpperBound => d - r,
                ConstraintKind::LowerBound => r - d,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmdp::ConstraintSpec;
    use proptest::prelude::*;

    fn task(k: usize, success: bool) -> TaskSpec {
        TaskSpec {
            gamma: 0.9,
            constraints: (0..k).map(|i| ConstraintSpec::upper(&format!("c{i}"), 0.1)).collect(),
            success: success.then(|| ConstraintSpec::lower("success", 0.9)),
            use_bootstrap: true,
        }
    }

    #[test]
    fn symmetric_single_multiplier() {
        let bank = MultiplierBank::<f64>::with_params(MultiplierMode::Normalized, vec![0.0], 0.03);
        let l = bank.normalized_lambdas();
        assert_eq!(l.reward, 0.5);
        assert_eq!(l.constraints, vec![0.5]);
    }

    #[test]
    fn very_negative_parameters_leave_reward_weight_near_one() {
        let bank = MultiplierBank::<f64>::with_params(MultiplierMode::Normalized, vec![-30.0; 5], 0.03);
        let l = bank.normalized_lambdas();
        // high-precision value of 1/(1 + 5e^-30)
        assert!((l.reward - 0.999_999_999_999_532_1).abs() < 1e-12);
        assert!((l.reward - 1.0).abs() < 1e-12);
    }

    #[test]
    fn initial_values_match_high_precision_oracle() {
        let bank = MultiplierBank::<f64>::new(5, &MultiplierConfig::default());
        let l = bank.normalized_lambdas();
        // mpmath, 40 digits: e^0.02/(1 + 5e^0.02) and 1/(1 + 5e^0.02)
        for c in &l.constraints {
            assert!((c - 0.167_218_524_773_032_2).abs() < 1e-15);
        }
        assert!((l.reward - 0.163_907_376_134_838_96).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_weight_cases() {
        assert_eq!(bootstrap_weight(0.1, 0.4, true), 0.4);
        assert_eq!(bootstrap_weight(0.3, 0.3, true), 0.3);
        assert_eq!(bootstrap_weight(0.1, 0.4, false), 0.1);
    }

    #[test]
    fn update_signs() {
        let t = task(2, true);
        let mut bank = MultiplierBank::<f64>::new(3, &MultiplierConfig::default());
        let before = bank.params().to_vec();
        // c0 violated, c1 satisfied, success above its bound
        bank.update(&[0.5, 0.0, 0.95], &t).unwrap();
        let after = bank.params();
        assert!(after[0] > before[0]);
        assert!(after[1] < before[1]);
        assert!(after[2] < before[2]);
    }

    #[test]
    fn unnormalized_projection_keeps_nonnegative() {
        let t = task(1, false);
        let cfg = MultiplierConfig {
            mode: MultiplierMode::Unnormalized,
            learning_rate: 0.5,
            initial_value: 0.1,
        };
        let mut bank = MultiplierBank::<f64>::new(1, &cfg);
        for _ in 0..10 {
            bank.update(&[0.0], &t).unwrap();
            assert!(bank.params()[0] >= 0.0);
        }
        assert_eq!(bank.params()[0], 0.0);
        assert_eq!(bank.lambdas().reward, 1.0);
    }

    #[test]
    fn unnormalized_multiplier_grows_without_bound_under_permanent_violation() {
        let t = task(1, false);
        let cfg = MultiplierConfig {
            mode: MultiplierMode::Unnormalized,
            ..MultiplierConfig::default()
        };
        let mut bank = MultiplierBank::<f64>::new(1, &cfg);
        let mut prev = bank.params()[0];
        for _ in 0..2000 {
            bank.update(&[1.0], &t).unwrap();
            assert!(bank.params()[0] >= prev);
            prev = bank.params()[0];
        }
        assert!(prev > 50.0);
    }

    #[test]
    fn frozen_bank_ignores_updates() {
        let t = task(1, true);
        let mut bank = MultiplierBank::<f64>::new(2, &MultiplierConfig::default());
        bank.freeze();
        bank.update(&[1.0, 0.0], &t).unwrap();
        assert_eq!(bank.params(), &[0.02, 0.02]);
    }

    #[test]
    fn head_weight_signs() {
        let t = task(2, true);
        let l = Lambdas {
            reward: 0.1,
            constraints: vec![0.2, 0.3, 0.4],
        };
        assert_eq!(l.head_weights(&t), vec![0.4, -0.2, -0.3, 0.4]);
        let mut nb = t.clone();
        nb.use_bootstrap = false;
        assert_eq!(l.head_weights(&nb), vec![0.1, -0.2, -0.3, 0.4]);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let t = task(3, true);
        let bank = MultiplierBank::<f64>::with_params(MultiplierMode::Normalized, vec![0.3, -0.7, 1.1, 0.05], 0.03);
        let rates = [0.4, 0.02, 0.25, 0.6];
        let g = bank.descent_gradient(&rates, &t);
        let h = 1e-5;
        for k in 0..4 {
            let mut p = bank.params().to_vec();
            p[k] += h;
            let up = MultiplierBank::with_params(MultiplierMode::Normalized, p.clone(), 0.03)
                .descent_objectives(&rates, &t)[k];
            p[k] -= 2.0 * h;
            let dn = MultiplierBank::with_params(MultiplierMode::Normalized, p, 0.03).descent_objectives(&rates, &t)[k];
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-9, "{fd} vs {}", g[k]);
        }
    }

    proptest! {
        #[test]
        // Beyond |z| ≈ 36 a multiplier of 1 − e^{−z} rounds to exactly 1.0 in f64.
        fn simplex_invariant(z in prop::collection::vec(-30.0f64..30.0, 1..8)) {
            let bank = MultiplierBank::with_params(MultiplierMode::Normalized, z, 0.03);
            let l = bank.normalized_lambdas();
            prop_assert!((l.total() - 1.0).abs() < 1e-12);
            prop_assert!(l.reward > 0.0 && l.reward < 1.0);
            for c in l.constraints {
                prop_assert!(c > 0.0 && c < 1.0);
            }
        }

        #[test]
        fn f32_simplex(z in prop::collection::vec(-10.0f32..10.0, 1..6)) {
            let bank = MultiplierBank::with_params(MultiplierMode::Normalized, z, 0.03);
            prop_assert!((bank.normalized_lambdas().total() - 1.0).abs() < 1e-5);
        }
    }
}
