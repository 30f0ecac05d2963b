//! Diagonal Gaussian action head squashed through `tanh`.
//!
//! A pre-squash sample is `u = μ + σ⊙ξ` with `ξ ~ N(0, I)`; the emitted action
//! is `a = tanh(u)` and its log-density carries the change-of-variables term
//! `−Σ log(1 − aᵢ² + ε)`.

use crate::scalar::Scalar;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const SQUASH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianHead<T> {
    mean: Vec<T>,
    log_std: Vec<T>,
}

impl<T: Scalar> GaussianHead<T> {
    /// Builds a head, clamping `log_std` into `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn new(mean: Vec<T>, log_std: Vec<T>) -> Self {
        assert_eq!(mean.len(), log_std.len(), "mean/log-std dimension");
        let log_std = log_std.into_iter().map(clamp_log_std).collect();
        Self { mean, log_std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn log_std(&self) -> &[T] {
        &self.log_std
    }

    /// Reparameterized sample for the given standard-normal `noise`.
    pub fn sample_squashed(&self, noise: &[T]) -> (Vec<T>, T) {
        let mut action = vec![T::zero(); self.dim()];
        let lp = squash_sample(&self.mean, &self.log_std, noise, &mut action);
        (action, lp)
    }

    /// Evaluation-mode action `tanh(μ)`.
    pub fn greedy(&self) -> Vec<T> {
        self.mean.iter().map(|m| m.tanh()).collect()
    }

    /// Log-density of an action in the open box `(−1, 1)ᵈ`.
    pub fn log_prob(&self, action: &[T]) -> T {
        assert_eq!(action.len(), self.dim());
        let eps = T::of(SQUASH_EPS);
        let half = T::of(0.5);
        let mut lp = T::zero();
        for ((a, m), ls) in action.iter().zip(&self.mean).zip(&self.log_std) {
            let u = a.atanh();
            let xi = (u - *m) / ls.exp();
            lp += -half * xi * xi - *ls - T::of(HALF_LN_2PI) - (T::one() - *a * *a + eps).ln();
        }
        lp
    }
}

pub fn clamp_log_std<T: Scalar>(x: T) -> T {
    x.max(T::of(LOG_STD_MIN)).min(T::of(LOG_STD_MAX))
}

/// Samples one squashed action into `action` and returns its log-probability.
/// `raw_log_std` is clamped before use.
pub fn squash_sample<T: Scalar>(mean: &[T], raw_log_std: &[T], noise: &[T], action: &mut [T]) -> T {
    assert_eq!(mean.len(), noise.len(), "noise dimension");
    let eps = T::of(SQUASH_EPS);
    let half = T::of(0.5);
    let mut lp = T::zero();
    for i in 0..mean.len() {
        let ls = clamp_log_std(raw_log_std[i]);
        let xi = noise[i];
        let a = (mean[i] + ls.exp() * xi).tanh();
        action[i] = a;
        lp += -half * xi * xi - ls - T::of(HALF_LN_2PI) - (T::one() - a * a + eps).ln();
    }
    lp
}

/// Chain rule through [`squash_sample`]: given upstream gradients on the
/// action (`d_action`) and on the log-probability (`d_logp`), writes the
/// gradients with respect to the mean and the raw (unclamped) log-std.
#[allow(clippy::too_many_arguments)]
pub fn squash_backward<T: Scalar>(
    raw_log_std: &[T],
    noise: &[T],
    action: &[T],
    d_action: &[T],
    d_logp: T,
    d_mean: &mut [T],
    d_log_std: &mut [T],
) {
    let eps = T::of(SQUASH_EPS);
    let two = T::of(2.0);
    for i in 0..action.len() {
        let a = action[i];
        let one_m_a2 = T::one() - a * a;
        let du = d_action[i] * one_m_a2 + d_logp * two * a * one_m_a2 / (one_m_a2 + eps);
        d_mean[i] = du;
        let raw = raw_log_std[i];
        d_log_std[i] = if raw < T::of(LOG_STD_MIN) || raw > T::of(LOG_STD_MAX) {
            T::zero()
        } else {
            du * raw.exp() * noise[i] - d_logp
        };
    }
}
