use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Adam moment accumulators for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: u64,
    pub hyper: AdamHyper<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamHyper<T> {
    pub fn with_learning_rate(learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
        }
    }
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, hyper: AdamHyper<T>) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            hyper,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moment(&self) -> &[T] {
        &self.m
    }

    pub fn second_moment(&self) -> &[T] {
        &self.v
    }

    /// One bias-corrected descent step `params ← params − lr·m̂/(√v̂ + ε)`.
    ///
    /// A non-finite gradient entry aborts before anything is modified.
    pub fn step(&mut self, params: &mut [T], grads: &[T]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Config(format!(
                "adam shape mismatch: state {}, params {}, grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite gradient {} at index {i}",
                grads[i]
            )));
        }
        let AdamHyper {
            learning_rate,
            beta1,
            beta2,
            eps,
        } = self.hyper;
        self.t += 1;
        let t = self.t as i32;
        let one = T::one();
        let bc1 = one - beta1.powi(t);
        let bc2 = one - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = beta1 * *m + (one - beta1) * *g;
            *v = beta2 * *v + (one - beta2) * *g * *g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= learning_rate * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Exponential tracking `target ← τ·online + (1 − τ)·target`.
pub fn soft_update<T: Scalar>(target: &mut [T], online: &[T], tau: T) {
    assert_eq!(target.len(), online.len(), "soft_update shape mismatch");
    let keep = T::one() - tau;
    for (t, o) in target.iter_mut().zip(online) {
        *t = tau * *o + keep * *t;
    }
}
