use serde::{Deserialize, Serialize};

use cmdp_core::{Environment, StepOutcome};

use crate::arena::{MiniArena, EVENT_NAMES};
use crate::config::ArenaConfig;

pub const DIAGNOSTIC_EVENT: &str = "diagnostic";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticConfig {
    /// Global step at which the impossible constraint becomes avoidable.
    pub switch_step: u64,
}

/// MiniArena with one extra event channel, `diagnostic`. Before the switch
/// step it fires on every step; afterwards only on steps where the agent
/// recharges.
///
/// The phase follows a global step counter that survives episode resets.
#[derive(Clone, Debug)]
pub struct DiagnosticArena {
    inner: MiniArena,
    switch_step: u64,
    global_step: u64,
}

impl DiagnosticArena {
    pub fn new(config: ArenaConfig, diagnostic: &DiagnosticConfig) -> Self {
        Self {
            inner: MiniArena::new(config),
            switch_step: diagnostic.switch_step,
            global_step: 0,
        }
    }

    pub fn inner(&self) -> &MiniArena {
        &self.inner
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    /// Aligns the phase with an external clock, e.g. for evaluation copies.
    pub fn set_global_step(&mut self, step: u64) {
        self.global_step = step;
    }

    pub fn impossible_phase(&self) -> bool {
        self.global_step < self.switch_step
    }
}

impl Environment for DiagnosticArena {
    fn observation_dim(&self) -> usize {
        self.inner.observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.inner.action_dim()
    }

    fn event_names(&self) -> Vec<String> {
        EVENT_NAMES
            .iter()
            .chain(std::iter::once(&DIAGNOSTIC_EVENT))
            .map(|s| s.to_string())
            .collect()
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        self.inner.reset(seed)
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let impossible = self.impossible_phase();
        let mut out = self.inner.step(action);
        out.events.push(u8::from(impossible || self.inner.state().recharging));
        self.global_step += 1;
        out
    }
}
