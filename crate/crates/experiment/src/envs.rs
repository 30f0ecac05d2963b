use cmdp_arena::{ArenaConfig, DiagnosticArena, DiagnosticConfig, MiniArena};
use cmdp_core::{Environment, StepOutcome};

/// The environments an experiment can run on.
#[derive(Clone, Debug)]
pub enum ArenaEnv {
    Mini(MiniArena),
    Diagnostic(DiagnosticArena),
}

impl ArenaEnv {
    pub fn build(arena: &ArenaConfig, diagnostic: Option<&DiagnosticConfig>, seed: u64) -> Self {
        let config = ArenaConfig { seed, ..arena.clone() };
        match diagnostic {
            Some(d) => Self::Diagnostic(DiagnosticArena::new(config, d)),
            None => Self::Mini(MiniArena::new(config)),
        }
    }

    /// Puts a diagnostic environment in the phase of global step `step`.
    pub fn sync_phase(&mut self, step: u64) {
        if let Self::Diagnostic(d) = self {
            d.set_global_step(step);
        }
    }

    pub fn arena(&self) -> &MiniArena {
        match self {
            Self::Mini(m) => m,
            Self::Diagnostic(d) => d.inner(),
        }
    }
}

impl Environment for ArenaEnv {
    fn observation_dim(&self) -> usize {
        self.arena().observation_dim()
    }

    fn action_dim(&self) -> usize {
        self.arena().action_dim()
    }

    fn event_names(&self) -> Vec<String> {
        match self {
            Self::Mini(m) => m.event_names(),
            Self::Diagnostic(d) => d.event_names(),
        }
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        match self {
            Self::Mini(m) => m.reset(seed),
            Self::Diagnostic(d) => d.reset(seed),
        }
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        match self {
            Self::Mini(m) => m.step(action),
            Self::Diagnostic(d) => d.step(action),
        }
    }
}

/// Independent seed for stream `stream` of run seed `seed`.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finaliser over the pair
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
