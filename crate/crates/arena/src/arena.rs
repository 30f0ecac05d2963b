use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cmdp_core::{Environment, StepOutcome};

use crate::config::ArenaConfig;

pub const EVENT_NAMES: [&str; 5] = ["in_lava", "not_looking", "above_speed", "below_energy", "success"];
pub const IN_LAVA: usize = 0;
pub const NOT_LOOKING: usize = 1;
pub const ABOVE_SPEED: usize = 2;
pub const BELOW_ENERGY: usize = 3;
pub const SUCCESS: usize = 4;
/// Events whose per-episode rates are part of the observation.
pub const BEHAVIORS: usize = 4;

pub const ACTION_DIM: usize = 4;

/// Observation layout: `(name, width, lower, upper)` per field, in order.
pub const OBSERVATION_FIELDS: [(&str, usize, f64, f64); 12] = [
    ("position", 2, 0.0, 1.0),
    ("goal_offset", 2, -1.0, 1.0),
    ("goal_distance", 1, 0.0, 1.0),
    ("velocity", 2, -1.0, 1.0),
    ("heading", 2, -1.0, 1.0),
    ("marker_angle", 1, -1.0, 1.0),
    ("marker_in_view", 1, 0.0, 1.0),
    ("energy", 1, 0.0, 1.0),
    ("recharging", 1, 0.0, 1.0),
    ("lava_grid", 9, 0.0, 1.0),
    ("event_rates", BEHAVIORS, 0.0, 1.0),
    ("time_left", 1, 0.0, 1.0),
];

pub const OBS_DIM: usize = {
    let mut n = 0;
    let mut i = 0;
    while i < OBSERVATION_FIELDS.len() {
        n += OBSERVATION_FIELDS[i].1;
        i += 1;
    }
    n
};

/// Spacing of the 3×3 lava probe around the agent.
const PROBE: f64 = 0.1;

/// Full simulator state.
#[derive(Clone, Debug, PartialEq)]
pub struct ArenaState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub heading: f64,
    pub energy: f64,
    pub step: usize,
    pub goal: [f64; 2],
    pub recharging: bool,
    /// Per-episode counts of the behavioral events.
    pub event_counts: [u32; BEHAVIORS],
}

/// Continuous 2D navigation: reach the goal while avoiding lava, keeping the
/// central marker in view, staying under the speed limit and above the
/// minimum energy level.
///
/// Action `(ax, ay, turn, recharge)` in `[−1, 1]⁴`; `recharge > 0` holds the
/// agent still for the step and refills energy.
#[derive(Clone, Debug)]
pub struct MiniArena {
    config: ArenaConfig,
    rng: ChaCha8Rng,
    state: ArenaState,
    warned: bool,
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w < -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

impl MiniArena {
    /// Panics on an invalid config; call [`ArenaConfig::validate`] first to
    /// get an error instead.
    pub fn new(config: ArenaConfig) -> Self {
        config.validate().expect("valid arena config");
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut env = Self {
            config,
            rng,
            state: ArenaState {
                position: [0.0; 2],
                velocity: [0.0; 2],
                heading: 0.0,
                energy: 1.0,
                step: 0,
                goal: [1.0; 2],
                recharging: false,
                event_counts: [0; BEHAVIORS],
            },
            warned: false,
        };
        env.reset(None);
        env
    }

    pub fn config(&self) -> &ArenaConfig {
        &self.config
    }

    pub fn state(&self) -> &ArenaState {
        &self.state
    }

    /// Overwrites the state (for scripted tests and replays). The episode
    /// counters are kept as given.
    pub fn set_state(&mut self, state: ArenaState) {
        self.state = state;
    }

    fn free_point(&mut self) -> [f64; 2] {
        loop {
            let p = [self.rng.random::<f64>(), self.rng.random::<f64>()];
            if !self.config.in_lava(p[0], p[1]) {
                return p;
            }
        }
    }

    pub fn goal_distance(&self) -> f64 {
        let s = &self.state;
        norm([s.goal[0] - s.position[0], s.goal[1] - s.position[1]])
    }

    /// Signed angle from the heading to the marker direction, in `[−π, π)`.
    pub fn marker_angle(&self) -> f64 {
        let s = &self.state;
        let d = [
            self.config.marker[0] - s.position[0],
            self.config.marker[1] - s.position[1],
        ];
        if norm(d) == 0.0 {
            return 0.0;
        }
        wrap_angle(d[1].atan2(d[0]) - s.heading)
    }

    fn terminal_speed(&self) -> f64 {
        self.config.accel * SQRT_2 / (1.0 - self.config.drag)
    }

    fn events(&self) -> [u8; 5] {
        let s = &self.state;
        [
            u8::from(self.config.in_lava(s.position[0], s.position[1])),
            u8::from(self.marker_angle().abs() > self.config.fov_half_angle),
            u8::from(norm(s.velocity) > self.config.speed_limit),
            u8::from(s.energy < self.config.min_energy),
            u8::from(self.goal_distance() <= self.config.goal_radius),
        ]
    }

    pub fn observation(&self) -> Vec<f64> {
        let s = &self.state;
        let c = &self.config;
        let mut o = Vec::with_capacity(OBS_DIM);
        o.extend(s.position);
        o.extend([s.goal[0] - s.position[0], s.goal[1] - s.position[1]]);
        o.push(self.goal_distance() / SQRT_2);
        let vs = self.terminal_speed();
        o.extend(s.velocity.map(|v| (v / vs).clamp(-1.0, 1.0)));
        o.extend([s.heading.cos(), s.heading.sin()]);
        let angle = self.marker_angle();
        o.push(angle / PI);
        o.push(if angle.abs() <= c.fov_half_angle { 1.0 } else { 0.0 });
        o.push(s.energy);
        o.push(f64::from(u8::from(s.recharging)));
        for dy in [-PROBE, 0.0, PROBE] {
            for dx in [-PROBE, 0.0, PROBE] {
                let (x, y) = (s.position[0] + dx, s.position[1] + dy);
                let inside = (0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y);
                o.push(f64::from(u8::from(inside && c.in_lava(x, y))));
            }
        }
        let steps = s.step.max(1) as f64;
        o.extend(s.event_counts.map(|n| f64::from(n) / steps));
        o.push((c.episode_length - s.step) as f64 / c.episode_length as f64);
        debug_assert_eq!(o.len(), OBS_DIM);
        o
    }

    fn clip_action(&mut self, action: &[f64]) -> [f64; ACTION_DIM] {
        assert_eq!(action.len(), ACTION_DIM, "arena action dimension");
        let mut a = [0.0; ACTION_DIM];
        let mut clipped = false;
        for (dst, &x) in a.iter_mut().zip(action) {
            *dst = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
            clipped |= *dst != x;
        }
        if clipped && !self.warned {
            log::warn!("arena action {action:?} outside [-1, 1]; clipped (further clips not reported)");
            self.warned = true;
        }
        a
    }
}

impl Environment for MiniArena {
    fn observation_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn event_names(&self) -> Vec<String> {
        EVENT_NAMES.iter().map(|s| s.to_string()).collect()
    }

    fn reset(&mut self, seed: Option<u64>) -> Vec<f64> {
        if let Some(seed) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(seed);
        }
        let position = self.free_point();
        let goal = loop {
            let g = self.free_point();
            if norm([g[0] - position[0], g[1] - position[1]]) > 2.0 * self.config.goal_radius {
                break g;
            }
        };
        let heading = self.rng.random_range(-PI..PI);
        let energy = self.rng.random_range(self.config.initial_energy_min..=1.0);
        self.state = ArenaState {
            position,
            velocity: [0.0; 2],
            heading,
            energy,
            step: 0,
            goal,
            recharging: false,
            event_counts: [0; BEHAVIORS],
        };
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> StepOutcome {
        let a = self.clip_action(action);
        let c = self.config.clone();
        let d_prev = self.goal_distance();
        let s = &mut self.state;
        s.heading = wrap_angle(s.heading + c.turn_rate * a[2]);
        s.recharging = a[3] > 0.0;
        let mut energy = s.energy;
        if s.recharging {
            s.velocity = [0.0; 2];
            energy += c.recharge_rate;
        } else {
            s.velocity = [
                c.drag * s.velocity[0] + c.accel * a[0],
                c.drag * s.velocity[1] + c.accel * a[1],
            ];
            energy -= c.energy_drain * norm(s.velocity);
            for i in 0..2 {
                s.position[i] = (s.position[i] + s.velocity[i]).clamp(0.0, 1.0);
            }
        }
        s.energy = energy.clamp(0.0, 1.0);
        s.step += 1;

        let events = self.events();
        let s = &mut self.state;
        for (n, &e) in s.event_counts.iter_mut().zip(&events[..BEHAVIORS]) {
            *n += u32::from(e);
        }
        let d_now = self.goal_distance();
        let success = events[SUCCESS] == 1;
        let reward = f64::from(u8::from(success)) + c.shaping_coef * (d_prev - d_now);
        StepOutcome {
            observation: self.observation(),
            reward,
            events: events.to_vec(),
            terminal: success,
            truncated: !success && self.state.step >= c.episode_length,
        }
    }
}
