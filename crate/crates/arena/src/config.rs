use serde::{Deserialize, Serialize};

use cmdp_core::error::{Error, Result};

/// Axis-aligned rectangle `[x0, y0, x1, y1]` in arena coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x0..=self.x1).contains(&x) && (self.y0..=self.y1).contains(&y)
    }
}

impl From<[f64; 4]> for Rect {
    fn from(r: [f64; 4]) -> Self {
        Self::new(r[0], r[1], r[2], r[3])
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

/// Physical and task constants of the arena. The arena is the unit square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArenaConfig {
    /// Episode length T.
    pub episode_length: usize,
    pub goal_radius: f64,
    pub lava: Vec<Rect>,
    pub marker: [f64; 2],
    /// Field-of-view half-angle in radians.
    pub fov_half_angle: f64,
    /// Velocity retained per step.
    pub drag: f64,
    /// Velocity change per unit of acceleration action.
    pub accel: f64,
    /// Heading change per unit of turn action (radians).
    pub turn_rate: f64,
    pub speed_limit: f64,
    /// Energy used per unit of distance travelled.
    pub energy_drain: f64,
    /// Energy regained per recharging step.
    pub recharge_rate: f64,
    /// Energy below this level raises `below_energy`.
    pub min_energy: f64,
    /// Lower end of the uniform initial-energy range (upper end is 1).
    pub initial_energy_min: f64,
    pub shaping_coef: f64,
    pub seed: u64,
}

impl Default for ArenaConfig {
    fn default() -> Self {
        Self {
            episode_length: 150,
            goal_radius: 0.08,
            lava: vec![Rect::new(0.35, 0.35, 0.65, 0.65)],
            marker: [0.5, 0.5],
            fov_half_angle: std::f64::consts::FRAC_PI_3,
            drag: 0.5,
            accel: 0.05,
            turn_rate: std::f64::consts::FRAC_PI_2,
            speed_limit: 0.07,
            energy_drain: 0.5,
            recharge_rate: 0.1,
            min_energy: 0.1,
            initial_energy_min: 0.3,
            shaping_coef: 1.5,
            seed: 0,
        }
    }
}

/// Resolution of the connectivity check on the lava layout.
const GRID: usize = 100;

impl ArenaConfig {
    pub fn in_lava(&self, x: f64, y: f64) -> bool {
        self.lava.iter().any(|r| r.contains(x, y))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.episode_length == 0 {
            return bad("episode length must be at least 1".into());
        }
        if !(self.goal_radius > 0.0 && self.goal_radius < 0.5) {
            return bad(format!("goal radius {} outside (0, 0.5)", self.goal_radius));
        }
        if !(0.0..1.0).contains(&self.drag) {
            return bad(format!("drag {} outside [0, 1)", self.drag));
        }
        for (name, v) in [
            ("accel", self.accel),
            ("turn_rate", self.turn_rate),
            ("speed_limit", self.speed_limit),
            ("fov_half_angle", self.fov_half_angle),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("energy_drain", self.energy_drain),
            ("recharge_rate", self.recharge_rate),
            ("min_energy", self.min_energy),
            ("initial_energy_min", self.initial_energy_min),
            ("shaping_coef", self.shaping_coef),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be nonnegative, got {v}"));
            }
        }
        if self.initial_energy_min > 1.0 || self.min_energy > 1.0 {
            return bad("energy levels must lie in [0, 1]".into());
        }
        for r in &self.lava {
            if !(r.x0 < r.x1 && r.y0 < r.y1) {
                return bad(format!("degenerate lava rectangle {:?}", <[f64; 4]>::from(*r)));
            }
        }
        if !self.free_space_connected() {
            return bad("lava layout leaves no connected lava-free region".into());
        }
        Ok(())
    }

    /// Lava-free cells of a 100×100 grid form one 4-connected component, so
    /// every spawn can reach every goal without touching lava.
    pub fn free_space_connected(&self) -> bool {
        let centre = |i: usize| (i as f64 + 0.5) / GRID as f64;
        let free: Vec<bool> = (0..GRID * GRID)
            .map(|c| !self.in_lava(centre(c % GRID), centre(c / GRID)))
            .collect();
        let total = free.iter().filter(|f| **f).count();
        let Some(start) = free.iter().position(|f| *f) else {
            return false;
        };
        let mut seen = vec![false; free.len()];
        let mut stack = vec![start];
        seen[start] = true;
        let mut reached = 0;
        while let Some(c) = stack.pop() {
            reached += 1;
            let (x, y) = (c % GRID, c / GRID);
            let mut visit = |n: usize| {
                if free[n] && !seen[n] {
                    seen[n] = true;
                    stack.push(n);
                }
            };
            if x > 0 {
                visit(c - 1);
            }
            if x + 1 < GRID {
                visit(c + 1);
            }
            if y > 0 {
                visit(c - GRID);
            }
            if y + 1 < GRID {
                visit(c + GRID);
            }
        }
        reached == total
    }
}
