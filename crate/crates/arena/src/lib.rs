//! Desk-scale 2D navigation arena emitting indicator events, and a
//! two-phase diagnostic variant.

pub mod arena;
pub mod config;
pub mod diagnostic;
pub mod trajectory;

pub use arena::{ArenaState, MiniArena, ACTION_DIM, EVENT_NAMES, OBSERVATION_FIELDS, OBS_DIM};
pub use config::{ArenaConfig, Rect};
pub use diagnostic::{DiagnosticArena, DiagnosticConfig, DIAGNOSTIC_EVENT};
pub use trajectory::TrajectoryWriter;
