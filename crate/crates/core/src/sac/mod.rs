//! Soft actor-critic Lagrangian agent.

pub mod agent;
pub mod config;
pub mod policy;

pub use agent::{regression_target, Batch, CriticPair, PolicyObjective, SacLagrangian, StepReport, UpdateLosses};
pub use config::{AgentConfig, LogStdMode};
pub use policy::{ActMode, PolicyModel, PolicySample};
