//! Bi-level online resource provisioning and safe scheduling.
//!
//! An upper-level provisioner ([`blol`]) picks a per-episode resource budget by
//! projected online gradient steps; a lower-level scheduler ([`balde`]) learns
//! an unknown episodic queue model and plans through an extended
//! occupancy-measure LP ([`lp`]), feeding the budget's dual multiplier back up.
//! [`experiment`] runs seeded studies against the best static budget in hindsight.

pub mod balde;
pub mod baselines;
pub mod blol;
pub mod env;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod lp;
pub mod mdp;

pub use balde::{BaldeConfig, BaldeState, PlanStatus, SafeBaseline};
pub use baselines::{QLearner, QLearningConfig};
pub use blol::{BlolConfig, BlolState, DemandProfile, ProvisioningCost};
pub use env::{ArrivalSpec, QueueEnv, QueueEnvConfig, Trajectory};
pub use error::{Error, Result};
pub use estimation::{ConfidenceModel, ConfidenceSnapshot};
pub use experiment::{Algorithm, EpisodeRecord, Experiment, RunConfig};
pub use lp::{LpProblem, LpSolution, LpStatus, PlannerKind};
pub use mdp::{evaluate_policy, Dims, OccupancyMeasure, Policy, TabularMdp, ValueResult};
