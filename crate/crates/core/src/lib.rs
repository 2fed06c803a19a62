//! Search-and-rescue planning with active intention recognition.
//!
//! A drone searches a grid for a survivor hidden at one of several candidate
//! locations while a human responder, who knows roughly where to go, walks
//! towards it. The drone only sees the responder or the survivor when it
//! shares their cell, so the problem is a POMDP. [`planner::Planner`] is a
//! POMCP-style tree search over action/observation histories that can add
//! intrinsic rewards (responder sightings, entropy reduction) and use
//! task-aware rollouts; [`belief`] holds the exact and truncated Bayes
//! filters it relies on; [`harness`] runs seeded episodes and sweeps.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod belief;
pub mod error;
pub mod grid_world;
pub mod harness;
pub mod model;
pub mod planner;

pub use belief::{Belief, EntropyMode, InconsistentObservation};
pub use error::{Error, Result};
pub use grid_world::{make_environment, Action, CostTable, EnvironmentFamily, GridMap, Position};
pub use harness::{run_experiment, run_trial, sweep, ExperimentConfig, Summary, TrialResult};
pub use model::{Model, ModelParams, Observation, State, TargetSet};
pub use planner::{BeliefFilter, ExplorationStrategy, Planner, PlannerConfig, RolloutAction, RolloutPolicy};
