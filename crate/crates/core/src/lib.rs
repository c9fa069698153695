//! Planning toolkit for maximizing cumulative engagement over a browse session.
//!
//! A session is modelled as a finite-horizon MDP whose states are step indices
//! plus an absorbing "user left" state. Showing item `a` at step `t` earns an
//! expected reward `R[t][a]` (a click probability) and ends the session with
//! probability `quit[t][a]`. The exact optimum is found by backward induction
//! in `O(T·K)`.
//!
//! Modules:
//! - [`mdp`]: the model type and closed-form expected IPV / BL / CTR.
//! - [`planner`]: backward-induction planner, greedy and beam-search
//!   baselines, duplicate-free variants, and a brute-force oracle.
//! - [`models`]: click model, multi-instance quit model, Platt calibration.
//! - [`simulator`]: synthetic ground truth, bag-structured session logs,
//!   per-user MDP production, Monte-Carlo rollouts.
//! - [`evaluation`]: dataset statistics, strategy comparison and noise sweeps.
//! - [`pipeline`]: log split, training and calibration in one call.
//!
//! All randomness derives from one root seed; see [`rng`].

pub mod error;
pub mod evaluation;
pub mod mdp;
pub mod models;
pub mod pipeline;
pub mod planner;
pub mod rng;
pub mod simulator;

pub use error::{Error, Result};
pub use mdp::{MdpModel, Plan, StateValueTable};
pub use planner::{PlannerConfig, Strategy};
