//! Navigation as a semi-Markov decision process: a policy picks both a
//! motion and how long to follow it.
//!
//! The crate covers the whole pipeline: action conversion
//! ([`action`]), the simulated world ([`sim`]), time-discounted advantage
//! estimation ([`egae`]), the Gaussian policy and value networks ([`nn`]),
//! PPO training with parallel rollouts ([`trainer`]) and scenario
//! evaluation ([`eval`]).

pub mod action;
pub mod egae;
pub mod error;
pub mod eval;
pub mod nn;
pub mod sim;
pub mod smdp;
pub mod trainer;

pub use action::{activate, direct_3d, to_executable, ActionPipeline, RobotLimits};
pub use error::{Error, Result};
pub use smdp::{
    discount_weight, discounted_return, DiscountMode, DiscountSpec, EpisodeBuffer,
    ExecutableAction, Pose, StepRecord, TerminalKind, Trajectory, VirtualAction,
};
