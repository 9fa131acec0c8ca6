//! Core building blocks for trajectory-level privacy experiments on batch
//! off-policy reinforcement learning: transition/trajectory value types, the
//! decorrelating replay buffer, return computations, environment abstractions
//! (including a line-delimited adapter protocol for external simulators) and
//! the on-disk trajectory format.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! experiment pipeline runs in `f32`; verification code instantiates the same
//! functions in `f64`. Concrete aliases for both live at the crate root.

pub mod env;
pub mod error;
pub mod persist;
pub mod policy;
pub mod replay;
pub mod returns;
pub mod rollout;
pub mod scalar;
pub mod seeding;
pub mod trajectory;

pub use env::{EnvSpec, Environment, StepOutcome};
pub use error::{CoreError, Result};
pub use policy::Policy;
pub use replay::ReplayBuffer;
pub use returns::{discounted_return, state_value_estimate};
pub use rollout::rollout;
pub use scalar::Scalar;
pub use trajectory::{SourceTag, Trajectory, TrajectoryBatch, Transition};

/// `f32` aliases: what the experiment pipeline stores and trains on.
pub type Transition32 = Transition<f32>;
pub type Trajectory32 = Trajectory<f32>;
pub type TrajectoryBatch32 = TrajectoryBatch<f32>;
pub type ReplayBuffer32 = ReplayBuffer<f32>;
pub type EnvSpec32 = EnvSpec<f32>;

/// `f64` aliases: what oracle checks and high-precision verification use.
pub type Transition64 = Transition<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type TrajectoryBatch64 = TrajectoryBatch<f64>;
pub type ReplayBuffer64 = ReplayBuffer<f64>;
pub type EnvSpec64 = EnvSpec<f64>;
