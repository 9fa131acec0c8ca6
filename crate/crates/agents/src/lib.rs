//! The two oracles of the pipeline: a deterministic actor-critic learner
//! that produces the exploration (behaviour) policy and collects trajectory
//! batches, and a batch-constrained Q-learner that trains the target policy
//! fully offline from a replay buffer and answers black-box trajectory
//! queries.

pub mod bcq;
pub mod checkpoint;
pub mod curve;
pub mod ddpg;
pub mod error;
pub mod eval;
mod mlp;

pub use bcq::{query_output_trajectories, train_from_buffer, train_target_policy, BcqConfig, BcqPolicy};
pub use checkpoint::{load_bcq_policy, load_mlp_policy, save_bcq_policy, save_mlp_policy};
pub use curve::{CurvePoint, LearningCurve};
pub use ddpg::{collect_batch, collect_batch_mixed, train_behavior_policy, DdpgConfig, MlpPolicy};
pub use error::{AgentError, Result};
pub use eval::evaluate_policy;
