//! Attack-side machinery: converting trajectory batches into labeled
//! classifier inputs (individual pairs and collective stacks), the two
//! membership classifiers, and the evaluation metrics.
//!
//! This crate deliberately depends only on the core value types and the
//! neural-network plumbing: the attacker consumes trajectory batches and the
//! public environment spec, never the trainer's internals.

pub mod classifier;
pub mod dataset;
pub mod error;
pub mod metrics;
pub mod resnet;
pub mod tcn;

pub use classifier::{
    apply_threshold, gradient_check, predict_membership, train_attack, ArchConfig,
    AttackClassifier, SampleInput, TrainSpec,
};
pub use dataset::{
    build_collective_dataset, build_individual_dataset, clip_or_pad, decorrelate_batch,
    extract_actions, make_pair, ActionTrajectory, AttackDataset, CollectiveSample, DatasetMode,
    PairedSample, Split,
};
pub use error::{AttackError, Result};
pub use metrics::{best_threshold, confusion, roc_curve, ConfusionMatrix, MetricRow, RocCurve};
pub use resnet::ResNetConfig;
pub use tcn::TcnConfig;

/// `f32` aliases used by the pipeline.
pub type AttackDataset32 = dataset::AttackDataset<f32>;
pub type AttackClassifier32 = classifier::AttackClassifier<f32>;
