use thiserror::Error;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("clip length must be positive")]
    ZeroClipLength,

    #[error("paired trajectories must share a reset seed: {train} vs {output}")]
    SeedMismatch { train: u64, output: u64 },

    #[error("pair requires a model-output trajectory, got {got}")]
    NotModelOutput { got: String },

    #[error("action dimension mismatch: {a} vs {b}")]
    ActionDimMismatch { a: usize, b: usize },

    #[error("no model output for seeds {missing:?}")]
    MissingOutputs { missing: Vec<u64> },

    #[error("both labels are required; {side} batch is empty")]
    MissingLabel { side: &'static str },

    #[error("member and nonmember batches share seeds: {shared:?}")]
    OverlappingSeeds { shared: Vec<u64> },

    #[error("split {split} holds {got} samples of label {label}, need at least {need}")]
    TooFewForStack { split: &'static str, label: u8, got: usize, need: usize },

    #[error("split {split} lost label {label} entirely")]
    EmptySplitLabel { split: &'static str, label: u8 },

    #[error("dataset mode {dataset} does not match classifier architecture {arch}")]
    ModeMismatch { dataset: &'static str, arch: &'static str },

    #[error("sample shape {got:?} does not match the classifier input {expected:?}")]
    ShapeMismatch { expected: Vec<usize>, got: Vec<usize> },

    #[error("receptive field {rf} does not cover the clip length {clip_len}; increase levels or kernel")]
    ReceptiveFieldTooSmall { rf: usize, clip_len: usize },

    #[error("training loss became non-finite at epoch {epoch}")]
    NanLoss { epoch: usize },

    #[error("gradient check requires a tiny network (<= {limit} parameters), got {got}")]
    TooManyParams { got: usize, limit: usize },

    #[error("probability/label lists must be nonempty and equally long: {probs} vs {labels}")]
    LengthMismatch { probs: usize, labels: usize },

    #[error("threshold must lie strictly inside (0, 1), got {0}")]
    InvalidTheta(f64),

    #[error("thresholds must be strictly increasing inside (0, 1)")]
    BadThetaSweep,

    #[error("metric needs both classes present")]
    OneClassOnly,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("dataset file rejected: {0}")]
    BadDatasetFile(String),

    #[error(transparent)]
    Core(#[from] trajmia_core::CoreError),

    #[error(transparent)]
    Archive(#[from] trajmia_nn::params::ArchiveError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AttackError>;
