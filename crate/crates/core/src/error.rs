use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("discount factor must lie in [0, 1], got {0}")]
    InvalidDiscount(f64),

    #[error("state dimension mismatch: expected {expected}, got {got}")]
    StateDimMismatch { expected: usize, got: usize },

    #[error("action dimension mismatch: expected {expected}, got {got}")]
    ActionDimMismatch { expected: usize, got: usize },

    #[error("trajectory must contain at least one transition")]
    EmptyTrajectory,

    #[error("trajectory breaks chain consistency at transition {index}")]
    ChainBroken { index: usize },

    #[error("terminal transition at index {index} is not the last of its trajectory")]
    EarlyTerminal { index: usize },

    #[error("trajectory length {len} exceeds the environment limit {t_max}")]
    TrajectoryTooLong { len: usize, t_max: usize },

    #[error("batch holds {trajectories} trajectories but {seeds} seeds")]
    SeedRecordMismatch { trajectories: usize, seeds: usize },

    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,

    #[error("no trajectories to evaluate")]
    EmptyTrajectoryList,

    #[error("environment stepped while terminal; call reset first")]
    SteppedWhileTerminal,

    #[error("environment stepped before the first reset")]
    SteppedBeforeReset,

    #[error("invalid environment spec: {0}")]
    InvalidSpec(String),

    #[error("trajectory file rejected: {0}")]
    HeaderMismatch(String),

    #[error("environment protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CoreError>;
