use thiserror::Error;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("trajectory batch is empty")]
    EmptyBatch,

    #[error("need at least one trajectory/episode, got 0")]
    ZeroCount,

    #[error("training diverged at step {step}: loss {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("checkpoint rejected: {0}")]
    BadCheckpoint(String),

    #[error(transparent)]
    Core(#[from] trajmia_core::CoreError),

    #[error(transparent)]
    Archive(#[from] trajmia_nn::params::ArchiveError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AgentError>;
