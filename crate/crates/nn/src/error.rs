use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("training diverged at iteration {iteration}: {what} is not finite")]
    Diverged { iteration: usize, what: String },
    #[error(transparent)]
    Autodiff(#[from] weavematch_autodiff::AutodiffError),
    #[error(transparent)]
    Core(#[from] weavematch_core::CoreError),
    #[error("checkpoint metadata: {0}")]
    Metadata(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
