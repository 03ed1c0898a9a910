use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown method '{0}' (expected gs|gs_best|dacc|powerbalance|polymin|oracle)")]
    UnknownMethod(String),
    #[error("rows do not line up: {0}")]
    RowMismatch(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("checkpoint {path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: weavematch_nn::NnError,
    },
    #[error(transparent)]
    Core(#[from] weavematch_core::CoreError),
    #[error(transparent)]
    Nn(#[from] weavematch_nn::NnError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
