use thiserror::Error;

pub type Result<T> = std::result::Result<T, QlbsError>;

#[derive(Debug, Error)]
pub enum QlbsError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dataset too small: need at least {needed} samples, got {got}")]
    DatasetTooSmall { needed: usize, got: usize },

    #[error("degenerate basis range: x_max ({max}) must exceed x_min ({min})")]
    Range { min: f64, max: f64 },

    #[error("numerical failure{}: {msg}", step.map(|t| format!(" at step {t}")).unwrap_or_default())]
    Numerical { step: Option<usize>, msg: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl QlbsError {
    /// Tags a numerical error with the time step it occurred at, if it has none yet.
    pub fn at_step(self, t: usize) -> Self {
        match self {
            QlbsError::Numerical { step: None, msg } => QlbsError::Numerical { step: Some(t), msg },
            other => other,
        }
    }
}
