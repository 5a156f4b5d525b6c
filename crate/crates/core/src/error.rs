use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The input lies on a set where the requested quantity is undefined.
    #[error("singular input: {0}")]
    SingularInput(String),

    #[error("numerical failure: {message}")]
    Numerical {
        message: String,
        /// Ratio of largest to smallest absolute eigenvalue, when it was computed.
        condition: Option<f64>,
    },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("evaluation failed at point {index}: {message}")]
    Evaluation { index: usize, message: String },

    #[error("search failed: {0}")]
    Search(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable tag, used in the CLI's JSON error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidInput(_) => "invalid_input",
            Error::SingularInput(_) => "singular_input",
            Error::Numerical { .. } => "numerical",
            Error::Resource(_) => "resource",
            Error::Evaluation { .. } => "evaluation",
            Error::Search(_) => "search",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
