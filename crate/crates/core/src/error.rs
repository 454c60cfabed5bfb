use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The file is not a CDFM feature map (bad magic or unsupported version).
    #[error("format error: {0}")]
    Format(String),

    /// The file header is fine but the payload is short or has trailing bytes.
    #[error("corrupt feature file: {0}")]
    Corruption(String),

    /// Values or dimensions violate a type invariant (NaN, zero dims, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// max(S) == min(S): a constant similarity map carries no signal.
    #[error("degenerate similarity map: constant value {0}")]
    DegenerateMap(f64),

    /// The exemplar regions carry (almost) no response, so z cannot be formed.
    #[error("degenerate normalization: z = {0:e}")]
    DegenerateNormalization(f64),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("backbone error: {0}")]
    Backbone(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for the two "no signal" failures that a batch run may zero-fill.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMap(_) | Error::DegenerateNormalization(_)
        )
    }
}
