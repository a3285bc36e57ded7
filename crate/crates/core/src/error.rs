use thiserror::Error;

/// Errors produced by the denoising pipeline.
#[derive(Debug, Error)]
pub enum DmsError {
    #[error("invalid dimension {height}x{width}: {reason}")]
    InvalidDimension {
        height: usize,
        width: usize,
        reason: &'static str,
    },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("jacobian became non-finite at iteration {iteration}")]
    JacobianOverflow { iteration: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("monte-carlo replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<DmsError>,
    },

    #[error("image format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DmsError {
    pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Self {
        DmsError::Shape {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    /// True for failures of the numerical iterations (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            DmsError::Divergence { .. } | DmsError::JacobianOverflow { .. } => true,
            DmsError::Replicate { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub type Result<T, E = DmsError> = std::result::Result<T, E>;
