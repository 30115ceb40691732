use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("order {order} exceeds the basis maximum {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("degenerate correlation: |rho| = {0} must be < 1")]
    DegenerateCorrelation(f64),

    #[error("denominator estimate is zero")]
    DegenerateDenominator,

    #[error("separation violated: point {q_index} is at distance {distance} < eps = {eps} from support point {p_index}")]
    SeparationViolated {
        q_index: usize,
        p_index: usize,
        distance: f64,
        eps: f64,
    },

    #[error("training diverged at epoch {epoch} (last finite epoch: {last_finite_epoch:?})")]
    DivergenceDetected {
        epoch: usize,
        last_finite_epoch: Option<usize>,
    },

    #[error("did not converge: {0}")]
    NoConvergence(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical computation itself, as opposed to
    /// malformed or inconsistent inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_)
                | Error::DegenerateDenominator
                | Error::DivergenceDetected { .. }
                | Error::NoConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
