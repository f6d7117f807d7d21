//! Error type shared by every engine operation.

use alloc::boxed::Box;
use alloc::string::String;
use core::fmt;

/// Errors raised by engine operations.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// An argument violates an operation precondition (shape mismatch,
    /// non-finite values, dimensions too small, ...).
    InvalidArgument(String),
    /// A component was wired up with inconsistent shapes or settings.
    InvalidConfiguration(String),
    /// A driving-side affine Jacobian is not invertible. Carries the
    /// keypoint index and the offending determinant.
    SingularJacobian { index: usize, det: f64 },
    /// A pluggable provider failed to produce its outputs.
    Provider(String),
    /// An error annotated with the pipeline stage it came from.
    Staged {
        stage: String,
        source: Box<CoreError>,
    },
}

impl CoreError {
    pub fn invalid_argument(msg: impl Into<String>) -> Self {
        CoreError::InvalidArgument(msg.into())
    }

    pub fn invalid_configuration(msg: impl Into<String>) -> Self {
        CoreError::InvalidConfiguration(msg.into())
    }

    /// Wrap the error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        CoreError::Staged {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::InvalidConfiguration(msg) => write!(f, "invalid configuration: {msg}"),
            CoreError::SingularJacobian { index, det } => write!(
                f,
                "singular driving jacobian for keypoint {index} (det = {det:e})"
            ),
            CoreError::Provider(msg) => write!(f, "provider error: {msg}"),
            CoreError::Staged { stage, source } => write!(f, "{stage}: {source}"),
        }
    }
}

impl core::error::Error for CoreError {
    fn source(&self) -> Option<&(dyn core::error::Error + 'static)> {
        match self {
            CoreError::Staged { source, .. } => Some(source.as_ref()),
            _ => None,
        }
    }
}

/// Convenience alias used across the crate.
pub type Result<T> = core::result::Result<T, CoreError>;
