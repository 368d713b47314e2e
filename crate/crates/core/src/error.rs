//! Error type shared by every simulator module.

use thiserror::Error;

/// Unified error for configuration, numerical, and I/O failures.
#[derive(Debug, Error)]
pub enum SimError {
    /// A configuration value is missing, malformed, or violates an invariant.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// An argument fell outside the domain an operation is defined on.
    #[error("domain error in {operation}: {details}")]
    Domain { operation: &'static str, details: String },

    /// The circulation collocation matrix is numerically singular.
    #[error("collocation matrix is ill-conditioned (estimate {condition:.3e} > {limit:.1e})")]
    SingularSystem { condition: f64, limit: f64 },

    /// A state or derivative stopped being finite.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// The receding-horizon controller gave up after repeated solver failures.
    #[error("controller fault: {0}")]
    ControllerFault(String),

    /// Trace comparison was asked to relate incompatible channels.
    #[error("trace mismatch: {0}")]
    TraceMismatch(String),

    /// Malformed trace file or unsupported version.
    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn domain(operation: &'static str, details: impl Into<String>) -> Self {
        SimError::Domain { operation, details: details.into() }
    }

    pub fn config(details: impl Into<String>) -> Self {
        SimError::InvalidConfig(details.into())
    }
}

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, SimError>;
