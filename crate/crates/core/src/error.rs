use thiserror::Error;

pub type Result<T> = std::result::Result<T, MfgError>;

#[derive(Debug, Error)]
pub enum MfgError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("linear solver did not converge after {sweeps} sweeps (last change {last_change:.3e})")]
    NonConvergence { sweeps: usize, last_change: f64 },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("system too large for dense solve: {unknowns} unknowns per field (limit {limit})")]
    TooLarge { unknowns: usize, limit: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("expression error: {0}")]
    Expression(String),

    #[error("config error in `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl MfgError {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        MfgError::Parameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        MfgError::Config {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// True for errors caused by user input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            MfgError::Parameter { .. }
                | MfgError::Config { .. }
                | MfgError::Expression(_)
                | MfgError::Dimension(_)
                | MfgError::Domain(_)
                | MfgError::Format(_)
        )
    }
}
