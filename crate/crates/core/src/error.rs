use thiserror::Error;

/// Errors raised by the qev numerics.
///
/// The variants line up with the CLI exit-code contract: `Config` is a usage
/// problem, `Domain` and `Numeric` are numeric failures, `Io` is I/O.
#[derive(Debug, Error)]
pub enum QevError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl QevError {
    /// Prefix the message with extra context, keeping the variant.
    pub fn context(self, ctx: impl std::fmt::Display) -> Self {
        match self {
            QevError::Domain(m) => QevError::Domain(format!("{ctx}: {m}")),
            QevError::Config(m) => QevError::Config(format!("{ctx}: {m}")),
            QevError::Numeric(m) => QevError::Numeric(format!("{ctx}: {m}")),
            QevError::Io(e) => QevError::Io(std::io::Error::new(e.kind(), format!("{ctx}: {e}"))),
        }
    }
}

pub type Result<T> = std::result::Result<T, QevError>;

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(QevError::Domain(format!("{name} must be finite, got {v}")))
    }
}
