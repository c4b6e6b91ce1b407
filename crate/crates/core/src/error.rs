use thiserror::Error;

/// Failure modes shared by every module of the laboratory.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("input error: {0}")]
    Input(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("time {t} outside trajectory span [{t0}, {t1}]")]
    Range { t: f64, t0: f64, t1: f64 },
    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure { t: f64, reason: String },
    #[error("state diverged at t = {t}")]
    Divergence { t: f64 },
    #[error("degenerate frame: {0}")]
    Degeneracy(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    /// True for failures of the numerical machinery itself (as opposed to bad input).
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::IntegrationFailure { .. }
                | Error::Divergence { .. }
                | Error::Degeneracy(_)
                | Error::Numeric(_)
                | Error::InsufficientData(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
