use thiserror::Error;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("degenerate quartic: {0}")]
    DegenerateQuartic(String),

    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("density consistency check failed: {0}")]
    Consistency(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("infeasible region: {0}")]
    Infeasible(String),

    #[error("bracketing failed: {0}")]
    Bracket(String),

    #[error("resource budget exceeded: {0}")]
    Budget(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in JSON diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::DegenerateQuartic(_) => "degenerate_quartic",
            Error::Singular(_) => "singular",
            Error::Consistency(_) => "consistency",
            Error::Data(_) => "data",
            Error::Infeasible(_) => "infeasible",
            Error::Bracket(_) => "bracket",
            Error::Budget(_) => "budget",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
