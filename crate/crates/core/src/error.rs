use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the library.
///
/// The CLI maps [`Error::is_validation`] to exit code 2 and
/// [`Error::is_numerical`] to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error{}: {msg}", site_suffix(*.site))]
    Validation { site: Option<i64>, msg: String },

    #[error("ingestion error{}: {msg}", site_suffix(*.site))]
    Ingestion { site: Option<i64>, msg: String },

    #[error("window mismatch: [{0}, {1}] vs [{2}, {3}]")]
    WindowMismatch(i64, i64, i64, i64),

    #[error("window overflow: {0}")]
    WindowOverflow(String),

    #[error("memory guard: {sites} sites exceeds the limit of {limit}")]
    MemoryGuard { sites: usize, limit: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("branch point: {0}")]
    BranchPoint(String),

    #[error("degenerate point: {0}")]
    Degenerate(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("solver error: {0}")]
    Solver(String),

    #[error("pole: {0}")]
    Pole(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dependency error: {0}")]
    Dependency(String),

    #[error("numerical consistency error: {0}")]
    Consistency(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("derivative floor violated near {at:.6}; split the interval there")]
    DerivativeFloor { at: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn site_suffix(site: Option<i64>) -> String {
    match site {
        Some(x) => format!(" at x = {x}"),
        None => String::new(),
    }
}

impl Error {
    pub fn validation(site: Option<i64>, msg: impl Into<String>) -> Self {
        Error::Validation {
            site,
            msg: msg.into(),
        }
    }

    pub fn ingestion(site: Option<i64>, msg: impl Into<String>) -> Self {
        Error::Ingestion {
            site,
            msg: msg.into(),
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::Validation { .. } | Error::Ingestion { .. } | Error::Json(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Consistency(_)
                | Error::Data(_)
                | Error::Pole(_)
                | Error::Solver(_)
                | Error::Resolution(_)
                | Error::DerivativeFloor { .. }
        )
    }
}
