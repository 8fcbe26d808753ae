use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// 2 for configuration problems, 3 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Runtime(_) => 3,
        }
    }

    pub(crate) fn message(&self) -> &str {
        match self {
            HarnessError::Config(m) | HarnessError::Runtime(m) => m,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        HarnessError::Runtime(format!("{}: {e}", path.display()))
    }
}

impl From<apd_core::Error> for HarnessError {
    fn from(e: apd_core::Error) -> Self {
        match e {
            apd_core::Error::InvalidConfig(_) | apd_core::Error::Definiteness(_) => {
                HarnessError::Config(e.to_string())
            }
            other => HarnessError::Runtime(other.to_string()),
        }
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Runtime(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for HarnessError {
    fn from(e: serde_json::Error) -> Self {
        HarnessError::Runtime(format!("json: {e}"))
    }
}
