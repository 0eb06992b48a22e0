use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical blowup: {0}")]
    Blowup(String),
    #[error("{0}")]
    Numerics(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<qvlasov::Error> for ExpError {
    fn from(e: qvlasov::Error) -> Self {
        match e {
            qvlasov::Error::Blowup { .. } => ExpError::Blowup(e.to_string()),
            qvlasov::Error::Config(m) => ExpError::Config(m),
            qvlasov::Error::Memory { .. } => ExpError::Config(e.to_string()),
            other => ExpError::Numerics(other.to_string()),
        }
    }
}

impl ExpError {
    /// Process exit code: 2 for configuration problems, 3 for blowups.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExpError::Config(_) => 2,
            ExpError::Blowup(_) => 3,
            _ => 1,
        }
    }
}

pub type ExpResult<T> = std::result::Result<T, ExpError>;
