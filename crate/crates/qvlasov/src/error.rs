use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: expected {expected} samples, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("numerical blowup at t = {t}: {detail}")]
    Blowup { t: f64, detail: String },
    #[error("memory estimate of {needed} bytes exceeds the cap of {cap} bytes; n = {suggested_n} per axis would fit")]
    Memory {
        needed: usize,
        cap: usize,
        suggested_n: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
