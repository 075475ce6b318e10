use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{quantity} = {value} outside domain: {reason}")]
    Domain {
        quantity: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("no two-phase regime: T_ref = {t_ref} is not below T_c = {t_c}")]
    Supercritical { t_ref: f64, t_c: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("hard-core violation: gap {gap} <= b = {b} between particles {index} and {}", index + 1)]
    HardCore { index: usize, gap: f64, b: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("interface extraction failed: {0}")]
    Extraction(String),

    #[error("kernel matrix factorization failed for {samples} samples")]
    IllConditioned { samples: usize },

    #[error("surrogate coefficients do not reflect the current sample set")]
    Untrained,

    #[error("step rejected after {attempts} attempts: {reason}")]
    StepRejected { attempts: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input or configuration rather than
    /// by a numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::InvalidInput(_)
                | Error::Supercritical { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
