use thiserror::Error;

/// Errors produced by the analysis and prediction routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("{what} is outside its domain (got {value})")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid moments: {0}")]
    InvalidMoments(String),

    #[error("moment kinds do not match: {0}")]
    KindMismatch(&'static str),

    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },

    #[error("ordered determinant K012s = {k012s:e} lies inside the rejection band |K| <= {band:e}; move s away from the threshold")]
    NearThreshold { k012s: f64, band: f64 },

    #[error("ordering threshold s_th = {0} lies outside [-1, 1]")]
    ThresholdOutOfRange(f64),

    #[error("classical-regime routine given nonclassical parameters (K012 = {0})")]
    NonclassicalParams(f64),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("conditional distribution for n0 = {0} has no representable mass")]
    DegenerateNormalization(u64),

    #[error("vanishing denominator in {0}")]
    DivisionByZero(&'static str),

    #[error("requested grid of {cells} cells exceeds the budget of {budget}")]
    GridBudget { cells: u64, budget: u64 },
}

/// Coarse classification used by front ends (exit codes, reporting).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    /// Input data or parameters are unusable.
    Data,
    /// A numerical routine could not produce a valid result.
    Numeric,
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::EmptyInput(_)
            | Error::InvalidMoments(_)
            | Error::KindMismatch(_)
            | Error::InvalidParams(_)
            | Error::Domain { .. }
            | Error::NonclassicalParams(_) => ErrorCategory::Data,
            Error::NonConvergence { .. }
            | Error::NearThreshold { .. }
            | Error::ThresholdOutOfRange(_)
            | Error::NoRoot(_)
            | Error::DegenerateNormalization(_)
            | Error::DivisionByZero(_)
            | Error::GridBudget { .. } => ErrorCategory::Numeric,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
