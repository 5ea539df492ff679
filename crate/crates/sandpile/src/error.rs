use thiserror::Error;

/// Errors produced by volume construction, stabilization and sampling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("volume would have {requested} sites, exceeding the cap of {cap}")]
    SiteCapExceeded { requested: u128, cap: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("heights must be positive everywhere, site {site} has {value}")]
    InvalidHeight { site: usize, value: u64 },

    #[error("toppling matrix fails validation: {0}")]
    InvalidMatrix(String),

    #[error("stabilization exceeded the safety cap of {cap} topplings")]
    ToppleCapExceeded { cap: u64 },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("exhaustive enumeration supports at most {cap} sites, volume has {sites}")]
    EnumerationCapExceeded { sites: usize, cap: usize },

    #[error("configuration is not recurrent")]
    NotRecurrent,

    #[error("addition rate function violates the summability condition: {0}")]
    NonSummableRate(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear solve failed: {0}")]
    SolveFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;
