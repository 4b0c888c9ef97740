use thiserror::Error;

/// Errors raised by the geometry, solver, game and analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("region has zero measure")]
    DegenerateRegion,

    #[error("uniform sampling gave up after {attempts} rejected draws")]
    SamplingFailure { attempts: usize },

    #[error("point lies outside the grid bounding box")]
    OutOfBounds,

    #[error("gradient vanishes at the evaluation point (|grad| = {norm:e})")]
    CriticalPoint { norm: f64 },

    #[error("episode exceeded {rounds} rounds without leaving the domain")]
    RunawayEpisode { rounds: u64 },

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("malformed field file: {0}")]
    Format(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
