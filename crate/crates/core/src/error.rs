use alloc::string::String;
use alloc::vec::Vec;

/// Everything that can go wrong in the exact symbolic tier.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("map has no polynomial inverse")]
    MissingInverse,

    #[error("polynomial inverse does not compose to the identity")]
    InverseMismatch,

    #[error("result degree {degree} exceeds the configured maximum {max}")]
    DegreeOverflow { degree: u32, max: u32 },

    #[error("strong Hörmander condition fails up to depth {}: flag {flag:?}", flag.len())]
    HormanderFailure { flag: Vec<usize> },

    #[error("chart does not send the base point to the origin")]
    ChartNotCentered,

    #[error("no polynomial correction of degree <= {max_degree} for coordinate {coordinate} (word length {word_length})")]
    ChartConstructionFailure {
        coordinate: usize,
        word_length: usize,
        max_degree: u32,
    },

    #[error("invalid dilation parameter: {0}")]
    InvalidScale(String),

    #[error("division by a non-constant or zero polynomial")]
    BadDivision,

    #[error("{line}:{column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
