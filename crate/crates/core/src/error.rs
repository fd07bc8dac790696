use core::fmt;

/// Errors raised by the pure algorithms.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Asked for more distinct samples than the population holds.
    MTooLarge { requested: u64, population: u64 },
    /// A center or query contained NaN or infinity.
    NonFiniteInput { row: usize },
    /// Cache must hold at least two buckets for a pair task.
    CapacityTooSmall { capacity: usize },
    /// Exhaustive search refused an instance that is too big.
    TooLarge { size: usize, limit: usize },
    /// Generic precondition violation.
    InvalidArgument(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::MTooLarge {
                requested,
                population,
            } => write!(
                f,
                "cannot draw {requested} distinct ids from a population of {population}"
            ),
            Error::NonFiniteInput { row } => write!(f, "non-finite value in row {row}"),
            Error::CapacityTooSmall { capacity } => {
                write!(f, "cache capacity {capacity} is below the minimum of 2 buckets")
            }
            Error::TooLarge { size, limit } => {
                write!(f, "instance size {size} exceeds the exhaustive-search limit {limit}")
            }
            Error::InvalidArgument(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
