use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: file is {actual} bytes but its header implies {expected}")]
    SizeMismatch { path: PathBuf, expected: u64, actual: u64 },
    #[error("{path}: record {record} has dim {found}, expected {expected}")]
    InconsistentDim { path: PathBuf, record: u64, expected: u64, found: u64 },
    #[error("unsupported element or format: {0}")]
    UnsupportedElem(String),
    #[error("malformed header in {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },
    #[error("block of {block_bytes} bytes cannot hold one page and one {record_bytes}-byte record")]
    BlockTooSmall { block_bytes: u64, record_bytes: u64 },
    #[error("memory budget of {budget} bytes is infeasible: {reason}")]
    BudgetInfeasible { budget: u64, reason: String },
    #[error("memory accountant tripped: {requested} bytes requested with {in_use} of {limit} in use")]
    BudgetExceeded { requested: u64, in_use: u64, limit: u64 },
    #[error("bucket {bucket}: corrupt extent ({reason})")]
    CorruptExtent { bucket: u32, reason: String },
    #[error("plan does not match the run: {0}")]
    PlanMismatch(String),
    #[error("{what}: {size} exceeds the limit {limit}")]
    TooLarge { what: &'static str, size: u64, limit: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Core(#[from] ssjoin_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches a path to io errors.
pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
