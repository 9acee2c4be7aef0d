use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("frame {width}x{height} is too small (both sides must be at least 2 px)")]
    InvalidFrame { width: u32, height: u32 },

    #[error("line (rho={rho}, theta={theta}) does not cross the frame interior")]
    NoIntersection { rho: f64, theta: f64 },

    #[error("segment endpoints coincide")]
    DegenerateSegment,

    #[error("lines are parallel")]
    Parallel,

    #[error("duplicate lines at indices {0} and {1}")]
    DuplicateLines(usize, usize),

    #[error("too many lines: {count} (limit {limit})")]
    TooManyLines { count: usize, limit: usize },

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("k = {0} is out of range (1..=16)")]
    KOutOfRange(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("pool size {pool} does not divide the {grid_h}x{grid_w} grid")]
    BadPool { pool: usize, grid_h: usize, grid_w: usize },

    #[error("channel count {0} is not a positive multiple of 4")]
    BadChannelCount(usize),

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("ground-truth line {0} leaves one side of the grid empty")]
    DegenerateSplit(usize),

    #[error("the search constraint admits no combination")]
    NoCombination,

    #[error("scorer returned {score} for combination {id}; scores must lie in [0, 1]")]
    InvalidScore { id: u32, score: f64 },

    #[error("bad image: {0}")]
    BadImage(String),

    #[error("every pair of reliable lines is parallel")]
    AllParallel,

    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("no index entry passes the score threshold")]
    EmptyIndexAfterFilter,

    #[error("k-means needs 1 <= k <= points, got k = {k} with {points} points")]
    TooFewPoints { k: usize, points: usize },

    #[error("{path}:{line}: field `{field}`: {message}")]
    Parse {
        path: String,
        line: usize,
        field: String,
        message: String,
    },

    #[error("record `{record}`: {message}")]
    InvariantViolation { record: String, message: String },

    #[error("invalid synthetic scene spec: {0}")]
    SpecInvalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        path: impl Into<String>,
        line: usize,
        field: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            field: field.into(),
            message: message.into(),
        }
    }
}
