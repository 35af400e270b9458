use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),
    #[error("acceleration factor k = -2 makes the scanline time weight undefined")]
    DegenerateAcceleration,
    #[error("interpolation denominator h - gamma*pi_v = {denominator} is within the singularity guard")]
    InterpolationSingularity { denominator: f64 },
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("correlation bounds are only defined for the middle scanline {expected}, got {actual}")]
    WrongTargetScanline { expected: f64, actual: f64 },
    #[error("flow kind or direction mismatch: {0}")]
    FlowKindMismatch(String),
    #[error("plane is behind the camera (depth {depth}) at pixel ({col}, {row})")]
    PlaneBehindCamera { col: usize, row: usize, depth: f64 },
    #[error("least-squares system is rank deficient (condition estimate {0:e})")]
    RankDeficient(f64),
    #[error("not enough valid constraints: need {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("no consensus: best inlier ratio {0:.3} is below 10%")]
    NoConsensus(f64),
    #[error("empty search range [{lo}, {hi}]")]
    EmptySearchRange { lo: f64, hi: f64 },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("bad magic number in {path}")]
    BadMagic { path: PathBuf },
    #[error("truncated file {path}")]
    TruncatedFile { path: PathBuf },
    #[error("unsupported file variant: {0}")]
    UnsupportedVariant(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scene config error: {0}")]
    Config(String),
    #[error("a reference frame is required to fit the acceleration parameter")]
    MissingReference,
    #[error("frame sets differ: {0}")]
    MismatchedFrameSets(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
