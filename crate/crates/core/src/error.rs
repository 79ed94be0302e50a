use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "grid needs {unknowns} unknowns and about {required_mb} MB for the eigensolve, \
         over the {budget_mb} MB budget"
    )]
    GridTooLarge { unknowns: usize, required_mb: u64, budget_mb: u64 },

    #[error("eigensolver window [0, {e_max}] did not converge after {iterations} iterations (worst residual {residual:e})")]
    NoConvergence { e_max: f64, iterations: usize, residual: f64 },

    #[error("eigenvalue count below {e_max} disagrees: inertia gives {expected}, solver found {found}")]
    CountMismatch { e_max: f64, expected: usize, found: usize },

    #[error("shifted factorization at {shift} hit a zero pivot")]
    SingularShift { shift: f64 },

    #[error("basis file version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("norm capture {capture:.6} below threshold {threshold}: raise E_max or grid resolution")]
    LowCapture { capture: f64, threshold: f64 },

    #[error("point ({x}, {y}) lies outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("ring of radius {radius} around ({x}, {y}) crosses the boundary")]
    RingOutside { radius: f64, x: f64, y: f64 },

    #[error("energy window holds no populated eigenstate")]
    EmptyWindow,

    #[error("tube covers the whole domain")]
    TubeCoversDomain,

    #[error("configuration: {0}")]
    Config(String),

    #[error("stage `{stage}` needs `{missing}`; run it first or pass --auto-deps")]
    MissingUpstream { stage: String, missing: String },

    #[error("cached artifact {0} does not match its recorded hash")]
    CacheTampered(PathBuf),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
