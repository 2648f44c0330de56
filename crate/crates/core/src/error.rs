use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("expected {expected} vector components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field is not divergence-free: max |div| = {divergence:e}, field scale = {scale:e}")]
    NotSolenoidal { divergence: f64, scale: f64 },
    #[error("periodic Poisson right-hand side has non-zero mean {mean:e} (max-norm {scale:e})")]
    NonZeroMeanRhs { mean: f64, scale: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("field is under-resolved: energy fraction {fraction:e} above half the dealiasing cutoff exceeds {threshold:e}")]
    UnresolvedField { fraction: f64, threshold: f64 },
    #[error("CFL number {cfl:.4} exceeds limit {limit}")]
    CflViolation { cfl: f64, limit: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("viscosity must be finite and non-negative, got {0}")]
    InvalidViscosity(f64),
    #[error("velocity field is not flagged divergence-free")]
    NotDivergenceFree,
    #[error("invalid initial condition: {0}")]
    InvalidInitialCondition(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LevelSetError {
    #[error("isosurface and field live on different grids")]
    GridMismatch,
    #[error("levels must be finite and strictly increasing")]
    UnsortedLevels,
    #[error("invalid strip: alpha = {alpha} must be below beta = {beta}")]
    InvalidStrip { alpha: f64, beta: f64 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LedgerError {
    #[error("invalid strip: alpha = {alpha} must be below beta = {beta}")]
    InvalidStrip { alpha: f64, beta: f64 },
    #[error("ledger table has no full-range entry")]
    MissingFullRange,
    #[error("convergence study needs at least 3 resolutions, each double the last")]
    InvalidResolutions,
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
}

impl From<FieldError> for LedgerError {
    fn from(e: FieldError) -> Self {
        LedgerError::Flow(FlowError::Field(e))
    }
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed snapshot header: {0}")]
    Header(String),
    #[error("snapshot payload has {got} bytes, expected {expected}")]
    Payload { expected: usize, got: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}
