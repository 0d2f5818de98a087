use thiserror::Error;

/// Errors produced by grid construction, linear algebra and the experiment driver.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid must have at least 2 intervals per axis, got {nx} x {ny}")]
    GridTooSmall { nx: usize, ny: usize },

    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value shapes disagree across sample points: {0}")]
    InconsistentValueShape(String),

    #[error("spaces live on different grids")]
    GridMismatch,

    #[error("division by a zero sample at flat index {index}")]
    DivisionByZeroSample { index: usize },

    #[error("mask sample at flat index {index} is {value}, expected 0 or 1")]
    MaskNotBinary { index: usize, value: f64 },

    #[error("dof index {index} out of range for dimension {dim}")]
    DofOutOfRange { index: usize, dim: usize },

    #[error("matrix is singular: exact zero pivot at elimination step {pivot}")]
    SingularMatrix { pivot: usize },

    #[error("dense matrix dimension {dim} exceeds the cap {cap}")]
    MatrixTooLarge { dim: usize, cap: usize },

    #[error("eigenvalue iteration did not converge after {iterations} steps (last residual {residual:.3e})")]
    EigNonConvergence { iterations: usize, residual: f64 },

    #[error("coupling radius {radius} too small for form '{form}': sparse and reference assembly disagree by {deviation:.3e} on the check grid")]
    CouplingRadiusTooSmall {
        form: &'static str,
        radius: usize,
        deviation: f64,
    },

    #[error("form '{form}' failed the bilinearity spot check (deviation {deviation:.3e})")]
    FormNotBilinear {
        form: &'static str,
        deviation: f64,
    },

    #[error("loss became non-finite at epoch {epoch} (value {value}, parameter max {param_max:.3e})")]
    NonFiniteLoss {
        epoch: usize,
        value: f64,
        param_max: f64,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("verification failed: {0}")]
    VerifyFailed(String),

    #[error("malformed parameter file: {0}")]
    BadParamsFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 numerical, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::GridTooSmall { .. } => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}
