//! Crate-wide error type.

/// Errors surfaced by the library. Degenerate-window and degenerate-regressor
/// conditions during preprocessing are *flags* on the output (the entry is
/// masked), not errors; `DegenerateRegressor` is returned only when a whole
/// series admits no estimate at all.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("missing column `{0}` in input header")]
    MissingColumn(String),
    #[error("cell at row {row}, column `{col}` does not parse as a number")]
    UnparsableCell { row: usize, col: String },
    #[error("dates are not strictly increasing at row {0}")]
    NonMonotoneDates(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate regressor: lagged series has zero variance everywhere")]
    DegenerateRegressor,
    #[error("degenerate signals: tr(S'S) = 0")]
    DegenerateSignals,
    #[error("singular system: z = 0 with rank-deficient second-moment matrix")]
    SingularSystem,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("kernel gram matrix is not positive semi-definite (min eigenvalue {0:e})")]
    KernelNotPsd(f64),
    #[error("fixed-point solve did not converge (best residual {0:e})")]
    NonConvergence(f64),
    #[error("zero target energy: sum of squared out-of-sample targets is 0")]
    ZeroTargetEnergy,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
