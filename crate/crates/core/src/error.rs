use thiserror::Error;

/// Errors raised by estimation, inference and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model is not stable: spectral radius {radius:.6} >= 1")]
    Unstable { radius: f64 },

    #[error("near unit root: {0}")]
    NearUnitRoot(String),

    #[error("covariance matrix is not positive semi-definite: {0}")]
    Covariance(String),

    #[error("insufficient data: need at least {needed} rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error(
        "regressor moment matrix is singular or ill-conditioned (condition number {condition:.3e})"
    )]
    Collinear { condition: f64 },

    #[error(
        "corrected moment matrix S_Z* - I_r (x) Sigma_e is not positive definite \
         (min eigenvalue {min_eigenvalue:.3e}, threshold {threshold:.3e}); \
         use a longer series or a smaller measurement-error covariance"
    )]
    Inadmissible { min_eigenvalue: f64, threshold: f64 },

    #[error("fitted coefficients are not stationary: spectral radius {radius:.6}")]
    NonstationaryFit { radius: f64 },

    #[error("estimated innovation covariance is too far from PSD (min eigenvalue {min_eigenvalue:.3e}, trace {trace:.3e})")]
    IndefiniteSigma { min_eigenvalue: f64, trace: f64 },

    #[error("contrast is rank deficient or C Phi C' is singular: {0}")]
    DegenerateContrast(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Unstable { .. } => "unstable",
            Error::NearUnitRoot(_) => "near_unit_root",
            Error::Covariance(_) => "covariance",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::Collinear { .. } => "collinear",
            Error::Inadmissible { .. } => "inadmissible",
            Error::NonstationaryFit { .. } => "nonstationary_fit",
            Error::IndefiniteSigma { .. } => "indefinite_sigma",
            Error::DegenerateContrast(_) => "degenerate_contrast",
            Error::Index(_) => "index",
            Error::Numerical(_) => "numerical",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
