use thiserror::Error;

/// Every failure the library can report. Each variant names the violated
/// condition so that CLI reports can quote it directly.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("delay must be positive and the grid needs at least 2 subintervals (d = {d}, K = {k})")]
    NonPositiveDelay { d: f64, k: usize },
    #[error("control lattice is empty")]
    EmptyControlLattice,
    #[error("growth or Lipschitz bound violated for {field}: {detail}")]
    GrowthViolated { field: String, detail: String },
    #[error("discount rho = {rho} does not exceed rho0 = {rho0}")]
    DiscountTooSmall { rho: f64, rho0: f64 },
    #[error("grid mismatch: expected {expected} nodes, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("horizon {horizon} is not a positive multiple of the step {dt}")]
    HorizonNotAligned { horizon: f64, dt: f64 },
    #[error("time {t} is not a nonnegative multiple of the grid spacing {h}")]
    TimeNotAligned { t: f64, h: f64 },
    #[error("state left the finite range at step {step}")]
    NonFinite { step: usize },
    #[error("operation requires the linear model (b0 = a0 y + b(u), sigma0 = sigma(u))")]
    NotLinearModel,
    #[error("state is outside the discretized domain: |x1(-d)| = {value}")]
    DomainViolation { value: f64 },
    #[error("the R^n block of the closed-form inverse is numerically singular")]
    SingularBlock,
    #[error("certificate item ({item}) failed: {detail}")]
    CertificateFailed { item: String, detail: String },
    #[error("N = {n} is outside 1..={max}")]
    NOutOfRange { n: usize, max: usize },
    #[error("control {index} is not a lattice point")]
    ControlOutOfSet { index: usize },
    #[error("brute-force search over {size} sequences exceeds the limit {limit}")]
    SearchTooLarge { size: f64, limit: f64 },
    #[error("regression system is singular")]
    RegressionSingular,
    #[error("sign constraint violated: {0}")]
    SignConstraintViolated(String),
    #[error("model requires sigma0 = 0 for this operation")]
    NotDeterministic,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Module that owns the invariant behind this error.
    pub fn module(&self) -> &'static str {
        match self {
            Error::NonPositiveDelay { .. }
            | Error::EmptyControlLattice
            | Error::GrowthViolated { .. }
            | Error::DiscountTooSmall { .. }
            | Error::SignConstraintViolated(_) => "model",
            Error::GridMismatch { .. }
            | Error::DimensionMismatch { .. }
            | Error::HorizonNotAligned { .. }
            | Error::NonFinite { .. } => "sdde_sim",
            Error::TimeNotAligned { .. } => "lift",
            Error::NotLinearModel
            | Error::DomainViolation { .. }
            | Error::SingularBlock
            | Error::CertificateFailed { .. }
            | Error::NOutOfRange { .. } => "operators",
            Error::ControlOutOfSet { .. } => "hamiltonian",
            Error::SearchTooLarge { .. } | Error::RegressionSingular | Error::NotDeterministic => {
                "value"
            }
            Error::Config(_) | Error::Io(_) => "cli",
        }
    }
}
