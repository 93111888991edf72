use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("kernel quadrature did not converge (difference {diff:e} exceeds tolerance {tol:e})")]
    QuadratureNotConverged { diff: f64, tol: f64 },
    #[error("inverse CDF iteration did not converge after {0} iterations")]
    InverseCdfNotConverged(usize),
    #[error("energy drift {drift:e} over a segment of length {duration} exceeds tolerance")]
    EnergyDriftExceeded { drift: f64, duration: f64 },
    #[error("trajectory horizon {have} is shorter than the requested {need}")]
    HorizonTooShort { have: f64, need: f64 },
    #[error("cycle exceeded the budget of {0} collision events")]
    CycleTimeout(u64),
    #[error("time step {dt:e} is too coarse for mollifier width {epsilon:e}")]
    StepTooCoarse { dt: f64, epsilon: f64 },
    #[error("subordinator path reaches {reached} but {target} was requested")]
    PathTooShort { reached: f64, target: f64 },
    #[error("density grid too coarse: second moment {got:e} vs {want:e}")]
    GridTooCoarse { got: f64, want: f64 },
    #[error("no diffusion constant available for this experiment")]
    MissingKappa,
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("i/o failure: {0}")]
    Io(String),
    #[error("output directory {0} holds results of a different configuration")]
    OutputConflict(String),
}

impl Error {
    /// Stable short name for machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::QuadratureNotConverged { .. } => "quadrature-not-converged",
            Error::InverseCdfNotConverged(_) => "inverse-cdf-not-converged",
            Error::EnergyDriftExceeded { .. } => "energy-drift-exceeded",
            Error::HorizonTooShort { .. } => "horizon-too-short",
            Error::CycleTimeout(_) => "cycle-timeout",
            Error::StepTooCoarse { .. } => "step-too-coarse",
            Error::PathTooShort { .. } => "path-too-short",
            Error::GridTooCoarse { .. } => "grid-too-coarse",
            Error::MissingKappa => "missing-kappa",
            Error::ConfigInvalid(_) => "config-invalid",
            Error::Io(_) => "io",
            Error::OutputConflict(_) => "output-conflict",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
