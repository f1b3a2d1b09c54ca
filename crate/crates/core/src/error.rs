use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate flux bias {flux} (effective critical current vanishes)")]
    DegenerateFlux { flux: f64 },

    #[error("time step {dt:e} s exceeds stability bound {dt_max:e} s")]
    StepSize { dt: f64, dt_max: f64 },

    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("matrix is not a valid density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("rate {rate:e} rad/s outside invertible range [0, {max:e}]")]
    RateOutOfRange { rate: f64, max: f64 },

    #[error("infeasible target: {fraction:.4} of the energy needs clamping (threshold {threshold})")]
    InfeasibleTarget { fraction: f64, threshold: f64 },

    #[error("non-monotonic inversion branch between flux {lo} and {hi}")]
    NonMonotonicBranch { lo: f64, hi: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable kind, used in CLI error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::DegenerateFlux { .. } => "degenerate_flux",
            Error::StepSize { .. } => "step_size",
            Error::Schedule(_) => "schedule",
            Error::Dimension { .. } => "dimension",
            Error::NotDensityMatrix(_) => "not_density_matrix",
            Error::Fit(_) => "fit",
            Error::RateOutOfRange { .. } => "rate_out_of_range",
            Error::InfeasibleTarget { .. } => "infeasible_target",
            Error::NonMonotonicBranch { .. } => "non_monotonic_branch",
            Error::Config { .. } => "config",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}
