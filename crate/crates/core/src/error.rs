use thiserror::Error;

/// Errors produced by the model, integrator, planner and optimizers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The persistence hypothesis (`delta_s > delta_M` and `R0 > 1`) fails.
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("state left the invariant region at t = {t}: {detail}")]
    InvariantBreach { t: f64, detail: String },

    #[error("time {t} outside trajectory range [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("invalid control schedule: {0}")]
    InvalidSchedule(String),

    /// The female population was still decreasing at the search cap.
    #[error("no local minimum of F found before t = {cap}")]
    NoMinimum { cap: f64 },

    #[error("horizon T = {horizon} too short: {reason}")]
    InfeasibleHorizon { horizon: f64, reason: String },

    #[error("optimal structure violated: {0}")]
    StructureViolation(String),

    #[error("minimum time tau2 = {tau2} exceeds horizon T = {horizon}")]
    ShiftOverflow { tau2: f64, horizon: f64 },

    #[error("target F = {target} not reached before t = {cap}")]
    NotReached { target: f64, cap: f64 },

    #[error("terminal target infeasible: {0}")]
    Infeasible(String),

    #[error("switching structure mismatch in {count} cells: {cells:?}")]
    StructureMismatch { count: usize, cells: Vec<usize> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
