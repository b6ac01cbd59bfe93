use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time {t} is outside the prescribed window [{t0}, {end})")]
    TimeOutOfWindow { t: f64, t0: f64, end: f64 },

    #[error("quadrature did not reach tolerance on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64 },

    #[error("edge ({0}, {0}) is a self loop")]
    SelfLoop(usize),

    #[error("edge ({i}, {j}) has non-positive weight {weight}")]
    NegativeWeight { i: usize, j: usize, weight: f64 },

    #[error("edge ({i}, {j}) references a node outside 0..{n}")]
    NodeOutOfRange { i: usize, j: usize, n: usize },

    #[error("graph is disconnected; nodes unreachable from 0: {unreached:?}")]
    Disconnected { unreached: Vec<usize> },

    #[error("operation needs at least {needed} agents, got {got}")]
    DegenerateSize { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("input `{0}` must be strictly positive")]
    NonPositiveInput(&'static str),

    #[error("matrix is not Hurwitz (spectral abscissa {0})")]
    NotHurwitz(f64),

    #[error("linear system is singular")]
    SingularSystem,

    #[error("gain {mu} exceeds the guard value {guard}")]
    GuardExceeded { mu: f64, guard: f64 },

    #[error("design margin too small: {0}")]
    MarginTooSmall(String),

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("non-finite state at t = {t} in component {component}")]
    NonFiniteState { t: f64, component: usize },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {0} exhausted")]
    StepBudget(usize),

    #[error("invalid gain function: {0}")]
    InvalidGain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("design criterion failed: {0}")]
    CriterionFailed(String),

    #[error("scenario parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("CSV schema mismatch: {0}")]
    Schema(String),

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
