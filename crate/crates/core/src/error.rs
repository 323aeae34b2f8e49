use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// One failed item of the initial-data validation.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisFailure {
    pub label: String,
    pub residual: f64,
}

impl fmt::Display for HypothesisFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (residual {:e})", self.label, self.residual)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field length {found} does not match grid size {expected}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("non-finite field value at node {index}")]
    NonFinite { index: usize },

    #[error("unsupported derivative order {0}")]
    UnsupportedOrder(usize),

    #[error("non-positive value {value} at node {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("negative shift {0}")]
    NegativeShift(f64),

    #[error("zero pivot in tridiagonal solve at row {row} (dt = {dt}, min diffusion = {min_diffusion})")]
    ZeroPivot { row: usize, dt: f64, min_diffusion: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (max residual {residual:e})")]
    NewtonDiverged { iterations: usize, residual: f64 },

    #[error("maximum principle violated at node {index}: v = {value} outside ({lower}, {upper}]")]
    MaximumPrincipleViolated { index: usize, value: f64, lower: f64, upper: f64 },

    #[error("hypotheses violated: {}", join_failures(.0))]
    HypothesisViolated(Vec<HypothesisFailure>),

    #[error("boundary-velocity denominator {denominator:e} below floor {floor:e}")]
    DenominatorTooSmall { denominator: f64, floor: f64 },

    #[error("inadmissible path: {0}")]
    InadmissiblePath(String),

    #[error("Picard iteration stalled after {iterations} iterations (distance {distance:e}, last ratio {ratio})")]
    PicardStalled { iterations: usize, distance: f64, ratio: f64 },

    #[error("at t = {time}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_time(self, time: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            e => Error::AtTime { time, source: Box::new(e) },
        }
    }

    /// The underlying error with any time context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtTime { source, .. } => source.root(),
            e => e,
        }
    }
}

fn join_failures(items: &[HypothesisFailure]) -> String {
    items.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; ")
}
