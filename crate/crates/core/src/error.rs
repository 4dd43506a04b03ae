use thiserror::Error;

/// Errors produced by trace handling, generators, simulation and metrics.
#[derive(Debug, Error)]
pub enum Error {
    /// The two sides of the delay/height identity disagree.
    #[error("inconsistent profile: height area {area} != total delay {delay}")]
    InconsistentProfile { area: String, delay: String },

    #[error("{undeparted} packet(s) still queued at the horizon")]
    NotDrained { undeparted: usize },

    #[error("arrival and departure processes use different time modes")]
    ModeMismatch,

    #[error("incompatible processes: {0}")]
    IncompatibleProcesses(String),

    #[error("parameter {name} = {value} out of range: {constraint}")]
    ParameterOutOfRange {
        name: &'static str,
        value: String,
        constraint: &'static str,
    },

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("length mismatch: truth has {truth} steps, estimate has {estimate}")]
    LengthMismatch { truth: usize, estimate: usize },

    #[error("estimator {estimator} cannot be paired with policy {policy}")]
    IncompatibleEstimator { policy: String, estimator: String },

    #[error("unknown demo `{0}`")]
    UnknownDemo(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn out_of_range(
        name: &'static str,
        value: impl ToString,
        constraint: &'static str,
    ) -> Self {
        Error::ParameterOutOfRange {
            name,
            value: value.to_string(),
            constraint,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
