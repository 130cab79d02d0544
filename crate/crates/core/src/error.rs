use thiserror::Error;

/// Errors produced by the synthesis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("occupation {occupation} out of range for mode `{mode}` ({levels} levels)")]
    OccupationOutOfRange {
        mode: String,
        occupation: usize,
        levels: usize,
    },

    #[error("mode index {0} out of range")]
    UnknownMode(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid mode specification: {0}")]
    InvalidMode(String),

    #[error("invalid system specification: {0}")]
    InvalidSystem(String),

    #[error("time {t} outside the pulse window [0, {duration}]")]
    TimeOutOfRange { t: f64, duration: f64 },

    #[error("invalid pulse parameters: {0}")]
    InvalidPulse(String),

    #[error("unsupported qudit layout: {0}")]
    UnsupportedLayout(String),

    #[error(
        "time step too coarse: {steps_per_period:.2} steps per period of the fastest \
         frequency ({max_frequency_hz:.3e} Hz), at least {required} required"
    )]
    StepTooCoarse {
        steps_per_period: f64,
        max_frequency_hz: f64,
        required: f64,
    },

    #[error("sample rate {sample_rate:.3e} Hz below 4x the fastest carrier ({max_carrier_hz:.3e} Hz)")]
    SampleRateTooLow {
        sample_rate: f64,
        max_carrier_hz: f64,
    },

    #[error("invalid optimizer configuration: {0}")]
    InvalidOptimizer(String),

    #[error("objective evaluation produced a non-finite value")]
    NonFinite,

    #[error("config error: {0}")]
    Config(String),

    #[error("unit error: {0}")]
    Unit(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
