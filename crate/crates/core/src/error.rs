use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid timing: {0}")]
    InvalidTiming(String),

    #[error("stage {stage} out of range (slot admits {delta} stages)")]
    StageOutOfRange { stage: usize, delta: usize },

    #[error("energy detector needs at least one sample, got tau*fs = {samples}")]
    TooFewSamples { samples: f64 },

    #[error("minimum sensing time is unbounded for zero SNR")]
    DegenerateSnr,

    #[error("invalid step-size schedule: {0}")]
    InvalidSchedule(String),

    #[error("grid is empty: {0}")]
    EmptyGrid(String),

    #[error("frame holds {got} slot outcomes, expected {expected}")]
    ShortFrame { got: usize, expected: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
