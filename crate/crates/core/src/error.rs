use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid waveform config: {0}")]
    InvalidWaveformConfig(String),
    #[error("symbol sequence is empty")]
    EmptySymbols,
    #[error("payload is empty")]
    EmptyPayload,
    #[error("invalid symbol {0}: symbols must be -1 or +1")]
    InvalidSymbol(i64),
    #[error("de Bruijn order {0} out of range 1..=16")]
    DeBruijnOrder(usize),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("tap delay {tau} is not on the sample grid (n_samp = {n_samp})")]
    OffGridDelay { tau: f64, n_samp: usize },
    #[error("energy per bit must be positive, got {0}")]
    NonPositiveEnergy(f64),
    #[error("input waveform is empty")]
    EmptyWaveform,
    #[error("need {needed} samples but only {available} are available")]
    Length { needed: usize, available: usize },
    #[error("non-finite decision input")]
    NonFinite,
    #[error("offset range {0}..={1} must contain -4..=3")]
    OffsetRange(i32, i32),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("probe waveform is all zero")]
    DegenerateProbe,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label {0} out of range 0..=7")]
    Label(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("probe too short: {0}")]
    ProbeTooShort(String),
    #[error("invalid training config: {0}")]
    TrainingConfig(String),
    #[error("model format: {0}")]
    ModelFormat(String),
    #[error("decoder {0} needs {1}")]
    MissingInput(&'static str, &'static str),
    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },
    #[error("nothing to write")]
    EmptyCurves,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
