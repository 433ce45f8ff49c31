use thiserror::Error;

use crate::freq_plan::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{frequency} Hz does not give an integer number of samples per period at fs = {fs}")]
    NonIntegerPeriod { frequency: f64, fs: f64 },

    #[error("{frequency} Hz is above the Nyquist limit for fs = {fs}")]
    AboveNyquist { frequency: f64, fs: f64 },

    #[error("{frequency} Hz has only {samples} samples per period (need at least {min})")]
    TooFewSamplesPerPeriod {
        frequency: f64,
        samples: f64,
        min: usize,
    },

    #[error("{frequency} Hz is not an integer multiple of delta_f = {delta_f} Hz")]
    OffGrid { frequency: f64, delta_f: f64 },

    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("invalid sampling window: {0}")]
    InvalidWindow(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wavelength {wavelength_nm} nm is evanescent in diffraction order {order}")]
    Evanescent { wavelength_nm: f64, order: i32 },

    #[error("patches {first} and {second} overlap")]
    OverlappingPatches { first: usize, second: usize },

    #[error("patch {0} does not fit inside the grid")]
    PatchOutOfGrid(usize),

    #[error("pixel {pixel} has no Walsh code row")]
    MissingCode { pixel: usize },

    #[error("{frequency} Hz is not a channel of this plan")]
    UnknownChannel { frequency: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("window does not match plan: {0}")]
    WindowMismatch(String),

    #[error("image coverage: {0}")]
    Coverage(String),

    #[error("frequency plan failed validation:\n{0}")]
    InvalidPlan(Box<ValidationReport>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that originate from reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
