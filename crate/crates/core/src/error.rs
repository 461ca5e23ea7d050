use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),

    #[error("grid dimensions must be powers of two, got {nx}x{nz}")]
    NonPowerOfTwo { nx: usize, nz: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("reference image has a nonpositive pixel at index {0}")]
    NonPositiveReference(usize),

    #[error("photon budget must be positive, got {0}")]
    InvalidPhotonBudget(f64),

    #[error("degenerate frame: filtered mass {mass:e} below floor {floor:e}")]
    DegenerateFrame { mass: f64, floor: f64 },

    #[error("gain calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("variance window of {0} samples is too short (need at least 3)")]
    WindowTooShort(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("at sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
