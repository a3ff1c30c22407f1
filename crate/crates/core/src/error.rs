use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("calibration response is identically zero")]
    DegenerateCalibration,

    #[error("every snapshot failed the SNR gate")]
    AllSnapshotsRejected,

    #[error("no APDP bin exceeds the multipath threshold")]
    EmptyMpcSet,

    #[error("all samples share the same distance; the model is not identifiable")]
    DegenerateGeometry,

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("capture format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("no calibration capture for band {band_ghz} GHz")]
    MissingCalibration { band_ghz: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable name, used for status columns and JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::DegenerateCalibration => "DegenerateCalibration",
            Error::AllSnapshotsRejected => "AllSnapshotsRejected",
            Error::EmptyMpcSet => "EmptyMpcSet",
            Error::DegenerateGeometry => "DegenerateGeometry",
            Error::InsufficientSamples { .. } => "InsufficientSamples",
            Error::Format { .. } => "FormatError",
            Error::MissingCalibration { .. } => "MissingCalibration",
            Error::Io { .. } => "Io",
            Error::Json(_) => "Json",
            Error::Csv(_) => "Csv",
        }
    }
}
