use std::path::PathBuf;

/// Errors produced by the segbench core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid rigid transform: {0}")]
    InvalidTransform(String),

    #[error("invalid bounding box: min {min:?} exceeds max {max:?}")]
    InvalidBox { min: [f64; 3], max: [f64; 3] },

    #[error("data length {actual} does not match grid size {expected}")]
    DataLength { expected: usize, actual: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("bounding box does not intersect the volume extent")]
    EmptyIntersection,

    #[error("resampling would produce an empty axis {axis}")]
    DegenerateExtent { axis: usize },

    #[error("cannot normalize: {0}")]
    Normalization(String),

    #[error("probability value {value} at voxel {index} outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("invalid phantom spec: {0}")]
    InvalidPhantom(String),

    #[error("sweep trajectory does not intersect the volume")]
    TrajectoryMisses,

    #[error("seed at {position:?} mm lies outside the volume extent")]
    SeedOutside { position: [f64; 3] },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ground-truth mask is empty")]
    EmptyGroundTruth,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("curve requires at least one positive and one negative label")]
    SingleClass,

    #[error("all paired differences are zero")]
    AllZeroDifferences,

    #[error("misaligned case ids: {0}")]
    MisalignedCases(String),

    #[error("external predictor failed with {status}: {stderr}")]
    PredictorFailed { status: String, stderr: String },

    #[error("external predictor timed out after {seconds} s")]
    PredictorTimeout { seconds: f64 },

    #[error("NRRD {path}: {message}")]
    Nrrd { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn nrrd(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Nrrd {
            path: path.into(),
            message: message.into(),
        }
    }
}
