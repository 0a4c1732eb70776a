use std::path::{Path, PathBuf};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("image dimensions {height}x{width} must be even")]
    OddDimension { height: usize, width: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("spatial dims {height}x{width} are not divisible by grid {grid}")]
    IndivisibleGrid { height: usize, width: usize, grid: usize },

    #[error("spatial dims {height}x{width} are not divisible by patch size {patch}")]
    IndivisiblePatch { height: usize, width: usize, patch: usize },

    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    TooSmall { height: usize, width: usize, window: usize },

    #[error("positive set is empty")]
    EmptyPositiveSet,

    #[error("invalid sigma {name} = {value}: must be finite and >= 0")]
    InvalidSigma { name: &'static str, value: f64 },

    #[error("invalid dose factor {0}: must lie in (0, 1]")]
    InvalidDose(f64),

    #[error("degenerate intensity range [{0}, {1}]")]
    DegenerateRange(f64, f64),

    #[error("crop {crop} does not fit image {height}x{width}")]
    CropTooLarge { crop: usize, height: usize, width: usize },

    #[error("non-finite loss at step {step}: pixel={pixel}, fam={fam}")]
    NonFiniteLoss { step: u64, pixel: f64, fam: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid phantom spec: {0}")]
    InvalidSpec(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error families, used for process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
    Shape,
}

impl Error {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Error::Io { path: path.to_path_buf(), source }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidSigma { .. } | Error::InvalidDose(_) | Error::InvalidSpec(_) => {
                ErrorClass::Config
            }
            Error::NonFiniteLoss { .. } => ErrorClass::Numeric,
            Error::OddDimension { .. }
            | Error::Shape(_)
            | Error::IndivisibleGrid { .. }
            | Error::IndivisiblePatch { .. }
            | Error::TooSmall { .. }
            | Error::CropTooLarge { .. } => ErrorClass::Shape,
            Error::NonFinite(_)
            | Error::ShapeMismatch(_)
            | Error::EmptyPositiveSet
            | Error::DegenerateRange(..)
            | Error::Format(_)
            | Error::Io { .. } => ErrorClass::Data,
        }
    }
}
