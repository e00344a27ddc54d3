use thiserror::Error;

/// Errors raised by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("all values are zero")]
    AllZero,
    #[error("bad value {value} at index {index}")]
    BadValue { index: usize, value: f64 },
    #[error("bad magic bytes, expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("density not normalized: mass {mass}")]
    NotNormalized { mass: f64 },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("fixation {record} on image {image_id:?} at ({x}, {y}) is outside {height}x{width}")]
    OutOfBounds {
        record: usize,
        image_id: String,
        x: f64,
        y: f64,
        height: usize,
        width: usize,
    },
    #[error("unknown image {0:?}")]
    UnknownImage(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("zero density at fixated pixel ({row}, {col}) of image {image_id:?}")]
    ZeroDensityAtFixation {
        image_id: String,
        row: usize,
        col: usize,
    },
    #[error("no density for image {0:?}")]
    MissingDensity(String),
    #[error("no fixations")]
    NoFixations,
    #[error("empty nonfixation pool")]
    EmptyNonfixPool,
    #[error("zero variance")]
    ZeroVariance,
    #[error("shuffled-AUC map needs at least two images in the pool")]
    SingleImagePool,
    #[error("need at least {needed} fixations, got {got}")]
    TooFewFixations { needed: usize, got: usize },
    #[error("gold standard information gain must be positive, got {0}")]
    NonpositiveGold(f64),
    #[error("bad mixture weights: {0}")]
    BadWeights(String),
    #[error("missing instance {model}#{instance} for image {image_id:?}")]
    MissingInstance {
        model: String,
        instance: usize,
        image_id: String,
    },
    #[error("density has {pixels} pixels, need at least {bins} for {bins} bins")]
    TooFewPixels { pixels: usize, bins: usize },
    #[error("need at least {needed} images, got {got}")]
    TooFewImages { needed: usize, got: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("truncated input: {0}")]
    Truncated(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
