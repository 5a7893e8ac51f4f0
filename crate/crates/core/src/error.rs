use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: expected P5, found {found:?}")]
    UnsupportedFormat { found: String },

    #[error("malformed pgm header: {detail}")]
    MalformedHeader { detail: String },

    #[error("unsupported pgm maxval {maxval}: only 255 is supported")]
    UnsupportedMaxval { maxval: u64 },

    #[error("truncated pgm payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, found {found_width}x{found_height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        found_width: usize,
        found_height: usize,
    },

    #[error("patch at ({row},{col}) with side {patch} exceeds image bounds {width}x{height}")]
    OutOfBounds {
        row: usize,
        col: usize,
        patch: usize,
        width: usize,
        height: usize,
    },

    #[error("shape mismatch: {detail}")]
    ShapeMismatch { detail: String },

    #[error("image {width}x{height} is smaller than the {patch}x{patch} patch")]
    ImageTooSmall {
        width: usize,
        height: usize,
        patch: usize,
    },

    #[error("search window holds only {found} candidate patches, {needed} required")]
    NotEnoughCandidates { found: usize, needed: usize },

    #[error("input contains a non-finite value")]
    NonFinite,

    #[error("threshold must be non-negative, got {tau}")]
    NegativeTau { tau: f64 },

    #[error("regularization must be non-negative, got {lambda}")]
    NegativeLambda { lambda: f64 },

    #[error("shrinkage exponent must lie in (0, 1], got {p}")]
    InvalidExponent { p: f64 },

    #[error("weight {index} is negative ({weight})")]
    NegativeWeight { index: usize, weight: f64 },

    #[error("missing fraction must lie in [0, 1), got {fraction}")]
    FractionOutOfRange { fraction: f64 },

    #[error("measurement ratio must lie in (0, 1], got {ratio}")]
    RatioOutOfRange { ratio: f64 },

    #[error("mask observes no pixels")]
    EmptyMask,

    #[error("inconsistent measurements: {detail}")]
    InconsistentMeasurements { detail: String },

    #[error("observation does not match the degradation operator: {detail}")]
    ObservationMismatch { detail: String },

    #[error("invalid solver configuration: {detail}")]
    InvalidConfig { detail: String },

    #[error("malformed file {path}: {detail}")]
    MalformedFile { path: PathBuf, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
