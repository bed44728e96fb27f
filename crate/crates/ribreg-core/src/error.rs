//! Crate-wide error type.

use core::fmt;

/// Errors shared by all modules of the crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two grids that must agree in size do not.
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    /// A grid constructor was given inconsistent or undersized dimensions.
    InvalidDimensions { width: usize, height: usize },
    /// A value violates a construction invariant (non-finite, out of range).
    InvalidValue(&'static str),
    /// A label is outside the declared label semantics.
    InvalidLabel { label: u8 },
    /// Two masks that must share label semantics do not.
    LabelSetMismatch,
    /// Operation needs a non-empty mask.
    EmptyMask,
    /// Threshold calibration needs at least two ground-truth masks.
    EmptyCorpus,
    /// Image smaller than the metric's window.
    TooSmall { minimum: usize },
    /// Configuration field out of its valid range.
    InvalidConfig(&'static str),
    /// All paired differences are zero; the signed-rank test is undefined.
    AllZeroDifferences,
    /// Significance level outside (0, 1).
    UnsupportedAlpha,
    /// Score matrix violates its shape invariants.
    DegenerateMatrix(&'static str),
    /// Histogram-transfer control points are not monotone.
    NonMonotoneControlPoints,
    /// Phantom geometry does not fit inside the grid.
    GeometryOverflow(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { expected, got } => write!(
                f,
                "dimension mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
            Error::InvalidDimensions { width, height } => {
                write!(f, "invalid grid dimensions {width}x{height}")
            }
            Error::InvalidValue(what) => write!(f, "invalid value: {what}"),
            Error::InvalidLabel { label } => {
                write!(f, "label {label} outside declared semantics")
            }
            Error::LabelSetMismatch => write!(f, "masks use different label semantics"),
            Error::EmptyMask => write!(f, "mask has no foreground pixels"),
            Error::EmptyCorpus => write!(f, "need at least two ground-truth masks"),
            Error::TooSmall { minimum } => {
                write!(f, "image smaller than the {minimum}x{minimum} minimum")
            }
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::AllZeroDifferences => write!(f, "all paired differences are zero"),
            Error::UnsupportedAlpha => write!(f, "alpha must lie strictly inside (0, 1)"),
            Error::DegenerateMatrix(what) => write!(f, "degenerate score matrix: {what}"),
            Error::NonMonotoneControlPoints => {
                write!(f, "histogram-transfer control points are not monotone")
            }
            Error::GeometryOverflow(what) => {
                write!(f, "phantom geometry overflows the grid: {what}")
            }
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
