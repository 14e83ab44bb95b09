//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a precondition (value out of range, bad enum combination, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A region's wavelength cannot be resolved on the grid.
    #[error("spatial sampling error: region {region} has wavelength {wavelength_m:.6} m, below {min_voxels} voxels per wavelength at spacing {spacing_m:.6} m")]
    SpatialSampling {
        region: u32,
        wavelength_m: f64,
        spacing_m: f64,
        min_voxels: usize,
    },

    /// An inclusion does not fit inside the grid.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Signal has no power, so a requested noise level is undefined.
    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    /// Autocorrelation window carries no energy.
    #[error("degenerate window at origin ({0}, {1}): zero energy")]
    DegenerateWindow(usize, usize),

    /// A profile does not carry enough bins for a fit.
    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("container error: {0}")]
    Container(#[from] RvfError),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Errors specific to the `.rvf` container format. Each failure mode is a
/// distinct variant so callers can react to magic/version/size problems
/// separately.
#[derive(Debug, Error)]
pub enum RvfError {
    #[error("bad magic: expected \"RVSF\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },

    #[error("payload size mismatch: header implies {expected} f32 elements, file holds {actual}")]
    SizeMismatch { expected: usize, actual: usize },

    #[error("non-finite payload value at element {index}")]
    NonFinitePayload { index: usize },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
