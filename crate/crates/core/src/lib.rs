//! Reverberant shear-wave speed estimation from single-axis motion data.
//!
//! The crate covers the full path from synthetic reverberant fields to
//! shear-wave speed maps: field synthesis over voxel grids, harmonic phasor
//! extraction, windowed spatial autocorrelation, closed-form correlation
//! models with wavenumber fitting, and the sliding-window estimation
//! pipeline with its reporting front end.

pub mod autocorr;
pub mod error;
pub mod io;
pub mod models;
pub mod pipeline;
pub mod spectral;
pub mod wavefield;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
