//! Synthetic reverberant shear-wave motion fields.

pub mod grid;
pub mod medium;
pub mod noise;
pub mod synth;

pub use grid::{Axis, GridSpec, MotionSeries};
pub use medium::{make_two_region_medium, InclusionShape, MediumMap};
pub use noise::add_noise;
pub use synth::{synth_reverberant, Directionality, PlaneWave, PlaneWaveEnsemble};
