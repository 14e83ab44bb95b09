//! Spatiotemporal sampling grid and the real-valued motion series stored on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum temporal samples per excitation cycle accepted by [`GridSpec::validate`].
pub const MIN_SAMPLES_PER_CYCLE: f64 = 8.0;

/// Minimum excitation cycles that must fit in the time window.
pub const MIN_CYCLES: f64 = 2.0;

/// One of the three Cartesian axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> [f64; 3] {
        let mut v = [0.0; 3];
        v[self.index()] = 1.0;
        v
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// Voxel grid plus temporal sampling and excitation frequency.
///
/// `nz = 1` (or any singleton axis) selects a single 2D plane of the 3D
/// medium; wave directions remain fully three-dimensional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Voxel counts per axis.
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Meters per voxel along each axis.
    pub spacing_m: [f64; 3],
    /// Temporal samples.
    pub nt: usize,
    /// Seconds per temporal sample.
    pub dt: f64,
    /// Excitation frequency in Hz.
    pub f0_hz: f64,
}

impl GridSpec {
    /// Angular excitation frequency `2*pi*f0`.
    pub fn omega0(&self) -> f64 {
        2.0 * std::f64::consts::PI * self.f0_hz
    }

    pub fn voxel_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn sample_count(&self) -> usize {
        self.voxel_count() * self.nt
    }

    /// Physical position of voxel `(ix, iy, iz)` at the voxel center offsets
    /// `ix * spacing` from the grid origin.
    pub fn position(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            ix as f64 * self.spacing_m[0],
            iy as f64 * self.spacing_m[1],
            iz as f64 * self.spacing_m[2],
        ]
    }

    /// Physical extent of the grid along each axis.
    pub fn extent_m(&self) -> [f64; 3] {
        [
            self.nx as f64 * self.spacing_m[0],
            self.ny as f64 * self.spacing_m[1],
            self.nz as f64 * self.spacing_m[2],
        ]
    }

    /// Row-major spatial index over `(x, y, z)`.
    #[inline]
    pub fn spatial_index(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.ny + iy) * self.nz + iz
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Validation("grid has a zero-sized axis".into()));
        }
        if self.spacing_m.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Validation(format!(
                "spacing must be positive and finite, got {:?}",
                self.spacing_m
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.f0_hz > 0.0) || !self.f0_hz.is_finite() {
            return Err(Error::Validation(format!(
                "f0 must be positive, got {}",
                self.f0_hz
            )));
        }
        let nyquist = 0.5 / self.dt;
        if self.f0_hz >= nyquist {
            return Err(Error::Validation(format!(
                "f0 = {} Hz violates the temporal Nyquist limit {} Hz",
                self.f0_hz, nyquist
            )));
        }
        let samples_per_cycle = 1.0 / (self.dt * self.f0_hz);
        if samples_per_cycle < MIN_SAMPLES_PER_CYCLE {
            return Err(Error::Validation(format!(
                "{samples_per_cycle:.2} samples per cycle of f0; at least {MIN_SAMPLES_PER_CYCLE} required"
            )));
        }
        let cycles = self.nt as f64 * self.dt * self.f0_hz;
        if cycles < MIN_CYCLES {
            return Err(Error::Validation(format!(
                "time window spans {cycles:.2} cycles of f0; at least {MIN_CYCLES} required"
            )));
        }
        Ok(())
    }
}

/// Real z-motion (or generally sensor-axis motion) samples over the grid.
///
/// Sample layout is space-major: the full time series of voxel `(ix, iy, iz)`
/// occupies `samples[s * nt .. (s + 1) * nt]` with
/// `s = (ix * ny + iy) * nz + iz`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotionSeries {
    pub grid: GridSpec,
    pub sensor_axis: Axis,
    /// Free-form unit tag carried through the container header ("m/s" or "m").
    pub unit: String,
    pub samples: Vec<f64>,
}

impl MotionSeries {
    pub fn zeros(grid: GridSpec, sensor_axis: Axis) -> Self {
        let n = grid.sample_count();
        MotionSeries {
            grid,
            sensor_axis,
            unit: "m/s".to_string(),
            samples: vec![0.0; n],
        }
    }

    /// Time series slice of one voxel.
    pub fn voxel_series(&self, ix: usize, iy: usize, iz: usize) -> &[f64] {
        let s = self.grid.spatial_index(ix, iy, iz);
        &self.samples[s * self.grid.nt..(s + 1) * self.grid.nt]
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        if self.samples.len() != self.grid.sample_count() {
            return Err(Error::Validation(format!(
                "sample buffer holds {} values, grid implies {}",
                self.samples.len(),
                self.grid.sample_count()
            )));
        }
        if let Some(i) = self.samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite sample at index {i}")));
        }
        Ok(())
    }

    /// Mean square over all samples.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec {
            nx: 8,
            ny: 8,
            nz: 1,
            spacing_m: [1e-3; 3],
            nt: 32,
            dt: 1.0 / 3200.0,
            f0_hz: 200.0,
        }
    }

    #[test]
    fn valid_grid_passes() {
        grid().validate().unwrap();
    }

    #[test]
    fn nyquist_violation_rejected() {
        let mut g = grid();
        g.f0_hz = 2000.0; // nyquist is 1600 Hz
        assert!(matches!(g.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn too_few_cycles_rejected() {
        let mut g = grid();
        g.nt = 8; // half a cycle at 200 Hz
        assert!(matches!(g.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn too_coarse_sampling_rejected() {
        let mut g = grid();
        g.dt = 1.0 / 800.0; // 4 samples per cycle
        g.nt = 8;
        assert!(matches!(g.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn series_layout_is_space_major() {
        let g = grid();
        let mut m = MotionSeries::zeros(g.clone(), Axis::Z);
        let s = g.spatial_index(3, 2, 0);
        m.samples[s * g.nt + 5] = 7.0;
        assert_eq!(m.voxel_series(3, 2, 0)[5], 7.0);
    }

    #[test]
    fn non_finite_sample_rejected() {
        let mut m = MotionSeries::zeros(grid(), Axis::Z);
        m.samples[10] = f64::NAN;
        assert!(m.validate().is_err());
    }
}
