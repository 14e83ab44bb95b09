//! Reverberant field synthesis by superposition of random plane shear waves.
//!
//! A field is a sum of transverse plane waves sharing one wavenumber per
//! region. Time enters only through the harmonic factor, so evaluation
//! computes a complex spatial phasor per voxel once and then expands it over
//! the time axis. Heterogeneous media are synthesized piecewise: each region
//! receives an independent ensemble evaluated at the region-local wavenumber,
//! with no diffraction at region boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wavefield::grid::{Axis, GridSpec, MotionSeries};
use crate::wavefield::medium::MediumMap;

/// Unit-vector and transversality tolerance for ensemble validation.
pub const UNIT_TOL: f64 = 1e-12;

/// Minimum voxels per wavelength the synthesizer accepts.
pub const MIN_VOXELS_PER_WAVELENGTH: f64 = 4.0;

/// Angular distribution of propagation directions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Directionality {
    /// Directions uniform over the full sphere.
    Isotropic,
    /// Directions uniform over the spherical cap of the given half-angle
    /// around `axis`. A half-angle of pi reproduces the isotropic case.
    Cone { axis: [f64; 3], half_angle_rad: f64 },
}

impl Directionality {
    fn validate(&self) -> Result<()> {
        if let Directionality::Cone {
            axis,
            half_angle_rad,
        } = self
        {
            let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::Validation("cone axis is a zero vector".into()));
            }
            if !(*half_angle_rad > 0.0) || *half_angle_rad > std::f64::consts::PI {
                return Err(Error::Validation(format!(
                    "cone half-angle must lie in (0, pi], got {half_angle_rad}"
                )));
            }
        }
        Ok(())
    }
}

/// One transverse plane wave of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWave {
    /// Unit propagation direction.
    pub propagation: [f64; 3],
    /// Unit particle-motion direction, perpendicular to `propagation`.
    pub motion: [f64; 3],
    /// Particle velocity magnitude of this realization.
    pub amplitude: f64,
    /// Phase offset in radians.
    pub phase_rad: f64,
}

impl PlaneWave {
    fn validate(&self, index: usize) -> Result<()> {
        let p = self.propagation;
        let m = self.motion;
        let np = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let nm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
        if (np - 1.0).abs() > UNIT_TOL || (nm - 1.0).abs() > UNIT_TOL {
            return Err(Error::Validation(format!(
                "wave {index}: direction norms {np} / {nm} deviate from 1 beyond {UNIT_TOL}"
            )));
        }
        let dp = p[0] * m[0] + p[1] * m[1] + p[2] * m[2];
        if dp.abs() > UNIT_TOL {
            return Err(Error::Validation(format!(
                "wave {index}: motion not transverse, |n_ql . n_q| = {:.3e}",
                dp.abs()
            )));
        }
        if !self.amplitude.is_finite() || self.amplitude < 0.0 {
            return Err(Error::Validation(format!(
                "wave {index}: amplitude must be finite and >= 0"
            )));
        }
        Ok(())
    }
}

/// A validated collection of plane waves sharing one wavenumber.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWaveEnsemble {
    pub waves: Vec<PlaneWave>,
    pub directionality: Directionality,
}

impl PlaneWaveEnsemble {
    pub fn new(waves: Vec<PlaneWave>, directionality: Directionality) -> Result<Self> {
        if waves.is_empty() {
            return Err(Error::Validation("ensemble holds no waves".into()));
        }
        directionality.validate()?;
        for (i, w) in waves.iter().enumerate() {
            w.validate(i)?;
        }
        Ok(PlaneWaveEnsemble {
            waves,
            directionality,
        })
    }

    /// Draws `q_count` waves. Wave `j` consumes an independent RNG stream
    /// derived from `(seed, stream_tag, j)`, so the draw is reproducible and
    /// independent of evaluation order or of `q_count` itself.
    pub fn sample(
        q_count: usize,
        directionality: &Directionality,
        seed: u64,
        stream_tag: u32,
    ) -> Result<Self> {
        if q_count == 0 {
            return Err(Error::Validation("q_count must be at least 1".into()));
        }
        directionality.validate()?;
        let waves = (0..q_count)
            .map(|j| {
                let mut rng = wave_rng(seed, stream_tag, j as u32);
                draw_wave(&mut rng, directionality)
            })
            .collect();
        PlaneWaveEnsemble::new(waves, directionality.clone())
    }

    /// Evaluates the sensor-axis projection of the ensemble over the grid at
    /// a single wavenumber, returning the real instantaneous motion.
    pub fn evaluate(&self, grid: &GridSpec, wavenumber: f64, sensor_axis: Axis) -> Result<MotionSeries> {
        grid.validate()?;
        if !(wavenumber > 0.0) {
            return Err(Error::Validation(format!(
                "wavenumber must be positive, got {wavenumber}"
            )));
        }
        let phasor = evaluate_phasor(grid, wavenumber, self, sensor_axis, None);
        Ok(expand_time(grid, sensor_axis, &phasor))
    }
}

fn wave_rng(seed: u64, stream_tag: u32, wave_index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream_tag as u64) << 32) | wave_index as u64);
    rng
}

fn normalize3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Orthonormal basis of the plane perpendicular to unit vector `n`.
/// The helper axis is chosen by smallest component so the basis is stable.
fn perpendicular_basis(n: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let a = n[0].abs();
    let b = n[1].abs();
    let c = n[2].abs();
    let helper = if a <= b && a <= c {
        [1.0, 0.0, 0.0]
    } else if b <= c {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let e1 = normalize3([
        helper[1] * n[2] - helper[2] * n[1],
        helper[2] * n[0] - helper[0] * n[2],
        helper[0] * n[1] - helper[1] * n[0],
    ]);
    let e2 = [
        n[1] * e1[2] - n[2] * e1[1],
        n[2] * e1[0] - n[0] * e1[2],
        n[0] * e1[1] - n[1] * e1[0],
    ];
    (e1, e2)
}

fn draw_wave(rng: &mut ChaCha8Rng, directionality: &Directionality) -> PlaneWave {
    // Fixed draw order: direction (2), motion angle (1), amplitude (1), phase (1).
    let propagation = match directionality {
        Directionality::Isotropic => {
            let cos_theta: f64 = rng.gen_range(-1.0..=1.0);
            let beta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
            [s * beta.cos(), s * beta.sin(), cos_theta]
        }
        Directionality::Cone {
            axis,
            half_angle_rad,
        } => {
            let cos_alpha: f64 = rng.gen_range(half_angle_rad.cos()..=1.0);
            let beta: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let s = (1.0 - cos_alpha * cos_alpha).max(0.0).sqrt();
            let axis = normalize3(*axis);
            let (e1, e2) = perpendicular_basis(axis);
            let mut v = [0.0; 3];
            for i in 0..3 {
                v[i] = cos_alpha * axis[i] + s * (beta.cos() * e1[i] + beta.sin() * e2[i]);
            }
            normalize3(v)
        }
    };
    let (e1, e2) = perpendicular_basis(propagation);
    let psi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let motion = [
        psi.cos() * e1[0] + psi.sin() * e2[0],
        psi.cos() * e1[1] + psi.sin() * e2[1],
        psi.cos() * e1[2] + psi.sin() * e2[2],
    ];
    // Half-normal amplitudes: unit second moment, positive support.
    let g: f64 = rng.sample(StandardNormal);
    let amplitude = g.abs();
    let phase_rad: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    PlaneWave {
        propagation,
        motion: normalize3(motion),
        amplitude,
        phase_rad,
    }
}

/// Complex spatial phasor of the sensor-projected ensemble:
/// `sum_j (n_j . e_sensor) a_j exp(i (k n_q . x + phi_j))`.
///
/// When `region` is given, only voxels carrying that label are written; other
/// entries of the output stay zero. Accumulation per voxel runs in fixed wave
/// order, so the result does not depend on the parallel schedule.
fn evaluate_phasor(
    grid: &GridSpec,
    wavenumber: f64,
    ensemble: &PlaneWaveEnsemble,
    sensor_axis: Axis,
    region: Option<(&MediumMap, u32)>,
) -> Vec<Complex64> {
    let sensor = sensor_axis.index();
    // Per-wave separable phase tables along each axis; the sensor projection,
    // amplitude, and phase offset are folded into the x-axis table.
    struct WaveTables {
        px: Vec<Complex64>,
        py: Vec<Complex64>,
        pz: Vec<Complex64>,
    }
    let tables: Vec<WaveTables> = ensemble
        .waves
        .iter()
        .map(|w| {
            let coeff =
                Complex64::from_polar(1.0, w.phase_rad) * (w.motion[sensor] * w.amplitude);
            let phase_step = |n: f64, spacing: f64, i: usize| {
                Complex64::from_polar(1.0, wavenumber * n * spacing * i as f64)
            };
            let px = (0..grid.nx)
                .map(|i| coeff * phase_step(w.propagation[0], grid.spacing_m[0], i))
                .collect();
            let py = (0..grid.ny)
                .map(|i| phase_step(w.propagation[1], grid.spacing_m[1], i))
                .collect();
            let pz = (0..grid.nz)
                .map(|i| phase_step(w.propagation[2], grid.spacing_m[2], i))
                .collect();
            WaveTables { px, py, pz }
        })
        .collect();

    let slab = grid.ny * grid.nz;
    let mut phasor = vec![Complex64::new(0.0, 0.0); grid.voxel_count()];
    phasor
        .par_chunks_mut(slab)
        .enumerate()
        .for_each(|(ix, out)| {
            for iy in 0..grid.ny {
                for iz in 0..grid.nz {
                    let local = iy * grid.nz + iz;
                    if let Some((medium, label)) = region {
                        if medium.region_label[ix * slab + local] != label {
                            continue;
                        }
                    }
                    let mut acc = Complex64::new(0.0, 0.0);
                    for t in &tables {
                        acc += t.px[ix] * t.py[iy] * t.pz[iz];
                    }
                    out[local] = acc;
                }
            }
        });
    phasor
}

/// Expands a spatial phasor into real time samples `Re(phi exp(-i w0 t))`.
fn expand_time(grid: &GridSpec, sensor_axis: Axis, phasor: &[Complex64]) -> MotionSeries {
    let omega0 = grid.omega0();
    let carrier: Vec<Complex64> = (0..grid.nt)
        .map(|it| Complex64::from_polar(1.0, -omega0 * grid.dt * it as f64))
        .collect();
    let mut series = MotionSeries::zeros(grid.clone(), sensor_axis);
    series
        .samples
        .par_chunks_mut(grid.nt)
        .zip(phasor.par_iter())
        .for_each(|(out, &p)| {
            for (o, &c) in out.iter_mut().zip(carrier.iter()) {
                *o = (p * c).re;
            }
        });
    series
}

fn check_resolvable(grid: &GridSpec, medium: &MediumMap) -> Result<()> {
    for region in medium.regions() {
        let sws = medium
            .region_sws(region)
            .expect("region listed but not present");
        let wavelength = sws / grid.f0_hz;
        for (&n, &spacing) in [grid.nx, grid.ny, grid.nz].iter().zip(grid.spacing_m.iter()) {
            if n == 1 {
                continue;
            }
            if wavelength / spacing < MIN_VOXELS_PER_WAVELENGTH {
                return Err(Error::SpatialSampling {
                    region,
                    wavelength_m: wavelength,
                    spacing_m: spacing,
                    min_voxels: MIN_VOXELS_PER_WAVELENGTH as usize,
                });
            }
        }
    }
    Ok(())
}

/// Synthesizes a reverberant field over the medium, sensed along
/// `sensor_axis`. Each region receives an independent `q_count`-wave
/// ensemble evaluated at the region-local wavenumber `2 pi f0 / sws`.
pub fn synth_reverberant(
    grid: &GridSpec,
    medium: &MediumMap,
    q_count: usize,
    directionality: &Directionality,
    sensor_axis: Axis,
    seed: u64,
) -> Result<MotionSeries> {
    grid.validate()?;
    medium.validate()?;
    if medium.grid != *grid {
        return Err(Error::Validation("medium grid does not match target grid".into()));
    }
    if q_count == 0 {
        return Err(Error::Validation("q_count must be at least 1".into()));
    }
    check_resolvable(grid, medium)?;

    let mut phasor = vec![Complex64::new(0.0, 0.0); grid.voxel_count()];
    for (region_index, region) in medium.regions().into_iter().enumerate() {
        let sws = medium.region_sws(region).expect("region present");
        let k = grid.omega0() / sws;
        let ensemble =
            PlaneWaveEnsemble::sample(q_count, directionality, seed, region_index as u32)?;
        let part = evaluate_phasor(grid, k, &ensemble, sensor_axis, Some((medium, region)));
        for (dst, src) in phasor.iter_mut().zip(part) {
            *dst += src;
        }
    }
    Ok(expand_time(grid, sensor_axis, &phasor))
}
