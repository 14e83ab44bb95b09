//! Harmonic phasor extraction and temporal/spatial conditioning.
//!
//! Motion snapshots enter as real time series per voxel; analysis happens on
//! the complex amplitude of the steady-state component at the drive
//! frequency. With a periodic Hann window and a drive sitting on an integer
//! DFT bin `b` in `[1, nt/2-1]`, the window kernel vanishes at every offset
//! past one bin, so `P = 2 conj(X[b]) / sum(w)` recovers the phasor of
//! `Re(P exp(-i w0 t))` exactly.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::wavefield::grid::{Axis, GridSpec, MotionSeries};

/// Selected-bin power must exceed this multiple of the median off-bin power,
/// otherwise the plane is flagged as weak.
const WEAK_POWER_FACTOR: f64 = 3.0;

/// How many bins on each side of the frequency hint the selector searches.
const BIN_SEARCH_HALFWIDTH: i64 = 2;

/// Orientation of an analysis plane relative to the sensor axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlaneKind {
    /// The sensor axis lies inside the plane.
    ContainsSensorAxis,
    /// The sensor axis is the plane normal.
    PerpSensorAxis,
}

/// Picks one grid-aligned plane out of a volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlaneSelector {
    pub normal: Axis,
    pub index: usize,
}

/// Complex phasor samples over one grid-aligned plane.
///
/// `axes` are the two in-plane axes in fixed x-y-z order; `values` is laid
/// out with the first axis major: `values[iu * height + iv]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPlaneField {
    pub axes: [Axis; 2],
    pub normal: Axis,
    pub sensor_axis: Axis,
    pub width: usize,
    pub height: usize,
    pub spacing_m: [f64; 2],
    pub f0_hz: f64,
    pub values: Vec<Complex64>,
    /// Set when the drive bin does not stand out of the residual spectrum.
    pub weak_signal: bool,
}

impl ComplexPlaneField {
    pub fn plane_kind(&self) -> PlaneKind {
        if self.normal == self.sensor_axis {
            PlaneKind::PerpSensorAxis
        } else {
            PlaneKind::ContainsSensorAxis
        }
    }

    /// Position of the sensor axis among the in-plane axes, if it lies
    /// in-plane.
    pub fn sensor_in_plane(&self) -> Option<usize> {
        self.axes.iter().position(|a| *a == self.sensor_axis)
    }

    pub fn at(&self, iu: usize, iv: usize) -> Complex64 {
        self.values[iu * self.height + iv]
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes[0] == self.axes[1]
            || self.axes[0] == self.normal
            || self.axes[1] == self.normal
        {
            return Err(Error::Geometry("plane axes must be three distinct axes".into()));
        }
        if self.values.len() != self.width * self.height {
            return Err(Error::Validation(format!(
                "plane holds {} values for {} x {}",
                self.values.len(),
                self.width,
                self.height
            )));
        }
        if !(self.spacing_m[0] > 0.0) || !(self.spacing_m[1] > 0.0) {
            return Err(Error::Validation("plane spacing must be positive".into()));
        }
        Ok(())
    }
}

fn in_plane_axes(normal: Axis) -> [Axis; 2] {
    match normal {
        Axis::X => [Axis::Y, Axis::Z],
        Axis::Y => [Axis::X, Axis::Z],
        Axis::Z => [Axis::X, Axis::Y],
    }
}

fn axis_len(grid: &GridSpec, axis: Axis) -> usize {
    match axis {
        Axis::X => grid.nx,
        Axis::Y => grid.ny,
        Axis::Z => grid.nz,
    }
}

/// Periodic Hann window of length `n`.
fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
        .collect()
}

/// Extracts the drive-frequency phasor for every voxel of the selected
/// plane.
///
/// The drive bin is chosen as the strongest plane-summed windowed power
/// within [`BIN_SEARCH_HALFWIDTH`] bins of the nominal `f0` bin; restricting
/// the search keeps a strong interferer elsewhere in the band from hijacking
/// the estimate. The `weak_signal` flag reports when even the chosen bin
/// fails to dominate the off-bin spectrum.
pub fn extract_phasor(series: &MotionSeries, selector: PlaneSelector) -> Result<ComplexPlaneField> {
    series.validate()?;
    let grid = &series.grid;
    let n_normal = axis_len(grid, selector.normal);
    if selector.index >= n_normal {
        return Err(Error::Geometry(format!(
            "plane index {} out of range for {} voxels along {}",
            selector.index,
            n_normal,
            selector.normal.label()
        )));
    }
    let axes = in_plane_axes(selector.normal);
    let width = axis_len(grid, axes[0]);
    let height = axis_len(grid, axes[1]);
    let spacing = [
        grid.spacing_m[axes[0].index()],
        grid.spacing_m[axes[1].index()],
    ];

    let nt = grid.nt;
    let window = hann(nt);
    let w0_sum: f64 = window.iter().sum();
    let fft = FftPlanner::new().plan_fft_forward(nt);

    let voxel_index = |iu: usize, iv: usize| -> usize {
        let mut idx = [0usize; 3];
        idx[axes[0].index()] = iu;
        idx[axes[1].index()] = iv;
        idx[selector.normal.index()] = selector.index;
        grid.spatial_index(idx[0], idx[1], idx[2])
    };

    // Pass 1: plane-summed windowed power spectrum, accumulated in a fixed
    // serial order so bin selection is exactly reproducible.
    let half = nt / 2;
    let mut power = vec![0.0f64; nt];
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for iu in 0..width {
        for iv in 0..height {
            let s = voxel_index(iu, iv);
            let samples = &series.samples[s * nt..(s + 1) * nt];
            for ((b, &v), &w) in buf.iter_mut().zip(samples).zip(&window) {
                *b = Complex64::new(v * w, 0.0);
            }
            fft.process(&mut buf);
            for (p, b) in power.iter_mut().zip(&buf) {
                *p += b.norm_sqr();
            }
        }
    }

    let hint = (grid.f0_hz * grid.dt * nt as f64).round() as i64;
    let lo = (hint - BIN_SEARCH_HALFWIDTH).max(1) as usize;
    let hi = ((hint + BIN_SEARCH_HALFWIDTH) as usize).min(half.saturating_sub(1));
    if lo > hi {
        return Err(Error::Validation(format!(
            "drive frequency bin {hint} leaves no searchable bins in [1, {}]",
            half.saturating_sub(1)
        )));
    }
    let selected = (lo..=hi)
        .max_by(|&a, &b| power[a].partial_cmp(&power[b]).expect("power is finite"))
        .expect("range is non-empty");

    let mut off: Vec<f64> = (1..half).filter(|&b| b != selected).map(|b| power[b]).collect();
    off.sort_by(|a, b| a.partial_cmp(b).expect("power is finite"));
    let median_off = if off.is_empty() {
        0.0
    } else if off.len() % 2 == 1 {
        off[off.len() / 2]
    } else {
        0.5 * (off[off.len() / 2 - 1] + off[off.len() / 2])
    };
    let weak_signal = !(power[selected] > WEAK_POWER_FACTOR * median_off);

    // Pass 2: per-voxel phasor at the selected bin.
    let mut values = vec![Complex64::new(0.0, 0.0); width * height];
    for iu in 0..width {
        for iv in 0..height {
            let s = voxel_index(iu, iv);
            let samples = &series.samples[s * nt..(s + 1) * nt];
            for ((b, &v), &w) in buf.iter_mut().zip(samples).zip(&window) {
                *b = Complex64::new(v * w, 0.0);
            }
            fft.process(&mut buf);
            values[iu * height + iv] = 2.0 * buf[selected].conj() / w0_sum;
        }
    }

    Ok(ComplexPlaneField {
        axes,
        normal: selector.normal,
        sensor_axis: series.sensor_axis,
        width,
        height,
        spacing_m: spacing,
        f0_hz: grid.f0_hz,
        values,
        weak_signal,
    })
}

/// Zero-phase temporal band-pass: each voxel spectrum is multiplied by a
/// real symmetric mask that is 1 inside `[lo_hz, hi_hz]`, rolls off over a
/// cosine edge of one tenth of the band width, and is 0 elsewhere.
pub fn temporal_bandpass(series: &MotionSeries, lo_hz: f64, hi_hz: f64) -> Result<MotionSeries> {
    series.validate()?;
    if !(lo_hz >= 0.0) || !(hi_hz > lo_hz) {
        return Err(Error::Validation(format!(
            "band [{lo_hz}, {hi_hz}] Hz is not an interval"
        )));
    }
    let grid = &series.grid;
    let nt = grid.nt;
    let df = 1.0 / (grid.dt * nt as f64);
    let edge = 0.1 * (hi_hz - lo_hz);
    let gain = |f_abs: f64| -> f64 {
        if f_abs >= lo_hz && f_abs <= hi_hz {
            1.0
        } else if f_abs > lo_hz - edge && f_abs < lo_hz {
            0.5 * (1.0 + (std::f64::consts::PI * (lo_hz - f_abs) / edge).cos())
        } else if f_abs > hi_hz && f_abs < hi_hz + edge {
            0.5 * (1.0 + (std::f64::consts::PI * (f_abs - hi_hz) / edge).cos())
        } else {
            0.0
        }
    };
    let mask: Vec<f64> = (0..nt)
        .map(|b| {
            let f = if b <= nt / 2 { b as f64 * df } else { (nt - b) as f64 * df };
            gain(f)
        })
        .collect();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(nt);
    let ifft = planner.plan_fft_inverse(nt);
    let mut out = series.clone();
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for s in 0..grid.voxel_count() {
        let samples = &mut out.samples[s * nt..(s + 1) * nt];
        for (b, &v) in buf.iter_mut().zip(samples.iter()) {
            *b = Complex64::new(v, 0.0);
        }
        fft.process(&mut buf);
        for (b, &m) in buf.iter_mut().zip(&mask) {
            *b *= m;
        }
        ifft.process(&mut buf);
        for (v, b) in samples.iter_mut().zip(&buf) {
            *v = b.re / nt as f64;
        }
    }
    Ok(out)
}

fn component_median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Componentwise complex median over a `(2 radius + 1)^2` neighborhood,
/// shrunk at the field borders. Radius 0 returns the input unchanged.
pub fn median_filter(field: &ComplexPlaneField, radius: usize) -> ComplexPlaneField {
    if radius == 0 {
        return field.clone();
    }
    let mut out = field.clone();
    let r = radius as isize;
    let (w, h) = (field.width as isize, field.height as isize);
    let mut re = Vec::with_capacity((2 * radius + 1).pow(2));
    let mut im = Vec::with_capacity((2 * radius + 1).pow(2));
    for iu in 0..w {
        for iv in 0..h {
            re.clear();
            im.clear();
            for du in -r..=r {
                for dv in -r..=r {
                    let (u, v) = (iu + du, iv + dv);
                    if u < 0 || u >= w || v < 0 || v >= h {
                        continue;
                    }
                    let z = field.values[(u * h + v) as usize];
                    re.push(z.re);
                    im.push(z.im);
                }
            }
            out.values[(iu * h + iv) as usize] =
                Complex64::new(component_median(&mut re), component_median(&mut im));
        }
    }
    out
}
