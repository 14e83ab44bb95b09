//! Sliding-window speed estimation over phasor planes, map fusion, and
//! region statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autocorr::{angular_integrate, autocorr2d, axial_profiles, window_view};
use crate::error::{Error, Result};
use crate::models::{fit_wavenumber, FitOptions, ModelKind, ProfileBin};
use crate::spectral::{ComplexPlaneField, PlaneKind};
use crate::wavefield::grid::Axis;

/// Which correlation profile a window is reduced to.
///
/// The lag-axis variants read a single axis of the correlation map and fit
/// the matching single-direction curve; `Aia` averages the map over annuli
/// and fits the orientation-averaged curve for the plane kind at hand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Lags along the first in-plane axis perpendicular to the sensor axis.
    SimpleX,
    /// Lags along the second in-plane axis; sensor-perpendicular planes only.
    SimpleY,
    /// Lags along the sensor axis; valid only where that axis is in-plane.
    SimpleAxial,
    /// Angle-averaged lags over the full window.
    Aia,
}

impl Estimator {
    pub fn label(self) -> &'static str {
        match self {
            Estimator::SimpleX => "simple_x",
            Estimator::SimpleY => "simple_y",
            Estimator::SimpleAxial => "simple_axial",
            Estimator::Aia => "aia",
        }
    }
}

/// Sliding-window geometry. Windows are square in physical units and laid
/// on a regular grid of origins; positions that do not fit entirely inside
/// the plane are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_m: f64,
    pub step_m: f64,
    /// Annulus width for the angle-averaged profile; defaults to one pixel
    /// diagonal.
    #[serde(default)]
    pub ring_width_m: Option<f64>,
}

impl WindowConfig {
    fn validate(&self) -> Result<()> {
        if !(self.window_m > 0.0) || !(self.step_m > 0.0) {
            return Err(Error::Validation(
                "window and step sizes must be positive".into(),
            ));
        }
        if let Some(rw) = self.ring_width_m {
            if !(rw > 0.0) {
                return Err(Error::Validation("ring width must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One estimated cell of a speed map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwsCell {
    pub sws_mps: f64,
    pub k_rad_per_m: f64,
    pub rmse: f64,
    pub valid: bool,
}

impl SwsCell {
    fn invalid() -> Self {
        SwsCell {
            sws_mps: f64::NAN,
            k_rad_per_m: f64::NAN,
            rmse: f64::NAN,
            valid: false,
        }
    }
}

/// Speed estimates on the sliding-window grid of one plane.
#[derive(Debug, Clone, PartialEq)]
pub struct SwsMap {
    pub axes: [Axis; 2],
    pub f0_hz: f64,
    /// Window-center coordinates along each in-plane axis, in meters.
    pub centers_u_m: Vec<f64>,
    pub centers_v_m: Vec<f64>,
    /// First-axis-major: `cells[iu * centers_v_m.len() + iv]`.
    pub cells: Vec<SwsCell>,
}

impl SwsMap {
    pub fn nu(&self) -> usize {
        self.centers_u_m.len()
    }

    pub fn nv(&self) -> usize {
        self.centers_v_m.len()
    }

    pub fn cell(&self, iu: usize, iv: usize) -> &SwsCell {
        &self.cells[iu * self.nv() + iv]
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.cells.is_empty() {
            return 0.0;
        }
        self.cells.iter().filter(|c| c.valid).count() as f64 / self.cells.len() as f64
    }
}

/// Pairs an estimator with the model curve it must be fitted against on a
/// given plane, and with the in-plane lag axis it reads (None for
/// angle-averaged profiles). Errors on combinations that have no matching
/// curve.
fn resolve_estimator(
    field: &ComplexPlaneField,
    estimator: Estimator,
) -> Result<(Option<usize>, ModelKind)> {
    let kind = field.plane_kind();
    match (estimator, kind) {
        (Estimator::SimpleX, PlaneKind::PerpSensorAxis) => Ok((Some(0), ModelKind::SimplePerp)),
        (Estimator::SimpleY, PlaneKind::PerpSensorAxis) => Ok((Some(1), ModelKind::SimplePerp)),
        (Estimator::SimpleX, PlaneKind::ContainsSensorAxis) => {
            let sensor = field.sensor_in_plane().expect("contains-plane has sensor in-plane");
            Ok((Some(1 - sensor), ModelKind::SimplePerp))
        }
        (Estimator::SimpleAxial, PlaneKind::ContainsSensorAxis) => {
            let sensor = field.sensor_in_plane().expect("contains-plane has sensor in-plane");
            Ok((Some(sensor), ModelKind::SimpleAxial))
        }
        (Estimator::Aia, PlaneKind::ContainsSensorAxis) => {
            Ok((None, ModelKind::AiaContainsAxis))
        }
        (Estimator::Aia, PlaneKind::PerpSensorAxis) => Ok((None, ModelKind::AiaPerpAxis)),
        (Estimator::SimpleY, PlaneKind::ContainsSensorAxis) => Err(Error::Geometry(
            "second-axis lags on a sensor-containing plane follow the axial curve; \
             use the axial estimator instead"
                .into(),
        )),
        (Estimator::SimpleAxial, PlaneKind::PerpSensorAxis) => Err(Error::Geometry(
            "axial lags need the sensor axis in-plane".into(),
        )),
    }
}

fn window_profile(
    values: &[rustfft::num_complex::Complex64],
    size: [usize; 2],
    spacing: [f64; 2],
    lag_axis: Option<usize>,
    ring_width_m: f64,
) -> Result<Vec<ProfileBin>> {
    let map = autocorr2d(values, size, spacing)?;
    match lag_axis {
        None => angular_integrate(&map, ring_width_m),
        Some(axis) => {
            let (u, v) = axial_profiles(&map);
            Ok(if axis == 0 { u } else { v })
        }
    }
}

/// Estimates a speed map by sliding a square window over the plane.
///
/// Windows are processed independently and written to their own cells, so
/// the result is identical regardless of thread count or schedule. Windows
/// whose content cannot support a fit (all-zero, too few bins) become
/// invalid cells rather than errors; geometry and configuration problems
/// still fail the whole call.
pub fn sws_map(
    field: &ComplexPlaneField,
    estimator: Estimator,
    windows: &WindowConfig,
    fit: &FitOptions,
) -> Result<SwsMap> {
    field.validate()?;
    windows.validate()?;
    let (lag_axis, model) = resolve_estimator(field, estimator)?;
    let ring_width = windows
        .ring_width_m
        .unwrap_or_else(|| field.spacing_m[0].hypot(field.spacing_m[1]));

    let size = [
        (windows.window_m / field.spacing_m[0]).round().max(2.0) as usize,
        (windows.window_m / field.spacing_m[1]).round().max(2.0) as usize,
    ];
    let step = [
        (windows.step_m / field.spacing_m[0]).round().max(1.0) as usize,
        (windows.step_m / field.spacing_m[1]).round().max(1.0) as usize,
    ];
    if size[0] > field.width || size[1] > field.height {
        return Err(Error::Geometry(format!(
            "window {:?} px does not fit the {} x {} plane",
            size, field.width, field.height
        )));
    }
    let origins_u: Vec<usize> = (0..=field.width - size[0]).step_by(step[0]).collect();
    let origins_v: Vec<usize> = (0..=field.height - size[1]).step_by(step[1]).collect();
    let centers = |origins: &[usize], extent: usize, spacing: f64| -> Vec<f64> {
        origins
            .iter()
            .map(|&o| (o as f64 + (extent as f64 - 1.0) / 2.0) * spacing)
            .collect()
    };

    let nv = origins_v.len();
    let mut cells = vec![SwsCell::invalid(); origins_u.len() * nv];
    let estimate_one = |origin: [usize; 2]| -> Result<SwsCell> {
        let win = window_view(field, origin, size)?;
        let profile = window_profile(&win, size, field.spacing_m, lag_axis, ring_width)?;
        let est = fit_wavenumber(&profile, model, fit)?;
        Ok(SwsCell {
            sws_mps: est.sws_mps,
            k_rad_per_m: est.k_rad_per_m,
            rmse: est.rmse,
            valid: est.converged,
        })
    };
    let first_error = std::sync::Mutex::new(None::<Error>);
    cells
        .par_chunks_mut(nv)
        .zip(origins_u.par_iter())
        .for_each(|(row, &ou)| {
            for (cell, &ov) in row.iter_mut().zip(origins_v.iter()) {
                match estimate_one([ou, ov]) {
                    Ok(c) => *cell = c,
                    Err(Error::DegenerateSignal(_)) | Err(Error::FitDomain(_)) => {
                        *cell = SwsCell::invalid();
                    }
                    Err(e) => {
                        let mut slot = first_error.lock().expect("error slot");
                        slot.get_or_insert(e);
                    }
                }
            }
        });
    if let Some(e) = first_error.into_inner().expect("error slot").take() {
        return Err(e);
    }

    Ok(SwsMap {
        axes: field.axes,
        f0_hz: field.f0_hz,
        centers_u_m: centers(&origins_u, size[0], field.spacing_m[0]),
        centers_v_m: centers(&origins_v, size[1], field.spacing_m[1]),
        cells,
    })
}

/// How co-located cells are combined across maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FuseRule {
    Mean,
    Median,
}

/// Cell-wise fusion of maps sharing one window grid. A fused cell uses the
/// valid contributors only and goes invalid when there are none; fused rmse
/// is the mean of the contributing residuals.
pub fn fuse_planes(maps: &[SwsMap], rule: FuseRule) -> Result<SwsMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Validation("nothing to fuse".into()))?;
    for m in &maps[1..] {
        let same = m.nu() == first.nu()
            && m.nv() == first.nv()
            && m.f0_hz == first.f0_hz
            && m.centers_u_m
                .iter()
                .zip(&first.centers_u_m)
                .all(|(a, b)| (a - b).abs() < 1e-9)
            && m.centers_v_m
                .iter()
                .zip(&first.centers_v_m)
                .all(|(a, b)| (a - b).abs() < 1e-9);
        if !same {
            return Err(Error::Validation(
                "maps must share the window grid to be fused".into(),
            ));
        }
    }
    let omega0 = 2.0 * std::f64::consts::PI * first.f0_hz;
    let mut out = first.clone();
    for (i, cell) in out.cells.iter_mut().enumerate() {
        let mut sws: Vec<f64> = Vec::with_capacity(maps.len());
        let mut rmse_sum = 0.0;
        for m in maps {
            let c = &m.cells[i];
            if c.valid {
                sws.push(c.sws_mps);
                rmse_sum += c.rmse;
            }
        }
        if sws.is_empty() {
            *cell = SwsCell::invalid();
            continue;
        }
        let fused = match rule {
            FuseRule::Mean => sws.iter().sum::<f64>() / sws.len() as f64,
            FuseRule::Median => {
                sws.sort_by(|a, b| a.partial_cmp(b).expect("speeds are finite"));
                if sws.len() % 2 == 1 {
                    sws[sws.len() / 2]
                } else {
                    0.5 * (sws[sws.len() / 2 - 1] + sws[sws.len() / 2])
                }
            }
        };
        *cell = SwsCell {
            sws_mps: fused,
            k_rad_per_m: omega0 / fused,
            rmse: rmse_sum / sws.len() as f64,
            valid: true,
        };
    }
    Ok(out)
}

/// Region of interest over window-center coordinates, with an erosion
/// margin pulling the boundary inward (away from whatever the region
/// borders on).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiSpec {
    pub name: String,
    pub shape: RoiShape,
    #[serde(default)]
    pub margin_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum RoiShape {
    Rect { min_m: [f64; 2], max_m: [f64; 2] },
    Disk { center_m: [f64; 2], radius_m: f64 },
    /// Everything outside the disk; eroding moves the hole outward.
    DiskComplement { center_m: [f64; 2], radius_m: f64 },
}

impl RoiSpec {
    pub fn contains(&self, point_m: [f64; 2]) -> bool {
        let m = self.margin_m;
        match &self.shape {
            RoiShape::Rect { min_m, max_m } => {
                point_m[0] >= min_m[0] + m
                    && point_m[0] <= max_m[0] - m
                    && point_m[1] >= min_m[1] + m
                    && point_m[1] <= max_m[1] - m
            }
            RoiShape::Disk { center_m, radius_m } => {
                let d = (point_m[0] - center_m[0]).hypot(point_m[1] - center_m[1]);
                d <= radius_m - m
            }
            RoiShape::DiskComplement { center_m, radius_m } => {
                let d = (point_m[0] - center_m[0]).hypot(point_m[1] - center_m[1]);
                d >= radius_m + m
            }
        }
    }
}

/// Valid speed values whose window centers fall inside the (eroded) region.
pub fn roi_values(map: &SwsMap, roi: &RoiSpec) -> Vec<f64> {
    let mut out = Vec::new();
    for (iu, &u) in map.centers_u_m.iter().enumerate() {
        for (iv, &v) in map.centers_v_m.iter().enumerate() {
            let cell = map.cell(iu, iv);
            if cell.valid && roi.contains([u, v]) {
                out.push(cell.sws_mps);
            }
        }
    }
    out
}

/// Ratio of mean speed map quality to its spread, in decibels:
/// `10 log10(mean / std)` with the sample (n-1) standard deviation.
/// A constant region has no spread and returns the `+inf` sentinel.
pub fn snr_db(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 values for an SNR, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    if !(mean > 0.0) {
        return Err(Error::DegenerateSignal(format!(
            "SNR undefined for non-positive mean {mean}"
        )));
    }
    if std == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (mean / std).log10())
}

/// Summary statistics of one region. `snr_db` can carry the `+inf`
/// sentinel for perfectly constant regions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoiStats {
    pub name: String,
    pub count: usize,
    pub mean_mps: f64,
    pub std_mps: f64,
    pub snr_db: f64,
}

pub fn roi_stats(map: &SwsMap, roi: &RoiSpec) -> Result<RoiStats> {
    let values = roi_values(map, roi);
    if values.len() < 2 {
        return Err(Error::Validation(format!(
            "region '{}' covers {} valid map cells, need at least 2",
            roi.name,
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std =
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
    Ok(RoiStats {
        name: roi.name.clone(),
        count: values.len(),
        mean_mps: mean,
        std_mps: std,
        snr_db: snr_db(&values)?,
    })
}

/// Ratio of two region means with its first-order propagated standard
/// deviation: `r sqrt((sa/a)^2 + (sb/b)^2)`.
pub fn region_ratio(numerator: &RoiStats, denominator: &RoiStats) -> Result<(f64, f64)> {
    if !(denominator.mean_mps > 0.0) {
        return Err(Error::Validation(
            "ratio needs a positive denominator mean".into(),
        ));
    }
    let r = numerator.mean_mps / denominator.mean_mps;
    let rel_a = numerator.std_mps / numerator.mean_mps;
    let rel_b = denominator.std_mps / denominator.mean_mps;
    Ok((r, r * (rel_a * rel_a + rel_b * rel_b).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::model_eval;
    use approx::assert_relative_eq;
    use rustfft::num_complex::Complex64;

    /// Plane holding two crossed unit plane waves: their superposition has
    /// non-trivial structure along both axes but a single wavenumber.
    fn crossed_wave_field(n: usize, spacing: f64, k: f64, kind: PlaneKind) -> ComplexPlaneField {
        let (normal, sensor) = match kind {
            PlaneKind::PerpSensorAxis => (Axis::Z, Axis::Z),
            PlaneKind::ContainsSensorAxis => (Axis::Y, Axis::Z),
        };
        let axes = match normal {
            Axis::Y => [Axis::X, Axis::Z],
            _ => [Axis::X, Axis::Y],
        };
        let values = (0..n * n)
            .map(|i| {
                let (iu, iv) = ((i / n) as f64, (i % n) as f64);
                Complex64::from_polar(1.0, k * iu * spacing)
                    + Complex64::from_polar(0.8, k * iv * spacing + 0.4)
            })
            .collect();
        ComplexPlaneField {
            axes,
            normal,
            sensor_axis: sensor,
            width: n,
            height: n,
            spacing_m: [spacing, spacing],
            f0_hz: 200.0,
            values,
            weak_signal: false,
        }
    }

    #[test]
    fn estimator_plane_compatibility() {
        let perp = crossed_wave_field(16, 1e-3, 1000.0, PlaneKind::PerpSensorAxis);
        let contains = crossed_wave_field(16, 1e-3, 1000.0, PlaneKind::ContainsSensorAxis);
        assert!(resolve_estimator(&perp, Estimator::SimpleX).is_ok());
        assert!(resolve_estimator(&perp, Estimator::SimpleY).is_ok());
        assert!(resolve_estimator(&perp, Estimator::Aia).is_ok());
        assert!(matches!(
            resolve_estimator(&perp, Estimator::SimpleAxial),
            Err(Error::Geometry(_))
        ));
        assert!(resolve_estimator(&contains, Estimator::SimpleX).is_ok());
        assert!(resolve_estimator(&contains, Estimator::SimpleAxial).is_ok());
        assert!(resolve_estimator(&contains, Estimator::Aia).is_ok());
        assert!(matches!(
            resolve_estimator(&contains, Estimator::SimpleY),
            Err(Error::Geometry(_))
        ));
        // On the contains-plane the sensor axis is the second in-plane axis,
        // so the perpendicular lag axis is the first and the axial the second.
        assert_eq!(
            resolve_estimator(&contains, Estimator::SimpleX).unwrap(),
            (Some(0), ModelKind::SimplePerp)
        );
        assert_eq!(
            resolve_estimator(&contains, Estimator::SimpleAxial).unwrap(),
            (Some(1), ModelKind::SimpleAxial)
        );
        assert_eq!(
            resolve_estimator(&contains, Estimator::Aia).unwrap(),
            (None, ModelKind::AiaContainsAxis)
        );
        assert_eq!(
            resolve_estimator(&perp, Estimator::Aia).unwrap(),
            (None, ModelKind::AiaPerpAxis)
        );
    }

    #[test]
    fn map_layout_and_centers() {
        let field = crossed_wave_field(32, 1e-3, 2.0 * std::f64::consts::PI / 8e-3, PlaneKind::PerpSensorAxis);
        let wc = WindowConfig {
            window_m: 12e-3,
            step_m: 4e-3,
            ring_width_m: None,
        };
        let fit = FitOptions::from_sws_range(200.0, 0.3, 10.0);
        let map = sws_map(&field, Estimator::SimpleX, &wc, &fit).unwrap();
        // 32 px plane, 12 px window, 4 px step: origins 0, 4, 8, ..., 20.
        assert_eq!(map.nu(), 6);
        assert_eq!(map.nv(), 6);
        assert_relative_eq!(map.centers_u_m[0], 5.5e-3, epsilon = 1e-12);
        assert_relative_eq!(map.centers_u_m[5], 25.5e-3, epsilon = 1e-12);
        assert_eq!(map.cells.len(), 36);
    }

    #[test]
    fn translation_invariant_field_gives_uniform_map() {
        // A single plane wave: every window sees the same content up to a
        // global phase, so all cells must agree to rounding error. (The
        // absolute speed is biased here: one wave is not an ensemble.)
        let k = 2.0 * std::f64::consts::PI / 8e-3;
        let n = 40;
        let mut field = crossed_wave_field(n, 1e-3, k, PlaneKind::PerpSensorAxis);
        for (i, z) in field.values.iter_mut().enumerate() {
            let iu = (i / n) as f64;
            *z = Complex64::from_polar(1.0, k * iu * 1e-3);
        }
        let wc = WindowConfig {
            window_m: 16e-3,
            step_m: 8e-3,
            ring_width_m: None,
        };
        let fit = FitOptions::from_sws_range(200.0, 0.3, 10.0);
        let map = sws_map(&field, Estimator::SimpleX, &wc, &fit).unwrap();
        let first = map.cell(0, 0);
        assert!(first.sws_mps.is_finite());
        for cell in &map.cells {
            assert_relative_eq!(cell.sws_mps, first.sws_mps, max_relative = 1e-6);
        }
    }

    #[test]
    fn map_is_schedule_independent() {
        let k = 2.0 * std::f64::consts::PI / 8e-3;
        let field = crossed_wave_field(48, 1e-3, k, PlaneKind::PerpSensorAxis);
        // 16 px keeps six usable annuli, the fit minimum.
        let wc = WindowConfig {
            window_m: 16e-3,
            step_m: 4e-3,
            ring_width_m: None,
        };
        let fit = FitOptions::from_sws_range(200.0, 0.3, 10.0);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sws_map(&field, Estimator::Aia, &wc, &fit))
            .unwrap();
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(8)
            .build()
            .unwrap()
            .install(|| sws_map(&field, Estimator::Aia, &wc, &fit))
            .unwrap();
        // NaN-carrying invalid cells would make the equality vacuous.
        assert!(one.cells.iter().all(|c| c.valid));
        assert_eq!(one, many);
    }

    #[test]
    fn halving_the_step_keeps_shared_windows_bitwise() {
        let k = 2.0 * std::f64::consts::PI / 8e-3;
        let field = crossed_wave_field(40, 1e-3, k, PlaneKind::PerpSensorAxis);
        let fit = FitOptions::from_sws_range(200.0, 0.3, 10.0);
        let coarse = sws_map(
            &field,
            Estimator::SimpleX,
            &WindowConfig {
                window_m: 12e-3,
                step_m: 8e-3,
                ring_width_m: None,
            },
            &fit,
        )
        .unwrap();
        let fine = sws_map(
            &field,
            Estimator::SimpleX,
            &WindowConfig {
                window_m: 12e-3,
                step_m: 4e-3,
                ring_width_m: None,
            },
            &fit,
        )
        .unwrap();
        for (iu, &u) in coarse.centers_u_m.iter().enumerate() {
            let ju = fine
                .centers_u_m
                .iter()
                .position(|&x| (x - u).abs() < 1e-12)
                .expect("coarse centers are a subset");
            for (iv, &v) in coarse.centers_v_m.iter().enumerate() {
                let jv = fine
                    .centers_v_m
                    .iter()
                    .position(|&x| (x - v).abs() < 1e-12)
                    .expect("coarse centers are a subset");
                assert_eq!(coarse.cell(iu, iv), fine.cell(ju, jv));
            }
        }
    }

    #[test]
    fn zero_window_cells_go_invalid_not_fatal() {
        let k = 2.0 * std::f64::consts::PI / 8e-3;
        let mut field = crossed_wave_field(40, 1e-3, k, PlaneKind::PerpSensorAxis);
        // Blank a corner larger than one window.
        for iu in 0..18 {
            for iv in 0..18 {
                field.values[iu * 40 + iv] = Complex64::new(0.0, 0.0);
            }
        }
        let wc = WindowConfig {
            window_m: 16e-3,
            step_m: 8e-3,
            ring_width_m: None,
        };
        let fit = FitOptions::from_sws_range(200.0, 0.3, 10.0);
        let map = sws_map(&field, Estimator::SimpleX, &wc, &fit).unwrap();
        assert!(!map.cell(0, 0).valid);
        assert!(map.cell(0, 0).sws_mps.is_nan());
        assert!(map.valid_fraction() > 0.5);
    }

    fn hand_map(speeds: &[f64], nu: usize, nv: usize) -> SwsMap {
        SwsMap {
            axes: [Axis::X, Axis::Y],
            f0_hz: 200.0,
            centers_u_m: (0..nu).map(|i| i as f64 * 1e-3).collect(),
            centers_v_m: (0..nv).map(|i| i as f64 * 1e-3).collect(),
            cells: speeds
                .iter()
                .map(|&s| {
                    if s.is_nan() {
                        SwsCell::invalid()
                    } else {
                        SwsCell {
                            sws_mps: s,
                            k_rad_per_m: 2.0 * std::f64::consts::PI * 200.0 / s,
                            rmse: 0.1,
                            valid: true,
                        }
                    }
                })
                .collect(),
        }
    }

    #[test]
    fn fusion_rules_and_invalid_handling() {
        let a = hand_map(&[1.0, 2.0, f64::NAN, 4.0], 2, 2);
        let b = hand_map(&[3.0, 2.0, f64::NAN, 8.0], 2, 2);
        let c = hand_map(&[5.0, 200.0, f64::NAN, 6.0], 2, 2);
        let mean = fuse_planes(&[a.clone(), b.clone(), c.clone()], FuseRule::Mean).unwrap();
        assert_relative_eq!(mean.cells[0].sws_mps, 3.0, epsilon = 1e-12);
        let median = fuse_planes(&[a.clone(), b.clone(), c.clone()], FuseRule::Median).unwrap();
        assert_relative_eq!(median.cells[1].sws_mps, 2.0, epsilon = 1e-12);
        assert!(!median.cells[2].valid);
        assert_relative_eq!(median.cells[3].sws_mps, 6.0, epsilon = 1e-12);

        // Median shrugs off one wild outlier, the mean does not.
        assert!(mean.cells[1].sws_mps > 60.0);

        let mismatched = hand_map(&[1.0, 2.0], 1, 2);
        assert!(fuse_planes(&[a, mismatched], FuseRule::Mean).is_err());
    }

    #[test]
    fn snr_formula_reference_points() {
        // mean 1.02, sample std 0.04 -> 10 log10(25.5) = 14.065 dB.
        let v = [0.98, 1.02, 1.06];
        assert_relative_eq!(snr_db(&v).unwrap(), 14.0654, epsilon = 1e-3);
        // mean 2.45, sample std 0.11 -> 13.477 dB.
        let v = [2.45 - 0.11, 2.45, 2.45 + 0.11];
        assert_relative_eq!(snr_db(&v).unwrap(), 13.4772, epsilon = 1e-3);
        assert!(snr_db(&[1.0]).is_err());
        // Constant region: no spread, unbounded SNR sentinel.
        assert_eq!(snr_db(&[2.0, 2.0, 2.0]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn roi_erosion_moves_the_right_way() {
        let disk = RoiSpec {
            name: "inclusion".into(),
            shape: RoiShape::Disk {
                center_m: [0.0, 0.0],
                radius_m: 10e-3,
            },
            margin_m: 2e-3,
        };
        assert!(disk.contains([7.9e-3, 0.0]));
        assert!(!disk.contains([8.1e-3, 0.0]));
        let outside = RoiSpec {
            name: "background".into(),
            shape: RoiShape::DiskComplement {
                center_m: [0.0, 0.0],
                radius_m: 10e-3,
            },
            margin_m: 2e-3,
        };
        assert!(!outside.contains([11.9e-3, 0.0]));
        assert!(outside.contains([12.1e-3, 0.0]));
        let rect = RoiSpec {
            name: "band".into(),
            shape: RoiShape::Rect {
                min_m: [0.0, 0.0],
                max_m: [10e-3, 20e-3],
            },
            margin_m: 1e-3,
        };
        assert!(rect.contains([1.1e-3, 10e-3]));
        assert!(!rect.contains([0.9e-3, 10e-3]));
    }

    #[test]
    fn roi_stats_and_ratio_propagation() {
        let map = hand_map(&[2.9, 3.1, 1.0, 1.0], 2, 2);
        let top = RoiSpec {
            name: "top".into(),
            shape: RoiShape::Rect {
                min_m: [-0.5e-3, -0.5e-3],
                max_m: [0.5e-3, 1.5e-3],
            },
            margin_m: 0.0,
        };
        let bottom = RoiSpec {
            name: "bottom".into(),
            shape: RoiShape::Rect {
                min_m: [0.5e-3, -0.5e-3],
                max_m: [1.5e-3, 1.5e-3],
            },
            margin_m: 0.0,
        };
        let ts = roi_stats(&map, &top).unwrap();
        let bs = roi_stats(&map, &bottom).unwrap();
        assert_eq!(ts.count, 2);
        assert_relative_eq!(ts.mean_mps, 3.0, epsilon = 1e-12);
        assert_relative_eq!(bs.mean_mps, 1.0, epsilon = 1e-12);
        let (ratio, sigma) = region_ratio(&ts, &bs).unwrap();
        assert_relative_eq!(ratio, 3.0, epsilon = 1e-12);
        // Only the numerator spreads: sigma = r * (std_a / mean_a).
        assert_relative_eq!(sigma, 3.0 * ts.std_mps / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn aia_profile_matches_its_model_on_synthetic_disk_data() {
        // Sanity hook between the estimator path and the closed-form curve:
        // a window whose correlation is forced to the model's shape fits
        // back the wavenumber it was built from.
        let k = 2.0 * std::f64::consts::PI * 200.0 / 2.5;
        let bins: Vec<ProfileBin> = (0..20)
            .map(|i| {
                let lag = i as f64 * 0.8e-3;
                ProfileBin {
                    lag_m: lag,
                    value: model_eval(ModelKind::AiaPerpAxis, k * lag),
                    weight: (24 - i) as f64,
                }
            })
            .collect();
        let fit = FitOptions::from_sws_range(200.0, 0.3, 10.0);
        let est = fit_wavenumber(&bins, ModelKind::AiaPerpAxis, &fit).unwrap();
        assert!(est.converged);
        assert_relative_eq!(est.sws_mps, 2.5, max_relative = 1e-3);
    }
}
