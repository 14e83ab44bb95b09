//! One-shot orchestration: source a field (synthesize or read), extract the
//! plane each estimator wants, run the window pipeline, and measure regions.
//!
//! The produced report is byte-deterministic for a fixed config and seed:
//! fields serialize in declaration order and every float is rounded to six
//! significant digits first. Stage wall-clock goes to stderr, never into the
//! report.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::error::Error;
use crate::io::config::{EstimationConfig, PlaneKindConfig, RunConfig, SynthesisConfig};
use crate::io::map_io::{write_map, MapFormat};
use crate::io::rvf::{read_field, write_field, FieldData, Provenance};
use crate::io::write_atomic;
use crate::pipeline::{region_ratio, roi_stats, sws_map, RoiSpec, SwsMap, WindowConfig};
use crate::spectral::{
    extract_phasor, median_filter, temporal_bandpass, ComplexPlaneField, PlaneKind,
    PlaneSelector,
};
use crate::wavefield::grid::{Axis, MotionSeries};
use crate::wavefield::medium::{make_two_region_medium, MediumMap};
use crate::wavefield::noise::add_noise;
use crate::wavefield::synth::synth_reverberant;

/// A failure tied to the pipeline stage it happened in.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn at(stage: &'static str) -> impl Fn(Error) -> StageError {
    move |error| StageError { stage, error }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Report {
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub stages: Vec<String>,
    pub estimates: Vec<EstimateReport>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EstimateReport {
    pub estimator: String,
    /// In-plane axes, e.g. "xz".
    pub plane_axes: String,
    pub plane_kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slice_index: Option<usize>,
    pub window_m: f64,
    pub step_m: f64,
    pub cells: usize,
    pub valid_fraction: f64,
    pub weak_signal: bool,
    pub rois: Vec<RoiReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<RatioReport>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RoiReport {
    pub name: String,
    pub count: usize,
    pub mean_mps: f64,
    pub std_mps: f64,
    /// Absent when the region is perfectly uniform; `snr_unbounded` is set
    /// instead, since JSON has no +inf.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub snr_unbounded: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct RatioReport {
    pub numerator: String,
    pub denominator: String,
    pub value: f64,
    pub std: f64,
}

/// Round to six significant digits; used on every float that enters the
/// report so runs serialize byte-identically.
pub fn round_sig6(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let exp = v.abs().log10().floor() as i32;
    let factor = 10f64.powi(5 - exp);
    (v * factor).round() / factor
}

enum Source {
    Volume(MotionSeries),
    Plane(ComplexPlaneField),
}

fn plane_kind_name(kind: PlaneKind) -> &'static str {
    match kind {
        PlaneKind::ContainsSensorAxis => "contains_axis",
        PlaneKind::PerpSensorAxis => "perp_axis",
    }
}

/// Maps a configured plane family onto a concrete slice of the volume.
/// Sensor-containing planes prefer a singleton transverse axis (the volume
/// is already a single slab), falling back to the last non-sensor axis so
/// an xz-style cut wins for a z sensor.
fn resolve_plane(
    series: &MotionSeries,
    entry_index: usize,
    plane: Option<&crate::io::config::PlaneConfig>,
) -> Result<PlaneSelector, Error> {
    let plane = plane.ok_or_else(|| {
        Error::Config(format!(
            "estimation[{entry_index}] needs a `plane` to cut from a volume source"
        ))
    })?;
    let dims = [series.grid.nx, series.grid.ny, series.grid.nz];
    let normal = match plane.kind {
        PlaneKindConfig::PerpAxis => series.sensor_axis,
        PlaneKindConfig::ContainsAxis => {
            let transverse: Vec<Axis> = [Axis::X, Axis::Y, Axis::Z]
                .into_iter()
                .filter(|a| *a != series.sensor_axis)
                .collect();
            transverse
                .iter()
                .copied()
                .find(|a| dims[a.index()] == 1)
                .unwrap_or(*transverse.last().expect("two transverse axes"))
        }
    };
    let len = dims[normal.index()];
    let index = plane.index.unwrap_or(len / 2);
    if index >= len {
        return Err(Error::Config(format!(
            "estimation[{entry_index}]: slice {index} is outside the {len}-deep {} axis",
            normal.label()
        )));
    }
    Ok(PlaneSelector { normal, index })
}

/// The synthesis stage alone: medium, ensemble field, optional sensor
/// noise.
pub fn synthesize(synth: &SynthesisConfig) -> crate::Result<MotionSeries> {
    let medium = match &synth.medium.inclusion {
        None => MediumMap::homogeneous(synth.grid.clone(), synth.medium.background_sws_mps),
        Some(inc) => make_two_region_medium(
            &synth.grid,
            synth.medium.background_sws_mps,
            inc.sws_mps,
            inc.shape.clone(),
        ),
    }?;
    let series = synth_reverberant(
        &synth.grid,
        &medium,
        synth.q_count,
        &synth.directionality,
        synth.sensor_axis,
        synth.seed,
    )?;
    match &synth.noise {
        Some(noise) => add_noise(&series, noise.snr_db, noise.seed),
        None => Ok(series),
    }
}

/// One estimator pass over a stored field; volumes are cut per `entry.plane`
/// and plane inputs are used as-is.
pub fn estimate_from_rvf(path: &Path, entry: &EstimationConfig) -> crate::Result<SwsMap> {
    let (data, _header) = read_field(path)?;
    let field = match data {
        FieldData::Motion(series) => {
            let selector = resolve_plane(&series, 0, entry.plane.as_ref())?;
            extract_phasor(&series, selector)?
        }
        FieldData::Phasor(field) => field,
    };
    let windows = WindowConfig {
        window_m: entry.window_m,
        step_m: entry.effective_step_m(),
        ring_width_m: entry.ring_width_m,
    };
    let fit = entry.fit_options(field.f0_hz);
    sws_map(&field, entry.estimator, &windows, &fit)
}

pub fn run(config: &RunConfig, config_hash: &str) -> Result<Report, StageError> {
    config.validate().map_err(at("config"))?;
    let mut stages: Vec<String> = Vec::new();
    let mut seed = None;

    let source = if let Some(synth) = &config.synthesis {
        let t = Instant::now();
        seed = Some(synth.seed);
        let series = synthesize(synth).map_err(at("synthesis"))?;
        if let Some(path) = &config.outputs.field_rvf {
            write_field(
                path,
                &FieldData::Motion(series.clone()),
                Provenance {
                    seed: Some(synth.seed),
                    config_hash: Some(config_hash.to_owned()),
                    tool: Some(env!("CARGO_PKG_NAME").into()),
                },
            )
            .map_err(at("synthesis"))?;
        }
        stages.push("synthesis".into());
        eprintln!("timing synthesis: {:.3} s", t.elapsed().as_secs_f64());
        Source::Volume(series)
    } else {
        let t = Instant::now();
        let input = config.input.as_ref().expect("validated source");
        let (data, _header) = read_field(&input.path).map_err(at("input"))?;
        stages.push("input".into());
        eprintln!("timing input: {:.3} s", t.elapsed().as_secs_f64());
        match data {
            FieldData::Motion(series) => Source::Volume(series),
            FieldData::Phasor(field) => Source::Plane(field),
        }
    };

    let pre = &config.preprocessing;
    let source = if let Some([lo, hi]) = pre.bandpass_hz {
        let t = Instant::now();
        let filtered = match &source {
            Source::Volume(series) => {
                temporal_bandpass(series, lo, hi).map_err(at("preprocessing"))?
            }
            Source::Plane(_) => {
                return Err(at("preprocessing")(Error::Config(
                    "bandpass needs a time-series source, the input is already a phasor plane"
                        .into(),
                )))
            }
        };
        eprintln!("timing preprocessing: {:.3} s", t.elapsed().as_secs_f64());
        Source::Volume(filtered)
    } else {
        source
    };
    if pre.bandpass_hz.is_some() || pre.median_filter_px > 0 {
        stages.push("preprocessing".into());
    }

    let t_est = Instant::now();
    let mut estimates = Vec::with_capacity(config.estimation.len());
    let mut maps = Vec::with_capacity(config.estimation.len());
    for (i, entry) in config.estimation.iter().enumerate() {
        let (field, slice_index) = match &source {
            Source::Volume(series) => {
                let selector =
                    resolve_plane(series, i, entry.plane.as_ref()).map_err(at("estimation"))?;
                let field = extract_phasor(series, selector).map_err(at("estimation"))?;
                (field, Some(selector.index))
            }
            Source::Plane(field) => {
                if let Some(plane) = &entry.plane {
                    let want = match plane.kind {
                        PlaneKindConfig::ContainsAxis => PlaneKind::ContainsSensorAxis,
                        PlaneKindConfig::PerpAxis => PlaneKind::PerpSensorAxis,
                    };
                    if want != field.plane_kind() {
                        return Err(at("estimation")(Error::Config(format!(
                            "estimation[{i}] asks for a {} plane but the input plane is {}",
                            plane_kind_name(want),
                            plane_kind_name(field.plane_kind()),
                        ))));
                    }
                }
                (field.clone(), None)
            }
        };
        let field = if pre.median_filter_px > 0 {
            median_filter(&field, pre.median_filter_px)
        } else {
            field
        };

        let windows = WindowConfig {
            window_m: entry.window_m,
            step_m: entry.effective_step_m(),
            ring_width_m: entry.ring_width_m,
        };
        let fit = entry.fit_options(field.f0_hz);
        let map = sws_map(&field, entry.estimator, &windows, &fit).map_err(at("estimation"))?;

        if let Some(dir) = &config.outputs.maps_dir {
            std::fs::create_dir_all(dir)
                .map_err(|e| at("estimation")(Error::Io(e)))?;
            let stem = format!("map_{i:02}_{}", entry.estimator.label());
            write_map(&map, &dir.join(format!("{stem}.csv")), MapFormat::Csv)
                .map_err(at("estimation"))?;
            write_map(&map, &dir.join(format!("{stem}.pgm")), MapFormat::Pgm16)
                .map_err(at("estimation"))?;
        }

        estimates.push(EstimateReport {
            estimator: entry.estimator.label().into(),
            plane_axes: format!("{}{}", field.axes[0].label(), field.axes[1].label()),
            plane_kind: plane_kind_name(field.plane_kind()).into(),
            slice_index,
            window_m: round_sig6(entry.window_m),
            step_m: round_sig6(entry.effective_step_m()),
            cells: map.cells.len(),
            valid_fraction: round_sig6(map.valid_fraction()),
            weak_signal: field.weak_signal,
            rois: Vec::new(),
            ratio: None,
        });
        maps.push(map);
    }
    stages.push("estimation".into());
    eprintln!("timing estimation: {:.3} s", t_est.elapsed().as_secs_f64());

    if !config.metrics.rois.is_empty() {
        let t = Instant::now();
        for ((entry, map), est) in config.estimation.iter().zip(&maps).zip(&mut estimates) {
            let mut stats_by_name = Vec::new();
            for roi in &config.metrics.rois {
                let spec = RoiSpec {
                    name: roi.name.clone(),
                    shape: roi.shape.clone(),
                    margin_m: roi.margin_m.unwrap_or(entry.window_m),
                };
                let stats = roi_stats(map, &spec).map_err(at("metrics"))?;
                est.rois.push(RoiReport {
                    name: stats.name.clone(),
                    count: stats.count,
                    mean_mps: round_sig6(stats.mean_mps),
                    std_mps: round_sig6(stats.std_mps),
                    snr_db: stats.snr_db.is_finite().then(|| round_sig6(stats.snr_db)),
                    snr_unbounded: stats.snr_db.is_infinite(),
                });
                stats_by_name.push(stats);
            }
            if let Some([num, den]) = &config.metrics.ratio {
                let lookup = |name: &str| {
                    stats_by_name
                        .iter()
                        .find(|s| s.name == name)
                        .expect("ratio names validated against rois")
                };
                let (value, std) =
                    region_ratio(lookup(num), lookup(den)).map_err(at("metrics"))?;
                est.ratio = Some(RatioReport {
                    numerator: num.clone(),
                    denominator: den.clone(),
                    value: round_sig6(value),
                    std: round_sig6(std),
                });
            }
        }
        stages.push("metrics".into());
        eprintln!("timing metrics: {:.3} s", t.elapsed().as_secs_f64());
    }

    Ok(Report {
        config_hash: config_hash.to_owned(),
        seed,
        stages,
        estimates,
    })
}

impl Report {
    pub fn to_json_bytes(&self) -> crate::Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn write(&self, path: &Path) -> crate::Result<()> {
        write_atomic(path, &self.to_json_bytes()?)
    }
}
