//! Run configuration: one JSON document describing where the field comes
//! from (synthesis or a file), how planes are preprocessed, which
//! estimators run, and which regions get measured. Unknown keys are
//! rejected everywhere so typos fail loudly instead of silently using a
//! default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fnv1a64_tag;
use crate::models::FitOptions;
use crate::pipeline::{Estimator, RoiShape};
use crate::wavefield::grid::{Axis, GridSpec};
use crate::wavefield::medium::InclusionShape;
use crate::wavefield::synth::Directionality;

pub const DEFAULT_SWS_RANGE_MPS: [f64; 2] = [0.3, 10.0];
pub const DEFAULT_MAX_RMSE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub synthesis: Option<SynthesisConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub input: Option<InputConfig>,
    #[serde(default)]
    pub preprocessing: PreprocessingConfig,
    pub estimation: Vec<EstimationConfig>,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub grid: GridSpec,
    pub medium: MediumConfig,
    pub q_count: usize,
    #[serde(default = "default_directionality")]
    pub directionality: Directionality,
    pub sensor_axis: Axis,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub noise: Option<NoiseConfig>,
}

fn default_directionality() -> Directionality {
    Directionality::Isotropic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumConfig {
    pub background_sws_mps: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub inclusion: Option<InclusionConfig>,
}

/// Unknown keys here are still rejected: the flattened shape enum denies
/// leftovers itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InclusionConfig {
    pub sws_mps: f64,
    #[serde(flatten)]
    pub shape: InclusionShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PreprocessingConfig {
    /// Zero-phase band edges in Hz; applies to time-series sources only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandpass_hz: Option<[f64; 2]>,
    /// Median-filter radius on extracted phasor planes; 0 disables.
    #[serde(default)]
    pub median_filter_px: usize,
}

/// Which plane family to cut from a volume, relative to the sensor axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneKindConfig {
    ContainsAxis,
    PerpAxis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlaneConfig {
    pub kind: PlaneKindConfig,
    /// Slice index along the plane normal; defaults to the middle slice.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub estimator: Estimator,
    /// Required for volume sources; ignored when the input is already a
    /// single plane.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub plane: Option<PlaneConfig>,
    pub window_m: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub step_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ring_width_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sws_range_mps: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_rmse: Option<f64>,
}

impl EstimationConfig {
    pub fn effective_step_m(&self) -> f64 {
        self.step_m.unwrap_or(self.window_m / 4.0)
    }

    pub fn fit_options(&self, f0_hz: f64) -> FitOptions {
        let [lo, hi] = self.sws_range_mps.unwrap_or(DEFAULT_SWS_RANGE_MPS);
        let mut opts = FitOptions::from_sws_range(f0_hz, lo, hi);
        opts.max_rmse = self.max_rmse.unwrap_or(DEFAULT_MAX_RMSE);
        opts
    }
}

/// Unknown keys here are still rejected: the flattened shape enum denies
/// leftovers itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiConfig {
    pub name: String,
    #[serde(flatten)]
    pub shape: RoiShape,
    /// Erosion margin; when absent the estimator's window size is used, so
    /// no window overlapping the boundary leaks into the statistics.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub margin_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default)]
    pub rois: Vec<RoiConfig>,
    /// Ratio of two named regions' mean speeds: [numerator, denominator].
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ratio: Option<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// The synthesized (noisy) motion series lands here when set.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub field_rvf: Option<PathBuf>,
    /// Per-estimator map CSV/PGM pairs land here when set.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub maps_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let config: RunConfig = serde_json::from_slice(bytes)
            .map_err(|e| Error::Config(format!("config schema: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads and validates a config file; the returned tag hashes the raw
    /// file bytes, so any textual change shows up in provenance.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Ok((Self::from_json(&bytes)?, fnv1a64_tag(&bytes)))
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.synthesis, &self.input) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "config sets both `synthesis` and `input`; pick one source".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "config needs a field source: either `synthesis` or `input`".into(),
                ))
            }
            _ => {}
        }
        if let Some(synth) = &self.synthesis {
            synth.grid.validate()?;
            if !(synth.medium.background_sws_mps > 0.0) {
                return Err(Error::Config("background speed must be positive".into()));
            }
            if let Some(inc) = &synth.medium.inclusion {
                if !(inc.sws_mps > 0.0) {
                    return Err(Error::Config("inclusion speed must be positive".into()));
                }
            }
            if synth.q_count == 0 {
                return Err(Error::Config("q_count must be at least 1".into()));
            }
        }
        if self.estimation.is_empty() {
            return Err(Error::Config(
                "config lists no estimation entries".into(),
            ));
        }
        for (i, e) in self.estimation.iter().enumerate() {
            if !(e.window_m > 0.0) {
                return Err(Error::Config(format!(
                    "estimation[{i}]: window must be positive"
                )));
            }
            if let Some(s) = e.step_m {
                if !(s > 0.0) {
                    return Err(Error::Config(format!(
                        "estimation[{i}]: step must be positive"
                    )));
                }
            }
            if let Some([lo, hi]) = e.sws_range_mps {
                if !(lo > 0.0) || !(hi > lo) {
                    return Err(Error::Config(format!(
                        "estimation[{i}]: speed range [{lo}, {hi}] is not an increasing positive interval"
                    )));
                }
            }
        }
        if let Some([num, den]) = &self.metrics.ratio {
            for name in [num, den] {
                if !self.metrics.rois.iter().any(|r| &r.name == name) {
                    return Err(Error::Config(format!(
                        "ratio references region `{name}` which is not defined under metrics.rois"
                    )));
                }
            }
        }
        let mut names: Vec<&str> = self.metrics.rois.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.metrics.rois.len() {
            return Err(Error::Config("metrics.rois names must be unique".into()));
        }
        Ok(())
    }
}

/// Standalone region file for the `metrics` subcommand; same shape as the
/// `metrics` section of a run config.
pub fn metrics_from_json(bytes: &[u8]) -> Result<MetricsConfig> {
    let m: MetricsConfig = serde_json::from_slice(bytes)
        .map_err(|e| Error::Config(format!("metrics schema: {e}")))?;
    if let Some([num, den]) = &m.ratio {
        for name in [num, den] {
            if !m.rois.iter().any(|r| &r.name == name) {
                return Err(Error::Config(format!(
                    "ratio references region `{name}` which is not defined"
                )));
            }
        }
    }
    Ok(m)
}
