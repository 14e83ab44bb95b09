//! `revsws` — reverberant shear-wave speed estimation from the command line.
//!
//! Four subcommands: `synth` writes a field container, `estimate` turns one
//! into a speed-map CSV, `metrics` measures regions of a map, and `run`
//! drives the whole pipeline from a single config with a deterministic
//! report.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use revsws::io::config::{
    metrics_from_json, EstimationConfig, PlaneConfig, PlaneKindConfig, RunConfig, SynthesisConfig,
};
use revsws::io::map_io::{read_map_csv, write_map, MapFormat};
use revsws::io::runner::{self, round_sig6};
use revsws::io::rvf::{write_field, FieldData, Provenance};
use revsws::io::{fnv1a64_tag, write_atomic};
use revsws::pipeline::{region_ratio, roi_stats, Estimator, RoiSpec};

#[derive(Parser)]
#[command(name = "revsws", version, about = "Shear wave speed estimation in reverberant fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    SimpleX,
    SimpleY,
    SimpleAxial,
    Aia,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::SimpleX => Estimator::SimpleX,
            EstimatorArg::SimpleY => Estimator::SimpleY,
            EstimatorArg::SimpleAxial => Estimator::SimpleAxial,
            EstimatorArg::Aia => Estimator::Aia,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlaneArg {
    ContainsAxis,
    PerpAxis,
}

impl From<PlaneArg> for PlaneKindConfig {
    fn from(p: PlaneArg) -> Self {
        match p {
            PlaneArg::ContainsAxis => PlaneKindConfig::ContainsAxis,
            PlaneArg::PerpAxis => PlaneKindConfig::PerpAxis,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a reverberant field and write it as an `.rvf` container.
    Synth {
        /// Run config with a `synthesis` section.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Output field container.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate a speed map from a field container.
    Estimate {
        /// Input `.rvf` (motion series or phasor plane).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum)]
        estimator: EstimatorArg,
        /// Plane family to cut when the input is a volume.
        #[arg(long, value_enum)]
        plane: Option<PlaneArg>,
        /// Slice index along the plane normal; defaults to the middle.
        #[arg(long)]
        slice: Option<usize>,
        #[arg(long)]
        window_mm: f64,
        /// Defaults to a quarter window.
        #[arg(long)]
        step_mm: Option<f64>,
        /// Output map CSV; a `.pgm` preview with a scale sidecar lands next
        /// to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure regions of a map CSV and write a metrics report.
    Metrics {
        /// Map CSV produced by `estimate` or `run`.
        #[arg(long)]
        map: PathBuf,
        /// JSON with `rois` (and optional `ratio`), same shape as a run
        /// config's `metrics` section.
        #[arg(long)]
        roi: PathBuf,
        /// Output report JSON.
        #[arg(long)]
        report: PathBuf,
    },
    /// Run a full config: source, preprocessing, estimation, metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output report JSON.
        #[arg(long)]
        report: PathBuf,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("REVSWS_THREADS") {
        let n: usize = raw
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .with_context(|| format!("REVSWS_THREADS must be a positive integer, got `{raw}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("thread pool setup")?;
    }
    Ok(())
}

fn cmd_synth(config_path: &PathBuf, seed: Option<u64>, out: &PathBuf) -> anyhow::Result<()> {
    // Only the `synthesis` section is read, so a full run config and a
    // synthesis-only config both work here.
    let bytes = std::fs::read(config_path)
        .with_context(|| format!("cannot read {}", config_path.display()))?;
    let doc: serde_json::Value = serde_json::from_slice(&bytes).context("config is not JSON")?;
    let section = doc
        .get("synthesis")
        .context("config has no `synthesis` section")?;
    let mut synth: SynthesisConfig =
        serde_json::from_value(section.clone()).context("synthesis schema")?;
    if let Some(seed) = seed {
        synth.seed = seed;
    }
    // Hash the effective (seed-merged) section so the override is visible
    // in provenance.
    let hash = fnv1a64_tag(&serde_json::to_vec(&serde_json::json!({ "synthesis": synth }))?);
    let series = runner::synthesize(&synth)?;
    write_field(
        out,
        &FieldData::Motion(series),
        Provenance {
            seed: Some(synth.seed),
            config_hash: Some(hash),
            tool: Some("revsws".into()),
        },
    )?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn cmd_estimate(
    input: &PathBuf,
    estimator: EstimatorArg,
    plane: Option<PlaneArg>,
    slice: Option<usize>,
    window_mm: f64,
    step_mm: Option<f64>,
    out: &PathBuf,
) -> anyhow::Result<()> {
    let entry = EstimationConfig {
        estimator: estimator.into(),
        plane: plane.map(|p| PlaneConfig {
            kind: p.into(),
            index: slice,
        }),
        window_m: window_mm * 1e-3,
        step_m: step_mm.map(|s| s * 1e-3),
        ring_width_m: None,
        sws_range_mps: None,
        max_rmse: None,
    };
    let map = runner::estimate_from_rvf(input, &entry)?;
    write_map(&map, out, MapFormat::Csv)?;
    write_map(&map, &out.with_extension("pgm"), MapFormat::Pgm16)?;
    eprintln!(
        "wrote {} ({} cells, {:.0}% valid)",
        out.display(),
        map.cells.len(),
        100.0 * map.valid_fraction()
    );
    Ok(())
}

fn cmd_metrics(map_path: &PathBuf, roi_path: &PathBuf, report_path: &PathBuf) -> anyhow::Result<()> {
    let map = read_map_csv(map_path)?;
    let metrics = metrics_from_json(
        &std::fs::read(roi_path)
            .with_context(|| format!("cannot read {}", roi_path.display()))?,
    )?;
    if metrics.rois.is_empty() {
        bail!("region file defines no rois");
    }

    #[derive(serde::Serialize)]
    struct MetricsReport {
        map: String,
        rois: Vec<runner::RoiReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        ratio: Option<runner::RatioReport>,
    }

    let mut rois = Vec::new();
    let mut stats_all = Vec::new();
    for roi in &metrics.rois {
        let spec = RoiSpec {
            name: roi.name.clone(),
            shape: roi.shape.clone(),
            // A bare map carries no window size; without an explicit margin
            // the region is used as-is.
            margin_m: roi.margin_m.unwrap_or(0.0),
        };
        let stats = roi_stats(&map, &spec)?;
        rois.push(runner::RoiReport {
            name: stats.name.clone(),
            count: stats.count,
            mean_mps: round_sig6(stats.mean_mps),
            std_mps: round_sig6(stats.std_mps),
            snr_db: stats.snr_db.is_finite().then(|| round_sig6(stats.snr_db)),
            snr_unbounded: stats.snr_db.is_infinite(),
        });
        stats_all.push(stats);
    }
    let ratio = match &metrics.ratio {
        Some([num, den]) => {
            let find = |name: &str| {
                stats_all
                    .iter()
                    .find(|s| s.name == name)
                    .expect("ratio names validated")
            };
            let (value, std) = region_ratio(find(num), find(den))?;
            Some(runner::RatioReport {
                numerator: num.clone(),
                denominator: den.clone(),
                value: round_sig6(value),
                std: round_sig6(std),
            })
        }
        None => None,
    };
    let report = MetricsReport {
        map: map_path.display().to_string(),
        rois,
        ratio,
    };
    let mut bytes = serde_json::to_vec_pretty(&report)?;
    bytes.push(b'\n');
    write_atomic(report_path, &bytes)?;
    eprintln!("wrote {}", report_path.display());
    Ok(())
}

fn cmd_run(config_path: &PathBuf, report_path: &PathBuf) -> anyhow::Result<()> {
    let (config, hash) = RunConfig::load(config_path)?;
    let report = runner::run(&config, &hash)?;
    report.write(report_path)?;
    eprintln!("wrote {}", report_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match &cli.command {
        Command::Synth { config, seed, out } => cmd_synth(config, *seed, out),
        Command::Estimate {
            input,
            estimator,
            plane,
            slice,
            window_mm,
            step_mm,
            out,
        } => cmd_estimate(input, *estimator, *plane, *slice, *window_mm, *step_mm, out),
        Command::Metrics { map, roi, report } => cmd_metrics(map, roi, report),
        Command::Run { config, report } => cmd_run(config, report),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
