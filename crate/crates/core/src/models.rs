//! Closed-form spatial correlation models for reverberant fields and the
//! wavenumber fit against measured radial profiles.
//!
//! All models are expressed as normalized correlation coefficients: the
//! value at zero lag is exactly 1. The shared building blocks are the
//! spherical Bessel term `j0(x) = sin(x)/x` and the ratio `j1(x)/x`, both
//! with small-argument series so the lag-zero limit is exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Threshold below which the series expansions replace the closed forms.
/// The closed form of `j1(x)/x` cancels catastrophically near zero (error
/// ~2e-16/x^2), so the switch sits where both sides agree to ~1e-12.
const SERIES_CUTOFF: f64 = 1e-2;

/// Fewest profile bins the fit accepts.
pub const MIN_FIT_BINS: usize = 6;

/// `sin(x)/x`, continued through the origin.
pub fn j0(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0 - x2 * x2 * x2 / 5040.0
    } else {
        x.sin() / x
    }
}

/// `j1(x)/x = sin(x)/x^3 - cos(x)/x^2`, continued through the origin
/// where it equals 1/3.
pub fn j1_over_x(x: f64) -> f64 {
    if x.abs() < SERIES_CUTOFF {
        let x2 = x * x;
        1.0 / 3.0 - x2 / 30.0 + x2 * x2 / 840.0 - x2 * x2 * x2 / 45360.0
    } else {
        (x.sin() / x - x.cos()) / (x * x)
    }
}

/// Which correlation curve applies to a radial profile.
///
/// The choice encodes how the lag direction relates to the sensor axis:
/// `SimplePerp` is for lags perpendicular to the sensor axis, `SimpleAxial`
/// for lags along it, `General` for a fixed intermediate angle `theta_s`,
/// and the two `Aia` variants for profiles averaged over in-plane lag
/// directions, in planes that contain or are perpendicular to the sensor
/// axis respectively.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    General { theta_s_rad: f64 },
    SimplePerp,
    SimpleAxial,
    AiaContainsAxis,
    AiaPerpAxis,
}

/// Normalized model value at dimensionless lag `x = k * lag`.
pub fn model_eval(kind: ModelKind, x: f64) -> f64 {
    let j0v = j0(x);
    let j1x = j1_over_x(x);
    match kind {
        ModelKind::General { theta_s_rad } => {
            let s2 = theta_s_rad.sin().powi(2);
            let c2 = theta_s_rad.cos().powi(2);
            3.0 * (0.5 * s2 * (j0v - j1x) + c2 * j1x)
        }
        ModelKind::SimplePerp | ModelKind::AiaPerpAxis => 1.5 * (j0v - j1x),
        ModelKind::SimpleAxial => 3.0 * j1x,
        ModelKind::AiaContainsAxis => 0.75 * (j0v + j1x),
    }
}

/// Shear wave speed from wavenumber: `c = 2 pi f0 / k`.
pub fn k_to_sws(k_rad_per_m: f64, f0_hz: f64) -> f64 {
    2.0 * std::f64::consts::PI * f0_hz / k_rad_per_m
}

/// One bin of a radial correlation profile: mean normalized correlation at
/// the given lag, with the contributing pair count as fit weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileBin {
    pub lag_m: f64,
    pub value: f64,
    pub weight: f64,
}

/// Search domain and acceptance thresholds for the wavenumber fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub f0_hz: f64,
    pub k_min: f64,
    pub k_max: f64,
    /// Fits whose weighted residual exceeds this are flagged unconverged.
    pub max_rmse: f64,
}

impl FitOptions {
    /// Builds the k search interval from a speed interval; note the faster
    /// bound maps to the smaller wavenumber.
    pub fn from_sws_range(f0_hz: f64, sws_min_mps: f64, sws_max_mps: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * f0_hz;
        FitOptions {
            f0_hz,
            k_min: w0 / sws_max_mps,
            k_max: w0 / sws_min_mps,
            max_rmse: 0.5,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.f0_hz > 0.0) {
            return Err(Error::Validation("fit f0 must be positive".into()));
        }
        if !(self.k_min > 0.0) || !(self.k_max > self.k_min) {
            return Err(Error::Validation(format!(
                "invalid k interval [{}, {}]",
                self.k_min, self.k_max
            )));
        }
        if !(self.max_rmse > 0.0) {
            return Err(Error::Validation("max_rmse must be positive".into()));
        }
        Ok(())
    }
}

/// Why a fit did or did not converge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitReason {
    Converged,
    AtLowerBound,
    AtUpperBound,
    HighRmse,
    FlatProfile,
}

/// Result of a wavenumber fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KEstimate {
    pub k_rad_per_m: f64,
    pub sws_mps: f64,
    pub rmse: f64,
    pub converged: bool,
    pub reason: FitReason,
}

const COARSE_CANDIDATES: usize = 256;
const GOLDEN_REL_TOL: f64 = 1e-4;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Weighted RMSE of the model at wavenumber `k` against the profile.
fn objective(bins: &[ProfileBin], kind: ModelKind, k: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for b in bins {
        let r = model_eval(kind, k * b.lag_m) - b.value;
        num += b.weight * r * r;
        den += b.weight;
    }
    (num / den).sqrt()
}

/// Golden-section minimum of `f` on `[a, b]` to relative interval tolerance.
fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64, rel_tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > rel_tol * 0.5 * (a + b) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Coarse log-spaced scan plus golden-section refinement. Returns the
/// refined k, its objective value, and whether the scan was degenerate.
fn minimize_k(bins: &[ProfileBin], kind: ModelKind, opts: &FitOptions) -> (f64, f64, bool) {
    let ratio = opts.k_max / opts.k_min;
    let grid: Vec<f64> = (0..COARSE_CANDIDATES)
        .map(|i| opts.k_min * ratio.powf(i as f64 / (COARSE_CANDIDATES - 1) as f64))
        .collect();
    let scores: Vec<f64> = grid.iter().map(|&k| objective(bins, kind, k)).collect();
    let (best, _) = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("objective is finite"))
        .expect("grid is non-empty");
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let flat = (hi - lo) <= 1e-14 * hi.max(1.0);
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(COARSE_CANDIDATES - 1)];
    let k = if a < b {
        golden_min(a, b, |k| objective(bins, kind, k), GOLDEN_REL_TOL)
    } else {
        grid[best]
    };
    (k, objective(bins, kind, k), flat)
}

/// Fits the model wavenumber to a radial profile by count-weighted least
/// squares. A first pass over the full profile picks a provisional k; the
/// final pass repeats the search with lags truncated to one provisional
/// wavelength, which keeps distant low-information lobes from steering the
/// fit. The truncation never drops below [`MIN_FIT_BINS`] bins.
pub fn fit_wavenumber(
    bins: &[ProfileBin],
    kind: ModelKind,
    opts: &FitOptions,
) -> Result<KEstimate> {
    opts.validate()?;
    let mut usable: Vec<ProfileBin> = bins
        .iter()
        .filter(|b| b.weight > 0.0 && b.lag_m >= 0.0 && b.value.is_finite())
        .copied()
        .collect();
    if usable.len() < MIN_FIT_BINS {
        return Err(Error::FitDomain(format!(
            "profile has {} usable bins, need at least {MIN_FIT_BINS}",
            usable.len()
        )));
    }
    usable.sort_by(|a, b| a.lag_m.partial_cmp(&b.lag_m).expect("lags are finite"));
    let span = usable.last().expect("non-empty").lag_m;
    let shortest_half_wavelength = std::f64::consts::PI / opts.k_max;
    if span < shortest_half_wavelength {
        return Err(Error::FitDomain(format!(
            "profile spans {:.3e} m but the search needs at least {:.3e} m",
            span, shortest_half_wavelength
        )));
    }

    let (k1, _, flat1) = minimize_k(&usable, kind, opts);
    let cutoff = (2.0 * std::f64::consts::PI / k1).max(usable[MIN_FIT_BINS - 1].lag_m);
    let trimmed: Vec<ProfileBin> = usable
        .iter()
        .filter(|b| b.lag_m <= cutoff * (1.0 + 1e-12))
        .copied()
        .collect();
    let (k, rmse, flat2) = minimize_k(&trimmed, kind, opts);

    let near = |k: f64, bound: f64| (k / bound - 1.0).abs() < 4.0 * GOLDEN_REL_TOL;
    let reason = if flat1 || flat2 {
        FitReason::FlatProfile
    } else if near(k, opts.k_min) {
        FitReason::AtLowerBound
    } else if near(k, opts.k_max) {
        FitReason::AtUpperBound
    } else if rmse > opts.max_rmse {
        FitReason::HighRmse
    } else {
        FitReason::Converged
    };
    Ok(KEstimate {
        k_rad_per_m: k,
        sws_mps: k_to_sws(k, opts.f0_hz),
        rmse,
        converged: reason == FitReason::Converged,
        reason,
    })
}
