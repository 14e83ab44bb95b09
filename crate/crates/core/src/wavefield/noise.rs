//! Additive white Gaussian measurement noise at a prescribed SNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::wavefield::grid::MotionSeries;

/// Adds zero-mean white Gaussian noise so that the ratio of mean signal
/// power to noise variance equals `snr_db`. An SNR of `+inf` is the no-noise
/// sentinel and returns the input untouched.
pub fn add_noise(series: &MotionSeries, snr_db: f64, seed: u64) -> Result<MotionSeries> {
    if snr_db == f64::INFINITY {
        return Ok(series.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::Validation(format!(
            "snr_db must be finite or +inf, got {snr_db}"
        )));
    }
    let power = series.power();
    if power == 0.0 {
        return Err(Error::DegenerateSignal(
            "cannot scale noise to an all-zero signal".into(),
        ));
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noisy = series.clone();
    for v in &mut noisy.samples {
        *v += normal.sample(&mut rng);
    }
    Ok(noisy)
}
