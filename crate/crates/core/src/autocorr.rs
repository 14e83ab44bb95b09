//! Windowed 2D autocorrelation of complex phasor fields and its reduction
//! to radial and axial lag profiles.
//!
//! Correlation maps are estimated without bias: each lag is divided by its
//! own pair count, so a pure plane wave gives exactly unit magnitude at
//! every lag. Maps are explicitly symmetrized and normalized to 1 at zero
//! lag; downstream fits consume the pair counts as weights.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::models::ProfileBin;
use crate::spectral::ComplexPlaneField;

/// Unbiased, symmetrized, unit-normalized autocorrelation over a
/// rectangular window. Lags run over `(-(w-1)..=w-1) x (-(h-1)..=h-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AutocorrMap {
    /// Window extent in pixels along the two in-plane axes.
    pub window: [usize; 2],
    pub spacing_m: [f64; 2],
    /// Lag-major layout: `values[(du + w - 1) * (2h - 1) + (dv + h - 1)]`.
    pub values: Vec<f64>,
}

impl AutocorrMap {
    pub fn lag_dims(&self) -> [usize; 2] {
        [2 * self.window[0] - 1, 2 * self.window[1] - 1]
    }

    pub fn at(&self, du: isize, dv: isize) -> f64 {
        let w = self.window[0] as isize;
        let h = self.window[1] as isize;
        debug_assert!(du.abs() < w && dv.abs() < h);
        self.values[((du + w - 1) * (2 * h - 1) + (dv + h - 1)) as usize]
    }

    /// Number of pixel pairs contributing to a lag.
    pub fn pair_count(&self, du: isize, dv: isize) -> f64 {
        let w = self.window[0] as isize;
        let h = self.window[1] as isize;
        ((w - du.abs()) * (h - dv.abs())) as f64
    }

    /// Physical radius of a lag pixel.
    pub fn lag_radius_m(&self, du: isize, dv: isize) -> f64 {
        (du as f64 * self.spacing_m[0]).hypot(dv as f64 * self.spacing_m[1])
    }
}

/// Copies a rectangular window out of a plane field, first-axis major.
pub fn window_view(
    field: &ComplexPlaneField,
    origin: [usize; 2],
    size: [usize; 2],
) -> Result<Vec<Complex64>> {
    field.validate()?;
    if origin[0] + size[0] > field.width || origin[1] + size[1] > field.height {
        return Err(Error::Geometry(format!(
            "window {:?}+{:?} exceeds plane {} x {}",
            origin, size, field.width, field.height
        )));
    }
    let mut out = Vec::with_capacity(size[0] * size[1]);
    for iu in origin[0]..origin[0] + size[0] {
        for iv in origin[1]..origin[1] + size[1] {
            out.push(field.at(iu, iv));
        }
    }
    Ok(out)
}

fn fft2_in_place(buf: &mut [Complex64], n1: usize, n2: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft_rows = if inverse {
        planner.plan_fft_inverse(n2)
    } else {
        planner.plan_fft_forward(n2)
    };
    for row in buf.chunks_exact_mut(n2) {
        fft_rows.process(row);
    }
    let fft_cols = if inverse {
        planner.plan_fft_inverse(n1)
    } else {
        planner.plan_fft_forward(n1)
    };
    let mut col = vec![Complex64::new(0.0, 0.0); n1];
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            col[i1] = buf[i1 * n2 + i2];
        }
        fft_cols.process(&mut col);
        for i1 in 0..n1 {
            buf[i1 * n2 + i2] = col[i1];
        }
    }
}

/// Computes the unbiased symmetrized autocorrelation of a complex window.
///
/// `values` is the window content, first-axis major with extent `size`.
/// The estimate runs through zero-padded FFTs (padded to twice the window,
/// which covers all linear lags), is divided per lag by the pair count,
/// reduced to its real part, symmetrized so `B(-d) == B(d)` holds exactly,
/// and scaled to unit zero lag.
pub fn autocorr2d(
    values: &[Complex64],
    size: [usize; 2],
    spacing_m: [f64; 2],
) -> Result<AutocorrMap> {
    let (w, h) = (size[0], size[1]);
    if w == 0 || h == 0 {
        return Err(Error::Validation("window has a zero extent".into()));
    }
    if values.len() != w * h {
        return Err(Error::Validation(format!(
            "window holds {} values for {w} x {h}",
            values.len()
        )));
    }
    if !(spacing_m[0] > 0.0) || !(spacing_m[1] > 0.0) {
        return Err(Error::Validation("window spacing must be positive".into()));
    }
    if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Validation("window contains non-finite samples".into()));
    }
    let energy: f64 = values.iter().map(|z| z.norm_sqr()).sum();
    if energy == 0.0 {
        return Err(Error::DegenerateSignal(
            "autocorrelation of an all-zero window".into(),
        ));
    }

    let (p1, p2) = (2 * w, 2 * h);
    let mut buf = vec![Complex64::new(0.0, 0.0); p1 * p2];
    for iu in 0..w {
        for iv in 0..h {
            buf[iu * p2 + iv] = values[iu * h + iv];
        }
    }
    fft2_in_place(&mut buf, p1, p2, false);
    for z in &mut buf {
        *z = Complex64::new(z.norm_sqr(), 0.0);
    }
    fft2_in_place(&mut buf, p1, p2, true);
    let scale = 1.0 / (p1 * p2) as f64;

    let (wl, hl) = (2 * w - 1, 2 * h - 1);
    let mut map = AutocorrMap {
        window: size,
        spacing_m,
        values: vec![0.0; wl * hl],
    };
    // Upper half including the zero row: symmetrize on the fly by averaging
    // each lag with its point reflection and writing both.
    for du in 0..=(w as isize - 1) {
        for dv in -(h as isize - 1)..=(h as isize - 1) {
            if du == 0 && dv < 0 {
                continue;
            }
            let wrap = |d: isize, p: usize| -> usize {
                ((d % p as isize + p as isize) % p as isize) as usize
            };
            let pos = buf[wrap(du, p1) * p2 + wrap(dv, p2)].re * scale;
            let neg = buf[wrap(-du, p1) * p2 + wrap(-dv, p2)].re * scale;
            let unbiased = 0.5 * (pos + neg) / map.pair_count(du, dv);
            let fwd = ((du + w as isize - 1) * hl as isize + (dv + h as isize - 1)) as usize;
            let bwd = ((-du + w as isize - 1) * hl as isize + (-dv + h as isize - 1)) as usize;
            map.values[fwd] = unbiased;
            map.values[bwd] = unbiased;
        }
    }
    let zero = map.at(0, 0);
    for v in &mut map.values {
        *v /= zero;
    }
    Ok(map)
}

/// Reduces a correlation map to a radial profile by averaging over annuli
/// of the given width. Each bin reports the arithmetic mean value over the
/// annulus's lag samples, the mean sample radius (not the ring center), and
/// the sample count as fit weight. Annuli past the usable radius — half the
/// window extent, where the lag coverage turns too anisotropic for a ring
/// mean to stand in for the angular integral — are dropped, as are empty
/// annuli.
pub fn angular_integrate(map: &AutocorrMap, ring_width_m: f64) -> Result<Vec<ProfileBin>> {
    let min_spacing = map.spacing_m[0].min(map.spacing_m[1]);
    if !(ring_width_m > 0.0) {
        return Err(Error::Validation("ring width must be positive".into()));
    }
    if ring_width_m < min_spacing {
        return Err(Error::Validation(format!(
            "ring width {ring_width_m} m is finer than the pixel spacing {min_spacing} m"
        )));
    }
    let (w, h) = (map.window[0] as isize, map.window[1] as isize);
    let usable_m = 0.5
        * (map.window[0] as f64 * map.spacing_m[0])
            .min(map.window[1] as f64 * map.spacing_m[1]);
    let n_rings = (usable_m / ring_width_m).ceil() as usize;
    let mut value_sum = vec![0.0; n_rings];
    let mut radius_sum = vec![0.0; n_rings];
    let mut count = vec![0usize; n_rings];
    for du in -(w - 1)..=(w - 1) {
        for dv in -(h - 1)..=(h - 1) {
            let r = map.lag_radius_m(du, dv);
            let ring = (r / ring_width_m).floor() as usize;
            if ring >= n_rings {
                continue;
            }
            value_sum[ring] += map.at(du, dv);
            radius_sum[ring] += r;
            count[ring] += 1;
        }
    }
    Ok((0..n_rings)
        .filter(|&m| count[m] > 0)
        .map(|m| ProfileBin {
            lag_m: radius_sum[m] / count[m] as f64,
            value: value_sum[m] / count[m] as f64,
            weight: count[m] as f64,
        })
        .collect())
}

/// Profiles along the two lag axes, non-negative lags only. Values come
/// from the symmetrized map, so each positive bin stands for a lag and its
/// mirror; weights count those samples (1 at zero lag, 2 beyond).
pub fn axial_profiles(map: &AutocorrMap) -> (Vec<ProfileBin>, Vec<ProfileBin>) {
    let (w, h) = (map.window[0] as isize, map.window[1] as isize);
    let u = (0..w)
        .map(|du| ProfileBin {
            lag_m: du as f64 * map.spacing_m[0],
            value: map.at(du, 0),
            weight: if du == 0 { 1.0 } else { 2.0 },
        })
        .collect();
    let v = (0..h)
        .map(|dv| ProfileBin {
            lag_m: dv as f64 * map.spacing_m[1],
            value: map.at(0, dv),
            weight: if dv == 0 { 1.0 } else { 2.0 },
        })
        .collect();
    (u, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::j0;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(n^2) reference implementation.
    fn brute_force(values: &[Complex64], size: [usize; 2], spacing: [f64; 2]) -> AutocorrMap {
        let (w, h) = (size[0] as isize, size[1] as isize);
        let at = |iu: isize, iv: isize| values[(iu * h + iv) as usize];
        let (wl, hl) = ((2 * w - 1) as usize, (2 * h - 1) as usize);
        let mut raw = vec![0.0; wl * hl];
        for du in -(w - 1)..=(w - 1) {
            for dv in -(h - 1)..=(h - 1) {
                let mut acc = Complex64::new(0.0, 0.0);
                let mut count = 0.0;
                for iu in 0..w {
                    for iv in 0..h {
                        let (ju, jv) = (iu + du, iv + dv);
                        if ju < 0 || ju >= w || jv < 0 || jv >= h {
                            continue;
                        }
                        acc += at(ju, jv) * at(iu, iv).conj();
                        count += 1.0;
                    }
                }
                raw[((du + w - 1) * hl as isize + (dv + h - 1)) as usize] = acc.re / count;
            }
        }
        // Symmetrize and normalize exactly like the FFT path.
        let mut map = AutocorrMap {
            window: size,
            spacing_m: spacing,
            values: vec![0.0; wl * hl],
        };
        for du in -(w - 1)..=(w - 1) {
            for dv in -(h - 1)..=(h - 1) {
                let fwd = ((du + w - 1) * hl as isize + (dv + h - 1)) as usize;
                let bwd = ((-du + w - 1) * hl as isize + (-dv + h - 1)) as usize;
                map.values[fwd] = 0.5 * (raw[fwd] + raw[bwd]);
            }
        }
        let zero = map.at(0, 0);
        for v in &mut map.values {
            *v /= zero;
        }
        map
    }

    fn random_window(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Vec<Complex64> {
        (0..w * h)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn fft_path_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        for _ in 0..50 {
            let w = rng.gen_range(8..=16);
            let h = rng.gen_range(8..=16);
            let values = random_window(&mut rng, w, h);
            let fast = autocorr2d(&values, [w, h], [1e-3, 1e-3]).unwrap();
            let slow = brute_force(&values, [w, h], [1e-3, 1e-3]);
            for (a, b) in fast.values.iter().zip(slow.values.iter()) {
                assert!((a - b).abs() < 1e-10, "fft {a} vs direct {b}");
            }
        }
    }

    #[test]
    fn map_is_exactly_point_symmetric_with_unit_zero_lag() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let values = random_window(&mut rng, 13, 9);
        let map = autocorr2d(&values, [13, 9], [1e-3, 2e-3]).unwrap();
        assert_eq!(map.at(0, 0), 1.0);
        for du in -12..=12isize {
            for dv in -8..=8isize {
                // Bitwise equality: symmetrization writes the same f64.
                assert_eq!(map.at(du, dv), map.at(-du, -dv));
            }
        }
    }

    #[test]
    fn plane_wave_window_gives_cosine_correlation() {
        let (w, h) = (16, 12);
        let k = 2.0 * std::f64::consts::PI / (8.0e-3); // wavelength 8 px at 1 mm
        let values: Vec<Complex64> = (0..w * h)
            .map(|i| {
                let iu = (i / h) as f64;
                Complex64::from_polar(1.0, k * iu * 1e-3)
            })
            .collect();
        let map = autocorr2d(&values, [w, h], [1e-3, 1e-3]).unwrap();
        for du in -(w as isize - 1)..=(w as isize - 1) {
            for dv in -(h as isize - 1)..=(h as isize - 1) {
                let expected = (k * du as f64 * 1e-3).cos();
                assert_relative_eq!(map.at(du, dv), expected, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn rotated_window_rotates_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 11;
        let values = random_window(&mut rng, n, n);
        // Quarter-turn: (iu, iv) -> (iv, n-1-iu).
        let mut rotated = vec![Complex64::new(0.0, 0.0); n * n];
        for iu in 0..n {
            for iv in 0..n {
                rotated[iv * n + (n - 1 - iu)] = values[iu * n + iv];
            }
        }
        let a = autocorr2d(&values, [n, n], [1e-3, 1e-3]).unwrap();
        let b = autocorr2d(&rotated, [n, n], [1e-3, 1e-3]).unwrap();
        for du in -(n as isize - 1)..=(n as isize - 1) {
            for dv in -(n as isize - 1)..=(n as isize - 1) {
                assert_relative_eq!(b.at(dv, -du), a.at(du, dv), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn all_zero_window_is_degenerate() {
        let values = vec![Complex64::new(0.0, 0.0); 64];
        let err = autocorr2d(&values, [8, 8], [1e-3, 1e-3]).unwrap_err();
        assert!(matches!(err, Error::DegenerateSignal(_)));
    }

    fn synthetic_map(n: usize, spacing: f64, f: impl Fn(f64) -> f64) -> AutocorrMap {
        let mut map = AutocorrMap {
            window: [n, n],
            spacing_m: [spacing, spacing],
            values: vec![0.0; (2 * n - 1) * (2 * n - 1)],
        };
        for du in -(n as isize - 1)..=(n as isize - 1) {
            for dv in -(n as isize - 1)..=(n as isize - 1) {
                let idx = ((du + n as isize - 1) * (2 * n as isize - 1) + (dv + n as isize - 1))
                    as usize;
                map.values[idx] = f(map.lag_radius_m(du, dv));
            }
        }
        map
    }

    #[test]
    fn ring_reduction_reports_mean_radius_and_counts() {
        let map = synthetic_map(10, 1e-3, |_| 1.0);
        let bins = angular_integrate(&map, 1e-3).unwrap();
        // Usable radius is half the 10 mm window extent.
        assert_eq!(bins.len(), 5);
        let n = 10isize;
        for bin in &bins {
            let ring = (bin.lag_m / 1e-3).floor() as usize;
            let mut radius_sum = 0.0;
            let mut count = 0usize;
            for du in -(n - 1)..=(n - 1) {
                for dv in -(n - 1)..=(n - 1) {
                    let r = map.lag_radius_m(du, dv);
                    if (r / 1e-3).floor() as usize == ring {
                        radius_sum += r;
                        count += 1;
                    }
                }
            }
            assert_relative_eq!(bin.lag_m, radius_sum / count as f64, epsilon = 1e-12);
            assert_relative_eq!(bin.value, 1.0, epsilon = 1e-12);
            assert_relative_eq!(bin.weight, count as f64, epsilon = 1e-12);
        }
    }

    #[test]
    fn ring_reduction_tracks_isotropic_function() {
        // Long wavelength keeps the within-ring curvature error small, so
        // the bin mean evaluated at the reported mean radius stays close.
        let k = 2.0 * std::f64::consts::PI / 32.0e-3;
        let map = synthetic_map(16, 1e-3, |r| j0(k * r));
        let bins = angular_integrate(&map, 1e-3).unwrap();
        assert_eq!(bins.len(), 8);
        for bin in &bins {
            assert!(
                (bin.value - j0(k * bin.lag_m)).abs() < 5e-3,
                "ring at {:.4} m: {} vs {}",
                bin.lag_m,
                bin.value,
                j0(k * bin.lag_m)
            );
        }
    }

    #[test]
    fn too_fine_rings_are_rejected() {
        let map = synthetic_map(8, 1e-3, |_| 1.0);
        let err = angular_integrate(&map, 0.4e-3).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn axial_profiles_read_the_map_axes() {
        let (w, h) = (12, 10);
        let k = 2.0 * std::f64::consts::PI / (8.0e-3);
        let values: Vec<Complex64> = (0..w * h)
            .map(|i| {
                let iu = (i / h) as f64;
                Complex64::from_polar(1.0, k * iu * 1e-3)
            })
            .collect();
        let map = autocorr2d(&values, [w, h], [1e-3, 1e-3]).unwrap();
        let (pu, pv) = axial_profiles(&map);
        assert_eq!(pu.len(), w);
        assert_eq!(pv.len(), h);
        for (du, bin) in pu.iter().enumerate() {
            assert_relative_eq!(bin.lag_m, du as f64 * 1e-3, epsilon = 1e-15);
            assert_relative_eq!(bin.value, (k * du as f64 * 1e-3).cos(), epsilon = 1e-10);
            assert_eq!(bin.weight, if du == 0 { 1.0 } else { 2.0 });
        }
        for (dv, bin) in pv.iter().enumerate() {
            assert_relative_eq!(bin.value, 1.0, epsilon = 1e-10);
            assert_relative_eq!(bin.lag_m, dv as f64 * 1e-3, epsilon = 1e-15);
        }
    }

    #[test]
    fn window_view_extracts_subrectangles() {
        use crate::wavefield::grid::Axis;
        let field = ComplexPlaneField {
            axes: [Axis::X, Axis::Y],
            normal: Axis::Z,
            sensor_axis: Axis::Z,
            width: 6,
            height: 5,
            spacing_m: [1e-3, 1e-3],
            f0_hz: 200.0,
            values: (0..30).map(|i| Complex64::new(i as f64, 0.0)).collect(),
            weak_signal: false,
        };
        let win = window_view(&field, [2, 1], [3, 2]).unwrap();
        assert_eq!(win.len(), 6);
        assert_eq!(win[0].re, (2 * 5 + 1) as f64);
        assert_eq!(win[5].re, (4 * 5 + 2) as f64);
        assert!(window_view(&field, [4, 0], [3, 2]).is_err());
    }
}
