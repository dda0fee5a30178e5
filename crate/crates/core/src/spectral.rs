//! Frequency-domain features: a DC-centered 2-D FFT of the luma plane,
//! log-magnitude and phase maps, and their reduction to a fixed-length vector.

use crate::preprocess::NormalizedImage;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock, RwLock};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("non-finite input sample at index {0}")]
    NonFiniteInput(usize),
    #[error("plane has {got} samples, expected {width}x{height}")]
    ShapeMismatch { width: usize, height: usize, got: usize },
}

/// How the magnitude and phase maps are collapsed into features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Row means and column means of each map: `2 * (H + W)` values.
    #[default]
    AxisProfiles,
    /// Mean and variance of each map: 4 values.
    ScalarStats,
}

impl ReductionMode {
    pub fn feature_len(self, width: usize, height: usize) -> usize {
        match self {
            Self::AxisProfiles => 2 * (width + height),
            Self::ScalarStats => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::AxisProfiles => "axis_profiles",
            Self::ScalarStats => "scalar_stats",
        }
    }
}

/// Row and column transforms for one plane size. Immutable once built.
#[derive(Clone)]
pub struct Fft2Plan {
    width: usize,
    height: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
}

impl Fft2Plan {
    pub fn new(width: usize, height: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { width, height, rows: planner.plan_fft_forward(width), cols: planner.plan_fft_forward(height) }
    }

    /// Shared plan for a size, built on first use.
    pub fn cached(width: usize, height: usize) -> Self {
        static PLANS: OnceLock<RwLock<HashMap<(usize, usize), Fft2Plan>>> = OnceLock::new();
        let plans = PLANS.get_or_init(Default::default);
        if let Some(p) = plans.read().expect("plan cache poisoned").get(&(width, height)) {
            return p.clone();
        }
        let mut guard = plans.write().expect("plan cache poisoned");
        guard.entry((width, height)).or_insert_with(|| Self::new(width, height)).clone()
    }

    /// Unnormalized forward DFT, unshifted layout.
    fn transform(&self, plane: &[f64]) -> Vec<Complex64> {
        let (w, h) = (self.width, self.height);
        let mut buf: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for row in buf.chunks_exact_mut(w) {
            self.rows.process(row);
        }
        let mut col = vec![Complex64::default(); h];
        for x in 0..w {
            for y in 0..h {
                col[y] = buf[y * w + x];
            }
            self.cols.process(&mut col);
            for y in 0..h {
                buf[y * w + x] = col[y];
            }
        }
        buf
    }
}

/// Complex spectrum with DC at `(width / 2, height / 2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Complex64>,
}

impl ComplexSpectrum {
    #[inline]
    pub fn at(&self, u: usize, v: usize) -> Complex64 {
        self.data[v * self.width + u]
    }

    /// Value at signed frequency `(ku, kv)` (DC = (0, 0)), wrapping modulo size.
    pub fn at_frequency(&self, ku: i64, kv: i64) -> Complex64 {
        let (w, h) = (self.width as i64, self.height as i64);
        let u = (ku + w / 2).rem_euclid(w) as usize;
        let v = (kv + h / 2).rem_euclid(h) as usize;
        self.at(u, v)
    }
}

/// Forward 2-D DFT of a real `width`×`height` plane, quadrant-shifted so the
/// DC bin sits at the center.
pub fn fft2(plane: &[f64], width: usize, height: usize) -> Result<ComplexSpectrum, SpectralError> {
    if plane.len() != width * height {
        return Err(SpectralError::ShapeMismatch { width, height, got: plane.len() });
    }
    if let Some(i) = plane.iter().position(|v| !v.is_finite()) {
        return Err(SpectralError::NonFiniteInput(i));
    }
    let raw = Fft2Plan::cached(width, height).transform(plane);
    let mut data = vec![Complex64::default(); raw.len()];
    for y in 0..height {
        let sy = (y + height / 2) % height;
        for x in 0..width {
            let sx = (x + width / 2) % width;
            data[sy * width + sx] = raw[y * width + x];
        }
    }
    Ok(ComplexSpectrum { width, height, data })
}

/// Log-compressed magnitude `ln(1 + |F|)` and phase in `(-pi, pi]`.
pub fn magnitude_phase(spec: &ComplexSpectrum) -> (Vec<f64>, Vec<f64>) {
    spec.data
        .iter()
        .map(|c| {
            let phase = c.im.atan2(c.re);
            (c.norm().ln_1p(), if phase <= -PI { PI } else { phase })
        })
        .unzip()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFeatureVector {
    pub values: Vec<f64>,
    pub mode: ReductionMode,
}

impl SpectralFeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn row_means(map: &[f64], width: usize) -> impl Iterator<Item = f64> + '_ {
    map.chunks_exact(width).map(move |r| r.iter().sum::<f64>() / width as f64)
}

fn col_means(map: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut sums = vec![0.0; width];
    for row in map.chunks_exact(width) {
        sums.iter_mut().zip(row).for_each(|(s, v)| *s += v);
    }
    sums.into_iter().map(|s| s / height as f64).collect()
}

fn mean_var(map: &[f64]) -> (f64, f64) {
    let n = map.len() as f64;
    let mean = map.iter().sum::<f64>() / n;
    (mean, map.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n)
}

/// Reduces magnitude and phase maps of a `width`×`height` spectrum.
pub fn reduce_maps(mag: &[f64], phase: &[f64], width: usize, height: usize, mode: ReductionMode) -> SpectralFeatureVector {
    let values = match mode {
        ReductionMode::AxisProfiles => {
            let mut v = Vec::with_capacity(mode.feature_len(width, height));
            for map in [mag, phase] {
                v.extend(row_means(map, width));
                v.extend(col_means(map, width, height));
            }
            v
        }
        ReductionMode::ScalarStats => {
            let (mm, mv) = mean_var(mag);
            let (pm, pv) = mean_var(phase);
            vec![mm, mv, pm, pv]
        }
    };
    SpectralFeatureVector { values, mode }
}

/// Luma FFT → log-magnitude/phase → reduction.
pub fn extract_spectral(img: &NormalizedImage, mode: ReductionMode) -> Result<SpectralFeatureVector, SpectralError> {
    let (w, h) = (img.width(), img.height());
    let spec = fft2(&img.luminance(), w, h)?;
    let (mag, phase) = magnitude_phase(&spec);
    Ok(reduce_maps(&mag, &phase, w, h, mode))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(plane: &[f64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::default(); n * n];
        for v in 0..n {
            for u in 0..n {
                let mut acc = Complex64::default();
                for y in 0..n {
                    for x in 0..n {
                        let ang = -2.0 * PI * ((u * x) as f64 / n as f64 + (v * y) as f64 / n as f64);
                        acc += plane[y * n + x] * Complex64::from_polar(1.0, ang);
                    }
                }
                out[v * n + u] = acc;
            }
        }
        out
    }

    #[test]
    fn constant_plane_is_dc_only() {
        let n = 224;
        let spec = fft2(&vec![0.7; n * n], n, n).unwrap();
        let dc = spec.at(112, 112);
        assert!((dc.re - 0.7 * (n * n) as f64).abs() < 1e-8);
        let rest: f64 = spec.data.iter().map(|c| c.norm()).sum::<f64>() - dc.norm();
        assert!(rest < 1e-6);
    }

    #[test]
    fn matches_naive_dft_16() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 16;
        let plane: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = fft2(&plane, n, n).unwrap();
        let slow = naive_dft(&plane, n);
        for v in 0..n {
            for u in 0..n {
                let a = fast.at_frequency(u as i64, v as i64);
                let b = slow[v * n + u];
                assert!((a - b).norm() <= 1e-9 * b.norm().max(1.0));
            }
        }
    }

    #[test]
    fn nan_rejected() {
        let mut plane = vec![0.0; 16];
        plane[5] = f64::NAN;
        assert_eq!(fft2(&plane, 4, 4), Err(SpectralError::NonFiniteInput(5)));
    }

    #[test]
    fn magnitude_phase_formulas() {
        let spec = ComplexSpectrum {
            width: 2,
            height: 1,
            data: vec![Complex64::new(3.0, 4.0), Complex64::new(3.0, -4.0)],
        };
        let (m, p) = magnitude_phase(&spec);
        assert_eq!(m[0], 6.0f64.ln());
        assert_eq!(m[0], m[1]);
        assert_eq!(p[0], 4.0f64.atan2(3.0));
        assert_eq!(p[1], -p[0]);

        let zero = ComplexSpectrum { width: 1, height: 1, data: vec![Complex64::new(0.0, 0.0)] };
        assert_eq!(magnitude_phase(&zero), (vec![0.0], vec![0.0]));
        let neg = ComplexSpectrum { width: 1, height: 1, data: vec![Complex64::new(-1.0, -0.0)] };
        assert_eq!(magnitude_phase(&neg).1, vec![PI]);
    }

    #[test]
    fn constant_image_profiles() {
        let c = 0.4f32;
        let img = NormalizedImage::constant(224, 224, c).unwrap();
        let f = extract_spectral(&img, ReductionMode::AxisProfiles).unwrap();
        assert_eq!(f.len(), 896);
        // luma of a gray pixel is the gray value itself
        let lum = 0.299 * f64::from(c) + 0.587 * f64::from(c) + 0.114 * f64::from(c);
        let dc_row = (1.0 + lum * 224.0 * 224.0).ln() / 224.0;
        for (i, &v) in f.values[..448].iter().enumerate() {
            let want = if i % 224 == 112 { dc_row } else { 0.0 };
            assert!((v - want).abs() < 1e-9, "index {i}: {v} vs {want}");
        }
    }

    #[test]
    fn scalar_stats_shape() {
        let img = NormalizedImage::from_fn(224, 224, |x, y, _| ((x * y) % 11) as f32 / 11.0);
        let f = extract_spectral(&img, ReductionMode::ScalarStats).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f.values.iter().all(|v| v.is_finite()));
        assert!(f.values[1] >= 0.0 && f.values[3] >= 0.0);
    }

    #[test]
    fn plan_cache_reuses_and_is_shareable() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Fft2Plan>();
        let a = Fft2Plan::cached(8, 8);
        let b = Fft2Plan::cached(8, 8);
        assert!(Arc::ptr_eq(&a.rows, &b.rows));
    }
}
