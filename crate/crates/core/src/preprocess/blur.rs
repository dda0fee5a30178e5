use super::{NormalizedImage, PreprocessError};

/// Normalized 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>, PreprocessError> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(PreprocessError::InvalidSigma(sigma));
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(taps)
}

fn convolve_rows(plane: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as i64;
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let sx = (x as i64 + k as i64 - r).clamp(0, width as i64 - 1) as usize;
                acc += t * row[sx];
            }
            out[y * width + x] = acc;
        }
    }
    out
}

fn convolve_cols(plane: &[f64], width: usize, height: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as i64;
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for (k, t) in taps.iter().enumerate() {
            let sy = (y as i64 + k as i64 - r).clamp(0, height as i64 - 1) as usize;
            let src = &plane[sy * width..(sy + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += t * s;
            }
        }
    }
    out
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn gaussian_blur(img: &NormalizedImage, sigma: f64) -> Result<NormalizedImage, PreprocessError> {
    let taps = gaussian_kernel(sigma)?;
    let (w, h) = (img.width(), img.height());
    let planes = [0, 1, 2].map(|c| {
        let rows = convolve_rows(&img.channel(c), w, h, &taps);
        convolve_cols(&rows, w, h, &taps)
    });
    Ok(NormalizedImage::from_planes(w, h, &planes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn variance(v: &[f32]) -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        v.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn kernel_is_normalized_and_sized() {
        let k = gaussian_kernel(1.2).unwrap();
        assert_eq!(k.len(), 2 * 4 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_image_unchanged() {
        let img = NormalizedImage::constant(17, 9, 0.375).unwrap();
        for sigma in [0.3, 1.0, 2.5, 7.0] {
            let out = gaussian_blur(&img, sigma).unwrap();
            assert!(out.data().iter().all(|&v| (v - 0.375).abs() < 1e-7));
        }
    }

    #[test]
    fn impulse_matches_direct_2d_convolution() {
        let n = 21;
        let img = NormalizedImage::from_fn(n, n, |x, y, _| if x == n / 2 && y == n / 2 { 1.0 } else { 0.0 });
        let out = gaussian_blur(&img, 1.0).unwrap();
        let k = gaussian_kernel(1.0).unwrap();
        let r = (k.len() / 2) as i64;
        // brute force: sum over every source pixel of outer(k,k) weight, clamped indices
        for y in 0..n as i64 {
            for x in 0..n as i64 {
                let mut acc = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let sx = (x + dx).clamp(0, n as i64 - 1) as usize;
                        let sy = (y + dy).clamp(0, n as i64 - 1) as usize;
                        acc += k[(dx + r) as usize] * k[(dy + r) as usize] * f64::from(img.get(sx, sy, 0));
                    }
                }
                let got = f64::from(out.get(x as usize, y as usize, 0));
                assert!((got - acc).abs() < 1e-7, "({x},{y}) {got} vs {acc}");
            }
        }
    }

    #[test]
    fn nonpositive_sigma_rejected() {
        let img = NormalizedImage::constant(4, 4, 0.5).unwrap();
        assert_eq!(gaussian_blur(&img, 0.0), Err(PreprocessError::InvalidSigma(0.0)));
        assert!(gaussian_blur(&img, -1.0).is_err());
        assert!(gaussian_blur(&img, f64::NAN).is_err());
    }

    #[test]
    fn blur_reduces_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let img = NormalizedImage::from_fn(40, 30, |_, _, _| rng.gen());
            let sigma = rng.gen_range(0.5..3.0);
            let out = gaussian_blur(&img, sigma).unwrap();
            assert!(variance(out.data()) <= variance(img.data()));
        }
    }
}
