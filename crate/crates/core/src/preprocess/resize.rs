use super::{NormalizedImage, RawImage, STANDARD_SIZE};

/// Source coordinate and interpolation weight for each output index, using
/// half-pixel centers and clamping at the borders.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = s.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, s - lo as f64)
        })
        .collect()
}

/// Bilinear resize of an 8-bit image to `width`×`height`, scaled to `[0, 1]`.
pub fn resize_bilinear(img: &RawImage, width: usize, height: usize) -> NormalizedImage {
    let img = img.clone().into_rgb();
    let xs = sample_positions(img.width, width);
    let ys = sample_positions(img.height, height);
    let mut data = Vec::with_capacity(width * height * 3);
    for &(y0, y1, wy) in &ys {
        for &(x0, x1, wx) in &xs {
            for c in 0..3 {
                let p = |x, y| f64::from(img.get(x, y, c));
                let top = p(x0, y0) * (1.0 - wx) + p(x1, y0) * wx;
                let bottom = p(x0, y1) * (1.0 - wx) + p(x1, y1) * wx;
                let v = (top * (1.0 - wy) + bottom * wy) / 255.0;
                data.push(v.clamp(0.0, 1.0) as f32);
            }
        }
    }
    NormalizedImage::from_raw_parts(width, height, data)
}

/// Resizes to the 224×224 model resolution and maps samples to `[0, 1]`.
pub fn standardize(img: &RawImage) -> NormalizedImage {
    resize_bilinear(img, STANDARD_SIZE, STANDARD_SIZE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_white_stays_one() {
        let raw = RawImage::new(224, 224, 3, vec![255; 224 * 224 * 3]).unwrap();
        assert!(standardize(&raw).data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn downscale_preserves_constant() {
        let raw = RawImage::new(448, 448, 3, vec![128; 448 * 448 * 3]).unwrap();
        let want = (128.0f64 / 255.0) as f32;
        assert!(standardize(&raw).data().iter().all(|&v| v == want));
    }

    #[test]
    fn checkerboard_center() {
        // {0,255;255,0}: bilinear value is 255*(a + b - 2ab) at fractional
        // position (a, b), i.e. 0.5 - 2(a-0.5)(b-0.5) after scaling.
        let raw = RawImage::new(2, 2, 1, vec![0, 255, 255, 0]).unwrap();
        let out = standardize(&raw);
        let c = STANDARD_SIZE / 2;
        let block = [out.get(c - 1, c - 1, 0), out.get(c, c - 1, 0), out.get(c - 1, c, 0), out.get(c, c, 0)];
        let mean: f64 = block.iter().map(|&v| f64::from(v)).sum::<f64>() / 4.0;
        assert!((mean - 0.5).abs() < 1e-6);
        let a = (c as f64 + 0.5) * 2.0 / 224.0 - 0.5;
        let hand = 0.5 - 2.0 * (a - 0.5) * (a - 0.5);
        assert!((f64::from(out.get(c, c, 0)) - hand).abs() < 1e-6);
        assert!((f64::from(out.get(c, c, 0)) - 0.5).abs() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn standardize_shape_and_range(w in 1usize..1024, h in 1usize..1024, seed in any::<u64>()) {
            let mut state = seed;
            let data = (0..w * h * 3).map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 56) as u8
            }).collect();
            let out = standardize(&RawImage::new(w, h, 3, data).unwrap());
            prop_assert!(out.is_standard());
            prop_assert_eq!(out.data().len(), 224 * 224 * 3);
            prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
