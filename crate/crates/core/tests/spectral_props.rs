use fuse_core::preprocess::NormalizedImage;
use fuse_core::spectral::{extract_spectral, fft2, ReductionMode};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 224;

fn noise_image(seed: u64) -> NormalizedImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    NormalizedImage::from_fn(N, N, |_, _, _| rng.gen::<f32>())
}

fn magnitude_half(img: &NormalizedImage) -> Vec<f64> {
    extract_spectral(img, ReductionMode::AxisProfiles).unwrap().values[..2 * N].to_vec()
}

#[test]
fn circular_shift_leaves_magnitude_profiles_unchanged() {
    for seed in 0..3 {
        let img = noise_image(seed);
        let (dx, dy) = (17 + seed as usize * 5, 101);
        let shifted = NormalizedImage::from_fn(N, N, |x, y, c| img.get((x + dx) % N, (y + dy) % N, c));
        let (a, b) = (magnitude_half(&img), magnitude_half(&shifted));
        for (i, (x, y)) in a.iter().zip(&b).enumerate() {
            assert!((x - y).abs() < 1e-6, "dim {i}: {x} vs {y}");
        }
        // the phase half does move
        let pa = extract_spectral(&img, ReductionMode::AxisProfiles).unwrap().values;
        let pb = extract_spectral(&shifted, ReductionMode::AxisProfiles).unwrap().values;
        assert!(pa[2 * N..].iter().zip(&pb[2 * N..]).any(|(x, y)| (x - y).abs() > 1e-3));
    }
}

#[test]
fn rotation_swaps_row_and_column_profiles() {
    for seed in 10..13 {
        let img = noise_image(seed);
        // 90 degrees clockwise
        let rotated = NormalizedImage::from_fn(N, N, |x, y, c| img.get(y, N - 1 - x, c));
        let (a, b) = (magnitude_half(&img), magnitude_half(&rotated));
        let (rows_a, cols_a) = a.split_at(N);
        let (rows_b, cols_b) = b.split_at(N);
        for i in 0..N {
            assert!((rows_a[i] - cols_b[i]).abs() < 1e-5, "row {i}");
            assert!((cols_a[i] - rows_b[i]).abs() < 1e-5, "col {i}");
        }
    }
}

#[test]
fn conjugate_symmetry_for_real_input() {
    let plane: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        (0..N * N).map(|_| rng.gen_range(-1.0..1.0)).collect()
    };
    let spec = fft2(&plane, N, N).unwrap();
    let scale = spec.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
    for (ku, kv) in [(1i64, 0i64), (3, -7), (50, 60), (-111, 100)] {
        let a = spec.at_frequency(ku, kv);
        let b = spec.at_frequency(-ku, -kv).conj();
        assert!((a - b).norm() <= 1e-6 * scale);
    }
}

#[test]
fn extraction_is_deterministic() {
    let img = noise_image(99);
    for mode in [ReductionMode::AxisProfiles, ReductionMode::ScalarStats] {
        assert_eq!(extract_spectral(&img, mode).unwrap(), extract_spectral(&img, mode).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn parseval_holds(n in prop::sample::select(vec![6usize, 12, 30, 64, 224]), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plane: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let spec = fft2(&plane, n, n).unwrap();
        let time = plane.iter().map(|v| v * v).sum::<f64>() * (n * n) as f64;
        let freq: f64 = spec.data.iter().map(|c| c.norm_sqr()).sum();
        prop_assert!((time - freq).abs() <= 1e-6 * time);
    }

    #[test]
    fn features_always_finite(seed in any::<u64>()) {
        let img = noise_image(seed);
        let f = extract_spectral(&img, ReductionMode::AxisProfiles).unwrap();
        prop_assert_eq!(f.len(), 896);
        prop_assert!(f.values.iter().all(|v| v.is_finite()));
    }
}
