//! Synthetic data shared by the integration tests.
#![allow(dead_code)]

use fuse_core::manifest::{to_jsonl, Label, ManifestRecord, Split, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

pub const SIZE: usize = 224;
pub const AMPLITUDE: f64 = 0.05;
// Real images hold no content above MAX_WAVE cycles per image. The fake
// sinusoid sits well above that band, off the DFT grid so it leaks across
// many profile bins, and low enough that blur at sigma 3 keeps ~40% of it.
const FX: f64 = 10.5 / 224.0;
const FY: f64 = 12.5 / 224.0;
const MAX_WAVE: i32 = 2;

/// Smooth noise: per channel, a base level plus a random Fourier series of
/// waves up to `MAX_WAVE` cycles per image, kept inside [0.15, 0.85].
pub fn smooth_noise(rng: &mut impl Rng) -> Vec<f64> {
    let mut out = vec![0.0; SIZE * SIZE * 3];
    for c in 0..3 {
        let base = rng.gen_range(0.35..0.65);
        let mut waves = Vec::new();
        for kx in 0..=MAX_WAVE {
            for ky in -MAX_WAVE..=MAX_WAVE {
                if kx == 0 && ky <= 0 {
                    continue;
                }
                let amp = rng.gen_range(-1.0..1.0) / f64::from(kx * kx + ky * ky).sqrt();
                waves.push((f64::from(kx), f64::from(ky), amp, rng.gen_range(0.0..2.0 * PI)));
            }
        }
        // peak deviation at most 0.2
        let scale = 0.2 / waves.iter().map(|w| w.2.abs()).sum::<f64>().max(1.0);
        for y in 0..SIZE {
            for x in 0..SIZE {
                let v: f64 = waves
                    .iter()
                    .map(|&(kx, ky, amp, phase)| amp * (2.0 * PI * (kx * x as f64 + ky * y as f64) / SIZE as f64 + phase).cos())
                    .sum();
                out[(y * SIZE + x) * 3 + c] = base + scale * v;
            }
        }
    }
    out
}

/// 8-bit RGB toy image; fakes carry an additive high-frequency sinusoid.
pub fn toy_pixels(fake: bool, seed: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut px = smooth_noise(&mut rng);
    if fake {
        let phase = rng.gen_range(0.0..2.0 * PI);
        for y in 0..SIZE {
            for x in 0..SIZE {
                let s = AMPLITUDE * (2.0 * PI * (FX * x as f64 + FY * y as f64) + phase).sin();
                for c in 0..3 {
                    px[(y * SIZE + x) * 3 + c] += s;
                }
            }
        }
    }
    px.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect()
}

pub fn write_png(path: &Path, width: usize, height: usize, rgb: Vec<u8>) {
    image::RgbImage::from_raw(width as u32, height as u32, rgb).expect("buffer size").save(path).expect("write png");
}

/// One block of a corpus: (stage, split, generator, real count, fake count).
pub type Block = (Stage, Split, &'static str, usize, usize);

/// The 400-image toy corpus.
pub const TOY_LAYOUT: &[Block] = &[
    (Stage::Stage1, Split::Train, "sine_a", 140, 140),
    (Stage::Stage2, Split::Train, "sine_b", 20, 20),
    (Stage::Stage1, Split::Test, "sine_a", 20, 20),
    (Stage::Stage2, Split::Test, "sine_b", 20, 20),
];

/// A few images per block, for command-line tests.
pub const SMALL_LAYOUT: &[Block] = &[
    (Stage::Stage1, Split::Train, "sine_a", 6, 6),
    (Stage::Stage2, Split::Train, "sine_b", 3, 3),
    (Stage::Stage1, Split::Test, "sine_a", 2, 2),
    (Stage::Stage2, Split::Test, "sine_b", 2, 2),
];

pub fn write_toy_corpus(dir: &Path) -> (PathBuf, PathBuf) {
    write_corpus(dir, TOY_LAYOUT)
}

/// Writes images and manifests under `dir`; returns (train/val manifest, test manifest).
pub fn write_corpus(dir: &Path, layout: &[Block]) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir.join("img")).unwrap();
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut seed = 1000u64;
    for &(stage, split, generator, n_real, n_fake) in layout {
        for (label, count) in [(Label::Real, n_real), (Label::Fake, n_fake)] {
            for _ in 0..count {
                seed += 1;
                let name = format!("img/{seed}.png");
                write_png(&dir.join(&name), SIZE, SIZE, toy_pixels(label == Label::Fake, seed));
                let rec = ManifestRecord { image_path: PathBuf::from(name), label, generator: generator.to_string(), split, stage };
                if split == Split::Test { test.push(rec) } else { train.push(rec) }
            }
        }
    }
    let train_path = dir.join("train.jsonl");
    let test_path = dir.join("test.jsonl");
    std::fs::write(&train_path, to_jsonl(&train)).unwrap();
    std::fs::write(&test_path, to_jsonl(&test)).unwrap();
    (train_path, test_path)
}

/// Config text for the toy run; paths are relative to the config file.
pub fn toy_config(seed: u64) -> String {
    format!(
        "seed = {seed}\n\n[encoder]\nbackend = \"stub\"\nstub_seed = 7\n\n[paths]\nmanifest = \"train.jsonl\"\ntest_manifest = \"test.jsonl\"\noutput_dir = \"out\"\n"
    )
}
