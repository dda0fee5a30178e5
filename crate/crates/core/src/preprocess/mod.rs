//! Image decoding, standardization to the model resolution, and the
//! training-time degradation (Gaussian blur or simulated JPEG noise).

mod blur;
mod decode;
mod degrade;
mod jpeg;
mod resize;

pub use blur::{gaussian_blur, gaussian_kernel};
pub use decode::{decode_image, RawImage};
pub use degrade::{apply_degradation, DegradationBranch, DegradationConfig};
pub use jpeg::{jpeg_noise, quality_scaled_table, JPEG_LUMA_TABLE};
pub use resize::{resize_bilinear, standardize};

use thiserror::Error;

/// Side length of the square images every downstream stage consumes.
pub const STANDARD_SIZE: usize = 224;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreprocessError {
    #[error("unsupported image format")]
    UnsupportedFormat,
    #[error("corrupt image stream: {0}")]
    CorruptStream(String),
    #[error("invalid blur sigma {0} (must be > 0)")]
    InvalidSigma(f64),
    #[error("invalid JPEG quality {0} (must be in 1..=100)")]
    InvalidQuality(i64),
    #[error("invalid degradation config: {0}")]
    InvalidConfig(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

/// Float RGB image with samples in `[0, 1]`, row-major, interleaved channels.
///
/// The pipeline always works on `STANDARD_SIZE` square images; the filters
/// themselves accept any size so they can be checked on small inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl NormalizedImage {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, PreprocessError> {
        if width == 0 || height == 0 {
            return Err(PreprocessError::InvalidImage("zero dimension".into()));
        }
        if data.len() != width * height * Self::CHANNELS {
            return Err(PreprocessError::InvalidImage(format!(
                "expected {} samples, got {}",
                width * height * Self::CHANNELS,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(PreprocessError::InvalidImage(format!("sample {v} outside [0,1]")));
        }
        Ok(Self { width, height, data })
    }

    /// Image filled with one value in every sample.
    pub fn constant(width: usize, height: usize, value: f32) -> Result<Self, PreprocessError> {
        Self::new(width, height, vec![value; width * height * Self::CHANNELS])
    }

    /// Builds an image from a closure of `(x, y, channel)`; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height * Self::CHANNELS);
        for y in 0..height {
            for x in 0..width {
                for c in 0..Self::CHANNELS {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self { width, height, data }
    }

    pub(crate) fn from_raw_parts(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * Self::CHANNELS);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_standard(&self) -> bool {
        self.width == STANDARD_SIZE && self.height == STANDARD_SIZE
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * Self::CHANNELS + c]
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(Self::CHANNELS)
            .map(|&v| f64::from(v))
            .collect()
    }

    /// Rec. 601 luma plane: 0.299 R + 0.587 G + 0.114 B.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(Self::CHANNELS)
            .map(|p| 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2]))
            .collect()
    }

    /// Reassembles three planes, clamping to `[0, 1]`.
    pub(crate) fn from_planes(width: usize, height: usize, planes: &[Vec<f64>; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * Self::CHANNELS);
        for i in 0..width * height {
            for plane in planes {
                data.push(plane[i].clamp(0.0, 1.0) as f32);
            }
        }
        Self { width, height, data }
    }

    /// Little-endian bytes of the samples; the input the stub encoder hashes.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}
