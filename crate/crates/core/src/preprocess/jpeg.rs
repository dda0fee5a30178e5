use super::{NormalizedImage, PreprocessError};
use std::f64::consts::PI;

/// Baseline luminance quantization table, row-major (row = vertical frequency).
pub const JPEG_LUMA_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

fn check_quality(quality: i64) -> Result<u32, PreprocessError> {
    if (1..=100).contains(&quality) {
        Ok(quality as u32)
    } else {
        Err(PreprocessError::InvalidQuality(quality))
    }
}

/// Luminance table scaled by the usual quality factor.
pub fn quality_scaled_table(quality: i64) -> Result<[u16; 64], PreprocessError> {
    let q = check_quality(quality)?;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    Ok(JPEG_LUMA_TABLE.map(|base| ((u32::from(base) * scale + 50) / 100).clamp(1, 255) as u16))
}

/// Orthonormal 8-point DCT-II basis, `basis[u][x]`.
fn dct_basis() -> [[f64; 8]; 8] {
    let mut m = [[0.0; 8]; 8];
    for (u, row) in m.iter_mut().enumerate() {
        let alpha = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
        for (x, v) in row.iter_mut().enumerate() {
            *v = alpha * (((2 * x + 1) as f64 * u as f64 * PI) / 16.0).cos();
        }
    }
    m
}

struct BlockCodec {
    basis: [[f64; 8]; 8],
    table: [f64; 64],
}

impl BlockCodec {
    /// Forward DCT, quantize, dequantize, inverse DCT on one level-shifted block.
    fn roundtrip(&self, block: &mut [f64; 64]) {
        let b = &self.basis;
        let mut tmp = [0.0; 64];
        // rows: tmp[y][u] = sum_x b[u][x] * block[y][x]
        for y in 0..8 {
            for u in 0..8 {
                tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
            }
        }
        let mut coef = [0.0; 64];
        for v in 0..8 {
            for u in 0..8 {
                coef[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
            }
        }
        for (c, q) in coef.iter_mut().zip(&self.table) {
            *c = (*c / q).round() * q;
        }
        for y in 0..8 {
            for u in 0..8 {
                tmp[y * 8 + u] = (0..8).map(|v| b[v][y] * coef[v * 8 + u]).sum();
            }
        }
        for y in 0..8 {
            for x in 0..8 {
                block[y * 8 + x] = (0..8).map(|u| b[u][x] * tmp[y * 8 + u]).sum();
            }
        }
    }
}

/// Simulated JPEG compression: each channel is level-shifted to the 8-bit
/// range, cut into 8×8 blocks (edge-replicated to a multiple of 8), DCT'd,
/// quantized with the quality-scaled luminance table and reconstructed.
pub fn jpeg_noise(img: &NormalizedImage, quality: i64) -> Result<NormalizedImage, PreprocessError> {
    let table = quality_scaled_table(quality)?;
    let codec = BlockCodec { basis: dct_basis(), table: table.map(f64::from) };
    let (w, h) = (img.width(), img.height());
    let (pw, ph) = (w.div_ceil(8) * 8, h.div_ceil(8) * 8);
    let planes = [0, 1, 2].map(|c| {
        let plane = img.channel(c);
        let mut out = vec![0.0; w * h];
        for by in (0..ph).step_by(8) {
            for bx in (0..pw).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    let sy = (by + y).min(h - 1);
                    for x in 0..8 {
                        let sx = (bx + x).min(w - 1);
                        block[y * 8 + x] = plane[sy * w + sx] * 255.0 - 128.0;
                    }
                }
                codec.roundtrip(&mut block);
                for y in (0..8).filter(|y| by + y < h) {
                    for x in (0..8).filter(|x| bx + x < w) {
                        out[(by + y) * w + bx + x] = (block[y * 8 + x] + 128.0) / 255.0;
                    }
                }
            }
        }
        out
    });
    Ok(NormalizedImage::from_planes(w, h, &planes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_scaling() {
        assert!(quality_scaled_table(100).unwrap().iter().all(|&q| q == 1));
        assert_eq!(quality_scaled_table(50).unwrap(), JPEG_LUMA_TABLE);
        let q10 = quality_scaled_table(10).unwrap();
        assert_eq!(q10[0], 80);
        assert_eq!(q10[63], 255);
        assert_eq!(quality_scaled_table(90).unwrap()[0], 3);
    }

    #[test]
    fn quality_bounds() {
        let img = NormalizedImage::constant(8, 8, 0.5).unwrap();
        assert_eq!(jpeg_noise(&img, 0), Err(PreprocessError::InvalidQuality(0)));
        assert_eq!(jpeg_noise(&img, 101), Err(PreprocessError::InvalidQuality(101)));
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = dct_basis();
        for i in 0..8 {
            for j in 0..8 {
                let dot: f64 = (0..8).map(|k| b[i][k] * b[j][k]).sum();
                assert!((dot - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn constant_stays_constant_at_q100() {
        let img = NormalizedImage::constant(20, 13, 0.3).unwrap();
        let out = jpeg_noise(&img, 100).unwrap();
        let first = out.data()[0];
        assert!(out.data().iter().all(|&v| (v - first).abs() < 1e-6));
        assert!((first - 0.3).abs() <= 1.0 / 255.0);
        // on the 8-bit grid the DC term is an exact multiple of the step
        let grid = NormalizedImage::constant(16, 16, 200.0 / 255.0).unwrap();
        let out = jpeg_noise(&grid, 100).unwrap();
        assert!(out.data().iter().all(|&v| (v - 200.0 / 255.0).abs() < 1e-6));
    }

    #[test]
    fn non_multiple_of_eight_keeps_shape() {
        let img = NormalizedImage::from_fn(13, 11, |x, y, c| ((x + 2 * y + c) % 7) as f32 / 7.0);
        let out = jpeg_noise(&img, 60).unwrap();
        assert_eq!((out.width(), out.height()), (13, 11));
    }
}
