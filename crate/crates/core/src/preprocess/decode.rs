use super::PreprocessError;

/// 8-bit image as decoded from disk, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RawImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, PreprocessError> {
        if width == 0 || height == 0 {
            return Err(PreprocessError::InvalidImage("zero dimension".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(PreprocessError::InvalidImage(format!("{channels} channels")));
        }
        if data.len() != width * height * channels {
            return Err(PreprocessError::InvalidImage(format!(
                "expected {} bytes, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self { width, height, channels, data })
    }

    /// Replicates a single channel into RGB; RGB images pass through.
    pub fn into_rgb(self) -> Self {
        if self.channels == 3 {
            return self;
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self { channels: 3, data, ..self }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }
}

/// Decodes a PNG or JPEG byte stream. Grayscale input comes back as three
/// identical channels; alpha is dropped.
pub fn decode_image(bytes: &[u8]) -> Result<RawImage, PreprocessError> {
    let format = image::guess_format(bytes).map_err(|_| PreprocessError::UnsupportedFormat)?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Jpeg) {
        return Err(PreprocessError::UnsupportedFormat);
    }
    let decoded = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| PreprocessError::CorruptStream(e.to_string()))?;
    let raw = if decoded.color().has_color() {
        let rgb = decoded.to_rgb8();
        RawImage::new(rgb.width() as usize, rgb.height() as usize, 3, rgb.into_raw())?
    } else {
        let luma = decoded.to_luma8();
        RawImage::new(luma.width() as usize, luma.height() as usize, 1, luma.into_raw())?
    };
    Ok(raw.into_rgb())
}
