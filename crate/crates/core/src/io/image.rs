//! Float image buffers and 8-bit PNG / PPM interchange.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, RgbImage};

use crate::error::{Error, Result};

/// Row-major float image, values in `[0, 1]`, 1 or 3 interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![0.0; width * height * channels])
    }

    /// Wraps raw values; they are clamped to `[0, 1]` and must be finite.
    pub fn from_vec(width: usize, height: usize, channels: usize, mut pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "{} values for a {width}×{height}×{channels} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite pixel value"));
        }
        pixels.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Ok(ImageBuffer {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = (y * self.width + x) * self.channels + c;
        self.pixels[i] = v.clamp(0.0, 1.0);
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "image shapes differ: {}×{}×{} vs {}×{}×{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// 8-bit encoding; rounds half away from zero.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|v| encode_unit(*v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::from_vec(width, height, channels, bytes.iter().map(|b| *b as f64 / 255.0).collect())
    }
}

fn encode_unit(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "ppm" | "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::format(path, format!("unsupported image extension '{ext}'"))),
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let img = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(g) => ImageBuffer::from_bytes(w, h, 1, g.as_raw()),
        DynamicImage::ImageRgb8(rgb) => ImageBuffer::from_bytes(w, h, 3, rgb.as_raw()),
        DynamicImage::ImageRgba8(_) => ImageBuffer::from_bytes(w, h, 3, img.to_rgb8().as_raw()),
        DynamicImage::ImageLumaA8(_) => ImageBuffer::from_bytes(w, h, 1, img.to_luma8().as_raw()),
        other => Err(Error::format(path, format!("unsupported pixel type {:?}", other.color()))),
    }
}

/// Writes PNG (gray or RGB) or binary PPM (P6; gray is expanded to RGB).
pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (w, h) = (img.width as u32, img.height as u32);
    let bytes = img.to_bytes();
    let dynamic = match (img.channels, format) {
        (1, ImageFormat::Png) => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).unwrap()),
        (1, _) => {
            let rgb: Vec<u8> = bytes.iter().flat_map(|b| [*b; 3]).collect();
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, rgb).unwrap())
        }
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).unwrap()),
    };
    dynamic
        .save_with_format(path, format)
        .map_err(|e| Error::format(path, e.to_string()))
}
