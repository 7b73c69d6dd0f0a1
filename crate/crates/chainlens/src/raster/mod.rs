//! Image and raster persistence: RGB images, float rasters for
//! depth/normals/ranks, index masks, binary masks, and the post-processing
//! that decodes a fill-style mask out of a generated image.

mod decode;
mod pfm;
mod png_io;

pub use decode::{extract_fill_mask, pad_to_square, HsvWindow};
pub use pfm::{read_pfm, read_pfm_bytes, write_pfm, write_pfm_bytes};
pub use png_io::{encode_png_bytes, read_image, read_mask_png, write_image_png, write_mask_png};

use std::path::PathBuf;

use thiserror::Error;

use crate::core::{PixelBox, Point, RasterSize};

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed PFM: {0}")]
    MalformedPfm(String),
    #[error("unsupported PFM variant {0:?} (only grayscale \"Pf\" is handled)")]
    UnsupportedPfm(String),
    #[error("image decode error: {0}")]
    Decode(#[from] image::ImageError),
    #[error("mask label {label} out of range for a {vocab_size}-class vocabulary")]
    LabelOutOfRange { label: u16, vocab_size: usize },
    #[error("mask must be single-channel 8- or 16-bit, got {0}")]
    UnsupportedMaskFormat(String),
    #[error("size mismatch: {a} vs {b}")]
    SizeMismatch { a: RasterSize, b: RasterSize },
}

/// Row-major 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    size: RasterSize,
    pixels: Vec<[u8; 3]>,
}

impl ImageBuffer {
    pub fn new(size: RasterSize, fill: [u8; 3]) -> Self {
        Self {
            size,
            pixels: vec![fill; size.pixels()],
        }
    }

    pub fn from_pixels(size: RasterSize, pixels: Vec<[u8; 3]>) -> Self {
        assert_eq!(pixels.len(), size.pixels(), "pixel count must match size");
        Self { size, pixels }
    }

    pub fn size(&self) -> RasterSize {
        self.size
    }

    pub fn width(&self) -> u32 {
        self.size.width
    }

    pub fn height(&self) -> u32 {
        self.size.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.size.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        self.pixels[y as usize * self.size.width as usize + x as usize] = rgb;
    }

    pub fn crop(&self, window: &PixelBox) -> ImageBuffer {
        debug_assert!(self.size.full_box().contains_box(window));
        let size = RasterSize::new(window.width(), window.height());
        let mut pixels = Vec::with_capacity(size.pixels());
        for y in window.y_min..window.y_max {
            let row = y as usize * self.size.width as usize;
            pixels.extend_from_slice(
                &self.pixels[row + window.x_min as usize..row + window.x_max as usize],
            );
        }
        ImageBuffer { size, pixels }
    }

    /// Stable digest of the pixel content, used for cache keys and
    /// transcripts.
    pub fn content_digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.size.width.to_le_bytes());
        hasher.update(self.size.height.to_le_bytes());
        hasher.update(self.pixels.as_flattened());
        hex::encode(hasher.finalize())
    }
}

/// Row-major 32-bit float raster with an optional validity mask.
/// Values are finite wherever valid.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatRaster {
    size: RasterSize,
    values: Vec<f32>,
    valid: Option<Vec<bool>>,
}

impl FloatRaster {
    pub fn new(size: RasterSize, fill: f32) -> Self {
        Self {
            size,
            values: vec![fill; size.pixels()],
            valid: None,
        }
    }

    pub fn from_values(size: RasterSize, values: Vec<f32>) -> Self {
        assert_eq!(values.len(), size.pixels());
        let valid = if values.iter().all(|v| v.is_finite()) {
            None
        } else {
            Some(values.iter().map(|v| v.is_finite()).collect())
        };
        Self {
            size,
            values,
            valid,
        }
    }

    pub fn size(&self) -> RasterSize {
        self.size
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f32 {
        self.values[y as usize * self.size.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: f32) {
        self.values[y as usize * self.size.width as usize + x as usize] = v;
    }

    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        self.valid.as_ref().map_or(true, |m| m[idx])
    }

    pub fn all_valid(&self) -> bool {
        self.valid.as_ref().map_or(true, |m| m.iter().all(|&v| v))
    }

    /// Indices of valid pixels.
    pub fn valid_indices(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&i| self.is_valid(i))
            .collect()
    }

    /// Mean over valid pixels inside the index set; `None` when no index is
    /// valid.
    pub fn mean_over(&self, indices: &[usize]) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0u64;
        for &i in indices {
            if self.is_valid(i) {
                sum += self.values[i] as f64;
                n += 1;
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Min and max over valid pixels.
    pub fn value_range(&self) -> Option<(f32, f32)> {
        let mut range: Option<(f32, f32)> = None;
        for (i, &v) in self.values.iter().enumerate() {
            if self.is_valid(i) {
                range = Some(match range {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
        }
        range
    }
}

/// Row-major raster of 16-bit class indices with an ignore sentinel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMask {
    size: RasterSize,
    labels: Vec<u16>,
    ignore_index: u16,
}

pub const DEFAULT_IGNORE_INDEX: u16 = u16::MAX;

impl IndexMask {
    pub fn new(size: RasterSize, fill: u16) -> Self {
        Self {
            size,
            labels: vec![fill; size.pixels()],
            ignore_index: DEFAULT_IGNORE_INDEX,
        }
    }

    pub fn from_labels(size: RasterSize, labels: Vec<u16>, ignore_index: u16) -> Self {
        assert_eq!(labels.len(), size.pixels());
        Self {
            size,
            labels,
            ignore_index,
        }
    }

    pub fn size(&self) -> RasterSize {
        self.size
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn ignore_index(&self) -> u16 {
        self.ignore_index
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u16 {
        self.labels[y as usize * self.size.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, label: u16) {
        self.labels[y as usize * self.size.width as usize + x as usize] = label;
    }

    /// Every non-sentinel label must be below the vocabulary size.
    pub fn validate_against(&self, vocab_size: usize) -> Result<(), RasterError> {
        for &l in &self.labels {
            if l != self.ignore_index && (l as usize) >= vocab_size {
                return Err(RasterError::LabelOutOfRange {
                    label: l,
                    vocab_size,
                });
            }
        }
        Ok(())
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    size: RasterSize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(size: RasterSize) -> Self {
        Self {
            size,
            bits: vec![false; size.pixels()],
        }
    }

    pub fn from_bits(size: RasterSize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), size.pixels());
        Self { size, bits }
    }

    pub fn size(&self) -> RasterSize {
        self.size
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.size.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.bits[y as usize * self.size.width as usize + x as usize] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.size.contains(p) && self.get(p.x, p.y)
    }

    /// IoU between two same-size masks. An empty union counts as IoU 1.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        assert_eq!(self.size, other.size);
        let mut inter = 0u64;
        let mut union = 0u64;
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as u64;
            union += (*a || *b) as u64;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}
