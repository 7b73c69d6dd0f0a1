//! PNG-backed persistence for RGB images and index masks.
//!
//! Index masks are written as 16-bit single-channel PNG so any label plus
//! the ignore sentinel survives a round trip; 8-bit single-channel files are
//! accepted on read.

use std::path::Path;

use image::{DynamicImage, ImageReader};

use super::{ImageBuffer, IndexMask, RasterError, DEFAULT_IGNORE_INDEX};
use crate::core::{ClassVocabulary, RasterSize};

pub fn read_image(path: &Path) -> Result<ImageBuffer, RasterError> {
    let img = ImageReader::open(path)
        .map_err(|source| RasterError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()?
        .to_rgb8();
    let size = RasterSize::new(img.width(), img.height());
    let pixels = img.pixels().map(|p| p.0).collect();
    Ok(ImageBuffer::from_pixels(size, pixels))
}

pub fn write_image_png(image: &ImageBuffer, path: &Path) -> Result<(), RasterError> {
    let mut out = image::RgbImage::new(image.width(), image.height());
    for (i, px) in image.pixels().iter().enumerate() {
        let x = (i % image.width() as usize) as u32;
        let y = (i / image.width() as usize) as u32;
        out.put_pixel(x, y, image::Rgb(*px));
    }
    out.save(path)?;
    Ok(())
}

/// Encode an image to PNG bytes (used for request payloads).
pub fn encode_png_bytes(image: &ImageBuffer) -> Vec<u8> {
    let mut raw = image::RgbImage::new(image.width(), image.height());
    for (i, px) in image.pixels().iter().enumerate() {
        let x = (i % image.width() as usize) as u32;
        let y = (i / image.width() as usize) as u32;
        raw.put_pixel(x, y, image::Rgb(*px));
    }
    let mut bytes = Vec::new();
    DynamicImage::ImageRgb8(raw)
        .write_to(
            &mut std::io::Cursor::new(&mut bytes),
            image::ImageFormat::Png,
        )
        .expect("in-memory PNG encode");
    bytes
}

pub fn write_mask_png(mask: &IndexMask, path: &Path) -> Result<(), RasterError> {
    let size = mask.size();
    let mut out = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(size.width, size.height);
    for y in 0..size.height {
        for x in 0..size.width {
            out.put_pixel(x, y, image::Luma([mask.get(x, y)]));
        }
    }
    out.save(path)?;
    Ok(())
}

/// Read a single-channel PNG as an index mask and validate every
/// non-sentinel label against the vocabulary.
pub fn read_mask_png(path: &Path, vocab: &ClassVocabulary) -> Result<IndexMask, RasterError> {
    let img = ImageReader::open(path)
        .map_err(|source| RasterError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()?;
    let (labels, size) = match img {
        DynamicImage::ImageLuma8(g) => {
            let size = RasterSize::new(g.width(), g.height());
            (g.pixels().map(|p| p.0[0] as u16).collect::<Vec<_>>(), size)
        }
        DynamicImage::ImageLuma16(g) => {
            let size = RasterSize::new(g.width(), g.height());
            (g.pixels().map(|p| p.0[0]).collect::<Vec<_>>(), size)
        }
        other => {
            return Err(RasterError::UnsupportedMaskFormat(format!(
                "{:?}",
                other.color()
            )))
        }
    };
    let mask = IndexMask::from_labels(size, labels, DEFAULT_IGNORE_INDEX);
    mask.validate_against(vocab.len())?;
    Ok(mask)
}
