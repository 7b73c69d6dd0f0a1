//! Post-processing for images produced by generation-capable models:
//! square zero-padding and decoding a solid-color fill back into a mask via
//! HSV thresholding plus largest-connected-component filtering.

use super::{BinaryMask, ImageBuffer};
use crate::core::{Point, RasterSize};

/// HSV acceptance window for [`extract_fill_mask`]. Hue is in degrees and
/// wraps at 360; saturation and value are in [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct HsvWindow {
    pub hue_center: f32,
    pub hue_tolerance: f32,
    pub min_saturation: f32,
    pub min_value: f32,
}

impl Default for HsvWindow {
    /// Pure-red fill: hue within +-10 degrees of 0, saturation >= 0.5,
    /// value >= 0.3.
    fn default() -> Self {
        Self {
            hue_center: 0.0,
            hue_tolerance: 10.0,
            min_saturation: 0.5,
            min_value: 0.3,
        }
    }
}

impl HsvWindow {
    fn accepts(&self, rgb: [u8; 3]) -> bool {
        let (h, s, v) = rgb_to_hsv(rgb);
        if s < self.min_saturation || v < self.min_value {
            return false;
        }
        let mut dh = (h - self.hue_center).abs() % 360.0;
        if dh > 180.0 {
            dh = 360.0 - dh;
        }
        dh <= self.hue_tolerance
    }
}

fn rgb_to_hsv(rgb: [u8; 3]) -> (f32, f32, f32) {
    let r = rgb[0] as f32 / 255.0;
    let g = rgb[1] as f32 / 255.0;
    let b = rgb[2] as f32 / 255.0;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * (((g - b) / delta).rem_euclid(6.0))
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max == 0.0 { 0.0 } else { delta / max };
    (h, s, max)
}

/// Zero-pad an image to a square of side max(w, h). Returns the padded image
/// and the offset of the original content; cropping the returned image at
/// that offset recovers the input exactly.
pub fn pad_to_square(image: &ImageBuffer) -> (ImageBuffer, Point) {
    let w = image.width();
    let h = image.height();
    if w == h {
        return (image.clone(), Point::new(0, 0));
    }
    let side = w.max(h);
    let offset = Point::new((side - w) / 2, (side - h) / 2);
    let mut out = ImageBuffer::new(RasterSize::new(side, side), [0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.set(x + offset.x, y + offset.y, image.get(x, y));
        }
    }
    (out, offset)
}

/// Threshold an image against an HSV window and keep only the largest
/// 4-connected component of accepted pixels. An image with no accepted
/// pixel yields an all-false mask.
pub fn extract_fill_mask(image: &ImageBuffer, window: &HsvWindow) -> BinaryMask {
    let size = image.size();
    let w = size.width as usize;
    let accepted: Vec<bool> = image.pixels().iter().map(|&p| window.accepts(p)).collect();

    // Label 4-connected components among accepted pixels, track the largest.
    let mut component = vec![usize::MAX; accepted.len()];
    let mut best: Option<(usize, usize)> = None; // (component id, size)
    let mut next_id = 0usize;
    let mut stack = Vec::new();
    for start in 0..accepted.len() {
        if !accepted[start] || component[start] != usize::MAX {
            continue;
        }
        let id = next_id;
        next_id += 1;
        let mut count = 0usize;
        stack.push(start);
        component[start] = id;
        while let Some(idx) = stack.pop() {
            count += 1;
            let x = idx % w;
            let y = idx / w;
            let mut visit = |nx: usize, ny: usize| {
                let nidx = ny * w + nx;
                if accepted[nidx] && component[nidx] == usize::MAX {
                    component[nidx] = id;
                    stack.push(nidx);
                }
            };
            if x > 0 {
                visit(x - 1, y);
            }
            if x + 1 < w {
                visit(x + 1, y);
            }
            if y > 0 {
                visit(x, y - 1);
            }
            if y + 1 < size.height as usize {
                visit(x, y + 1);
            }
        }
        if best.map_or(true, |(_, n)| count > n) {
            best = Some((id, count));
        }
    }

    let mut mask = BinaryMask::new(size);
    if let Some((keep, _)) = best {
        let bits: Vec<bool> = component.iter().map(|&c| c == keep).collect();
        mask = BinaryMask::from_bits(size, bits);
    }
    mask
}
