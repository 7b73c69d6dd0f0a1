//! Semantic pyramids and visual markers.
//!
//! A pyramid gives a backend three nested views of one region: a tight crop,
//! a context crop around it, and the full image, with the region marked on
//! the two outer layers.

use serde::{Deserialize, Serialize};

use super::RegionMask;
use crate::core::PixelBox;
use crate::raster::ImageBuffer;

/// How a region is highlighted on an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerStyle {
    /// Closed contour tracing the region boundary.
    Curve,
    /// Outline of the region's bounding box.
    Rectangle,
    /// Small disc at the region anchor.
    Point,
}

/// Marker appearance knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub style: MarkerStyle,
    pub color: [u8; 3],
    pub stroke: u32,
}

impl Default for MarkerSpec {
    fn default() -> Self {
        Self {
            style: MarkerStyle::Curve,
            color: [255, 0, 0],
            stroke: 2,
        }
    }
}

impl MarkerSpec {
    pub fn with_style(style: MarkerStyle) -> Self {
        Self {
            style,
            ..Self::default()
        }
    }
}

/// Three nested views of a region. Layer bounds satisfy
/// crop ⊆ context ⊆ full.
#[derive(Debug, Clone)]
pub struct SemanticPyramid {
    pub crop: ImageBuffer,
    pub context: ImageBuffer,
    pub full: ImageBuffer,
    pub crop_box: PixelBox,
    pub context_box: PixelBox,
    pub marker: MarkerSpec,
}

/// Build the pyramid for a region: the crop layer is the tight bounding box,
/// the context layer scales that box by `context_factor` about its center
/// (clipped to the image), and the full layer is the whole image. The region
/// is marked on the context and full layers.
pub fn build_pyramid(
    image: &ImageBuffer,
    region: &RegionMask,
    context_factor: f64,
    marker: MarkerSpec,
) -> SemanticPyramid {
    let full_box = image.size().full_box();
    let crop_box = region.bbox;
    let context_box = crop_box.scale_about_center(context_factor, &full_box);
    let marked = draw_marker(image, region, marker);
    SemanticPyramid {
        crop: image.crop(&crop_box),
        context: marked.crop(&context_box),
        full: marked,
        crop_box,
        context_box,
        marker,
    }
}

/// Return a copy of the image with the region marker overlaid; the input is
/// untouched.
pub fn draw_marker(image: &ImageBuffer, region: &RegionMask, marker: MarkerSpec) -> ImageBuffer {
    let mut out = image.clone();
    let w = image.width();
    let h = image.height();
    let stroke = marker.stroke.max(1);
    match marker.style {
        MarkerStyle::Rectangle => {
            let b = region.bbox;
            for t in 0..stroke {
                for x in b.x_min..b.x_max {
                    if b.y_min + t < h {
                        out.set(x, b.y_min + t, marker.color);
                    }
                    if b.y_max > t {
                        out.set(x, b.y_max - 1 - t, marker.color);
                    }
                }
                for y in b.y_min..b.y_max {
                    if b.x_min + t < w {
                        out.set(b.x_min + t, y, marker.color);
                    }
                    if b.x_max > t {
                        out.set(b.x_max - 1 - t, y, marker.color);
                    }
                }
            }
        }
        MarkerStyle::Point => {
            let radius = (stroke + 1) as i64;
            let cx = region.anchor.x as i64;
            let cy = region.anchor.y as i64;
            for dy in -radius..=radius {
                for dx in -radius..=radius {
                    if dx * dx + dy * dy <= radius * radius {
                        let x = cx + dx;
                        let y = cy + dy;
                        if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                            out.set(x as u32, y as u32, marker.color);
                        }
                    }
                }
            }
        }
        MarkerStyle::Curve => {
            // Boundary pixels: inside the region with a 4-neighbor outside
            // (or at the image edge), thickened inward by the stroke width.
            let boundary = boundary_pixels(region, w, h);
            let r = stroke as i64 - 1;
            for &(bx, by) in &boundary {
                for dy in -r..=r {
                    for dx in -r..=r {
                        let x = bx as i64 + dx;
                        let y = by as i64 + dy;
                        if x >= 0
                            && y >= 0
                            && (x as u32) < w
                            && (y as u32) < h
                            && region.contains(x as u32, y as u32)
                        {
                            out.set(x as u32, y as u32, marker.color);
                        }
                    }
                }
            }
        }
    }
    out
}

/// Pixels of the region that touch its outside through a 4-neighbor (image
/// borders count as outside contact).
pub fn boundary_pixels(region: &RegionMask, width: u32, height: u32) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    for y in region.bbox.y_min..region.bbox.y_max {
        for x in region.bbox.x_min..region.bbox.x_max {
            if !region.contains(x, y) {
                continue;
            }
            let edge = x == 0 || y == 0 || x + 1 == width || y + 1 == height;
            let exposed = edge
                || !region.contains(x.wrapping_sub(1), y)
                || !region.contains(x + 1, y)
                || !region.contains(x, y.wrapping_sub(1))
                || !region.contains(x, y + 1);
            if exposed {
                out.push((x, y));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{Point, RasterSize};
    use crate::superpixel::SuperpixelMap;

    const BG: [u8; 3] = [10, 20, 30];
    const RED: [u8; 3] = [255, 0, 0];

    fn image(w: u32, h: u32) -> ImageBuffer {
        ImageBuffer::new(RasterSize::new(w, h), BG)
    }

    #[test]
    fn whole_image_region_gives_full_extent_layers() {
        let img = image(8, 8);
        let region = RegionMask::from_box(img.size().full_box());
        let p = build_pyramid(&img, &region, 2.0, MarkerSpec::default());
        assert_eq!(p.crop_box, img.size().full_box());
        assert_eq!(p.context_box, img.size().full_box());
        assert_eq!(p.crop.size(), img.size());
        assert_eq!(p.context.size(), img.size());
        assert_eq!(p.full.size(), img.size());
    }

    #[test]
    fn centered_region_context_scales() {
        // 10x10 region centered in a 100x100 image, factor 2 -> 20x20 context
        // with the same center.
        let img = image(100, 100);
        let region = RegionMask::from_box(PixelBox::new(45, 45, 55, 55).unwrap());
        let p = build_pyramid(&img, &region, 2.0, MarkerSpec::default());
        assert_eq!(p.context_box, PixelBox::new(40, 40, 60, 60).unwrap());
        assert_eq!(p.crop.size(), RasterSize::new(10, 10));
        assert_eq!(p.context.size(), RasterSize::new(20, 20));
    }

    #[test]
    fn corner_region_context_clips() {
        let img = image(100, 100);
        let region = RegionMask::from_box(PixelBox::new(0, 0, 10, 10).unwrap());
        let p = build_pyramid(&img, &region, 2.0, MarkerSpec::default());
        assert_eq!(p.context_box, PixelBox::new(0, 0, 15, 15).unwrap());
    }

    #[test]
    fn layer_bounds_nest() {
        let img = image(64, 48);
        for (x0, y0, x1, y1) in [(0, 0, 5, 5), (60, 40, 64, 48), (10, 20, 30, 25)] {
            let region = RegionMask::from_box(PixelBox::new(x0, y0, x1, y1).unwrap());
            let p = build_pyramid(&img, &region, 2.0, MarkerSpec::default());
            assert!(p.context_box.contains_box(&p.crop_box));
            assert!(img.size().full_box().contains_box(&p.context_box));
        }
    }

    #[test]
    fn rectangle_marker_is_local() {
        let img = image(20, 20);
        let region = RegionMask::from_box(PixelBox::new(5, 5, 12, 12).unwrap());
        let marked = draw_marker(&img, &region, MarkerSpec::with_style(MarkerStyle::Rectangle));
        assert_eq!(marked.get(5, 5), RED);
        assert_eq!(marked.get(11, 6), RED);
        assert_eq!(marked.get(8, 8), BG, "interior untouched");
        assert_eq!(marked.get(0, 0), BG, "outside untouched");
        assert_eq!(img.get(5, 5), BG, "input untouched");
    }

    #[test]
    fn point_marker_is_a_disc_at_anchor() {
        let img = image(20, 20);
        let region = RegionMask::from_box(PixelBox::new(4, 4, 13, 13).unwrap());
        let marked = draw_marker(&img, &region, MarkerSpec::with_style(MarkerStyle::Point));
        let anchor = region.anchor;
        assert_eq!(anchor, Point::new(8, 8));
        assert_eq!(marked.get(8, 8), RED);
        assert_eq!(marked.get(8, 11), RED); // radius stroke+1 = 3
        assert_eq!(marked.get(0, 0), BG);
        assert_eq!(marked.get(15, 8), BG);
    }

    #[test]
    fn curve_marker_traces_the_boundary() {
        // Synthetic blob: a plus-shape segment inside a 9x9 image.
        let mut labels = vec![0u32; 81];
        let mut blob = vec![];
        for (x, y) in [(4, 2), (4, 3), (3, 3), (5, 3), (4, 4), (4, 5)] {
            labels[y * 9 + x] = 1;
            blob.push((x as u32, y as u32));
        }
        // make ids dense: background 0 first pixel, blob 1 — already dense
        let map = SuperpixelMap::from_labels(RasterSize::new(9, 9), labels.iter().map(|&l| l).collect());
        let region = map.region_of(1);
        let img = image(9, 9);
        let marked = draw_marker(&img, &region, MarkerSpec { stroke: 1, ..MarkerSpec::default() });

        // Oracle: every blob pixel with a 4-neighbor outside the blob must be
        // recolored; everything outside the blob stays background.
        for y in 0..9u32 {
            for x in 0..9u32 {
                let inside = blob.contains(&(x, y));
                let exposed = inside
                    && [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)]
                        .iter()
                        .any(|&(nx, ny)| nx >= 9 || ny >= 9 || !blob.contains(&(nx, ny)));
                if exposed {
                    assert_eq!(marked.get(x, y), RED, "boundary pixel ({x},{y})");
                } else if !inside {
                    assert_eq!(marked.get(x, y), BG, "outside pixel ({x},{y})");
                }
            }
        }
    }
}
