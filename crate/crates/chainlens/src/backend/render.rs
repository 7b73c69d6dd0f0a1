//! Lazy payload views: queries carry a recipe (source image, optional blank
//! substitution, overlays, crop) instead of encoded bytes, so grounded
//! backends never pay for rendering and remote backends materialize
//! payloads only when a request is actually built.

use std::sync::Arc;

use crate::core::PixelBox;
use crate::raster::ImageBuffer;
use crate::superpixel::{draw_marker, MarkerSpec, RegionMask};

/// A source image with its content digest computed once.
#[derive(Debug, Clone)]
pub struct SourceImage {
    buffer: Arc<ImageBuffer>,
    digest: Arc<str>,
}

impl SourceImage {
    pub fn new(buffer: Arc<ImageBuffer>) -> Self {
        let digest: Arc<str> = buffer.content_digest().into();
        Self { buffer, digest }
    }

    pub fn buffer(&self) -> &ImageBuffer {
        &self.buffer
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    pub region: RegionMask,
    pub marker: MarkerSpec,
}

/// Rendering recipe applied to a source image, in order: blank substitution,
/// marker overlays, crop.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewSpec {
    /// Replace the pixel content with a solid color of the same size
    /// (blind-guess runs); markers and crops still apply.
    pub blank: Option<[u8; 3]>,
    pub overlays: Vec<Overlay>,
    pub crop: Option<PixelBox>,
}

impl ViewSpec {
    pub fn full() -> Self {
        Self::default()
    }

    pub fn cropped(window: PixelBox) -> Self {
        Self {
            crop: Some(window),
            ..Self::default()
        }
    }

    pub fn marked(region: RegionMask, marker: MarkerSpec) -> Self {
        Self {
            overlays: vec![Overlay { region, marker }],
            ..Self::default()
        }
    }

    pub fn with_blank(mut self, blank: Option<[u8; 3]>) -> Self {
        self.blank = blank;
        self
    }

    pub fn with_crop(mut self, window: PixelBox) -> Self {
        self.crop = Some(window);
        self
    }

    /// The three pyramid views of a region: tight crop, marked context crop,
    /// marked full image.
    pub fn pyramid(
        region: &RegionMask,
        context_factor: f64,
        marker: MarkerSpec,
        image_bounds: PixelBox,
        blank: Option<[u8; 3]>,
    ) -> [ViewSpec; 3] {
        let context_box = region.bbox.scale_about_center(context_factor, &image_bounds);
        [
            ViewSpec::cropped(region.bbox).with_blank(blank),
            ViewSpec::marked(region.clone(), marker)
                .with_crop(context_box)
                .with_blank(blank),
            ViewSpec::marked(region.clone(), marker).with_blank(blank),
        ]
    }

    pub(crate) fn fingerprint(&self, out: &mut String) {
        if let Some(c) = self.blank {
            out.push_str(&format!("blank:{},{},{};", c[0], c[1], c[2]));
        }
        for o in &self.overlays {
            out.push_str(&format!(
                "mark:{:?}:{},{},{}:{}:{};",
                o.marker.style, o.marker.color[0], o.marker.color[1], o.marker.color[2],
                o.marker.stroke,
                o.region.digest()
            ));
        }
        if let Some(b) = self.crop {
            out.push_str(&format!("crop:{},{},{},{}", b.x_min, b.y_min, b.x_max, b.y_max));
        }
    }
}

/// Materialize a view.
pub fn render_view(source: &SourceImage, view: &ViewSpec) -> ImageBuffer {
    let mut img = match view.blank {
        Some(color) => ImageBuffer::new(source.buffer().size(), color),
        None => source.buffer().clone(),
    };
    for overlay in &view.overlays {
        img = draw_marker(&img, &overlay.region, overlay.marker);
    }
    if let Some(window) = view.crop {
        img = img.crop(&window);
    }
    img
}
