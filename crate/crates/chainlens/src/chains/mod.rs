//! The task chains: each one reduces a vision task to a sequence of
//! backend sub-queries and reassembles the answers into the task's output.

mod classify;
mod detect;
mod group;
mod ranks;
mod segment;

pub use classify::classify_batch;
pub use detect::{detect, list_objects, locate_object, DetectOutcome, ListStrategy};
pub use group::group_point;
pub use ranks::{estimate_depth_ranks, estimate_normal_ranks, DepthOutcome, NormalsOutcome, RankParams};
pub use segment::segment_image;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, ImageRef, Session, SourceImage, Transcript, ViewSpec};
use crate::globalize::GlobalizeError;
use crate::superpixel::{MarkerSpec, RegionMask, SuperpixelError};

#[derive(Debug, Error)]
pub enum ChainError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Superpixel(#[from] SuperpixelError),
    #[error(transparent)]
    Globalize(#[from] GlobalizeError),
    #[error("object {class:?} not found: every cell of the first grid answered no")]
    NotFound { class: String },
    #[error("point ({x}, {y}) outside the image")]
    PointOutOfBounds { x: u32, y: u32 },
    #[error("answer {answer:?} is not a vocabulary class")]
    UnknownClass { answer: String },
}

/// Recursive grid-search geometry. The coarse grid drives the initial
/// shrinking; once it stops discarding cells, single-strip fine grids
/// (1 x fine_cols alternating with fine_rows x 1) refine the edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridParams {
    pub coarse_rows: u32,
    pub coarse_cols: u32,
    pub fine_rows: u32,
    pub fine_cols: u32,
    pub max_iterations: u32,
    /// Stop refining once the window is at most this many pixels on both
    /// sides.
    pub min_window: u32,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            coarse_rows: 3,
            coarse_cols: 3,
            fine_rows: 9,
            fine_cols: 9,
            max_iterations: 10,
            min_window: 8,
        }
    }
}

/// Template ids used by the chains, overridable per run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateIds {
    pub classify: String,
    pub segment: String,
    pub multilabel: String,
    pub presence: String,
    pub same_object: String,
    pub pair_depth: String,
    pub pair_axis: String,
}

impl Default for TemplateIds {
    fn default() -> Self {
        Self {
            classify: "classify_v1".into(),
            segment: "segment_v1".into(),
            multilabel: "multilabel_v1".into(),
            presence: "presence_v1".into(),
            same_object: "same_object_v1".into(),
            pair_depth: "pair_depth_v1".into(),
            pair_axis: "pair_axis_v1".into(),
        }
    }
}

/// Everything a chain needs besides its task parameters: the session, the
/// image, rendering knobs, and the transcript it appends to.
pub struct ChainContext<'a> {
    pub session: &'a Session,
    pub image_id: &'a str,
    pub source: SourceImage,
    pub templates: &'a TemplateIds,
    pub marker: MarkerSpec,
    pub context_factor: f64,
    /// Blind-guess mode: payloads render as this solid color.
    pub blank: Option<[u8; 3]>,
    /// Single-image compatibility: pyramids collapse to one marked full
    /// image.
    pub single_image: bool,
    pub transcript: &'a mut Transcript,
}

impl ChainContext<'_> {
    /// The view stack shown for one region: crop/context/full pyramid, or a
    /// single marked full image in single-image mode.
    pub(crate) fn region_views(&self, region: &RegionMask) -> Vec<ImageRef> {
        let bounds = self.source.buffer().size().full_box();
        if self.single_image {
            vec![ImageRef::new(
                self.source.clone(),
                ViewSpec::marked(region.clone(), self.marker).with_blank(self.blank),
            )]
        } else {
            ViewSpec::pyramid(region, self.context_factor, self.marker, bounds, self.blank)
                .into_iter()
                .map(|view| ImageRef::new(self.source.clone(), view))
                .collect()
        }
    }

    pub(crate) fn full_view(&self) -> ImageRef {
        ImageRef::new(
            self.source.clone(),
            ViewSpec::full().with_blank(self.blank),
        )
    }

    pub(crate) fn crop_view(&self, window: crate::core::PixelBox) -> ImageRef {
        ImageRef::new(
            self.source.clone(),
            ViewSpec::cropped(window).with_blank(self.blank),
        )
    }
}
