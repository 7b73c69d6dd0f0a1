//! Object detection in two stages: multi-label listing of present classes,
//! then per-class box regression by recursive grid search.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ChainContext, ChainError, GridParams};
use crate::backend::{Query, QueryKind, RegionSpec};
use crate::core::{ClassVocabulary, LabeledBox, PixelBox};

/// How the first stage lists present classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListStrategy {
    /// One query on the whole image.
    Whole,
    /// Four quadrants plus a center crop, full image attached for context;
    /// the union of the five answers. Better recall, worse precision.
    Regions,
}

#[derive(Debug, Clone)]
pub struct DetectOutcome {
    pub boxes: Vec<LabeledBox>,
    /// Classes listed in stage one whose grid search found nothing.
    pub not_found: Vec<u16>,
}

/// Stage one: which vocabulary classes are present?
pub fn list_objects(
    ctx: &mut ChainContext<'_>,
    vocab: &Arc<Vec<String>>,
    strategy: ListStrategy,
) -> Result<Vec<u16>, ChainError> {
    let bounds = ctx.source.buffer().size().full_box();
    let windows: Vec<PixelBox> = match strategy {
        ListStrategy::Whole => vec![bounds],
        ListStrategy::Regions => {
            let (w, h) = (bounds.width(), bounds.height());
            let (hw, hh) = ((w / 2).max(1), (h / 2).max(1));
            let mut v = vec![
                PixelBox::new(0, 0, hw, hh).unwrap(),
                PixelBox::new(hw.min(w - 1), 0, w, hh).unwrap(),
                PixelBox::new(0, hh.min(h - 1), hw, h).unwrap(),
                PixelBox::new(hw.min(w - 1), hh.min(h - 1), w, h).unwrap(),
            ];
            // center crop of half the side lengths
            let cx0 = w / 4;
            let cy0 = h / 4;
            v.push(PixelBox::new(cx0, cy0, (cx0 + hw).min(w), (cy0 + hh).min(h)).unwrap());
            v
        }
    };

    let mut present = std::collections::BTreeSet::new();
    for window in windows {
        let images = if window == bounds {
            vec![ctx.full_view()]
        } else {
            vec![ctx.crop_view(window), ctx.full_view()]
        };
        let query = Query {
            image_id: ctx.image_id.to_string(),
            template_id: ctx.templates.multilabel.clone(),
            kind: QueryKind::MultiLabel {
                images,
                region: RegionSpec::Window(window),
                options: vocab.clone(),
            },
        };
        let answer = ctx.session.answer(&query, ctx.transcript)?;
        if let crate::backend::AnswerPayload::Labels(labels) = answer.payload {
            for label in labels {
                if let Some(idx) = vocab.iter().position(|o| *o == label) {
                    present.insert(idx as u16);
                }
            }
        }
    }
    Ok(present.into_iter().collect())
}

/// Stage two: recursive grid search for one class assumed present.
///
/// Each round partitions the window, asks a presence sub-query per cell
/// (cell crop plus the full image for context), and shrinks the window to
/// the minimal cover of the "yes" cells. The coarse grid runs until it
/// stops discarding, then horizontal/vertical fine strips alternate. The
/// search stops when no grid in the rotation discards anything, when the
/// window is small enough, or at the iteration cap. A first round with no
/// "yes" cell at all reports the object as absent.
pub fn locate_object(
    ctx: &mut ChainContext<'_>,
    class_name: &str,
    grid: &GridParams,
) -> Result<PixelBox, ChainError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Phase {
        Coarse,
        FineH,
        FineV,
    }
    let bounds = ctx.source.buffer().size().full_box();
    let mut window = bounds;
    let mut phase = Phase::Coarse;
    let mut stalled_in_row = 0u32;

    for iteration in 0..grid.max_iterations {
        if window.width() <= grid.min_window && window.height() <= grid.min_window {
            break;
        }
        let (rows, cols) = match phase {
            Phase::Coarse => (grid.coarse_rows, grid.coarse_cols),
            Phase::FineH => (1, grid.fine_cols),
            Phase::FineV => (grid.fine_rows, 1),
        };
        let cells = partition(&window, rows, cols);
        let mut cover: Option<PixelBox> = None;
        let mut any_yes = false;
        if cells.len() > 1 {
            for cell in &cells {
                if presence(ctx, class_name, cell)? {
                    any_yes = true;
                    cover = Some(match cover {
                        None => *cell,
                        Some(c) => c.union_cover(cell),
                    });
                }
            }
            if !any_yes && iteration == 0 {
                return Err(ChainError::NotFound {
                    class: class_name.to_string(),
                });
            }
        }

        let next = cover.unwrap_or(window); // all-"no" later on: keep window
        let discarded = next != window;
        window = next;
        phase = match phase {
            Phase::Coarse if discarded => Phase::Coarse,
            Phase::Coarse => Phase::FineH,
            Phase::FineH => Phase::FineV,
            Phase::FineV => Phase::FineH,
        };
        stalled_in_row = if discarded { 0 } else { stalled_in_row + 1 };
        if stalled_in_row >= 3 {
            break; // full rotation without progress
        }
    }
    Ok(window)
}

/// The full detection chain: list classes, then locate each. Classes whose
/// search fails land in `not_found` instead of aborting the image.
pub fn detect(
    ctx: &mut ChainContext<'_>,
    class_vocab: &ClassVocabulary,
    vocab: &Arc<Vec<String>>,
    strategy: ListStrategy,
    grid: &GridParams,
) -> Result<DetectOutcome, ChainError> {
    let classes = list_objects(ctx, vocab, strategy)?;
    let mut boxes = Vec::new();
    let mut not_found = Vec::new();
    for class in classes {
        let name = class_vocab.name(class).expect("listed classes are valid");
        match locate_object(ctx, name, grid) {
            Ok(window) => boxes.push(LabeledBox::new(window, class, 1.0)),
            Err(ChainError::NotFound { .. }) => not_found.push(class),
            Err(other) => return Err(other),
        }
    }
    Ok(DetectOutcome { boxes, not_found })
}

fn presence(
    ctx: &mut ChainContext<'_>,
    class_name: &str,
    cell: &PixelBox,
) -> Result<bool, ChainError> {
    let images = if ctx.single_image {
        vec![crate::backend::ImageRef::new(
            ctx.source.clone(),
            crate::backend::ViewSpec::marked(
                crate::superpixel::RegionMask::from_box(*cell),
                ctx.marker,
            )
            .with_blank(ctx.blank),
        )]
    } else {
        vec![ctx.crop_view(*cell), ctx.full_view()]
    };
    let query = Query {
        image_id: ctx.image_id.to_string(),
        template_id: ctx.templates.presence.clone(),
        kind: QueryKind::Presence {
            images,
            window: *cell,
            class_name: class_name.to_string(),
        },
    };
    Ok(ctx.session.answer(&query, ctx.transcript)?.yes())
}

/// Split a window into a rows x cols grid of positive-area cells on integer
/// boundaries; degenerate strips collapse.
fn partition(window: &PixelBox, rows: u32, cols: u32) -> Vec<PixelBox> {
    let xs = edges(window.x_min, window.x_max, cols);
    let ys = edges(window.y_min, window.y_max, rows);
    let mut cells = Vec::with_capacity((xs.len() - 1) * (ys.len() - 1));
    for wy in ys.windows(2) {
        for wx in xs.windows(2) {
            cells.push(PixelBox::new(wx[0], wy[0], wx[1], wy[1]).expect("positive cells"));
        }
    }
    cells
}

fn edges(lo: u32, hi: u32, n: u32) -> Vec<u32> {
    let span = (hi - lo) as u64;
    let mut out: Vec<u32> = (0..=n as u64)
        .map(|i| lo + (span * i / n as u64) as u32)
        .collect();
    out.dedup();
    out
}
