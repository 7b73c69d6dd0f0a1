//! Semantic segmentation: superpixels classified in sequential batches,
//! each prompt carrying the history of previous assignments, then
//! flood-filled into a full index mask.

use std::sync::Arc;

use super::{ChainContext, ChainError};
use crate::backend::{
    AnswerPayload, BackendError, ChoiceItem, Query, QueryKind, RegionSpec,
};
use crate::raster::{IndexMask, DEFAULT_IGNORE_INDEX};
use crate::superpixel::{slic, SuperpixelMap};

/// Classify every superpixel and flood-fill the answers. A superpixel whose
/// answer stays unparsable even after the per-item fallback is filled with
/// the ignore sentinel.
#[allow(clippy::too_many_arguments)]
pub fn segment_image(
    ctx: &mut ChainContext<'_>,
    vocab: &Arc<Vec<String>>,
    k: usize,
    batch_size: usize,
    compactness: f64,
    slic_iterations: usize,
) -> Result<(IndexMask, SuperpixelMap), ChainError> {
    let map = slic(ctx.source.buffer(), k, compactness, slic_iterations)?;
    let ids: Vec<u32> = (0..map.k()).collect();
    let chunk = if ctx.session.config().batching {
        batch_size.max(1)
    } else {
        1
    };

    let mut history: Vec<(String, String)> = Vec::new();
    let mut assigned: Vec<u16> = vec![DEFAULT_IGNORE_INDEX; map.k() as usize];
    for batch in ids.chunks(chunk) {
        let items: Vec<ChoiceItem> = batch
            .iter()
            .map(|&id| {
                let region = map.region_of(id);
                ChoiceItem::new(
                    ctx.region_views(&region),
                    RegionSpec::Region(region),
                    format!("superpixel {id}"),
                )
            })
            .collect();
        let query = Query {
            image_id: ctx.image_id.to_string(),
            template_id: ctx.templates.segment.clone(),
            kind: QueryKind::MultiChoice {
                items: items.clone(),
                options: vocab.clone(),
                history: history.clone(),
            },
        };
        let choices = match ctx.session.answer(&query, ctx.transcript) {
            Ok(answer) => match answer.payload {
                AnswerPayload::Choices(c) => c.into_iter().map(Some).collect(),
                _ => unreachable!("multi-choice answers carry choices"),
            },
            Err(BackendError::InvalidAnswer { .. }) if batch.len() > 1 => {
                // Positional mismatch: fall back to one query per item.
                let mut per_item = Vec::with_capacity(batch.len());
                for item in &items {
                    let single = Query {
                        image_id: ctx.image_id.to_string(),
                        template_id: ctx.templates.segment.clone(),
                        kind: QueryKind::MultiChoice {
                            items: vec![item.clone()],
                            options: vocab.clone(),
                            history: history.clone(),
                        },
                    };
                    match ctx.session.answer(&single, ctx.transcript) {
                        Ok(answer) => match answer.payload {
                            AnswerPayload::Choices(mut c) => per_item.push(Some(c.remove(0))),
                            _ => unreachable!(),
                        },
                        Err(BackendError::InvalidAnswer { .. }) => per_item.push(None),
                        Err(e) => return Err(e.into()),
                    }
                }
                per_item
            }
            Err(BackendError::InvalidAnswer { .. }) => vec![None],
            Err(e) => return Err(e.into()),
        };

        for (&id, choice) in batch.iter().zip(choices) {
            if let Some(option) = choice {
                if let Some(class) = vocab.iter().position(|o| *o == option) {
                    assigned[id as usize] = class as u16;
                }
                history.push((format!("superpixel {id}"), option));
            }
        }
    }

    let size = map.size();
    let mut mask = IndexMask::new(size, DEFAULT_IGNORE_INDEX);
    for (idx, &label) in map.labels().iter().enumerate() {
        let x = (idx % size.width as usize) as u32;
        let y = (idx / size.width as usize) as u32;
        mask.set(x, y, assigned[label as usize]);
    }
    Ok((mask, map))
}
