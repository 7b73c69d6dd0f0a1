//! Point-prompted grouping: breadth-first growth over the superpixel
//! adjacency graph, asking the backend whether each frontier superpixel
//! belongs to the same object as the current cluster.

use std::collections::VecDeque;

use super::{ChainContext, ChainError};
use crate::backend::{ImageRef, Query, QueryKind, RegionSpec, ViewSpec};
use crate::core::Point;
use crate::raster::BinaryMask;
use crate::superpixel::{adjacency, slic, MarkerSpec, SuperpixelMap};

/// Grow an object mask from a query point. The seed superpixel is always
/// included; every other superpixel is queried at most once, when it first
/// becomes adjacent to the accepted cluster.
pub fn group_point(
    ctx: &mut ChainContext<'_>,
    point: Point,
    k: usize,
    compactness: f64,
    slic_iterations: usize,
) -> Result<(BinaryMask, SuperpixelMap), ChainError> {
    let size = ctx.source.buffer().size();
    if !size.contains(point) {
        return Err(ChainError::PointOutOfBounds {
            x: point.x,
            y: point.y,
        });
    }
    let map = slic(ctx.source.buffer(), k, compactness, slic_iterations)?;
    let graph = adjacency(&map);
    let seed = map.segment_at(point);

    let mut accepted: Vec<u32> = vec![seed];
    let mut visited = vec![false; map.k() as usize];
    visited[seed as usize] = true;
    let mut queue: VecDeque<u32> = VecDeque::new();
    for &nb in graph.neighbors(seed) {
        visited[nb as usize] = true;
        queue.push_back(nb);
    }

    while let Some(candidate) = queue.pop_front() {
        let candidate_region = map.region_of(candidate);
        let cluster_region = map.region_of_union(&accepted);
        let images = if ctx.single_image {
            // One view: cluster in the marker color, candidate in blue.
            let blue = MarkerSpec {
                color: [0, 80, 255],
                ..ctx.marker
            };
            let view = ViewSpec {
                blank: ctx.blank,
                overlays: vec![
                    crate::backend::Overlay {
                        region: cluster_region.clone(),
                        marker: ctx.marker,
                    },
                    crate::backend::Overlay {
                        region: candidate_region.clone(),
                        marker: blue,
                    },
                ],
                crop: None,
            };
            vec![ImageRef::new(ctx.source.clone(), view)]
        } else {
            let mut v = ctx.region_views(&candidate_region);
            v.extend(ctx.region_views(&cluster_region));
            v
        };
        let query = Query {
            image_id: ctx.image_id.to_string(),
            template_id: ctx.templates.same_object.clone(),
            kind: QueryKind::SameObject {
                images,
                candidate: RegionSpec::Region(candidate_region),
                cluster: RegionSpec::Region(cluster_region),
            },
        };
        if ctx.session.answer(&query, ctx.transcript)?.yes() {
            accepted.push(candidate);
            for &nb in graph.neighbors(candidate) {
                if !visited[nb as usize] {
                    visited[nb as usize] = true;
                    queue.push_back(nb);
                }
            }
        }
    }

    let mut mask = BinaryMask::new(size);
    for &id in &accepted {
        for &pix in map.members(id) {
            let x = pix % size.width;
            let y = pix / size.width;
            mask.set(x, y, true);
        }
    }
    Ok((mask, map))
}
