//! SLIC superpixelation and the spatial substrate built on it: adjacency
//! graphs, region masks, semantic pyramids, visual markers, and pair
//! sampling.

mod graph;
mod pairs;
mod pyramid;
mod slic;

pub use graph::{adjacency, AdjacencyGraph};
pub use pairs::{sample_pairs, PairSample};
pub use pyramid::{build_pyramid, draw_marker, MarkerSpec, MarkerStyle, SemanticPyramid};
pub use slic::slic;

use thiserror::Error;

use crate::core::{PixelBox, Point, RasterSize};

#[derive(Debug, Error)]
pub enum SuperpixelError {
    #[error("requested {requested} superpixels but the image has {pixels} pixels")]
    TooManySegments { requested: usize, pixels: usize },
    #[error("pair sampling needs at least 2 segments, map has {0}")]
    NotEnoughSegments(usize),
    #[error("pair count must be positive")]
    NonPositivePairCount,
    #[error("segment id {id} out of range (k={k})")]
    SegmentOutOfRange { id: u32, k: u32 },
}

/// Per-segment summary statistics.
#[derive(Debug, Clone)]
pub struct SegmentStats {
    pub pixel_count: u32,
    pub bbox: PixelBox,
    /// Arithmetic centroid; may fall outside a concave segment.
    pub centroid: (f64, f64),
    /// A pixel inside the segment closest to the centroid.
    pub anchor: Point,
}

/// A partition of an image into k 4-connected segments with dense ids
/// 0..k-1. Every pixel carries exactly one label.
#[derive(Debug, Clone)]
pub struct SuperpixelMap {
    size: RasterSize,
    labels: Vec<u32>,
    k: u32,
    stats: Vec<SegmentStats>,
    members: Vec<Vec<u32>>,
}

impl SuperpixelMap {
    /// Build a map from a label raster; ids must already be dense 0..k-1.
    pub fn from_labels(size: RasterSize, labels: Vec<u32>) -> Self {
        assert_eq!(labels.len(), size.pixels());
        let k = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); k as usize];
        for (idx, &l) in labels.iter().enumerate() {
            members[l as usize].push(idx as u32);
        }
        let stats = members
            .iter()
            .map(|pix| {
                debug_assert!(!pix.is_empty(), "ids must be dense");
                let w = size.width;
                let mut min_x = u32::MAX;
                let mut min_y = u32::MAX;
                let mut max_x = 0u32;
                let mut max_y = 0u32;
                let mut sx = 0f64;
                let mut sy = 0f64;
                for &idx in pix {
                    let x = idx % w;
                    let y = idx / w;
                    min_x = min_x.min(x);
                    min_y = min_y.min(y);
                    max_x = max_x.max(x);
                    max_y = max_y.max(y);
                    sx += x as f64;
                    sy += y as f64;
                }
                let n = pix.len() as f64;
                let centroid = (sx / n, sy / n);
                let anchor = pix
                    .iter()
                    .map(|&idx| {
                        let x = idx % w;
                        let y = idx / w;
                        let dx = x as f64 - centroid.0;
                        let dy = y as f64 - centroid.1;
                        (dx * dx + dy * dy, idx, Point::new(x, y))
                    })
                    .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)))
                    .map(|(_, _, p)| p)
                    .expect("nonempty segment");
                SegmentStats {
                    pixel_count: pix.len() as u32,
                    bbox: PixelBox::new(min_x, min_y, max_x + 1, max_y + 1).unwrap(),
                    centroid,
                    anchor,
                }
            })
            .collect();
        Self {
            size,
            labels,
            k,
            stats,
            members,
        }
    }

    pub fn size(&self) -> RasterSize {
        self.size
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label_at(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.size.width as usize + x as usize]
    }

    pub fn segment_at(&self, p: Point) -> u32 {
        self.label_at(p.x, p.y)
    }

    pub fn stats(&self, id: u32) -> &SegmentStats {
        &self.stats[id as usize]
    }

    /// Pixel indices (row-major) belonging to a segment.
    pub fn members(&self, id: u32) -> &[u32] {
        &self.members[id as usize]
    }

    pub fn member_indices(&self, id: u32) -> Vec<usize> {
        self.members[id as usize]
            .iter()
            .map(|&i| i as usize)
            .collect()
    }

    /// Region mask of one segment.
    pub fn region_of(&self, id: u32) -> RegionMask {
        self.region_of_union(std::slice::from_ref(&id))
    }

    /// Region mask of a union of segments (a cluster).
    pub fn region_of_union(&self, ids: &[u32]) -> RegionMask {
        assert!(!ids.is_empty());
        let mut bbox = self.stats[ids[0] as usize].bbox;
        for &id in &ids[1..] {
            bbox = bbox.union_cover(&self.stats[id as usize].bbox);
        }
        let bw = bbox.width() as usize;
        let mut bits = vec![false; bbox.area() as usize];
        let w = self.size.width;
        for &id in ids {
            for &idx in &self.members[id as usize] {
                let x = idx % w;
                let y = idx / w;
                bits[(y - bbox.y_min) as usize * bw + (x - bbox.x_min) as usize] = true;
            }
        }
        let anchor = if ids.len() == 1 {
            self.stats[ids[0] as usize].anchor
        } else {
            // anchor of the largest member segment
            let largest = ids
                .iter()
                .copied()
                .max_by_key(|&id| (self.stats[id as usize].pixel_count, std::cmp::Reverse(id)))
                .unwrap();
            self.stats[largest as usize].anchor
        };
        RegionMask { bbox, bits, anchor }
    }
}

/// A pixel region: a bounding box plus a box-local membership bitmap and a
/// representative anchor pixel guaranteed to lie inside the region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    pub bbox: PixelBox,
    /// Row-major within `bbox`.
    pub bits: Vec<bool>,
    pub anchor: Point,
}

impl RegionMask {
    /// A solid rectangular region.
    pub fn from_box(bbox: PixelBox) -> Self {
        let anchor = Point::new(
            bbox.x_min + bbox.width() / 2,
            bbox.y_min + bbox.height() / 2,
        );
        Self {
            bbox,
            bits: vec![true; bbox.area() as usize],
            anchor,
        }
    }

    #[inline]
    pub fn contains(&self, x: u32, y: u32) -> bool {
        if x < self.bbox.x_min || x >= self.bbox.x_max || y < self.bbox.y_min || y >= self.bbox.y_max
        {
            return false;
        }
        self.bits[(y - self.bbox.y_min) as usize * self.bbox.width() as usize
            + (x - self.bbox.x_min) as usize]
    }

    pub fn pixel_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Image-absolute row-major pixel indices of the region.
    pub fn member_indices(&self, image_width: u32) -> Vec<usize> {
        let mut out = Vec::new();
        for y in self.bbox.y_min..self.bbox.y_max {
            for x in self.bbox.x_min..self.bbox.x_max {
                if self.contains(x, y) {
                    out.push(y as usize * image_width as usize + x as usize);
                }
            }
        }
        out
    }

    /// Stable content digest for fingerprinting queries.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for v in [
            self.bbox.x_min,
            self.bbox.y_min,
            self.bbox.x_max,
            self.bbox.y_max,
        ] {
            hasher.update(v.to_le_bytes());
        }
        let mut packed = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                packed[i / 8] |= 1 << (i % 8);
            }
        }
        hasher.update(&packed);
        hex::encode(&hasher.finalize()[..16])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_stats_and_partition() {
        // 4x2 split into left/right halves.
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let map = SuperpixelMap::from_labels(RasterSize::new(4, 2), labels);
        assert_eq!(map.k(), 2);
        assert_eq!(map.stats(0).pixel_count, 4);
        assert_eq!(map.stats(0).bbox, PixelBox::new(0, 0, 2, 2).unwrap());
        assert_eq!(map.stats(1).bbox, PixelBox::new(2, 0, 4, 2).unwrap());
        let total: u32 = (0..map.k()).map(|i| map.stats(i).pixel_count).sum();
        assert_eq!(total as usize, map.size().pixels());
        assert_eq!(map.segment_at(Point::new(3, 1)), 1);
    }

    #[test]
    fn region_mask_union() {
        let labels = vec![0, 1, 2, 3];
        let map = SuperpixelMap::from_labels(RasterSize::new(2, 2), labels);
        let region = map.region_of_union(&[0, 3]);
        assert_eq!(region.bbox, PixelBox::new(0, 0, 2, 2).unwrap());
        assert_eq!(region.pixel_count(), 2);
        assert!(region.contains(0, 0));
        assert!(!region.contains(1, 0));
        assert!(region.contains(1, 1));
        assert_eq!(region.member_indices(2), vec![0, 3]);
    }

    #[test]
    fn anchor_lies_inside_segment() {
        // L-shaped segment 0 whose centroid is outside it.
        #[rustfmt::skip]
        let labels = vec![
            0, 1, 1,
            0, 1, 1,
            0, 0, 0,
        ];
        let map = SuperpixelMap::from_labels(RasterSize::new(3, 3), labels);
        let anchor = map.stats(0).anchor;
        assert_eq!(map.segment_at(anchor), 0);
    }
}
