//! Seeded sampling of distinct unordered segment pairs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SuperpixelError, SuperpixelMap};
use crate::core::Point;

/// An unordered pair of distinct segments with marker anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairSample {
    pub i: u32,
    pub j: u32,
    pub anchor_i: Point,
    pub anchor_j: Point,
}

/// Sample up to `n` distinct unordered pairs without replacement,
/// deterministic under `seed`. The result is capped at k(k-1)/2.
pub fn sample_pairs(
    map: &SuperpixelMap,
    n: usize,
    seed: u64,
) -> Result<Vec<PairSample>, SuperpixelError> {
    let k = map.k();
    if k < 2 {
        return Err(SuperpixelError::NotEnoughSegments(k as usize));
    }
    if n == 0 {
        return Err(SuperpixelError::NonPositivePairCount);
    }
    let total = k as usize * (k as usize - 1) / 2;
    let take = n.min(total);

    let mut all: Vec<(u32, u32)> = Vec::with_capacity(total);
    for i in 0..k {
        for j in (i + 1)..k {
            all.push((i, j));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (picked, _) = all.partial_shuffle(&mut rng, take);

    Ok(picked
        .iter()
        .map(|&(i, j)| PairSample {
            i,
            j,
            anchor_i: map.stats(i).anchor,
            anchor_j: map.stats(j).anchor,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RasterSize;

    fn grid_map(side: u32) -> SuperpixelMap {
        // side x side image of singleton segments
        let labels: Vec<u32> = (0..side * side).collect();
        SuperpixelMap::from_labels(RasterSize::new(side, side), labels)
    }

    #[test]
    fn deterministic_under_seed() {
        let map = grid_map(10);
        assert_eq!(sample_pairs(&map, 30, 42).unwrap(), sample_pairs(&map, 30, 42).unwrap());
        assert_ne!(sample_pairs(&map, 30, 42).unwrap(), sample_pairs(&map, 30, 43).unwrap());
    }

    #[test]
    fn exhausts_all_pairs_when_n_large() {
        let labels = vec![0, 1, 2, 2];
        let map = SuperpixelMap::from_labels(RasterSize::new(2, 2), labels);
        let mut pairs: Vec<(u32, u32)> = sample_pairs(&map, 10, 0)
            .unwrap()
            .iter()
            .map(|p| (p.i, p.j))
            .collect();
        pairs.sort_unstable();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn pairs_are_distinct_and_valid() {
        let map = grid_map(10); // k = 100
        let pairs = sample_pairs(&map, 200, 7).unwrap();
        assert_eq!(pairs.len(), 200);
        let mut seen = std::collections::HashSet::new();
        for p in &pairs {
            assert!(p.i < p.j, "normalized order");
            assert!(p.j < 100);
            assert!(seen.insert((p.i, p.j)), "duplicate pair {:?}", (p.i, p.j));
            assert_eq!(map.segment_at(p.anchor_i), p.i);
            assert_eq!(map.segment_at(p.anchor_j), p.j);
        }
    }

    #[test]
    fn zero_count_rejected() {
        let map = grid_map(3);
        assert!(sample_pairs(&map, 0, 1).is_err());
    }
}
