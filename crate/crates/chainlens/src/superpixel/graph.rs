//! Segment adjacency: an undirected graph with one node per superpixel and
//! an edge wherever two segments share a 4-neighbor pixel pair.

use std::collections::BTreeSet;

use super::SuperpixelMap;

#[derive(Debug, Clone)]
pub struct AdjacencyGraph {
    k: u32,
    edges: Vec<(u32, u32)>,
    neighbors: Vec<Vec<u32>>,
}

impl AdjacencyGraph {
    pub fn node_count(&self) -> u32 {
        self.k
    }

    /// Edges as (i, j) with i < j, sorted.
    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, id: u32) -> &[u32] {
        &self.neighbors[id as usize]
    }

    pub fn are_adjacent(&self, i: u32, j: u32) -> bool {
        self.neighbors[i as usize].binary_search(&j).is_ok()
    }
}

pub fn adjacency(map: &SuperpixelMap) -> AdjacencyGraph {
    let size = map.size();
    let w = size.width;
    let h = size.height;
    let labels = map.labels();
    let mut set: BTreeSet<(u32, u32)> = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            let a = labels[idx];
            if x + 1 < w {
                let b = labels[idx + 1];
                if a != b {
                    set.insert((a.min(b), a.max(b)));
                }
            }
            if y + 1 < h {
                let b = labels[idx + w as usize];
                if a != b {
                    set.insert((a.min(b), a.max(b)));
                }
            }
        }
    }
    let edges: Vec<(u32, u32)> = set.into_iter().collect();
    let mut neighbors = vec![Vec::new(); map.k() as usize];
    for &(i, j) in &edges {
        neighbors[i as usize].push(j);
        neighbors[j as usize].push(i);
    }
    for list in &mut neighbors {
        list.sort_unstable();
    }
    AdjacencyGraph {
        k: map.k(),
        edges,
        neighbors,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RasterSize;

    #[test]
    fn single_segment_has_no_edges() {
        let map = SuperpixelMap::from_labels(RasterSize::new(3, 3), vec![0; 9]);
        let g = adjacency(&map);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn halves_share_one_edge() {
        let labels = vec![0, 0, 1, 1, 0, 0, 1, 1];
        let map = SuperpixelMap::from_labels(RasterSize::new(4, 2), labels);
        let g = adjacency(&map);
        assert_eq!(g.edges(), &[(0, 1)]);
        assert!(g.are_adjacent(0, 1));
    }

    #[test]
    fn four_singletons_no_diagonals() {
        let map = SuperpixelMap::from_labels(RasterSize::new(2, 2), vec![0, 1, 2, 3]);
        let g = adjacency(&map);
        assert_eq!(g.edges(), &[(0, 1), (0, 2), (1, 3), (2, 3)]);
        assert!(!g.are_adjacent(0, 3));
        assert!(!g.are_adjacent(1, 2));
    }

    #[test]
    fn matches_brute_force_on_random_maps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let size = RasterSize::new(rng.gen_range(2..9), rng.gen_range(2..9));
            // Random Voronoi-ish labels then densify.
            let k = rng.gen_range(2..5u32);
            let raw: Vec<u32> = (0..size.pixels()).map(|_| rng.gen_range(0..k)).collect();
            let mut remap = std::collections::HashMap::new();
            let mut labels = Vec::with_capacity(raw.len());
            for &l in &raw {
                let next = remap.len() as u32;
                labels.push(*remap.entry(l).or_insert(next));
            }
            let map = SuperpixelMap::from_labels(size, labels.clone());
            let g = adjacency(&map);
            let mut brute = BTreeSet::new();
            for y in 0..size.height {
                for x in 0..size.width {
                    for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                        if nx < size.width && ny < size.height {
                            let a = labels[(y * size.width + x) as usize];
                            let b = labels[(ny * size.width + nx) as usize];
                            if a != b {
                                brute.insert((a.min(b), a.max(b)));
                            }
                        }
                    }
                }
            }
            assert_eq!(g.edges(), &brute.into_iter().collect::<Vec<_>>()[..]);
        }
    }
}
