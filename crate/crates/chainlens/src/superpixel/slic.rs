//! SLIC clustering: grid-seeded local k-means in CIELAB-XY space followed by
//! connectivity enforcement.

use super::{SuperpixelError, SuperpixelMap};
use crate::raster::ImageBuffer;

/// Run SLIC on an image.
///
/// `k_target` is the requested segment count; the result has at most
/// `k_target`-ish segments (never more seed cells than requested by the
/// seeding grid) with dense ids. Deterministic for fixed inputs.
pub fn slic(
    image: &ImageBuffer,
    k_target: usize,
    compactness: f64,
    iterations: usize,
) -> Result<SuperpixelMap, SuperpixelError> {
    let size = image.size();
    let n = size.pixels();
    if k_target < 1 || k_target > n {
        return Err(SuperpixelError::TooManySegments {
            requested: k_target,
            pixels: n,
        });
    }
    let w = size.width as usize;
    let h = size.height as usize;
    let lab: Vec<[f64; 3]> = image.pixels().iter().map(|&p| rgb_to_lab(p)).collect();

    // Grid seeding: roughly sqrt(n/k) spacing, at least one seed per axis.
    let step = (n as f64 / k_target as f64).sqrt();
    let nx = ((w as f64 / step).round().max(1.0) as usize).min(w);
    let ny = ((h as f64 / step).round().max(1.0) as usize).min(h);
    let mut centers: Vec<Center> = Vec::with_capacity(nx * ny);
    // Gradient perturbation only when seeds sit >= 3 px apart; closer seeds
    // could collapse onto one pixel, and dense seeding must stay dense.
    let perturb = w / nx >= 3 && h / ny >= 3;
    for j in 0..ny {
        for i in 0..nx {
            let gx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let gy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            let (x, y) = if perturb {
                lowest_gradient_in_3x3(&lab, w, h, gx, gy)
            } else {
                (gx, gy)
            };
            let c = lab[y * w + x];
            centers.push(Center {
                l: c[0],
                a: c[1],
                b: c[2],
                x: x as f64,
                y: y as f64,
            });
        }
    }
    let s = (n as f64 / centers.len() as f64).sqrt().max(1.0);
    let inv_s2 = (compactness * compactness) / (s * s);

    let mut labels = vec![u32::MAX; n];
    let mut dists = vec![f64::INFINITY; n];
    for _ in 0..iterations.max(1) {
        dists.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.x - 2.0 * s).floor().max(0.0) as usize;
            let x1 = ((c.x + 2.0 * s).ceil() as usize + 1).min(w);
            let y0 = (c.y - 2.0 * s).floor().max(0.0) as usize;
            let y1 = ((c.y + 2.0 * s).ceil() as usize + 1).min(h);
            for y in y0..y1 {
                for x in x0..x1 {
                    let idx = y * w + x;
                    let p = lab[idx];
                    let dl = p[0] - c.l;
                    let da = p[1] - c.a;
                    let db = p[2] - c.b;
                    let dx = x as f64 - c.x;
                    let dy = y as f64 - c.y;
                    let d = dl * dl + da * da + db * db + (dx * dx + dy * dy) * inv_s2;
                    if d < dists[idx] {
                        dists[idx] = d;
                        labels[idx] = ci as u32;
                    }
                }
            }
        }
        // Pixels outside every search window fall back to the nearest center.
        for idx in 0..n {
            if labels[idx] == u32::MAX {
                let x = (idx % w) as f64;
                let y = (idx / w) as f64;
                let p = lab[idx];
                let mut best = (f64::INFINITY, 0u32);
                for (ci, c) in centers.iter().enumerate() {
                    let dl = p[0] - c.l;
                    let da = p[1] - c.a;
                    let db = p[2] - c.b;
                    let dx = x - c.x;
                    let dy = y - c.y;
                    let d = dl * dl + da * da + db * db + (dx * dx + dy * dy) * inv_s2;
                    if d < best.0 {
                        best = (d, ci as u32);
                    }
                }
                labels[idx] = best.1;
            }
        }
        // Recompute centers as member means; empty clusters keep their spot.
        let mut acc = vec![[0f64; 6]; centers.len()];
        for idx in 0..n {
            let ci = labels[idx] as usize;
            let p = lab[idx];
            acc[ci][0] += p[0];
            acc[ci][1] += p[1];
            acc[ci][2] += p[2];
            acc[ci][3] += (idx % w) as f64;
            acc[ci][4] += (idx / w) as f64;
            acc[ci][5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                c.l = a[0] / a[5];
                c.a = a[1] / a[5];
                c.b = a[2] / a[5];
                c.x = a[3] / a[5];
                c.y = a[4] / a[5];
            }
        }
    }

    let labels = enforce_connectivity(&labels, w, h);
    Ok(SuperpixelMap::from_labels(size, labels))
}

struct Center {
    l: f64,
    a: f64,
    b: f64,
    x: f64,
    y: f64,
}

/// Move a seed to the lowest-gradient position in its 3x3 neighborhood.
fn lowest_gradient_in_3x3(lab: &[[f64; 3]], w: usize, h: usize, x: usize, y: usize) -> (usize, usize) {
    let grad = |x: usize, y: usize| -> f64 {
        let xm = x.saturating_sub(1);
        let xp = (x + 1).min(w - 1);
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let dx: f64 = (0..3)
            .map(|c| (lab[y * w + xp][c] - lab[y * w + xm][c]).powi(2))
            .sum();
        let dy: f64 = (0..3)
            .map(|c| (lab[yp * w + x][c] - lab[ym * w + x][c]).powi(2))
            .sum();
        dx + dy
    };
    let mut best = (grad(x, y), x, y);
    for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
        for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
            let g = grad(nx, ny);
            if g < best.0 {
                best = (g, nx, ny);
            }
        }
    }
    (best.1, best.2)
}

/// Split the label raster into 4-connected components; each cluster keeps
/// its largest component, every other fragment ("orphan") is merged into
/// the largest adjacent segment. Ids are re-densified in scan order.
fn enforce_connectivity(labels: &[u32], w: usize, h: usize) -> Vec<u32> {
    let n = labels.len();
    let mut comp = vec![usize::MAX; n];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let lbl = labels[start];
        comp_label.push(lbl);
        let mut count = 0usize;
        comp[start] = id;
        stack.push(start);
        while let Some(idx) = stack.pop() {
            count += 1;
            let x = idx % w;
            let y = idx / w;
            let mut visit = |nidx: usize| {
                if comp[nidx] == usize::MAX && labels[nidx] == lbl {
                    comp[nidx] = id;
                    stack.push(nidx);
                }
            };
            if x > 0 {
                visit(idx - 1);
            }
            if x + 1 < w {
                visit(idx + 1);
            }
            if y > 0 {
                visit(idx - w);
            }
            if y + 1 < h {
                visit(idx + w);
            }
        }
        comp_size.push(count);
    }

    // Main component per label: the largest (first in scan order on ties).
    let mut main_of_label: std::collections::HashMap<u32, usize> = Default::default();
    for cid in 0..comp_label.len() {
        let entry = main_of_label.entry(comp_label[cid]).or_insert(cid);
        if comp_size[cid] > comp_size[*entry] {
            *entry = cid;
        }
    }

    // Component adjacency from right/down pixel neighbours.
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); comp_label.len()];
    for idx in 0..n {
        let x = idx % w;
        let a = comp[idx];
        if x + 1 < w && comp[idx + 1] != a {
            neighbors[a].push(comp[idx + 1]);
            neighbors[comp[idx + 1]].push(a);
        }
        if idx + w < n && comp[idx + w] != a {
            neighbors[a].push(comp[idx + w]);
            neighbors[comp[idx + w]].push(a);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }

    // Union-find over components with size tracking.
    let mut parent: Vec<usize> = (0..comp_label.len()).collect();
    let mut size = comp_size.clone();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    // Merge each orphan into its largest adjacent segment (deterministic
    // tie-break by root id). One orphan may chain into another; the
    // union-find keeps sizes current.
    for orphan in 0..comp_label.len() {
        if main_of_label[&comp_label[orphan]] == orphan {
            continue;
        }
        let own = find(&mut parent, orphan);
        let mut best: Option<(usize, usize)> = None; // (size, root)
        for &nb in &neighbors[orphan] {
            let root = find(&mut parent, nb);
            if root == own {
                continue;
            }
            let better = match best {
                None => true,
                Some((bs, br)) => size[root] > bs || (size[root] == bs && root < br),
            };
            if better {
                best = Some((size[root], root));
            }
        }
        if let Some((_, target)) = best {
            parent[own] = target;
            size[target] += size[own];
        }
    }

    // Re-densify in scan order of first occurrence.
    let mut dense: std::collections::HashMap<usize, u32> = Default::default();
    let mut next = 0u32;
    let mut out = vec![0u32; n];
    for idx in 0..n {
        let root = find(&mut parent, comp[idx]);
        let id = *dense.entry(root).or_insert_with(|| {
            let v = next;
            next += 1;
            v
        });
        out[idx] = id;
    }
    out
}

fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    fn srgb_to_linear(c: u8) -> f64 {
        let c = c as f64 / 255.0;
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    }
    let r = srgb_to_linear(rgb[0]);
    let g = srgb_to_linear(rgb[1]);
    let b = srgb_to_linear(rgb[2]);
    // sRGB D65
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    fn f(t: f64) -> f64 {
        const DELTA: f64 = 6.0 / 29.0;
        if t > DELTA * DELTA * DELTA {
            t.cbrt()
        } else {
            t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
        }
    }
    let (xn, yn, zn) = (0.95047, 1.0, 1.08883);
    let fx = f(x / xn);
    let fy = f(y / yn);
    let fz = f(z / zn);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RasterSize;

    fn gradient_image(w: u32, h: u32) -> ImageBuffer {
        let mut img = ImageBuffer::new(RasterSize::new(w, h), [0, 0, 0]);
        for y in 0..h {
            for x in 0..w {
                let v = ((x * 255) / w.max(1)) as u8;
                let u = ((y * 255) / h.max(1)) as u8;
                img.set(x, y, [v, u, 128]);
            }
        }
        img
    }

    #[test]
    fn k1_yields_single_segment() {
        let img = gradient_image(16, 12);
        let map = slic(&img, 1, 10.0, 5).unwrap();
        assert_eq!(map.k(), 1);
        assert_eq!(map.stats(0).pixel_count, 16 * 12);
    }

    #[test]
    fn tiny_image_full_split() {
        let img = gradient_image(2, 2);
        let map = slic(&img, 4, 10.0, 5).unwrap();
        assert_eq!(map.k(), 4);
        for id in 0..4 {
            assert_eq!(map.stats(id).pixel_count, 1);
        }
    }

    #[test]
    fn labels_are_dense_and_total() {
        let img = gradient_image(40, 30);
        let map = slic(&img, 20, 10.0, 10).unwrap();
        let mut seen: Vec<u32> = map.labels().to_vec();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen, (0..map.k()).collect::<Vec<_>>());
        let total: u32 = (0..map.k()).map(|i| map.stats(i).pixel_count).sum();
        assert_eq!(total, 40 * 30);
        // close to the requested count, never absurdly more
        assert!(map.k() >= 10 && map.k() <= 40, "k={}", map.k());
    }

    #[test]
    fn segments_are_connected() {
        let img = gradient_image(32, 32);
        let map = slic(&img, 16, 10.0, 10).unwrap();
        // Flood fill from each segment's first pixel must reach every member.
        for id in 0..map.k() {
            let members = map.members(id);
            let member_set: std::collections::HashSet<u32> = members.iter().copied().collect();
            let mut seen = std::collections::HashSet::new();
            let mut stack = vec![members[0]];
            seen.insert(members[0]);
            while let Some(idx) = stack.pop() {
                let x = idx % 32;
                let y = idx / 32;
                for (nx, ny) in [
                    (x.wrapping_sub(1), y),
                    (x + 1, y),
                    (x, y.wrapping_sub(1)),
                    (x, y + 1),
                ] {
                    if nx < 32 && ny < 32 {
                        let nidx = ny * 32 + nx;
                        if member_set.contains(&nidx) && seen.insert(nidx) {
                            stack.push(nidx);
                        }
                    }
                }
            }
            assert_eq!(seen.len(), members.len(), "segment {id} disconnected");
        }
    }

    #[test]
    fn deterministic() {
        let img = gradient_image(24, 18);
        let a = slic(&img, 12, 10.0, 10).unwrap();
        let b = slic(&img, 12, 10.0, 10).unwrap();
        assert_eq!(a.labels(), b.labels());
    }

    #[test]
    fn oversized_k_rejected() {
        let img = gradient_image(4, 4);
        assert!(slic(&img, 17, 10.0, 5).is_err());
    }
}
