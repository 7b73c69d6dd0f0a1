//! Globalization of pairwise relations into per-segment scalar fields.
//!
//! Pairwise "greater"/"less"/"equal" outcomes and a smoothness term over
//! adjacent segments are assembled into a sparse positive-semidefinite
//! quadratic, minimized, and gauge-fixed to per-component mean zero. A
//! scale/shift fit aligns relative maps with metric ground truth.

mod fit;
mod solve;

pub use fit::{fit_scale_shift, scale_shift_fit, ScaleShift};
pub use solve::{solve_ranks, RankField};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::RasterSize;
use crate::raster::{FloatRaster, ImageBuffer};
use crate::superpixel::SuperpixelMap;

#[derive(Debug, Error)]
pub enum GlobalizeError {
    #[error("segment id {id} out of range (k={k})")]
    SegmentOutOfRange { id: u32, k: u32 },
    #[error("comparison relates a segment to itself: {0}")]
    SelfComparison(u32),
    #[error("weights must be non-negative")]
    NegativeWeight,
    #[error("rank field has {field} entries but the map has {k} segments")]
    FieldLengthMismatch { field: usize, k: u32 },
    #[error("no valid pixels for the fit")]
    NoValidPixels,
    #[error("size mismatch: {a} vs {b}")]
    SizeMismatch { a: RasterSize, b: RasterSize },
}

/// Pairwise order relation of segment `i` with respect to segment `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Greater,
    Less,
    Equal,
}

impl Relation {
    pub fn inverse(self) -> Relation {
        match self {
            Relation::Greater => Relation::Less,
            Relation::Less => Relation::Greater,
            Relation::Equal => Relation::Equal,
        }
    }
}

/// Which scalar field a comparison ranks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Depth,
    X,
    Y,
    Z,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Depth => "depth",
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

/// The relation of value `vi` with respect to `vj`. With an equality
/// tolerance (ternary mode), differences within it collapse to `Equal`
/// (ties always do); without one, exact ties fall to `Less` so binary
/// answers stay total.
pub fn relation_of(vi: f64, vj: f64, eq_tolerance: Option<f64>) -> Relation {
    if let Some(tol) = eq_tolerance {
        if (vi - vj).abs() <= tol {
            return Relation::Equal;
        }
    }
    if vi > vj {
        Relation::Greater
    } else {
        Relation::Less
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub i: u32,
    pub j: u32,
    pub relation: Relation,
}

/// All pairwise outcomes collected for one axis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonSet {
    pub axis: Axis,
    pub comparisons: Vec<Comparison>,
}

impl ComparisonSet {
    pub fn new(axis: Axis) -> Self {
        Self {
            axis,
            comparisons: Vec::new(),
        }
    }

    pub fn push(&mut self, i: u32, j: u32, relation: Relation) {
        debug_assert_ne!(i, j);
        self.comparisons.push(Comparison { i, j, relation });
    }
}

/// Term weights of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub gt: f64,
    pub lt: f64,
    pub smooth: f64,
    pub eq: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            gt: 1.0,
            lt: 1.0,
            smooth: 1.0,
            eq: 1.0,
        }
    }
}

/// Sparse symmetric PSD quadratic `x^T A x - 2 b^T x` over k variables.
/// Each pairwise term `w (x_i - x_j - c)^2` contributes w to the diagonal of
/// i and j, -w off-diagonal, and +-wc to the linear part.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    k: usize,
    diag: Vec<f64>,
    off: std::collections::BTreeMap<(u32, u32), f64>,
    linear: Vec<f64>,
    /// Edges of the combined comparison+adjacency graph, for gauge fixing.
    edges: Vec<(u32, u32)>,
}

impl QuadraticObjective {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            diag: vec![0.0; k],
            off: Default::default(),
            linear: vec![0.0; k],
            edges: Vec::new(),
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_zero(&self) -> bool {
        self.off.is_empty() && self.diag.iter().all(|&d| d == 0.0)
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub(crate) fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Add `w * (x_i - x_j - c)^2`.
    fn add_pair_term(&mut self, i: u32, j: u32, w: f64, c: f64) {
        self.edges.push((i, j));
        if w == 0.0 {
            return;
        }
        self.diag[i as usize] += w;
        self.diag[j as usize] += w;
        let key = (i.min(j), i.max(j));
        *self.off.entry(key).or_insert(0.0) -= w;
        self.linear[i as usize] += w * c;
        self.linear[j as usize] -= w * c;
    }

    /// y = A x
    pub(crate) fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (yi, (&d, &xi)) in y.iter_mut().zip(self.diag.iter().zip(x)) {
            *yi = d * xi;
        }
        for (&(i, j), &w) in &self.off {
            y[i as usize] += w * x[j as usize];
            y[j as usize] += w * x[i as usize];
        }
    }

    /// Objective value at x (up to the constant term).
    pub fn value(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.k];
        self.matvec(x, &mut ax);
        let xax: f64 = x.iter().zip(&ax).map(|(a, b)| a * b).sum();
        let bx: f64 = x.iter().zip(&self.linear).map(|(a, b)| a * b).sum();
        xax - 2.0 * bx
    }
}

/// Assemble the weighted objective from pairwise comparisons plus a
/// smoothness term over adjacency edges.
pub fn assemble_objective(
    comparisons: &ComparisonSet,
    adjacency_edges: &[(u32, u32)],
    k: usize,
    weights: Weights,
) -> Result<QuadraticObjective, GlobalizeError> {
    if weights.gt < 0.0 || weights.lt < 0.0 || weights.smooth < 0.0 || weights.eq < 0.0 {
        return Err(GlobalizeError::NegativeWeight);
    }
    let check = |id: u32| -> Result<(), GlobalizeError> {
        if (id as usize) < k {
            Ok(())
        } else {
            Err(GlobalizeError::SegmentOutOfRange { id, k: k as u32 })
        }
    };
    let mut obj = QuadraticObjective::new(k);
    for c in &comparisons.comparisons {
        check(c.i)?;
        check(c.j)?;
        if c.i == c.j {
            return Err(GlobalizeError::SelfComparison(c.i));
        }
        match c.relation {
            Relation::Greater => obj.add_pair_term(c.i, c.j, weights.gt, 1.0),
            Relation::Less => obj.add_pair_term(c.i, c.j, weights.lt, -1.0),
            Relation::Equal => obj.add_pair_term(c.i, c.j, weights.eq, 0.0),
        }
    }
    for &(i, j) in adjacency_edges {
        check(i)?;
        check(j)?;
        if i != j {
            obj.add_pair_term(i, j, weights.smooth, 0.0);
        }
    }
    Ok(obj)
}

/// Paint each pixel with its segment's rank value.
pub fn floodfill_ranks(
    map: &SuperpixelMap,
    field: &RankField,
) -> Result<FloatRaster, GlobalizeError> {
    if field.values().len() != map.k() as usize {
        return Err(GlobalizeError::FieldLengthMismatch {
            field: field.values().len(),
            k: map.k(),
        });
    }
    let size = map.size();
    let mut raster = FloatRaster::new(size, 0.0);
    let values = field.values();
    for (idx, &label) in map.labels().iter().enumerate() {
        raster.values_mut()[idx] = values[label as usize] as f32;
    }
    Ok(raster)
}

/// Combine three per-axis rasters into an RGB visualization: min-max
/// normalize each axis to [0,1] (a constant axis maps to 0), expand to
/// [-1,1], renormalize each pixel vector onto the unit sphere, and encode
/// as RGB.
pub fn normalize_and_sphere(fields: &[FloatRaster; 3]) -> Result<ImageBuffer, GlobalizeError> {
    let size = fields[0].size();
    for f in &fields[1..] {
        if f.size() != size {
            return Err(GlobalizeError::SizeMismatch {
                a: size,
                b: f.size(),
            });
        }
    }
    let ranges: Vec<Option<(f32, f32)>> = fields.iter().map(|f| f.value_range()).collect();
    let mut out = ImageBuffer::new(size, [0, 0, 0]);
    for idx in 0..size.pixels() {
        let mut v = [0f64; 3];
        for a in 0..3 {
            let unit = match ranges[a] {
                Some((lo, hi)) if hi > lo => {
                    ((fields[a].values()[idx] - lo) / (hi - lo)) as f64
                }
                _ => 0.0,
            };
            v[a] = unit * 2.0 - 1.0;
        }
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let v = if norm > 0.0 {
            [v[0] / norm, v[1] / norm, v[2] / norm]
        } else {
            [0.0, 0.0, 1.0]
        };
        let rgb = [
            (((v[0] + 1.0) / 2.0) * 255.0).round() as u8,
            (((v[1] + 1.0) / 2.0) * 255.0).round() as u8,
            (((v[2] + 1.0) / 2.0) * 255.0).round() as u8,
        ];
        let x = (idx % size.width as usize) as u32;
        let y = (idx / size.width as usize) as u32;
        out.set(x, y, rgb);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::RasterSize;

    #[test]
    fn empty_objective_is_zero() {
        let set = ComparisonSet::new(Axis::Depth);
        let obj = assemble_objective(&set, &[], 4, Weights::default()).unwrap();
        assert!(obj.is_zero());
    }

    #[test]
    fn greater_term_minimizer_has_unit_gap() {
        let mut set = ComparisonSet::new(Axis::Depth);
        set.push(0, 1, Relation::Greater);
        let w = Weights {
            smooth: 0.0,
            ..Weights::default()
        };
        let obj = assemble_objective(&set, &[], 2, w).unwrap();
        // hand differentiation: A = [[1,-1],[-1,1]], b = (1,-1);
        // any x with x0 - x1 = 1 minimizes.
        assert!((obj.value(&[0.5, -0.5]) - (-1.0)).abs() < 1e-12);
        assert!(obj.value(&[0.5, -0.5]) < obj.value(&[0.4, -0.4]));
        assert!(obj.value(&[0.5, -0.5]) <= obj.value(&[1.5, 0.5]) + 1e-12);
    }

    #[test]
    fn out_of_range_and_self_pairs_rejected() {
        let mut set = ComparisonSet::new(Axis::Depth);
        set.comparisons.push(Comparison {
            i: 5,
            j: 0,
            relation: Relation::Greater,
        });
        assert!(assemble_objective(&set, &[], 3, Weights::default()).is_err());
        let mut set = ComparisonSet::new(Axis::Depth);
        set.comparisons.push(Comparison {
            i: 1,
            j: 1,
            relation: Relation::Equal,
        });
        assert!(assemble_objective(&set, &[], 3, Weights::default()).is_err());
    }

    #[test]
    fn floodfill_paints_segments() {
        let labels = vec![0, 0, 1, 1];
        let map = SuperpixelMap::from_labels(RasterSize::new(2, 2), labels);
        let field = RankField::from_values(vec![-0.5, 0.5], vec![0, 0]);
        let raster = floodfill_ranks(&map, &field).unwrap();
        assert_eq!(raster.values(), &[-0.5, -0.5, 0.5, 0.5]);
        let short = RankField::from_values(vec![1.0], vec![0]);
        assert!(floodfill_ranks(&map, &short).is_err());
    }

    #[test]
    fn floodfill_value_support_bounded_by_k() {
        let labels = vec![0, 1, 0, 1, 2, 2];
        let map = SuperpixelMap::from_labels(RasterSize::new(3, 2), labels);
        let field = RankField::from_values(vec![1.0, 2.0, 3.0], vec![0, 0, 0]);
        let raster = floodfill_ranks(&map, &field).unwrap();
        let mut distinct: Vec<f32> = raster.values().to_vec();
        distinct.sort_by(f32::total_cmp);
        distinct.dedup();
        assert!(distinct.len() <= 3);
    }

    #[test]
    fn sphere_output_is_unit_norm() {
        let size = RasterSize::new(4, 3);
        let mk = |f: fn(usize) -> f32| {
            FloatRaster::from_values(size, (0..12).map(f).collect())
        };
        let fields = [
            mk(|i| i as f32),
            mk(|i| (12 - i) as f32),
            mk(|i| (i * i) as f32),
        ];
        let img = normalize_and_sphere(&fields).unwrap();
        for &[r, g, b] in img.pixels() {
            let v = [
                r as f64 / 255.0 * 2.0 - 1.0,
                g as f64 / 255.0 * 2.0 - 1.0,
                b as f64 / 255.0 * 2.0 - 1.0,
            ];
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            assert!((norm - 1.0).abs() < 0.02, "quantized norm {norm}");
        }
    }

    #[test]
    fn sphere_constant_fields_give_uniform_color() {
        let size = RasterSize::new(2, 2);
        let fields = [
            FloatRaster::new(size, 1.0),
            FloatRaster::new(size, 0.0),
            FloatRaster::new(size, 0.0),
        ];
        let img = normalize_and_sphere(&fields).unwrap();
        let first = img.pixels()[0];
        assert!(img.pixels().iter().all(|&p| p == first));
    }

    #[test]
    fn sphere_swapping_axes_permutes_channels() {
        let size = RasterSize::new(3, 1);
        let a = FloatRaster::from_values(size, vec![0.0, 1.0, 2.0]);
        let b = FloatRaster::from_values(size, vec![5.0, 3.0, 1.0]);
        let c = FloatRaster::from_values(size, vec![0.5, 0.25, 0.75]);
        let img1 = normalize_and_sphere(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let img2 = normalize_and_sphere(&[b, a, c]).unwrap();
        for (p1, p2) in img1.pixels().iter().zip(img2.pixels()) {
            assert_eq!([p1[1], p1[0], p1[2]], *p2);
        }
    }
}
