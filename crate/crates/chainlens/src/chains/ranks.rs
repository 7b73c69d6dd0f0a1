//! Relative depth and surface-normal estimation: sampled superpixel pairs
//! compared through the backend, globalized into per-segment scalar fields,
//! and flood-filled to pixel rasters.

use super::{ChainContext, ChainError};
use crate::backend::{Query, QueryKind, RegionSpec};
use crate::globalize::{
    assemble_objective, floodfill_ranks, solve_ranks, Axis, ComparisonSet, Weights,
};
use crate::raster::FloatRaster;
use crate::superpixel::{adjacency, sample_pairs, slic, PairSample, SuperpixelMap};

#[derive(Debug, Clone)]
pub struct DepthOutcome {
    pub rank_raster: FloatRaster,
    pub comparisons: ComparisonSet,
    pub map: SuperpixelMap,
}

#[derive(Debug, Clone)]
pub struct NormalsOutcome {
    /// Per-axis rank rasters in x, y, z order.
    pub rank_rasters: [FloatRaster; 3],
    pub comparisons: [ComparisonSet; 3],
    pub map: SuperpixelMap,
}

/// Chain parameters shared by depth and normals.
#[derive(Debug, Clone, Copy)]
pub struct RankParams {
    pub k: usize,
    pub n_pairs: usize,
    pub compactness: f64,
    pub slic_iterations: usize,
    pub weights: Weights,
    pub seed: u64,
    /// Allow "equal" answers for depth comparisons.
    pub depth_ternary: bool,
}

impl Default for RankParams {
    fn default() -> Self {
        Self {
            k: 100,
            n_pairs: 200,
            compactness: 10.0,
            slic_iterations: 10,
            weights: Weights::default(),
            seed: 0,
            depth_ternary: false,
        }
    }
}

/// Pairwise depth ranking globalized to a pixel raster.
pub fn estimate_depth_ranks(
    ctx: &mut ChainContext<'_>,
    params: &RankParams,
) -> Result<DepthOutcome, ChainError> {
    let map = slic(ctx.source.buffer(), params.k, params.compactness, params.slic_iterations)?;
    let graph = adjacency(&map);
    let pairs = sample_pairs(&map, params.n_pairs, params.seed)?;

    let mut comparisons = ComparisonSet::new(Axis::Depth);
    for pair in &pairs {
        let relation = compare(ctx, &map, pair, Axis::Depth, params.depth_ternary)?;
        comparisons.push(pair.i, pair.j, relation);
    }
    let objective = assemble_objective(&comparisons, graph.edges(), map.k() as usize, params.weights)?;
    let field = solve_ranks(&objective);
    let rank_raster = floodfill_ranks(&map, &field)?;
    Ok(DepthOutcome {
        rank_raster,
        comparisons,
        map,
    })
}

/// Ternary pairwise alignment against the three camera basis vectors, one
/// independent globalization per axis.
pub fn estimate_normal_ranks(
    ctx: &mut ChainContext<'_>,
    params: &RankParams,
) -> Result<NormalsOutcome, ChainError> {
    let map = slic(ctx.source.buffer(), params.k, params.compactness, params.slic_iterations)?;
    let graph = adjacency(&map);
    let pairs = sample_pairs(&map, params.n_pairs, params.seed)?;

    let axes = [Axis::X, Axis::Y, Axis::Z];
    let mut sets = axes.map(ComparisonSet::new);
    for pair in &pairs {
        for (set, axis) in sets.iter_mut().zip(axes) {
            let relation = compare(ctx, &map, pair, axis, true)?;
            set.push(pair.i, pair.j, relation);
        }
    }
    let mut rasters = Vec::with_capacity(3);
    for set in &sets {
        let objective = assemble_objective(set, graph.edges(), map.k() as usize, params.weights)?;
        let field = solve_ranks(&objective);
        rasters.push(floodfill_ranks(&map, &field)?);
    }
    let rank_rasters: [FloatRaster; 3] = rasters.try_into().expect("three axes");
    Ok(NormalsOutcome {
        rank_rasters,
        comparisons: sets,
        map,
    })
}

fn compare(
    ctx: &mut ChainContext<'_>,
    map: &SuperpixelMap,
    pair: &PairSample,
    axis: Axis,
    ternary: bool,
) -> Result<crate::globalize::Relation, ChainError> {
    let region_a = map.region_of(pair.i);
    let region_b = map.region_of(pair.j);
    let template = match axis {
        Axis::Depth => &ctx.templates.pair_depth,
        _ => &ctx.templates.pair_axis,
    };
    let query = Query {
        image_id: ctx.image_id.to_string(),
        template_id: template.clone(),
        kind: QueryKind::PairOrder {
            a_images: ctx.region_views(&region_a),
            b_images: ctx.region_views(&region_b),
            a: RegionSpec::Region(region_a),
            b: RegionSpec::Region(region_b),
            axis,
            ternary,
        },
    };
    let answer = ctx.session.answer(&query, ctx.transcript)?;
    Ok(answer.relation().expect("pair-order answers are relations"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{
        BackendError, GroundTruthSource, GroundedBackend, ImageGroundTruth, PriceTable, Session,
        SessionConfig, SourceImage, TemplateRegistry, Transcript,
    };
    use crate::core::{ClassVocabulary, RasterSize};
    use crate::metrics::{pairwise_accuracy, raster_spearman};
    use crate::raster::ImageBuffer;
    use std::sync::Arc;

    struct Gt(Arc<ImageGroundTruth>);
    impl GroundTruthSource for Gt {
        fn ground_truth(&self, _id: &str) -> Result<Arc<ImageGroundTruth>, BackendError> {
            Ok(self.0.clone())
        }
    }

    fn smooth_depth(size: RasterSize) -> FloatRaster {
        let mut r = FloatRaster::new(size, 0.0);
        for y in 0..size.height {
            for x in 0..size.width {
                let u = x as f32 / size.width as f32;
                let v = y as f32 / size.height as f32;
                r.set(x, y, 2.0 + 3.0 * u + 1.5 * v + (u * 6.0).sin() * 0.4);
            }
        }
        r
    }

    fn session_for(gt: Arc<ImageGroundTruth>) -> Session {
        Session::new(
            Arc::new(GroundedBackend::oracle(
                Arc::new(Gt(gt)),
                Arc::new(ClassVocabulary::new(["x"]).unwrap()),
            )),
            TemplateRegistry::default(),
            None,
            PriceTable::default(),
            SessionConfig::default(),
        )
    }

    #[test]
    fn oracle_depth_ranks_correlate_and_relations_are_exact() {
        let size = RasterSize::new(48, 36);
        let depth = smooth_depth(size);
        let gt = Arc::new(ImageGroundTruth {
            depth: Some(depth.clone()),
            ..Default::default()
        });
        let session = session_for(gt);
        let templates = Default::default();
        let mut t = Transcript::new();
        let mut ctx = ChainContext {
            session: &session,
            image_id: "img",
            source: SourceImage::new(Arc::new(ImageBuffer::new(size, [128, 128, 128]))),
            templates: &templates,
            marker: Default::default(),
            context_factor: 2.0,
            blank: None,
            single_image: false,
            transcript: &mut t,
        };
        let params = RankParams {
            k: 60,
            n_pairs: 150,
            seed: 4,
            ..Default::default()
        };
        let out = estimate_depth_ranks(&mut ctx, &params).unwrap();
        let rho = raster_spearman(&out.rank_raster, &depth, 10_000, 0).unwrap();
        assert!(rho > 0.8, "oracle chain rho = {rho}");

        // oracle relations agree with per-segment ground-truth means exactly
        let means: Vec<f64> = (0..out.map.k())
            .map(|id| {
                let idx = out.map.member_indices(id);
                depth.mean_over(&idx).unwrap()
            })
            .collect();
        assert_eq!(pairwise_accuracy(&out.comparisons, &means, None).unwrap(), 100.0);
    }

    #[test]
    fn constant_depth_with_ternary_oracle_gives_constant_field() {
        let size = RasterSize::new(24, 18);
        let gt = Arc::new(ImageGroundTruth {
            depth: Some(FloatRaster::new(size, 5.0)),
            ..Default::default()
        });
        let session = session_for(gt);
        let templates = Default::default();
        let mut t = Transcript::new();
        let mut ctx = ChainContext {
            session: &session,
            image_id: "img",
            source: SourceImage::new(Arc::new(ImageBuffer::new(size, [90, 90, 90]))),
            templates: &templates,
            marker: Default::default(),
            context_factor: 2.0,
            blank: None,
            single_image: false,
            transcript: &mut t,
        };
        let params = RankParams {
            k: 16,
            n_pairs: 40,
            depth_ternary: true,
            seed: 1,
            ..Default::default()
        };
        let out = estimate_depth_ranks(&mut ctx, &params).unwrap();
        assert!(out.rank_raster.values().iter().all(|&v| v.abs() < 1e-9));
        assert!(out
            .comparisons
            .comparisons
            .iter()
            .all(|c| c.relation == crate::globalize::Relation::Equal));
    }

    #[test]
    fn depth_chain_is_deterministic_under_seed() {
        let size = RasterSize::new(32, 24);
        let gt = Arc::new(ImageGroundTruth {
            depth: Some(smooth_depth(size)),
            ..Default::default()
        });
        let session = session_for(gt);
        let templates = Default::default();
        let run = |seed: u64| {
            let mut t = Transcript::new();
            let mut ctx = ChainContext {
                session: &session,
                image_id: "img",
                source: SourceImage::new(Arc::new(ImageBuffer::new(size, [128, 128, 128]))),
                templates: &templates,
                marker: Default::default(),
                context_factor: 2.0,
                blank: None,
                single_image: false,
                transcript: &mut t,
            };
            let params = RankParams {
                k: 30,
                n_pairs: 60,
                seed,
                ..Default::default()
            };
            estimate_depth_ranks(&mut ctx, &params).unwrap().rank_raster
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn normal_axes_are_independent() {
        // Sphere-cap normals over a plane background.
        let size = RasterSize::new(40, 30);
        let (cx, cy, rad) = (20.0f32, 15.0f32, 12.0f32);
        let mut nx = FloatRaster::new(size, 0.0);
        let mut ny = FloatRaster::new(size, 0.0);
        let mut nz = FloatRaster::new(size, 1.0);
        for y in 0..size.height {
            for x in 0..size.width {
                let dx = (x as f32 - cx) / rad;
                let dy = (y as f32 - cy) / rad;
                let rr = dx * dx + dy * dy;
                if rr < 1.0 {
                    nx.set(x, y, dx);
                    ny.set(x, y, -dy);
                    nz.set(x, y, (1.0 - rr).sqrt());
                }
            }
        }
        let gt = Arc::new(ImageGroundTruth {
            normals: Some([nx.clone(), ny.clone(), nz.clone()]),
            ..Default::default()
        });
        let session = session_for(gt);
        let templates = Default::default();
        let mut t = Transcript::new();
        let mut ctx = ChainContext {
            session: &session,
            image_id: "img",
            source: SourceImage::new(Arc::new(ImageBuffer::new(size, [100, 100, 100]))),
            templates: &templates,
            marker: Default::default(),
            context_factor: 2.0,
            blank: None,
            single_image: false,
            transcript: &mut t,
        };
        let params = RankParams {
            k: 50,
            n_pairs: 120,
            seed: 3,
            ..Default::default()
        };
        let out = estimate_normal_ranks(&mut ctx, &params).unwrap();
        let rho_x = raster_spearman(&out.rank_rasters[0], &nx, 10_000, 0).unwrap();
        let rho_y = raster_spearman(&out.rank_rasters[1], &ny, 10_000, 0).unwrap();
        assert!(rho_x > 0.5, "rho_x = {rho_x}");
        assert!(rho_y > 0.5, "rho_y = {rho_y}");
        // every comparison set holds one relation per sampled pair
        assert_eq!(out.comparisons[0].comparisons.len(), 120);
        assert_eq!(out.comparisons[2].comparisons.len(), 120);
    }
}
