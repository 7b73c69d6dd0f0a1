//! Backends that answer sub-queries from data instead of a model: the
//! ground-truth oracle, the specialist-constrained baseline (same rules,
//! prediction data), and the seeded noisy/uniform test double.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    AnswerPayload, Backend, BackendError, Query, QueryKind, RawReply, RegionSpec, Session,
};
use crate::core::{ClassVocabulary, LabeledBox, PixelBox, RasterSize};
use crate::globalize::{relation_of, Axis, Relation};
use crate::raster::{BinaryMask, FloatRaster, IndexMask};

/// Everything the oracle may consult for one image. A specialist run uses
/// the same shape filled with the specialist's predictions.
#[derive(Debug, Default)]
pub struct ImageGroundTruth {
    pub label: Option<u16>,
    pub boxes: Vec<LabeledBox>,
    pub mask: Option<IndexMask>,
    /// Instance mask of the object containing the image's grouping query
    /// point.
    pub instance: Option<BinaryMask>,
    pub depth: Option<FloatRaster>,
    pub normals: Option<[FloatRaster; 3]>,
}

impl ImageGroundTruth {
    fn field(&self, axis: Axis) -> Option<&FloatRaster> {
        match axis {
            Axis::Depth => self.depth.as_ref(),
            Axis::X => self.normals.as_ref().map(|n| &n[0]),
            Axis::Y => self.normals.as_ref().map(|n| &n[1]),
            Axis::Z => self.normals.as_ref().map(|n| &n[2]),
        }
    }
}

pub trait GroundTruthSource: Send + Sync {
    fn ground_truth(&self, image_id: &str) -> Result<Arc<ImageGroundTruth>, BackendError>;
}

/// Answers every sub-query from a data source with the task's exact rules.
/// `name` distinguishes the oracle from a specialist run in ids and caches.
pub struct GroundedBackend {
    name: String,
    source: Arc<dyn GroundTruthSource>,
    vocab: Arc<ClassVocabulary>,
    /// Ternary equality tolerance as a fraction of the per-image value
    /// range.
    eq_fraction: f64,
}

impl GroundedBackend {
    pub fn oracle(source: Arc<dyn GroundTruthSource>, vocab: Arc<ClassVocabulary>) -> Self {
        Self {
            name: "oracle".into(),
            source,
            vocab,
            eq_fraction: 0.05,
        }
    }

    pub fn specialist(source: Arc<dyn GroundTruthSource>, vocab: Arc<ClassVocabulary>) -> Self {
        Self {
            name: "specialist".into(),
            source,
            vocab,
            eq_fraction: 0.05,
        }
    }

    pub fn with_eq_fraction(mut self, fraction: f64) -> Self {
        self.eq_fraction = fraction;
        self
    }

    /// Structured answer for a query, straight from the data.
    pub fn answer_payload(&self, query: &Query) -> Result<AnswerPayload, BackendError> {
        let gt = self.source.ground_truth(&query.image_id)?;
        let missing = |what: &'static str| BackendError::MissingGroundTruth {
            image_id: query.image_id.clone(),
            what,
        };
        match &query.kind {
            QueryKind::MultiChoice { items, options, .. } => {
                let mut choices = Vec::with_capacity(items.len());
                for item in items {
                    // Batches may span images; ground each item in its own.
                    let gt = match &item.image_id {
                        Some(id) if id != &query.image_id => self.source.ground_truth(id)?,
                        _ => gt.clone(),
                    };
                    let class = match &item.region {
                        RegionSpec::FullImage => gt.label.ok_or_else(|| missing("label"))?,
                        region => {
                            let mask = gt.mask.as_ref().ok_or_else(|| missing("mask"))?;
                            majority_class(mask, region)
                        }
                    };
                    let name = self
                        .vocab
                        .name(class)
                        .ok_or_else(|| missing("class name"))?;
                    // The payload must come from the query's option set.
                    let chosen = options
                        .iter()
                        .find(|o| o.as_str() == name)
                        .cloned()
                        .unwrap_or_else(|| options[0].clone());
                    choices.push(chosen);
                }
                Ok(AnswerPayload::Choices(choices))
            }
            QueryKind::MultiLabel { region, options, .. } => {
                let window = match region {
                    RegionSpec::Window(b) => Some(*b),
                    RegionSpec::FullImage => None,
                    RegionSpec::Region(r) => Some(r.bbox),
                };
                let mut present: Vec<String> = Vec::new();
                for option in options.iter() {
                    let Some(class) = self.vocab.id_of(option) else {
                        continue;
                    };
                    let hit = gt.boxes.iter().any(|b| {
                        b.class_id == class
                            && window.map_or(true, |w| b.pixel_box.intersects(&w))
                    });
                    if hit {
                        present.push(option.clone());
                    }
                }
                Ok(AnswerPayload::Labels(present))
            }
            QueryKind::Presence { window, class_name, .. } => {
                let class = self.vocab.id_of(class_name);
                let yes = class.is_some_and(|c| {
                    gt.boxes
                        .iter()
                        .any(|b| b.class_id == c && b.pixel_box.intersects(window))
                });
                Ok(AnswerPayload::YesNo(yes))
            }
            QueryKind::SameObject { candidate, .. } => {
                let instance = gt.instance.as_ref().ok_or_else(|| missing("instance"))?;
                Ok(AnswerPayload::YesNo(majority_inside(instance, candidate)))
            }
            QueryKind::PairOrder { a, b, axis, ternary, .. } => {
                let raster = gt.field(*axis).ok_or_else(|| match axis {
                    Axis::Depth => missing("depth"),
                    _ => missing("normals"),
                })?;
                let mean_a = region_mean(raster, a);
                let mean_b = region_mean(raster, b);
                let tol = ternary.then(|| {
                    let (lo, hi) = raster.value_range().unwrap_or((0.0, 0.0));
                    self.eq_fraction * (hi - lo) as f64
                });
                Ok(AnswerPayload::Relation(relation_of(mean_a, mean_b, tol)))
            }
        }
    }
}

impl Backend for GroundedBackend {
    fn id(&self) -> &str {
        &self.name
    }

    fn model_id(&self) -> &str {
        &self.name
    }

    fn fetch(&self, query: &Query, _prompt: &str, _session: &Session) -> Result<RawReply, BackendError> {
        let payload = self.answer_payload(query)?;
        Ok(RawReply {
            text: render_payload(&payload),
            input_tokens: 0,
            output_tokens: 0,
            latency_ms: 0,
        })
    }
}

/// Noise modes for the scripted test double.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScriptedMode {
    /// Oracle answer, replaced by a uniformly random wrong option with the
    /// given probability.
    Flip { error_rate: f64 },
    /// Uniformly random valid answer; needs no ground truth.
    Uniform,
}

/// Deterministic test double: per-query randomness is keyed on
/// (seed, query digest), so answers are reproducible regardless of order.
pub struct ScriptedBackend {
    grounded: Option<GroundedBackend>,
    mode: ScriptedMode,
    seed: u64,
    cacheable: bool,
}

impl ScriptedBackend {
    pub fn new(grounded: GroundedBackend, error_rate: f64, seed: u64) -> Self {
        debug_assert!((0.0..=1.0).contains(&error_rate));
        Self {
            grounded: Some(grounded),
            mode: ScriptedMode::Flip { error_rate },
            seed,
        cacheable: false,
        }
    }

    pub fn uniform(seed: u64) -> Self {
        Self {
            grounded: None,
            mode: ScriptedMode::Uniform,
            seed,
            cacheable: false,
        }
    }

    /// Participate in the response cache (exercises cache plumbing offline).
    pub fn with_cacheable(mut self, cacheable: bool) -> Self {
        self.cacheable = cacheable;
        self
    }

    fn rng_for(&self, query: &Query) -> ChaCha8Rng {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(query.fingerprint().as_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

impl Backend for ScriptedBackend {
    fn id(&self) -> &str {
        "scripted"
    }

    fn model_id(&self) -> &str {
        "scripted"
    }

    fn cacheable(&self) -> bool {
        self.cacheable
    }

    fn fetch(&self, query: &Query, _prompt: &str, _session: &Session) -> Result<RawReply, BackendError> {
        let mut rng = self.rng_for(query);
        let options = query.options();
        let payload = match (self.mode, &self.grounded) {
            (ScriptedMode::Flip { error_rate }, Some(grounded)) => {
                perturb(grounded.answer_payload(query)?, query, &options, error_rate, &mut rng)
            }
            _ => uniform_payload(query, &options, &mut rng),
        };
        Ok(RawReply {
            text: render_payload(&payload),
            input_tokens: 0,
            output_tokens: 0,
            latency_ms: 0,
        })
    }
}

/// Canonical reply text for a structured payload; the normal parser reads
/// it back, so grounded and remote paths share one pipeline.
pub(crate) fn render_payload(payload: &AnswerPayload) -> String {
    match payload {
        AnswerPayload::Choices(choices) => choices
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{}: {c}", i + 1))
            .collect::<Vec<_>>()
            .join("\n"),
        AnswerPayload::Labels(labels) => {
            if labels.is_empty() {
                "none".to_string()
            } else {
                labels.join(", ")
            }
        }
        AnswerPayload::YesNo(yes) => if *yes { "yes" } else { "no" }.to_string(),
        AnswerPayload::Relation(r) => match r {
            Relation::Greater => "first",
            Relation::Less => "second",
            Relation::Equal => "equal",
        }
        .to_string(),
    }
}

fn perturb(
    payload: AnswerPayload,
    query: &Query,
    options: &[String],
    error_rate: f64,
    rng: &mut ChaCha8Rng,
) -> AnswerPayload {
    match payload {
        AnswerPayload::Choices(choices) => AnswerPayload::Choices(
            choices
                .into_iter()
                .map(|c| {
                    if rng.gen_bool(error_rate) {
                        wrong_option(&c, options, rng)
                    } else {
                        c
                    }
                })
                .collect(),
        ),
        AnswerPayload::YesNo(v) => {
            AnswerPayload::YesNo(if rng.gen_bool(error_rate) { !v } else { v })
        }
        AnswerPayload::Relation(r) => {
            if rng.gen_bool(error_rate) {
                let ternary = matches!(&query.kind, QueryKind::PairOrder { ternary: true, .. });
                let mut others: Vec<Relation> = [Relation::Greater, Relation::Less, Relation::Equal]
                    .into_iter()
                    .filter(|&x| x != r && (ternary || x != Relation::Equal))
                    .collect();
                let pick = rng.gen_range(0..others.len());
                AnswerPayload::Relation(others.swap_remove(pick))
            } else {
                AnswerPayload::Relation(r)
            }
        }
        AnswerPayload::Labels(mut labels) => {
            // Minimal wrong-set perturbation: toggle one option.
            if rng.gen_bool(error_rate) && !options.is_empty() {
                let opt = options[rng.gen_range(0..options.len())].clone();
                match labels.iter().position(|l| l == &opt) {
                    Some(i) => {
                        labels.remove(i);
                    }
                    None => labels.push(opt),
                }
            }
            AnswerPayload::Labels(labels)
        }
    }
}

fn wrong_option(current: &str, options: &[String], rng: &mut ChaCha8Rng) -> String {
    let others: Vec<&String> = options.iter().filter(|o| o.as_str() != current).collect();
    if others.is_empty() {
        current.to_string()
    } else {
        others[rng.gen_range(0..others.len())].clone()
    }
}

fn uniform_payload(query: &Query, options: &[String], rng: &mut ChaCha8Rng) -> AnswerPayload {
    match &query.kind {
        QueryKind::MultiChoice { items, .. } => AnswerPayload::Choices(
            (0..items.len())
                .map(|_| options[rng.gen_range(0..options.len())].clone())
                .collect(),
        ),
        QueryKind::MultiLabel { options, .. } => AnswerPayload::Labels(
            options
                .iter()
                .filter(|_| rng.gen_bool(0.5))
                .cloned()
                .collect(),
        ),
        QueryKind::Presence { .. } | QueryKind::SameObject { .. } => {
            AnswerPayload::YesNo(rng.gen_bool(0.5))
        }
        QueryKind::PairOrder { ternary, .. } => {
            let relations: &[Relation] = if *ternary {
                &[Relation::Greater, Relation::Less, Relation::Equal]
            } else {
                &[Relation::Greater, Relation::Less]
            };
            AnswerPayload::Relation(relations[rng.gen_range(0..relations.len())])
        }
    }
}

/// Most frequent non-ignored class over a region; ties break to the
/// smallest id, an all-ignored region falls back to class 0.
pub fn majority_class(mask: &IndexMask, region: &RegionSpec) -> u16 {
    let mut counts: std::collections::BTreeMap<u16, u64> = Default::default();
    for idx in region_indices(region, mask.size()) {
        let label = mask.labels()[idx];
        if label != mask.ignore_index() {
            *counts.entry(label).or_insert(0) += 1;
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .unwrap_or(0)
}

/// Strict pixel majority of a region lying inside an instance mask.
pub fn majority_inside(instance: &BinaryMask, region: &RegionSpec) -> bool {
    let indices = region_indices(region, instance.size());
    if indices.is_empty() {
        return false;
    }
    let inside = indices
        .iter()
        .filter(|&&i| instance.bits()[i])
        .count();
    inside * 2 > indices.len()
}

/// Mean of a raster's valid pixels over a region; 0 when nothing is valid.
pub fn region_mean(raster: &FloatRaster, region: &RegionSpec) -> f64 {
    let indices = region_indices(region, raster.size());
    raster.mean_over(&indices).unwrap_or(0.0)
}

fn region_indices(region: &RegionSpec, size: RasterSize) -> Vec<usize> {
    match region {
        RegionSpec::FullImage => (0..size.pixels()).collect(),
        RegionSpec::Window(b) => window_indices(b, size),
        RegionSpec::Region(r) => r.member_indices(size.width),
    }
}

fn window_indices(window: &PixelBox, size: RasterSize) -> Vec<usize> {
    let mut out = Vec::new();
    let x1 = window.x_max.min(size.width);
    let y1 = window.y_max.min(size.height);
    for y in window.y_min..y1 {
        for x in window.x_min..x1 {
            out.push(y as usize * size.width as usize + x as usize);
        }
    }
    out
}
