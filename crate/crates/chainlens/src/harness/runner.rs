//! The resumable run loop: a bounded worker pool walks the dataset in
//! units (one image, or one classification batch), appends one record per
//! image to `records.jsonl` in dataset order, and aggregates a summary.
//! Restarting a run replays nothing that is already on disk.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use super::dataset::DatasetSource;
use super::{
    BackendKind, ChainParams, Dataset, HarnessError, ResultRecord, RunManifest, RunSummary,
    TaskPayload,
};
use crate::backend::{
    Backend, CostTotals, GroundedBackend, PriceTable, ProviderProfile, QueryCache, RemoteBackend,
    ScriptedBackend, Session, SessionConfig, SourceImage, TemplateRegistry, Transcript,
};
use crate::chains::{
    classify_batch, detect, estimate_depth_ranks, estimate_normal_ranks, group_point,
    segment_image, ChainContext, ChainError,
};
use crate::chains::RankParams;
use crate::core::box_iou;
use crate::globalize::{normalize_and_sphere, scale_shift_fit};
use crate::metrics::{
    average_precision, coco_thresholds, pairwise_accuracy, raster_spearman,
    seg_metrics_from_confusion, ConfusionMatrix, TaskKind, RHO_SUBSAMPLE_CAP,
};
use crate::raster::{
    write_image_png, write_mask_png, write_pfm, FloatRaster, IndexMask, DEFAULT_IGNORE_INDEX,
};

pub struct RunOutcome {
    pub summary: RunSummary,
    pub records_path: PathBuf,
    pub summary_path: PathBuf,
    /// Backend fetches that were not cache hits, for cache assertions.
    pub fetches: u64,
    pub transport_calls: u64,
}

/// Execute (or resume) a manifest.
pub fn run_manifest(manifest: &RunManifest) -> Result<RunOutcome, HarnessError> {
    let dataset = Arc::new(Dataset::load(&manifest.dataset, manifest.vocab.as_deref())?);
    let mut ids: Vec<String> = dataset.ids().to_vec();
    if let Some(limit) = manifest.limit {
        ids.truncate(limit);
    }
    let units = plan_units(manifest, &ids);

    std::fs::create_dir_all(&manifest.output)?;
    std::fs::create_dir_all(manifest.output.join("outputs"))?;
    check_or_store_manifest(manifest)?;

    let session = Arc::new(build_session(manifest, &dataset)?);
    let records_path = manifest.output.join("records.jsonl");
    let existing = load_existing_records(&records_path, &units)?;
    let resume_units = existing.len();

    let mut all_records: Vec<Vec<ResultRecord>> = existing;
    if resume_units < units.len() {
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&records_path)?;
        let mut writer = std::io::BufWriter::new(file);

        let next = AtomicUsize::new(resume_units);
        let aborted = AtomicBool::new(false);
        let (tx, rx) = mpsc::channel::<(usize, Result<Vec<ResultRecord>, HarnessError>)>();
        let workers = manifest.workers.clamp(1, units.len() - resume_units);

        let computed: Result<Vec<Vec<ResultRecord>>, HarnessError> =
            std::thread::scope(|scope| {
                for _ in 0..workers {
                    let tx = tx.clone();
                    let next = &next;
                    let aborted = &aborted;
                    let units = &units;
                    let manifest = manifest;
                    let dataset = dataset.clone();
                    let session = session.clone();
                    scope.spawn(move || loop {
                        if aborted.load(Ordering::Relaxed) {
                            break;
                        }
                        let u = next.fetch_add(1, Ordering::SeqCst);
                        if u >= units.len() {
                            break;
                        }
                        let out = process_unit(manifest, &dataset, &session, &units[u]);
                        if tx.send((u, out)).is_err() {
                            break;
                        }
                    });
                }
                drop(tx);

                let mut pending: BTreeMap<usize, Vec<ResultRecord>> = BTreeMap::new();
                let mut ordered: Vec<Vec<ResultRecord>> = Vec::new();
                let mut next_write = resume_units;
                let mut first_error: Option<HarnessError> = None;
                for (u, outcome) in rx {
                    match outcome {
                        Ok(records) => {
                            pending.insert(u, records);
                        }
                        Err(e) => {
                            if first_error.is_none() {
                                first_error = Some(e);
                            }
                            aborted.store(true, Ordering::Relaxed);
                        }
                    }
                    while let Some(records) = pending.remove(&next_write) {
                        for record in &records {
                            let line =
                                serde_json::to_string(record).expect("serializable record");
                            writer.write_all(line.as_bytes())?;
                            writer.write_all(b"\n")?;
                        }
                        writer.flush()?;
                        ordered.push(records);
                        next_write += 1;
                    }
                }
                match first_error {
                    Some(e) => Err(e),
                    None => Ok(ordered),
                }
            });
        all_records.extend(computed?);
    }

    let flat: Vec<&ResultRecord> = all_records.iter().flatten().collect();
    let summary = summarize(manifest, &dataset, &flat, &load_prices(manifest)?)?;
    let summary_path = manifest.output.join("summary.json");
    std::fs::write(
        &summary_path,
        serde_json::to_string_pretty(&summary).expect("serializable summary"),
    )?;
    Ok(RunOutcome {
        fetches: session.fetch_count(),
        transport_calls: session.transport_call_count(),
        summary,
        records_path,
        summary_path,
    })
}

/// Work units in dataset order: classification batches or single images.
fn plan_units(manifest: &RunManifest, ids: &[String]) -> Vec<Vec<String>> {
    match manifest.task {
        TaskKind::Classify => ids
            .chunks(manifest.chain.classify_batch.max(1))
            .map(<[String]>::to_vec)
            .collect(),
        _ => ids.iter().map(|id| vec![id.clone()]).collect(),
    }
}

fn load_prices(manifest: &RunManifest) -> Result<PriceTable, HarnessError> {
    match &manifest.prices {
        Some(path) => Ok(PriceTable::from_file(path)?),
        None => Ok(PriceTable::default()),
    }
}

fn build_session(manifest: &RunManifest, dataset: &Arc<Dataset>) -> Result<Session, HarnessError> {
    let vocab = dataset.vocab();
    let spec = &manifest.backend;
    let backend: Arc<dyn Backend> = match spec.kind {
        BackendKind::Oracle => Arc::new(GroundedBackend::oracle(
            Arc::new(DatasetSource(dataset.clone())),
            vocab,
        )),
        BackendKind::Specialist => {
            let dir = spec.specialist_dir.as_ref().ok_or(HarnessError::BackendConfig(
                "specialist".into(),
                "backend.specialist_dir",
            ))?;
            let vocab_path = manifest
                .vocab
                .clone()
                .unwrap_or_else(|| manifest.dataset.join("vocab.txt"));
            let predictions = Arc::new(Dataset::load(dir, Some(&vocab_path))?);
            Arc::new(GroundedBackend::specialist(
                Arc::new(DatasetSource(predictions)),
                vocab,
            ))
        }
        BackendKind::Scripted => Arc::new(
            ScriptedBackend::new(
                GroundedBackend::oracle(Arc::new(DatasetSource(dataset.clone())), vocab),
                spec.error_rate,
                manifest.seed,
            )
            .with_cacheable(spec.cacheable),
        ),
        BackendKind::ScriptedUniform => {
            Arc::new(ScriptedBackend::uniform(manifest.seed).with_cacheable(spec.cacheable))
        }
        BackendKind::Remote => {
            let profile = ProviderProfile::parse(&spec.profile).ok_or(
                HarnessError::BackendConfig(spec.profile.clone(), "a known wire profile"),
            )?;
            Arc::new(RemoteBackend::over_http(
                profile,
                &spec.model,
                spec.base_url.as_deref(),
                manifest.session.max_in_flight,
            )?)
        }
    };

    let cache = if backend.cacheable() {
        let dir = manifest
            .cache_dir
            .clone()
            .unwrap_or_else(|| manifest.output.join("cache"));
        Some(QueryCache::new(dir))
    } else {
        None
    };
    let config = SessionConfig {
        max_answer_retries: manifest.session.max_answer_retries,
        backoff: manifest
            .session
            .backoff_secs
            .iter()
            .map(|&s| std::time::Duration::from_secs_f64(s))
            .collect(),
        max_in_flight: manifest.session.max_in_flight,
        batching: manifest.session.batching,
        max_output_tokens: manifest.session.max_output_tokens,
    };
    Ok(Session::new(
        backend,
        TemplateRegistry::with_dir(manifest.templates.dir.clone()),
        cache,
        load_prices(manifest)?,
        config,
    ))
}

fn check_or_store_manifest(manifest: &RunManifest) -> Result<(), HarnessError> {
    let path = manifest.output.join("manifest.json");
    let digest = manifest.digest();
    if path.is_file() {
        let stored: RunManifest = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| HarnessError::ManifestParse(format!("{}: {e}", path.display())))?;
        if stored.digest() != digest {
            return Err(HarnessError::ManifestMismatch(format!(
                "{} was produced by a different manifest; use a fresh output directory",
                manifest.output.display()
            )));
        }
    } else {
        std::fs::write(
            &path,
            serde_json::to_string_pretty(manifest).expect("serializable manifest"),
        )?;
    }
    Ok(())
}

/// Read records written by a previous (possibly interrupted) run. Only whole
/// units count; a trailing partial unit or line is truncated so the rerun
/// reproduces it byte-identically.
fn load_existing_records(
    path: &Path,
    units: &[Vec<String>],
) -> Result<Vec<Vec<ResultRecord>>, HarnessError> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let text = std::fs::read_to_string(path)?;
    let mut complete_lines: Vec<&str> = text.lines().collect();
    if !text.ends_with('\n') {
        complete_lines.pop();
    }
    let mut records = Vec::with_capacity(complete_lines.len());
    for (i, line) in complete_lines.iter().enumerate() {
        let record: ResultRecord =
            serde_json::from_str(line).map_err(|e| HarnessError::RecordsMismatch {
                line: i + 1,
                detail: e.to_string(),
            })?;
        records.push(record);
    }

    let mut grouped: Vec<Vec<ResultRecord>> = Vec::new();
    let mut cursor = 0usize;
    for unit in units {
        if cursor + unit.len() > records.len() {
            break;
        }
        let chunk = &records[cursor..cursor + unit.len()];
        for (record, expected) in chunk.iter().zip(unit) {
            if &record.image_id != expected {
                return Err(HarnessError::RecordsMismatch {
                    line: cursor + 1,
                    detail: format!(
                        "found image {:?}, expected {:?}",
                        record.image_id, expected
                    ),
                });
            }
        }
        grouped.push(chunk.to_vec());
        cursor += unit.len();
    }

    // Drop a trailing partial unit (or partial line) from the file.
    let keep_lines = cursor;
    if keep_lines < complete_lines.len() || !text.ends_with('\n') {
        let mut kept: String = complete_lines[..keep_lines]
            .iter()
            .flat_map(|l| [*l, "\n"])
            .collect();
        if kept.is_empty() {
            kept.clear();
        }
        std::fs::write(path, kept)?;
    }
    Ok(grouped)
}

fn process_unit(
    manifest: &RunManifest,
    dataset: &Arc<Dataset>,
    session: &Session,
    unit: &[String],
) -> Result<Vec<ResultRecord>, HarnessError> {
    match manifest.task {
        TaskKind::Classify => classify_unit(manifest, dataset, session, unit),
        _ => {
            let id = &unit[0];
            Ok(vec![image_unit(manifest, dataset, session, id)?])
        }
    }
}

fn blank(chain: &ChainParams) -> Option<[u8; 3]> {
    chain.blind.then_some(chain.blank_color)
}

fn classify_unit(
    manifest: &RunManifest,
    dataset: &Arc<Dataset>,
    session: &Session,
    unit: &[String],
) -> Result<Vec<ResultRecord>, HarnessError> {
    let vocab = dataset.vocab();
    let options = Arc::new(vocab.names().to_vec());
    let mut images = Vec::with_capacity(unit.len());
    for id in unit {
        images.push((id.clone(), SourceImage::new(Arc::new(dataset.image(id)?))));
    }
    let mut transcript = Transcript::new();
    let results = classify_batch(
        session,
        &options,
        &images,
        &manifest.templates.ids.classify,
        blank(&manifest.chain),
        &mut transcript,
    );
    let prices = load_prices(manifest)?;
    let (input_tokens, output_tokens) = transcript.total_tokens();
    let digest = transcript.digest();
    let price = prices.price(session.model_id())?;
    let usd = input_tokens as f64 * price.input_per_million / 1e6
        + output_tokens as f64 * price.output_per_million / 1e6;

    let mut records = Vec::with_capacity(unit.len());
    for (i, (id, result)) in unit.iter().zip(results).enumerate() {
        // Batch cost is attributed to the first record of the unit.
        let (q, it, ot, cost) = if i == 0 {
            (transcript.len() as u64, input_tokens, output_tokens, usd)
        } else {
            (0, 0, 0, 0.0)
        };
        let mut record = ResultRecord {
            image_id: id.clone(),
            payload: None,
            metrics: BTreeMap::new(),
            transcript_digest: digest.clone(),
            queries: q,
            input_tokens: it,
            output_tokens: ot,
            cost_usd: cost,
            error: None,
        };
        match result {
            Ok(label_id) => {
                let correct = dataset
                    .ground_truth(id)?
                    .label
                    .map(|gt_label| gt_label == label_id);
                record.payload = Some(TaskPayload::Classify {
                    label: vocab.name(label_id).unwrap_or("?").to_string(),
                    label_id,
                    correct,
                });
                if let Some(c) = correct {
                    record.metrics.insert("correct".into(), f64::from(c as u8));
                }
            }
            Err(e) => record.error = Some(e.to_string()),
        }
        records.push(record);
    }
    Ok(records)
}

fn image_unit(
    manifest: &RunManifest,
    dataset: &Arc<Dataset>,
    session: &Session,
    id: &str,
) -> Result<ResultRecord, HarnessError> {
    let mut transcript = Transcript::new();
    let outcome = run_image_chain(manifest, dataset, session, id, &mut transcript);
    let prices = load_prices(manifest)?;
    let (input_tokens, output_tokens) = transcript.total_tokens();
    let price = prices.price(session.model_id())?;
    let cost_usd = input_tokens as f64 * price.input_per_million / 1e6
        + output_tokens as f64 * price.output_per_million / 1e6;
    let mut record = ResultRecord {
        image_id: id.to_string(),
        payload: None,
        metrics: BTreeMap::new(),
        transcript_digest: transcript.digest(),
        queries: transcript.len() as u64,
        input_tokens,
        output_tokens,
        cost_usd,
        error: None,
    };
    match outcome {
        Ok((payload, metrics)) => {
            record.payload = Some(payload);
            record.metrics = metrics;
        }
        // A per-image chain failure is recorded, not fatal to the run.
        Err(HarnessError::Chain(e)) => record.error = Some(e.to_string()),
        Err(other) => return Err(other),
    }
    Ok(record)
}

type ImageOutcome = (TaskPayload, BTreeMap<String, f64>);

fn run_image_chain(
    manifest: &RunManifest,
    dataset: &Arc<Dataset>,
    session: &Session,
    id: &str,
    transcript: &mut Transcript,
) -> Result<ImageOutcome, HarnessError> {
    let chain = &manifest.chain;
    let source = SourceImage::new(Arc::new(dataset.image(id)?));
    let mut ctx = ChainContext {
        session,
        image_id: id,
        source,
        templates: &manifest.templates.ids,
        marker: chain.marker,
        context_factor: chain.context_factor,
        blank: blank(chain),
        single_image: chain.single_image,
        transcript,
    };
    let vocab = dataset.vocab();
    let options = Arc::new(vocab.names().to_vec());
    let out_rel = |suffix: &str| format!("outputs/{id}_{suffix}");
    let out_abs = |suffix: &str| manifest.output.join("outputs").join(format!("{id}_{suffix}"));
    let mut metrics = BTreeMap::new();

    match manifest.task {
        TaskKind::Classify => unreachable!("handled in classify_unit"),
        TaskKind::Detect => {
            let outcome = detect(&mut ctx, &vocab, &options, chain.list_strategy, &chain.grid)?;
            let gt_boxes = dataset.boxes(id);
            if !gt_boxes.is_empty() {
                let mut iou_sum = 0.0;
                for gt in gt_boxes {
                    let best = outcome
                        .boxes
                        .iter()
                        .filter(|b| b.class_id == gt.class_id)
                        .map(|b| box_iou(&b.pixel_box, &gt.pixel_box))
                        .fold(0.0f64, f64::max);
                    iou_sum += best;
                }
                metrics.insert("mean_iou".into(), iou_sum / gt_boxes.len() as f64);
            }
            metrics.insert("predicted".into(), outcome.boxes.len() as f64);
            metrics.insert("gt_boxes".into(), gt_boxes.len() as f64);
            Ok((
                TaskPayload::Detect {
                    boxes: outcome.boxes,
                    not_found: outcome.not_found,
                },
                metrics,
            ))
        }
        TaskKind::Segment => {
            let (mask, _map) = segment_image(
                &mut ctx,
                &options,
                chain.k,
                chain.seg_batch,
                chain.compactness,
                chain.slic_iterations,
            )?;
            write_mask_png(&mask, &out_abs("mask.png"))?;
            let gt = dataset.ground_truth(id)?;
            let mut confusion = Vec::new();
            if let Some(gt_mask) = &gt.mask {
                let cm = ConfusionMatrix::from_masks(&mask, gt_mask)
                    .map_err(|e| HarnessError::ManifestParse(e.to_string()))?;
                let m = seg_metrics_from_confusion(&cm);
                metrics.insert("miou".into(), m.miou);
                metrics.insert("pixel_acc".into(), m.pixel_acc);
                confusion = cm.to_triples();
            }
            Ok((
                TaskPayload::Segment {
                    mask_path: out_rel("mask.png"),
                    confusion,
                },
                metrics,
            ))
        }
        TaskKind::Group => {
            let point = dataset.point(id).ok_or(HarnessError::Chain(
                ChainError::PointOutOfBounds { x: u32::MAX, y: u32::MAX },
            ))?;
            let (mask, _map) =
                group_point(&mut ctx, point, chain.k, chain.compactness, chain.slic_iterations)?;
            let as_index = IndexMask::from_labels(
                mask.size(),
                mask.bits().iter().map(|&b| b as u16).collect(),
                DEFAULT_IGNORE_INDEX,
            );
            write_mask_png(&as_index, &out_abs("group.png"))?;
            let gt = dataset.ground_truth(id)?;
            if let Some(instance) = &gt.instance {
                metrics.insert("iou".into(), mask.iou(instance));
            }
            Ok((
                TaskPayload::Group {
                    mask_path: out_rel("group.png"),
                },
                metrics,
            ))
        }
        TaskKind::Depth => {
            let params = RankParams {
                k: chain.k,
                n_pairs: chain.n_pairs,
                compactness: chain.compactness,
                slic_iterations: chain.slic_iterations,
                weights: chain.weights,
                seed: manifest.seed,
                depth_ternary: chain.depth_ternary,
            };
            let out = estimate_depth_ranks(&mut ctx, &params)?;
            write_pfm(&out.rank_raster, &out_abs("rank.pfm"))?;
            let gt = dataset.ground_truth(id)?;
            let mut fit = crate::globalize::ScaleShift {
                scale: 1.0,
                shift: 0.0,
                degenerate: false,
            };
            if let Some(gt_depth) = &gt.depth {
                if let Ok(rho) =
                    raster_spearman(&out.rank_raster, gt_depth, RHO_SUBSAMPLE_CAP, manifest.seed)
                {
                    metrics.insert("rho".into(), rho);
                }
                fit = scale_shift_fit(&out.rank_raster, gt_depth, None)?;
                let mut aligned = out.rank_raster.clone();
                for v in aligned.values_mut() {
                    *v = fit.apply(*v as f64) as f32;
                }
                if let Ok(d) = crate::metrics::depth_metrics(&aligned, gt_depth, None) {
                    metrics.insert("delta1".into(), d.delta1);
                    metrics.insert("delta2".into(), d.delta2);
                    metrics.insert("delta3".into(), d.delta3);
                    metrics.insert("abs_rel".into(), d.abs_rel);
                }
                let means = segment_means(&out.map, gt_depth);
                let tol = chain
                    .depth_ternary
                    .then(|| eq_tolerance(gt_depth));
                if let Ok(acc) = pairwise_accuracy(&out.comparisons, &means, tol) {
                    metrics.insert("pairwise_acc".into(), acc);
                }
            }
            Ok((
                TaskPayload::Depth {
                    rank_path: out_rel("rank.pfm"),
                    scale: fit.scale,
                    shift: fit.shift,
                    degenerate: fit.degenerate,
                },
                metrics,
            ))
        }
        TaskKind::Normals => {
            let params = RankParams {
                k: chain.k,
                n_pairs: chain.n_pairs,
                compactness: chain.compactness,
                slic_iterations: chain.slic_iterations,
                weights: chain.weights,
                seed: manifest.seed,
                depth_ternary: true,
            };
            let out = estimate_normal_ranks(&mut ctx, &params)?;
            let names = ["rank_x.pfm", "rank_y.pfm", "rank_z.pfm"];
            for (raster, name) in out.rank_rasters.iter().zip(names) {
                write_pfm(raster, &out_abs(name))?;
            }
            let sphere = normalize_and_sphere(&out.rank_rasters)?;
            write_image_png(&sphere, &out_abs("sphere.png"))?;
            let gt = dataset.ground_truth(id)?;
            if let Some(gt_normals) = &gt.normals {
                for (axis, label) in ["x", "y", "z"].iter().enumerate() {
                    if let Ok(rho) = raster_spearman(
                        &out.rank_rasters[axis],
                        &gt_normals[axis],
                        RHO_SUBSAMPLE_CAP,
                        manifest.seed,
                    ) {
                        metrics.insert(format!("rho_{label}"), rho);
                    }
                    let means = segment_means(&out.map, &gt_normals[axis]);
                    let tol = Some(eq_tolerance(&gt_normals[axis]));
                    if let Ok(acc) = pairwise_accuracy(&out.comparisons[axis], &means, tol) {
                        metrics.insert(format!("pairwise_acc_{label}"), acc);
                    }
                }
            }
            Ok((
                TaskPayload::Normals {
                    rank_paths: names.map(|n| out_rel(n)),
                    sphere_path: out_rel("sphere.png"),
                },
                metrics,
            ))
        }
    }
}

/// Per-segment means of a raster, the field the oracle compared against.
fn segment_means(map: &crate::superpixel::SuperpixelMap, raster: &FloatRaster) -> Vec<f64> {
    (0..map.k())
        .map(|id| raster.mean_over(&map.member_indices(id)).unwrap_or(0.0))
        .collect()
}

/// The grounded ternary tolerance: 5% of the per-image value range.
fn eq_tolerance(raster: &FloatRaster) -> f64 {
    let (lo, hi) = raster.value_range().unwrap_or((0.0, 0.0));
    0.05 * (hi - lo) as f64
}

fn summarize(
    manifest: &RunManifest,
    dataset: &Arc<Dataset>,
    records: &[&ResultRecord],
    prices: &PriceTable,
) -> Result<RunSummary, HarnessError> {
    let mut metrics: BTreeMap<String, f64> = BTreeMap::new();
    let failed = records.iter().filter(|r| r.error.is_some()).count() as u64;

    let mean_of = |records: &[&ResultRecord], key: &str| -> Option<f64> {
        let values: Vec<f64> = records
            .iter()
            .filter_map(|r| r.metrics.get(key).copied())
            .collect();
        (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
    };

    match manifest.task {
        TaskKind::Classify => {
            if let Some(top1) = mean_of(records, "correct") {
                metrics.insert("top1".into(), top1);
            }
        }
        TaskKind::Detect => {
            let mut preds = Vec::with_capacity(records.len());
            let mut gts = Vec::with_capacity(records.len());
            for record in records {
                let boxes = match &record.payload {
                    Some(TaskPayload::Detect { boxes, .. }) => boxes.clone(),
                    _ => Vec::new(),
                };
                preds.push(boxes);
                gts.push(dataset.boxes(&record.image_id).to_vec());
            }
            let scores = average_precision(&preds, &gts, &coco_thresholds());
            metrics.insert("ap".into(), scores.ap);
            metrics.insert("ap50".into(), scores.ap50);
            metrics.insert("ap75".into(), scores.ap75);
            if let Some(mean_iou) = mean_of(records, "mean_iou") {
                metrics.insert("mean_iou".into(), mean_iou);
            }
        }
        TaskKind::Segment => {
            let mut accumulated = ConfusionMatrix::new(DEFAULT_IGNORE_INDEX);
            for record in records {
                if let Some(TaskPayload::Segment { confusion, .. }) = &record.payload {
                    accumulated.merge(&ConfusionMatrix::from_triples(
                        confusion,
                        DEFAULT_IGNORE_INDEX,
                    ));
                }
            }
            let m = seg_metrics_from_confusion(&accumulated);
            metrics.insert("miou".into(), m.miou);
            metrics.insert("pixel_acc".into(), m.pixel_acc);
        }
        TaskKind::Group => {
            if let Some(miou) = mean_of(records, "iou") {
                metrics.insert("miou".into(), miou);
            }
        }
        TaskKind::Depth => {
            for key in ["rho", "pairwise_acc", "delta1", "delta2", "delta3", "abs_rel"] {
                if let Some(v) = mean_of(records, key) {
                    metrics.insert(key.into(), v);
                }
            }
        }
        TaskKind::Normals => {
            for key in [
                "rho_x",
                "rho_y",
                "rho_z",
                "pairwise_acc_x",
                "pairwise_acc_y",
                "pairwise_acc_z",
            ] {
                if let Some(v) = mean_of(records, key) {
                    metrics.insert(key.into(), v);
                }
            }
        }
    }

    let model_id = match manifest.backend.kind {
        BackendKind::Remote => manifest.backend.model.clone(),
        BackendKind::Oracle => "oracle".into(),
        BackendKind::Specialist => "specialist".into(),
        BackendKind::Scripted | BackendKind::ScriptedUniform => "scripted".into(),
    };
    let price = prices.price(&model_id)?;
    let input_tokens: u64 = records.iter().map(|r| r.input_tokens).sum();
    let output_tokens: u64 = records.iter().map(|r| r.output_tokens).sum();
    let cost = CostTotals {
        input_tokens,
        output_tokens,
        usd: input_tokens as f64 * price.input_per_million / 1e6
            + output_tokens as f64 * price.output_per_million / 1e6,
    };

    Ok(RunSummary {
        task: manifest.task,
        role: manifest.role(),
        backend_id: format!("{:?}", manifest.backend.kind).to_lowercase(),
        model_id,
        images: records.len() as u64,
        failed,
        metrics,
        cost,
        manifest_digest: manifest.digest(),
    })
}
