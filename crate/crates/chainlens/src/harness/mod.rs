//! Run orchestration: manifests, the resumable runner, baseline roles,
//! reports, and the bundled synthetic dataset generator.

mod dataset;
mod report;
mod runner;
mod synthetic;

pub use dataset::{instance_at, BoxRecord, BoxesLine, Dataset, DatasetSource, LabelLine, PointLine};
pub use report::{report, ReportError};
pub use runner::{run_manifest, RunOutcome};
pub use synthetic::{generate_dataset, generate_scene, vocabulary, Scene, SyntheticConfig};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, CostTotals};
use crate::chains::{ChainError, GridParams, ListStrategy, TemplateIds};
use crate::core::{CoreError, LabeledBox};
use crate::globalize::Weights;
use crate::metrics::TaskKind;
use crate::raster::RasterError;
use crate::superpixel::MarkerSpec;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing path {0}")]
    MissingPath(PathBuf),
    #[error("manifest parse error: {0}")]
    ManifestParse(String),
    #[error("manifest does not match the existing run: {0}")]
    ManifestMismatch(String),
    #[error("records.jsonl does not match the dataset order at line {line}: {detail}")]
    RecordsMismatch { line: usize, detail: String },
    #[error("{path}:{line}: {message}")]
    Jsonl {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("unknown image id {0}")]
    UnknownImage(String),
    #[error("unknown class {class:?} referenced by image {image_id}")]
    UnknownClassName { class: String, image_id: String },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Globalize(#[from] crate::globalize::GlobalizeError),
    #[error("backend kind {0:?} needs {1}")]
    BackendConfig(String, &'static str),
}

/// Which answer source drives a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Oracle,
    Specialist,
    Scripted,
    ScriptedUniform,
    Remote,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSpec {
    pub kind: BackendKind,
    /// Remote model id (also the price-table key).
    pub model: String,
    /// Remote wire profile: openai-chat, anthropic-messages,
    /// gemini-generate, openai-responses.
    pub profile: String,
    pub base_url: Option<String>,
    /// Scripted flip probability.
    pub error_rate: f64,
    /// Let a scripted backend use the response cache (exercises caching
    /// offline; remote backends always cache).
    pub cacheable: bool,
    /// Root of specialist predictions in the dataset layout.
    pub specialist_dir: Option<PathBuf>,
}

impl Default for BackendSpec {
    fn default() -> Self {
        Self {
            kind: BackendKind::Oracle,
            model: "gpt-4o-2024-08-06".into(),
            profile: "openai-chat".into(),
            base_url: None,
            error_rate: 0.0,
            cacheable: false,
            specialist_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainParams {
    /// Superpixel count for segmentation/grouping/depth/normals.
    pub k: usize,
    /// Sampled superpixel pairs for depth/normals.
    pub n_pairs: usize,
    /// Superpixels per segmentation query.
    pub seg_batch: usize,
    /// Images per classification query.
    pub classify_batch: usize,
    pub list_strategy: ListStrategy,
    pub grid: GridParams,
    pub marker: MarkerSpec,
    pub context_factor: f64,
    pub weights: Weights,
    pub depth_ternary: bool,
    pub compactness: f64,
    pub slic_iterations: usize,
    /// Single-image backend compatibility mode.
    pub single_image: bool,
    /// Blind-guess run: feed blank images, keep markers.
    pub blind: bool,
    pub blank_color: [u8; 3],
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            k: 100,
            n_pairs: 200,
            seg_batch: 16,
            classify_batch: 100,
            list_strategy: ListStrategy::Regions,
            grid: GridParams::default(),
            marker: MarkerSpec::default(),
            context_factor: 2.0,
            weights: Weights::default(),
            depth_ternary: false,
            compactness: 10.0,
            slic_iterations: 10,
            single_image: false,
            blind: false,
            blank_color: [255, 255, 255],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionParams {
    pub batching: bool,
    pub max_answer_retries: u32,
    pub max_in_flight: usize,
    pub max_output_tokens: u32,
    pub backoff_secs: Vec<f64>,
}

impl Default for SessionParams {
    fn default() -> Self {
        Self {
            batching: true,
            max_answer_retries: 3,
            max_in_flight: 4,
            max_output_tokens: 512,
            backoff_secs: vec![1.0, 4.0, 16.0],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateSpec {
    pub dir: Option<PathBuf>,
    pub ids: TemplateIds,
}

/// One reproducible run: task, data, backend, and every chain knob.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub task: TaskKind,
    pub dataset: PathBuf,
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub backend: BackendSpec,
    #[serde(default)]
    pub chain: ChainParams,
    #[serde(default)]
    pub session: SessionParams,
    #[serde(default)]
    pub templates: TemplateSpec,
    #[serde(default)]
    pub prices: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub limit: Option<usize>,
}

fn default_workers() -> usize {
    4
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::ManifestParse(format!("{}: {e}", path.display())))?;
        let mut manifest: RunManifest = serde_json::from_str(&text)
            .map_err(|e| HarnessError::ManifestParse(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            manifest.resolve_paths(base);
        }
        Ok(manifest)
    }

    /// Interpret relative paths against a base directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        fix(&mut self.dataset);
        fix(&mut self.output);
        if let Some(v) = &mut self.vocab {
            fix(v);
        }
        if let Some(v) = &mut self.prices {
            fix(v);
        }
        if let Some(v) = &mut self.cache_dir {
            fix(v);
        }
        if let Some(v) = &mut self.templates.dir {
            fix(v);
        }
        if let Some(v) = &mut self.backend.specialist_dir {
            fix(v);
        }
    }

    /// Stable digest binding records to the manifest that produced them.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let canonical = serde_json::to_string(self).expect("serializable manifest");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(&hasher.finalize()[..16])
    }

    /// Human-readable baseline role for reports.
    pub fn role(&self) -> String {
        let base = match self.backend.kind {
            BackendKind::Oracle => "oracle+chain".to_string(),
            BackendKind::Specialist => "specialist+chain".to_string(),
            BackendKind::Scripted => format!("scripted(e={})", self.backend.error_rate),
            BackendKind::ScriptedUniform => "scripted-uniform".to_string(),
            BackendKind::Remote => self.backend.model.clone(),
        };
        if self.chain.blind {
            format!("blind:{base}")
        } else {
            base
        }
    }
}

/// Task-specific persisted outcome of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskPayload {
    Classify {
        label: String,
        label_id: u16,
        correct: Option<bool>,
    },
    Detect {
        boxes: Vec<LabeledBox>,
        not_found: Vec<u16>,
    },
    Segment {
        mask_path: String,
        confusion: Vec<(u16, u16, u64)>,
    },
    Group {
        mask_path: String,
    },
    Depth {
        rank_path: String,
        scale: f64,
        shift: f64,
        degenerate: bool,
    },
    Normals {
        rank_paths: [String; 3],
        sphere_path: String,
    },
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub image_id: String,
    pub payload: Option<TaskPayload>,
    pub metrics: BTreeMap<String, f64>,
    pub transcript_digest: String,
    pub queries: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost_usd: f64,
    pub error: Option<String>,
}

/// `summary.json`: the aggregate over all records of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub task: TaskKind,
    pub role: String,
    pub backend_id: String,
    pub model_id: String,
    pub images: u64,
    pub failed: u64,
    pub metrics: BTreeMap<String, f64>,
    pub cost: CostTotals,
    pub manifest_digest: String,
}
