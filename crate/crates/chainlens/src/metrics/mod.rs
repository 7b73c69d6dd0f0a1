//! Task scoring: COCO-style average precision, segmentation mIoU/pixel
//! accuracy, depth delta thresholds and AbsRel, Spearman/Kendall rank
//! correlations, pairwise comparison accuracy, and Kendall-tau bootstrap
//! subset selection.

mod correlation;
mod depth;
mod detection;
mod segmentation;
mod subset;

pub use correlation::{
    kendall_tau, pairwise_accuracy, raster_spearman, spearman, RHO_SUBSAMPLE_CAP,
};
pub use depth::{depth_metrics, DepthMetrics};
pub use detection::{average_precision, coco_thresholds, ApScores};
pub use segmentation::{seg_metrics, seg_metrics_from_confusion, ConfusionMatrix, SegMetrics};
pub use subset::{select_subset, SelectedSubset};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::RasterSize;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("inputs must have equal length >= 2, got {a} and {b}")]
    BadLength { a: usize, b: usize },
    #[error("constant input: rank correlation undefined")]
    ConstantInput,
    #[error("empty comparison set")]
    EmptyComparisons,
    #[error("no valid pixels")]
    NoValidPixels,
    #[error("size mismatch: {a} vs {b}")]
    SizeMismatch { a: RasterSize, b: RasterSize },
    #[error("subset selection needs at least 2 models, got {0}")]
    NotEnoughModels(usize),
    #[error("no candidate size reached tau >= {threshold}; best was {best_tau:.4} at size {best_size}")]
    NoSizePassed {
        threshold: f64,
        best_size: usize,
        best_tau: f64,
    },
    #[error("score rows must share one length")]
    RaggedScores,
}

/// The benchmarked task families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classify,
    Detect,
    Segment,
    Group,
    Depth,
    Normals,
}

impl TaskKind {
    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Classify => "classify",
            TaskKind::Detect => "detect",
            TaskKind::Segment => "segment",
            TaskKind::Group => "group",
            TaskKind::Depth => "depth",
            TaskKind::Normals => "normals",
        }
    }

    /// Metric names for this task whose lower values are better.
    pub fn lower_is_better(&self, metric: &str) -> bool {
        matches!((self, metric), (TaskKind::Depth, "abs_rel"))
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "classify" => TaskKind::Classify,
            "detect" => TaskKind::Detect,
            "segment" => TaskKind::Segment,
            "group" => TaskKind::Group,
            "depth" => TaskKind::Depth,
            "normals" => TaskKind::Normals,
            other => return Err(format!("unknown task kind {other:?}")),
        })
    }
}

/// Named metric values for one task over some number of samples. Values that
/// are undefined for a run (e.g. a constant-axis correlation) are simply
/// absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub task: TaskKind,
    pub values: BTreeMap<String, f64>,
    pub samples: u64,
}

impl MetricReport {
    pub fn new(task: TaskKind, samples: u64) -> Self {
        Self {
            task,
            values: BTreeMap::new(),
            samples,
        }
    }

    pub fn set(&mut self, name: &str, value: f64) -> &mut Self {
        self.values.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }
}
