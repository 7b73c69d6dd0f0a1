//! Cross-run reporting: per-task metric tables, cost accounting, and
//! normalized scores anchored at the blind-guess and specialist baselines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunSummary;
use crate::core::normalize_axis;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("no summary.json in {0}")]
    MissingSummary(PathBuf),
    #[error("summary parse error in {0}: {1}")]
    SummaryParse(PathBuf, String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    /// task name -> role -> summary
    pub tasks: BTreeMap<String, Vec<RunSummary>>,
    /// task name -> role -> metric -> normalized score in [0, 1]
    pub normalized: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    pub warnings: Vec<String>,
}

/// Collect run summaries and render `report.md` + `report.json` into
/// `out_dir`. Normalization needs a blind run (lower anchor) and a
/// specialist run (upper anchor) for the task; without them the tables are
/// raw-only and a warning is recorded.
pub fn report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<Report, ReportError> {
    let mut tasks: BTreeMap<String, Vec<RunSummary>> = BTreeMap::new();
    for dir in run_dirs {
        let path = dir.join("summary.json");
        if !path.is_file() {
            return Err(ReportError::MissingSummary(dir.clone()));
        }
        let summary: RunSummary = serde_json::from_str(&std::fs::read_to_string(&path)?)
            .map_err(|e| ReportError::SummaryParse(path.clone(), e.to_string()))?;
        tasks
            .entry(summary.task.name().to_string())
            .or_default()
            .push(summary);
    }
    for summaries in tasks.values_mut() {
        summaries.sort_by(|a, b| a.role.cmp(&b.role));
    }

    let mut normalized = BTreeMap::new();
    let mut warnings = Vec::new();
    for (task, summaries) in &tasks {
        let blind = summaries.iter().find(|s| s.role.starts_with("blind"));
        let specialist = summaries.iter().find(|s| s.role == "specialist+chain");
        let (Some(blind), Some(specialist)) = (blind, specialist) else {
            warnings.push(format!(
                "task {task}: missing blind and/or specialist anchors; raw metrics only"
            ));
            continue;
        };
        let mut per_role: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for summary in summaries {
            let mut axes = BTreeMap::new();
            for (metric, value) in &summary.metrics {
                let (Some(lo), Some(hi)) =
                    (blind.metrics.get(metric), specialist.metrics.get(metric))
                else {
                    continue;
                };
                match normalize_axis(*value, *lo, *hi) {
                    Ok(score) => {
                        axes.insert(metric.clone(), score);
                    }
                    Err(_) => warnings.push(format!(
                        "task {task}, metric {metric}: blind and specialist anchors coincide"
                    )),
                }
            }
            per_role.insert(summary.role.clone(), axes);
        }
        normalized.insert(task.clone(), per_role);
    }

    let report = Report {
        tasks,
        normalized,
        warnings,
    };
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("report.json"),
        serde_json::to_string_pretty(&report).expect("serializable report"),
    )?;
    std::fs::write(out_dir.join("report.md"), render_markdown(&report))?;
    Ok(report)
}

fn render_markdown(report: &Report) -> String {
    let mut out = String::from("# Benchmark report\n");
    for (task, summaries) in &report.tasks {
        out.push_str(&format!("\n## {task}\n\n"));
        // stable column order: union of metric names, sorted
        let mut columns: Vec<&str> = summaries
            .iter()
            .flat_map(|s| s.metrics.keys().map(String::as_str))
            .collect();
        columns.sort_unstable();
        columns.dedup();

        out.push_str("| role | images | failed |");
        for c in &columns {
            out.push_str(&format!(" {c} |"));
        }
        out.push_str(" cost ($) |\n");
        out.push_str("|---|---|---|");
        for _ in &columns {
            out.push_str("---|");
        }
        out.push_str("---|\n");
        for s in summaries {
            out.push_str(&format!("| {} | {} | {} |", s.role, s.images, s.failed));
            for c in &columns {
                match s.metrics.get(*c) {
                    Some(v) => out.push_str(&format!(" {v:.4} |")),
                    None => out.push_str(" - |"),
                }
            }
            out.push_str(&format!(" {:.4} |\n", s.cost.usd));
        }

        if let Some(norm) = report.normalized.get(task) {
            out.push_str("\nNormalized against blind (0) and specialist (1):\n\n");
            out.push_str("| role |");
            for c in &columns {
                out.push_str(&format!(" {c} |"));
            }
            out.push('\n');
            out.push_str("|---|");
            for _ in &columns {
                out.push_str("---|");
            }
            out.push('\n');
            for s in summaries {
                let axes = norm.get(&s.role);
                out.push_str(&format!("| {} |", s.role));
                for c in &columns {
                    match axes.and_then(|a| a.get(*c)) {
                        Some(v) => out.push_str(&format!(" {v:.3} |")),
                        None => out.push_str(" - |"),
                    }
                }
                out.push('\n');
            }
        }
    }
    if !report.warnings.is_empty() {
        out.push_str("\n## Warnings\n\n");
        for w in &report.warnings {
            out.push_str(&format!("- {w}\n"));
        }
    }
    out
}
