//! Command-line entry point: execute runs, aggregate reports, generate the
//! bundled synthetic dataset, and pick representative evaluation subsets.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use chainlens::core::RasterSize;
use chainlens::harness::{generate_dataset, report, run_manifest, RunManifest, SyntheticConfig};
use chainlens::metrics::select_subset;

#[derive(Parser)]
#[command(name = "chainlens", version, about = "Benchmark multimodal models on classical vision tasks via prompt chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute (or resume) a run manifest.
    Run {
        manifest: PathBuf,
    },
    /// Aggregate one report over completed run directories.
    Report {
        run_dirs: Vec<PathBuf>,
        /// Output directory for report.md / report.json.
        #[arg(short, long, default_value = "report")]
        out: PathBuf,
    },
    /// Generate the synthetic dataset used by the offline suites.
    GenSynthetic {
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        images: usize,
        /// Image size as WxH.
        #[arg(long, default_value = "64x64")]
        size: String,
        #[arg(long, default_value_t = 8)]
        classes: usize,
    },
    /// Pick the smallest sample subset preserving model rankings.
    SelectSubset {
        scores: PathBuf,
    },
}

#[derive(Deserialize)]
struct SubsetRequest {
    models: Vec<String>,
    /// One row of per-sample scores per model.
    scores: Vec<Vec<f64>>,
    sizes: Vec<usize>,
    #[serde(default = "default_threshold")]
    threshold: f64,
    #[serde(default = "default_bootstraps")]
    bootstraps: usize,
    #[serde(default)]
    seed: u64,
}

fn default_threshold() -> f64 {
    0.9
}

fn default_bootstraps() -> usize {
    100
}

#[derive(Serialize)]
struct SubsetResponse {
    size: usize,
    mean_tau: f64,
    indices: Vec<usize>,
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn dispatch() -> Result<ExitCode, String> {
    match Cli::parse().command {
        Command::Run { manifest } => {
            let manifest = RunManifest::from_file(&manifest).map_err(|e| e.to_string())?;
            let outcome = run_manifest(&manifest).map_err(|e| e.to_string())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&outcome.summary).expect("serializable")
            );
            eprintln!(
                "records: {} (fetches: {}, wire calls: {})",
                outcome.records_path.display(),
                outcome.fetches,
                outcome.transport_calls
            );
            if outcome.summary.failed > 0 {
                eprintln!("{} image(s) failed", outcome.summary.failed);
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run_dirs, out } => {
            if run_dirs.is_empty() {
                return Err("report needs at least one run directory".into());
            }
            let report = report(&run_dirs, &out).map_err(|e| e.to_string())?;
            for warning in &report.warnings {
                eprintln!("warning: {warning}");
            }
            println!("wrote {}", out.join("report.md").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::GenSynthetic {
            out_dir,
            seed,
            images,
            size,
            classes,
        } => {
            let (w, h) = size
                .split_once('x')
                .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)))
                .ok_or_else(|| format!("bad --size {size:?}, expected WxH"))?;
            let config = SyntheticConfig {
                images,
                size: RasterSize::new(w, h),
                classes,
                seed,
                ..Default::default()
            };
            generate_dataset(&config, &out_dir).map_err(|e| e.to_string())?;
            println!("wrote {} images under {}", images, out_dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::SelectSubset { scores } => {
            let text = std::fs::read_to_string(&scores).map_err(|e| e.to_string())?;
            let request: SubsetRequest = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            if request.models.len() != request.scores.len() {
                return Err("models and scores rows must align".into());
            }
            let selected = select_subset(
                &request.scores,
                &request.sizes,
                request.threshold,
                request.bootstraps,
                request.seed,
            )
            .map_err(|e| e.to_string())?;
            println!(
                "{}",
                serde_json::to_string_pretty(&SubsetResponse {
                    size: selected.size,
                    mean_tau: selected.mean_tau,
                    indices: selected.indices,
                })
                .expect("serializable")
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}
