//! chainlens solves standard computer-vision tasks — classification, object
//! detection, semantic segmentation, point-prompted grouping, relative depth,
//! and surface normals — by decomposing each task into chains of
//! text-answerable sub-queries against a pluggable multimodal-model backend.
//!
//! Results are scored with the usual task metrics and calibrated against
//! control baselines: an oracle that answers every sub-query from ground
//! truth, a specialist constrained to the same chain, and a blind guess.
//!
//! Module map:
//! - [`core`]: vocabularies, pixel geometry, normalized scoring
//! - [`raster`]: image/float-raster/mask persistence and mask decoding
//! - [`superpixel`]: SLIC, adjacency graphs, semantic pyramids, pair sampling
//! - [`backend`]: the sub-query protocol, oracle/scripted/remote backends,
//!   caching, retries, cost accounting
//! - [`chains`]: the six task chains
//! - [`globalize`]: pairwise-relation globalization and scale/shift fitting
//! - [`metrics`]: AP, mIoU, depth deltas, rank correlations, subset selection
//! - [`harness`]: manifests, the resumable runner, reports, synthetic data

pub mod backend;
pub mod chains;
pub mod core;
pub mod globalize;
pub mod harness;
pub mod metrics;
pub mod raster;
pub mod superpixel;
