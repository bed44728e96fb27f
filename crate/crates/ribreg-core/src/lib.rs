//! Deformable 2D chest-radiograph registration core.
//!
//! The crate optimizes a per-pair displacement field under a combined loss
//! (negative normalized cross-correlation, smoothness of the field, and an
//! optional anatomy penalty on warped segmentation masks) with a two-stage
//! coarse-to-fine schedule, and ships the full evaluation toolkit around it:
//! rib/lung overlap metrics, warp-folding measurement, rule-based rib-mask
//! quality control, GMM histogram-matched difference images, non-parametric
//! model-comparison statistics, and a deterministic synthetic phantom
//! generator for ground-truth benchmarks.
//!
//! The crate is `no_std` (alloc required); all float transcendentals route
//! through `libm` so results are bit-stable across platforms. File formats,
//! rasters and the command-line surface live in the companion `ribreg-cli`
//! crate.

#![no_std]

extern crate alloc;

pub mod diffviz;
pub mod engine;
pub mod error;
mod fmath;
pub mod grid;
pub mod loss;
pub mod metrics;
pub mod phantom;
pub mod qc;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
