//! Subcommand implementations. Each `run` returns the path of the primary
//! record it wrote.

pub mod diff;
pub mod metrics;
pub mod phantom;
pub mod qc;
pub mod register;
pub mod stats;

use crate::args::JobConfig;
use crate::error::Result;
use std::path::PathBuf;

pub fn dispatch(job: &JobConfig) -> Result<PathBuf> {
    match job {
        JobConfig::Register(args) => register::run(args),
        JobConfig::Diff(args) => diff::run(args),
        JobConfig::Metrics(args) => metrics::run(args),
        JobConfig::Qc(args) => qc::run(args),
        JobConfig::Stats(args) => stats::run(args),
        JobConfig::Phantom(args) => phantom::run(args),
    }
}
