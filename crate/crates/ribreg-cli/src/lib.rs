//! Command-line surface and file formats of the ribreg toolkit.
//!
//! Everything the `ribreg` binary does is exposed here as a library so
//! pipelines and tests can run jobs in-process: [`args::JobConfig`] describes
//! a job, [`commands::dispatch`] executes it, and [`formats`] holds the PNG,
//! DFLD and JSON codecs.

pub mod args;
pub mod commands;
pub mod error;
pub mod formats;
