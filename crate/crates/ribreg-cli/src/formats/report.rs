//! JSON report records. One document per file, pretty-printed, keys in
//! struct order; floats round-trip losslessly through serde_json's shortest
//! representation.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ribreg_core::engine::RegistrationConfig;
use ribreg_core::loss::LossBreakdown;
use ribreg_core::metrics::MetricsReport;
use ribreg_core::phantom::{DeformationSpec, PhantomParams};
use ribreg_core::qc::{QcReport, QcThresholds};

use crate::error::{CliError, Result};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    body.push('\n');
    fs::write(path, body).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let body = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&body).map_err(|e| CliError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Output record of `ribreg register`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisterRecord {
    pub moving: PathBuf,
    pub fixed: PathBuf,
    pub config: RegistrationConfig,
    pub field_file: PathBuf,
    pub warped_file: PathBuf,
    pub stage1_trace_len: usize,
    /// Loss at every iterate, stage 1 then stage 2. Non-finite entries from
    /// an aborted run are dropped so the record stays JSON-representable.
    pub loss_trace: Vec<LossBreakdown>,
    pub best_total: f64,
    pub non_finite_abort: bool,
}

/// Output record of `ribreg metrics`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub warped: PathBuf,
    pub fixed: PathBuf,
    pub field: PathBuf,
    pub report: MetricsReport,
}

/// Output record of `ribreg qc` for one mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QcRecord {
    pub mask: PathBuf,
    pub thresholds: QcThresholds,
    pub report: QcReport,
}

/// Triage summary over a QC batch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriageRecord {
    pub thresholds: QcThresholds,
    pub total: usize,
    pub passed: usize,
    pub failing: Vec<TriageEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriageEntry {
    pub mask: PathBuf,
    pub first_failing_pair: u8,
}

/// Sidecar metadata of `ribreg diff`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffRecord {
    pub fixed: PathBuf,
    pub warped: PathBuf,
    pub rgb_file: PathBuf,
    pub margin: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// Symmetric render scale: signed = (index/255 * 2 - 1) * scale.
    pub scale: f64,
    /// Optional 16-bit signed raster: value = (sample/65535 * 2 - 1) * scale.
    pub signed16_file: Option<PathBuf>,
}

/// Output record of `ribreg phantom`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomRecord {
    pub params: PhantomParams,
    pub deformation: Option<DeformationSpec>,
    pub files: Vec<PathBuf>,
}
