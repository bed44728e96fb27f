use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use ribreg_core::stats::{compare_models, ScoreMatrix};

use crate::args::{resolve_out_dir, StatsArgs};
use crate::error::{CliError, Result};
use crate::formats::report::{self, MetricsRecord};

/// Per-subject metric values of one model directory, keyed by file name.
fn load_model_dir(dir: &Path, args: &StatsArgs) -> Result<BTreeMap<String, f64>> {
    let mut values = BTreeMap::new();
    let entries = fs::read_dir(dir).map_err(|source| CliError::Read {
        path: dir.to_path_buf(),
        source,
    })?;
    for entry in entries {
        let entry = entry.map_err(|source| CliError::Read {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        let record: MetricsRecord = report::read_json(&path)?;
        let value = args.metric.extract(&record.report).ok_or_else(|| {
            CliError::input(format!(
                "{}: metric '{}' absent from the report",
                path.display(),
                args.metric.name()
            ))
        })?;
        let name = path
            .file_name()
            .and_then(|s| s.to_str())
            .expect("json path has a name")
            .to_string();
        values.insert(name, value);
    }
    if values.is_empty() {
        return Err(CliError::input(format!(
            "{}: no metrics records found",
            dir.display()
        )));
    }
    Ok(values)
}

pub fn run(args: &StatsArgs) -> Result<PathBuf> {
    let per_model: Vec<BTreeMap<String, f64>> = args
        .models
        .iter()
        .map(|dir| load_model_dir(dir, args))
        .collect::<Result<_>>()?;

    // subjects present in every model directory, in name order
    let mut subjects: Vec<String> = per_model[0].keys().cloned().collect();
    subjects.retain(|name| per_model.iter().all(|m| m.contains_key(name)));
    if subjects.len() < 5 {
        return Err(CliError::input(format!(
            "only {} subjects shared by all models; need at least 5",
            subjects.len()
        )));
    }

    let model_names: Vec<String> = args
        .models
        .iter()
        .map(|d| {
            d.file_name()
                .and_then(|s| s.to_str())
                .unwrap_or("model")
                .to_string()
        })
        .collect();
    let rows: Vec<Vec<f64>> = subjects
        .iter()
        .map(|s| per_model.iter().map(|m| m[s]).collect())
        .collect();

    let matrix = ScoreMatrix::new(
        args.metric.name().to_string(),
        args.metric.orientation(),
        model_names,
        rows,
    )?;
    let comparison = compare_models(&matrix, args.alpha_friedman, args.alpha)?;

    let out = resolve_out_dir(&args.out);
    fs::create_dir_all(&out).map_err(|source| CliError::Write {
        path: out.clone(),
        source,
    })?;
    let record_file = out.join(format!("{}.json", args.prefix));
    report::write_json(&record_file, &comparison)?;
    Ok(record_file)
}
