use std::fs;
use std::path::{Path, PathBuf};

use ribreg_core::grid::LabelSemantics;
use ribreg_core::qc::qc_mask;

use crate::args::{resolve_out_dir, QcArgs};
use crate::error::{CliError, Result};
use crate::formats::{raster, report};

fn collect_files(args: &QcArgs) -> Result<Vec<PathBuf>> {
    let mut files = args.masks.clone();
    if let Some(dir) = &args.dir {
        let entries = fs::read_dir(dir).map_err(|source| CliError::Read {
            path: dir.clone(),
            source,
        })?;
        for entry in entries {
            let entry = entry.map_err(|source| CliError::Read {
                path: dir.clone(),
                source,
            })?;
            let path = entry.path();
            if path.extension().and_then(|e| e.to_str()) == Some("png") {
                files.push(path);
            }
        }
    }
    if files.is_empty() {
        return Err(CliError::input("no mask files given (paths or --dir)"));
    }
    files.sort();
    files.dedup();
    Ok(files)
}

fn qc_one(path: &Path, thresholds: &ribreg_core::qc::QcThresholds) -> Result<report::QcRecord> {
    let mask = raster::load_mask(path, LabelSemantics::RibPairs)?;
    let rep = qc_mask(&mask, thresholds)?;
    Ok(report::QcRecord {
        mask: path.to_path_buf(),
        thresholds: *thresholds,
        report: rep,
    })
}

pub fn run(args: &QcArgs) -> Result<PathBuf> {
    let thresholds = args.thresholds();
    thresholds.validate()?;
    let files = collect_files(args)?;
    let jobs = args.jobs.max(1).min(files.len());

    // worker w handles indices w, w+jobs, w+2*jobs, ... so the output order
    // is independent of scheduling
    let mut results: Vec<Option<Result<report::QcRecord>>> = Vec::new();
    results.resize_with(files.len(), || None);
    if jobs <= 1 {
        for (i, f) in files.iter().enumerate() {
            results[i] = Some(qc_one(f, &thresholds));
        }
    } else {
        let chunks: Vec<(usize, &Path)> = files
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.as_path()))
            .collect();
        let mut slots: Vec<(usize, Result<report::QcRecord>)> = std::thread::scope(|scope| {
            let mut handles = Vec::new();
            for w in 0..jobs {
                let mine: Vec<(usize, &Path)> =
                    chunks.iter().copied().skip(w).step_by(jobs).collect();
                let thresholds = thresholds;
                handles.push(scope.spawn(move || {
                    mine.into_iter()
                        .map(|(i, p)| (i, qc_one(p, &thresholds)))
                        .collect::<Vec<_>>()
                }));
            }
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("qc worker panicked"))
                .collect()
        });
        for (i, r) in slots.drain(..) {
            results[i] = Some(r);
        }
    }

    let out = resolve_out_dir(&args.out);
    fs::create_dir_all(&out).map_err(|source| CliError::Write {
        path: out.clone(),
        source,
    })?;

    let mut failing = Vec::new();
    let mut passed = 0usize;
    for (file, slot) in files.iter().zip(results) {
        let record = slot.expect("every file visited")?;
        if record.report.pass {
            passed += 1;
        } else {
            failing.push(report::TriageEntry {
                mask: file.clone(),
                first_failing_pair: record.report.first_failing_pair.unwrap_or(0),
            });
        }
        let stem = file
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::input(format!("unusable file name: {}", file.display())))?;
        report::write_json(&out.join(format!("{stem}_qc.json")), &record)?;
    }

    let triage_file = out.join("triage.json");
    report::write_json(
        &triage_file,
        &report::TriageRecord {
            thresholds,
            total: files.len(),
            passed,
            failing,
        },
    )?;
    Ok(triage_file)
}
