use std::fs;
use std::path::{Path, PathBuf};

use ribreg_core::grid::{warp_mask_hard, DisplacementField, LabelMask, LabelSemantics};
use ribreg_core::metrics::{full_report, ReportInputs};

use crate::args::{resolve_out_dir, MetricsArgs};
use crate::error::{CliError, Result};
use crate::formats::{field, raster, report};

/// Loads one structure's mask pair: either a pre-warped mask or a moving mask
/// that gets hard-warped by the registration field, plus the fixed mask.
fn load_mask_pair(
    warped: &Option<PathBuf>,
    moving: &Option<PathBuf>,
    fixed: &Option<PathBuf>,
    fld: &DisplacementField,
    semantics: LabelSemantics,
    what: &str,
) -> Result<Option<(LabelMask, LabelMask)>> {
    let warped_mask = match (warped, moving) {
        (Some(path), None) => Some(raster::load_mask(path, semantics)?),
        (None, Some(path)) => {
            let m = raster::load_mask(path, semantics)?;
            Some(warp_mask_hard(&m, fld)?)
        }
        (None, None) => None,
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    match (warped_mask, fixed) {
        (Some(a), Some(pb)) => Ok(Some((a, raster::load_mask(pb, semantics)?))),
        (None, None) => Ok(None),
        _ => Err(CliError::input(format!(
            "{what} masks must be given on both sides (warped/moving and fixed)"
        ))),
    }
}

pub fn run(args: &MetricsArgs) -> Result<PathBuf> {
    let record_file = {
        let out = resolve_out_dir(&args.out);
        fs::create_dir_all(&out).map_err(|source| CliError::Write {
            path: out.clone(),
            source,
        })?;
        out.join(format!("{}_metrics.json", args.prefix))
    };
    let record = compute_record(args)?;
    report::write_json(&record_file, &record)?;
    Ok(record_file)
}

/// Shared by the command and the round-trip tests: computes the record
/// without writing it.
pub fn compute_record(args: &MetricsArgs) -> Result<report::MetricsRecord> {
    let warped = raster::load_image(&args.warped)?;
    let fixed = raster::load_image(&args.fixed)?;
    let fld = field::read_field(Path::new(&args.field))?;
    let ribs = load_mask_pair(
        &args.warped_ribs,
        &args.moving_ribs,
        &args.fixed_ribs,
        &fld,
        LabelSemantics::RibPairs,
        "rib",
    )?;
    let lungs = load_mask_pair(
        &args.warped_lungs,
        &args.moving_lungs,
        &args.fixed_lungs,
        &fld,
        LabelSemantics::LungPair,
        "lung",
    )?;

    let report = full_report(&ReportInputs {
        warped: &warped,
        fixed: &fixed,
        warped_ribs: ribs.as_ref().map(|(a, _)| a),
        fixed_ribs: ribs.as_ref().map(|(_, b)| b),
        warped_lungs: lungs.as_ref().map(|(a, _)| a),
        fixed_lungs: lungs.as_ref().map(|(_, b)| b),
        field: &fld,
    })?;

    Ok(report::MetricsRecord {
        warped: args.warped.clone(),
        fixed: args.fixed.clone(),
        field: args.field.clone(),
        report,
    })
}
