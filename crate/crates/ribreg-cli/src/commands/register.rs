use std::fs;
use std::path::PathBuf;

use ribreg_core::engine::register_multistage;
use ribreg_core::grid::LabelMask;

use crate::args::{RegisterArgs, resolve_out_dir};
use crate::error::{CliError, Result};
use crate::formats::{field, raster, report};

pub fn run(args: &RegisterArgs) -> Result<PathBuf> {
    let cfg = args.to_config();
    let moving = raster::load_image(&args.moving)?;
    let fixed = raster::load_image(&args.fixed)?;

    let masks: Option<(LabelMask, LabelMask)> = match cfg.mode.expected_semantics() {
        None => {
            if args.moving_mask.is_some() || args.fixed_mask.is_some() {
                return Err(CliError::input(
                    "unsupervised mode takes no --moving-mask/--fixed-mask",
                ));
            }
            None
        }
        Some(semantics) => {
            let (m_path, f_path) = match (&args.moving_mask, &args.fixed_mask) {
                (Some(m), Some(f)) => (m, f),
                _ => {
                    return Err(CliError::input(
                        "this mode requires both --moving-mask and --fixed-mask",
                    ))
                }
            };
            Some((
                raster::load_mask(m_path, semantics)?,
                raster::load_mask(f_path, semantics)?,
            ))
        }
    };

    let result = register_multistage(
        &moving,
        &fixed,
        masks.as_ref().map(|(m, _)| m),
        masks.as_ref().map(|(_, f)| f),
        &cfg,
    )?;

    let out = resolve_out_dir(&args.out);
    fs::create_dir_all(&out).map_err(|source| CliError::Write {
        path: out.clone(),
        source,
    })?;
    let field_file = out.join(format!("{}_field.dfld", args.prefix));
    let warped_file = out.join(format!("{}_warped.png", args.prefix));
    let record_file = out.join(format!("{}_register.json", args.prefix));

    field::write_field(&field_file, &result.field_native)?;
    raster::save_image(&warped_file, &result.warped)?;

    let finite_trace: Vec<_> = result
        .loss_trace
        .iter()
        .copied()
        .filter(|b| b.total.is_finite())
        .collect();
    let best_total = finite_trace
        .iter()
        .map(|b| b.total)
        .fold(f64::INFINITY, f64::min);
    let record = report::RegisterRecord {
        moving: args.moving.clone(),
        fixed: args.fixed.clone(),
        config: cfg,
        field_file: field_file.clone(),
        warped_file,
        stage1_trace_len: result.stage1_trace_len.min(finite_trace.len()),
        loss_trace: finite_trace,
        best_total,
        non_finite_abort: result.non_finite_abort,
    };
    report::write_json(&record_file, &record)?;

    if result.non_finite_abort {
        return Err(CliError::numeric(
            "loss became non-finite; best-so-far outputs were written",
        ));
    }
    Ok(record_file)
}
