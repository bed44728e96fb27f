use std::fs;
use std::path::PathBuf;

use ribreg_core::diffviz::{difference_image, fit_gmm_1d, histogram_transfer, rib_hull_roi};
use ribreg_core::grid::{warp_image, BinaryMask, Image, LabelSemantics};

use crate::args::{resolve_out_dir, DiffArgs};
use crate::error::{CliError, Result};
use crate::formats::{field, raster, report};

fn roi_values(img: &Image, roi: &BinaryMask) -> Vec<f64> {
    img.data()
        .iter()
        .zip(roi.data())
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect()
}

pub fn run(args: &DiffArgs) -> Result<PathBuf> {
    let fixed = raster::load_image(&args.fixed)?;
    let (warped, warped_src) = match (&args.warped, &args.moving, &args.field) {
        (Some(w), None, None) => (raster::load_image(w)?, w.clone()),
        (None, Some(m), Some(f)) => {
            let moving = raster::load_image(m)?;
            let fld = field::read_field(f)?;
            (warp_image(&moving, &fld)?, m.clone())
        }
        _ => {
            return Err(CliError::input(
                "pass either --warped or both --moving and --field",
            ))
        }
    };

    let ribcage = raster::load_mask(&args.ribcage, LabelSemantics::Binary)?;
    let roi = rib_hull_roi(&ribcage.binary_for(1), args.margin)?;

    let gmm = fit_gmm_1d(&roi_values(&warped, &roi), 10, 0)?;
    let matched = histogram_transfer(&warped, &fixed, &roi, &gmm)?;
    let diff = difference_image(&fixed, &matched, &roi)?;

    let out = resolve_out_dir(&args.out);
    fs::create_dir_all(&out).map_err(|source| CliError::Write {
        path: out.clone(),
        source,
    })?;
    let rgb_file = out.join(format!("{}_rgb.png", args.prefix));
    let (w, h) = diff.dims();
    raster::save_rgb(&rgb_file, w, h, &diff.rgb)?;

    let signed16_file = if args.signed16 {
        let path = out.join(format!("{}_signed16.png", args.prefix));
        let samples: Vec<u16> = diff
            .signed
            .iter()
            .map(|&v| {
                let t = (v / diff.scale).clamp(-1.0, 1.0);
                ((t + 1.0) / 2.0 * 65535.0).round() as u16
            })
            .collect();
        raster::save_gray16(&path, w, h, &samples)?;
        Some(path)
    } else {
        None
    };

    let record_file = out.join(format!("{}_record.json", args.prefix));
    report::write_json(
        &record_file,
        &report::DiffRecord {
            fixed: args.fixed.clone(),
            warped: warped_src,
            rgb_file,
            margin: args.margin,
            clip_lo: diff.clip_lo,
            clip_hi: diff.clip_hi,
            scale: diff.scale,
            signed16_file,
        },
    )?;
    Ok(record_file)
}
