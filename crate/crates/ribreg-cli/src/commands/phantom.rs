use std::fs;
use std::path::PathBuf;

use ribreg_core::phantom::{
    deform_phantom, generate_phantom, DeformationSpec, PhantomParams,
};

use crate::args::{resolve_out_dir, PhantomArgs};
use crate::error::{CliError, Result};
use crate::formats::{field, raster, report};

/// Parses `name:comma-separated-numbers` deformation specs.
pub fn parse_deform(spec: &str) -> Result<DeformationSpec> {
    let (name, rest) = spec
        .split_once(':')
        .ok_or_else(|| CliError::input(format!("deformation '{spec}' lacks a ':' separator")))?;
    let nums: Vec<f64> = rest
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("bad number '{s}' in deformation spec")))
        })
        .collect::<Result<_>>()?;
    let want = |n: usize| -> Result<()> {
        if nums.len() == n {
            Ok(())
        } else {
            Err(CliError::input(format!(
                "deformation '{name}' needs {n} parameters, got {}",
                nums.len()
            )))
        }
    };
    match name {
        "translate" => {
            want(2)?;
            Ok(DeformationSpec::Translation {
                dx: nums[0],
                dy: nums[1],
            })
        }
        "affine" => {
            want(2)?;
            Ok(DeformationSpec::AffineScaleRotate {
                scale: nums[0],
                angle_rad: nums[1].to_radians(),
            })
        }
        "smooth" => {
            want(3)?;
            Ok(DeformationSpec::SmoothRandomField {
                amplitude: nums[0],
                cell_px: nums[1],
                seed: nums[2] as u64,
            })
        }
        "heart" => {
            want(1)?;
            Ok(DeformationSpec::HeartEnlargement { factor: nums[0] })
        }
        "diaphragm" => {
            want(1)?;
            Ok(DeformationSpec::DiaphragmRaise { pixels: nums[0] })
        }
        "blob" => {
            want(4)?;
            Ok(DeformationSpec::OpacityBlob {
                center: (nums[0], nums[1]),
                radius: nums[2],
                intensity: nums[3],
            })
        }
        other => Err(CliError::input(format!("unknown deformation '{other}'"))),
    }
}

pub fn run(args: &PhantomArgs) -> Result<PathBuf> {
    let params = PhantomParams {
        size: args.size,
        seed: args.seed,
        rib_pair_count: args.pairs,
        noise: args.noise,
        ..PhantomParams::default()
    };
    let deformation = args.deform.as_deref().map(parse_deform).transpose()?;
    let phantom = generate_phantom(&params)?;

    let out = resolve_out_dir(&args.out);
    fs::create_dir_all(&out).map_err(|source| CliError::Write {
        path: out.clone(),
        source,
    })?;
    let file = |suffix: &str| out.join(format!("{}_{suffix}", args.prefix));

    let mut files = Vec::new();
    let mut push = |path: PathBuf| -> PathBuf {
        files.push(path.clone());
        path
    };

    raster::save_image(&push(file("moving.png")), &phantom.image)?;
    raster::save_mask(&push(file("moving_ribpairs.png")), &phantom.rib_pairs)?;
    raster::save_mask(&push(file("moving_lungs.png")), &phantom.lungs)?;
    raster::save_mask(&push(file("moving_ribcage.png")), &phantom.rib_cage)?;

    if let Some(spec) = &deformation {
        let deformed = deform_phantom(&phantom, spec)?;
        raster::save_image(&push(file("fixed.png")), &deformed.image)?;
        raster::save_mask(&push(file("fixed_ribpairs.png")), &deformed.rib_pairs)?;
        raster::save_mask(&push(file("fixed_lungs.png")), &deformed.lungs)?;
        raster::save_mask(&push(file("fixed_ribcage.png")), &deformed.rib_cage)?;
        field::write_field(&push(file("gt_field.dfld")), &deformed.gt_field)?;
    }

    let record_file = out.join(format!("{}_record.json", args.prefix));
    report::write_json(
        &record_file,
        &report::PhantomRecord {
            params,
            deformation,
            files,
        },
    )?;
    Ok(record_file)
}
