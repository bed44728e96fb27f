//! Evaluation metrics: dice overlap, 95th-percentile Hausdorff distance,
//! per-structure aggregates for rib pairs and lung fields, the fraction of
//! pixels with a negative warp Jacobian determinant, MSE and SSIM.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::{
    ensure_same_dims, BinaryMask, DisplacementField, Image, LabelMask, LabelSemantics,
};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// How the two masks of an overlap computation were populated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum MaskCoverage {
    BothPresent,
    BothEmpty,
    OneEmpty,
}

/// Dice overlap 2|X∩Y| / (|X|+|Y|).
///
/// Both masks empty is defined as 1.0 and flagged; exactly one empty is 0.0
/// and flagged, keeping averages total while staying auditable.
pub fn dice(x: &BinaryMask, y: &BinaryMask) -> Result<(f64, MaskCoverage)> {
    ensure_same_dims(x.dims(), y.dims())?;
    let mut inter = 0usize;
    let mut cx = 0usize;
    let mut cy = 0usize;
    for (&a, &b) in x.data().iter().zip(y.data()) {
        cx += a as usize;
        cy += b as usize;
        inter += (a && b) as usize;
    }
    match (cx, cy) {
        (0, 0) => Ok((1.0, MaskCoverage::BothEmpty)),
        (0, _) | (_, 0) => Ok((0.0, MaskCoverage::OneEmpty)),
        _ => Ok((
            2.0 * inter as f64 / (cx + cy) as f64,
            MaskCoverage::BothPresent,
        )),
    }
}

/// Boundary pixels under 4-connectivity: foreground pixels with at least one
/// background 4-neighbor; pixels on the image edge count as boundary.
pub fn boundary_points(mask: &BinaryMask) -> Vec<(usize, usize)> {
    let (w, h) = mask.dims();
    let mut pts = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let edge = x == 0
                || y == 0
                || x == w - 1
                || y == h - 1
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if edge {
                pts.push((x, y));
            }
        }
    }
    pts
}

/// Linear-interpolation percentile of an unsorted sample, p in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = fmath::floor(rank) as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= sorted.len() {
        sorted[sorted.len() - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

fn directed_boundary_distances(from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    let mut out = Vec::with_capacity(from.len());
    for &(px, py) in from {
        let mut best = f64::INFINITY;
        for &(qx, qy) in to {
            let dx = px as f64 - qx as f64;
            let dy = py as f64 - qy as f64;
            let d2 = dx * dx + dy * dy;
            if d2 < best {
                best = d2;
            }
        }
        out.push(fmath::sqrt(best));
    }
    out
}

fn hausdorff_at_percentile(x: &BinaryMask, y: &BinaryMask, p: f64) -> Result<f64> {
    ensure_same_dims(x.dims(), y.dims())?;
    let bx = boundary_points(x);
    let by = boundary_points(y);
    if bx.is_empty() || by.is_empty() {
        return Err(Error::EmptyMask);
    }
    let dxy = percentile(&directed_boundary_distances(&bx, &by), p);
    let dyx = percentile(&directed_boundary_distances(&by, &bx), p);
    Ok(dxy.max(dyx))
}

/// Symmetric 95th-percentile Hausdorff distance between mask boundaries.
pub fn hausdorff95(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    hausdorff_at_percentile(x, y, 95.0)
}

/// Full (maximum) symmetric Hausdorff distance between mask boundaries.
pub fn hausdorff(x: &BinaryMask, y: &BinaryMask) -> Result<f64> {
    hausdorff_at_percentile(x, y, 100.0)
}

/// Overlap of one labeled structure.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LabelScore {
    pub label: u8,
    /// None when the label is absent from both masks (excluded from means).
    pub dice: Option<f64>,
    /// None when either side has no boundary for this label.
    pub h95: Option<f64>,
    pub coverage: MaskCoverage,
}

/// Per-label overlap scores plus their means.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct StructureOverlap {
    pub per_label: Vec<LabelScore>,
    /// Mean dice over labels present in at least one mask.
    pub mean_dice: Option<f64>,
    /// Mean h95 over labels present in both masks.
    pub mean_h95: Option<f64>,
    /// Labels absent from both masks.
    pub excluded_labels: Vec<u8>,
}

fn overlap_for(a: &LabelMask, b: &LabelMask, expected: LabelSemantics) -> Result<StructureOverlap> {
    ensure_same_dims(a.dims(), b.dims())?;
    if a.semantics() != expected || b.semantics() != expected {
        return Err(Error::LabelSetMismatch);
    }
    let mut per_label = Vec::new();
    let mut excluded = Vec::new();
    let mut dice_sum = 0.0;
    let mut dice_n = 0usize;
    let mut h95_sum = 0.0;
    let mut h95_n = 0usize;
    for label in expected.foreground_labels() {
        let ma = a.binary_for(label);
        let mb = b.binary_for(label);
        let (d, coverage) = dice(&ma, &mb)?;
        if coverage == MaskCoverage::BothEmpty {
            excluded.push(label);
            per_label.push(LabelScore {
                label,
                dice: None,
                h95: None,
                coverage,
            });
            continue;
        }
        let h95 = hausdorff95(&ma, &mb).ok();
        dice_sum += d;
        dice_n += 1;
        if let Some(h) = h95 {
            h95_sum += h;
            h95_n += 1;
        }
        per_label.push(LabelScore {
            label,
            dice: Some(d),
            h95,
            coverage,
        });
    }
    Ok(StructureOverlap {
        per_label,
        mean_dice: (dice_n > 0).then(|| dice_sum / dice_n as f64),
        mean_h95: (h95_n > 0).then(|| h95_sum / h95_n as f64),
        excluded_labels: excluded,
    })
}

/// Mean dice / h95 over the individual rib pairs of two rib-pairs masks
/// (DCR and H95R).
pub fn rib_overlap(a: &LabelMask, b: &LabelMask) -> Result<StructureOverlap> {
    overlap_for(a, b, LabelSemantics::RibPairs)
}

/// Mean dice / h95 over the two lung fields of two lung masks (DCL, H95L).
pub fn lung_overlap(a: &LabelMask, b: &LabelMask) -> Result<StructureOverlap> {
    overlap_for(a, b, LabelSemantics::LungPair)
}

/// Fraction of pixels where det(I + du/dx) < 0.
///
/// The Jacobian is estimated with central differences where the full stencil
/// exists; border pixels are never counted as folded, the denominator is the
/// whole grid.
pub fn neg_jacobian_fraction(field: &DisplacementField) -> f64 {
    let (w, h) = field.dims();
    let u = field.vectors();
    let mut negative = 0usize;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let dux_dx = (u[i + 1][0] - u[i - 1][0]) / 2.0;
            let duy_dx = (u[i + 1][1] - u[i - 1][1]) / 2.0;
            let dux_dy = (u[i + w][0] - u[i - w][0]) / 2.0;
            let duy_dy = (u[i + w][1] - u[i - w][1]) / 2.0;
            let det = (1.0 + dux_dx) * (1.0 + duy_dy) - dux_dy * duy_dx;
            if det < 0.0 {
                negative += 1;
            }
        }
    }
    negative as f64 / (w * h) as f64
}

/// Mean squared error between two images.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let n = a.data().len() as f64;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n)
}

/// SSIM window size (uniform window).
pub const SSIM_WINDOW: usize = 7;
/// SSIM stability constants for data range 1.0: c1 = (K1*L)^2, c2 = (K2*L)^2
/// with K1 = 0.01, K2 = 0.03.
pub const SSIM_C1: f64 = 1e-4;
pub const SSIM_C2: f64 = 9e-4;

/// Mean structural similarity over all fully contained 7x7 windows, with
/// unbiased (n-1) variance/covariance normalization and data range 1.0.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::TooSmall {
            minimum: SSIM_WINDOW,
        });
    }
    let sat_a = prefix_sums(a.data(), w, h, |x| x);
    let sat_b = prefix_sums(b.data(), w, h, |x| x);
    let sat_aa = prefix_sums(a.data(), w, h, |x| x * x);
    let sat_bb = prefix_sums(b.data(), w, h, |x| x * x);
    let sat_ab = prefix_sums_pair(a.data(), b.data(), w, h);

    let np = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let cov_norm = np / (np - 1.0);
    let mut sum = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let sa = window_sum(&sat_a, w, x0, y0);
            let sb = window_sum(&sat_b, w, x0, y0);
            let saa = window_sum(&sat_aa, w, x0, y0);
            let sbb = window_sum(&sat_bb, w, x0, y0);
            let sab = window_sum(&sat_ab, w, x0, y0);
            let ux = sa / np;
            let uy = sb / np;
            let vx = cov_norm * (saa / np - ux * ux);
            let vy = cov_norm * (sbb / np - uy * uy);
            let vxy = cov_norm * (sab / np - ux * uy);
            let s = ((2.0 * ux * uy + SSIM_C1) * (2.0 * vxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
            sum += s;
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

fn prefix_sums(data: &[f64], w: usize, h: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += f(data[y * w + x]);
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    sat
}

fn prefix_sums_pair(a: &[f64], b: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut sat = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += a[y * w + x] * b[y * w + x];
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    sat
}

#[inline]
fn window_sum(sat: &[f64], w: usize, x0: usize, y0: usize) -> f64 {
    let x1 = x0 + SSIM_WINDOW;
    let y1 = y0 + SSIM_WINDOW;
    let stride = w + 1;
    sat[y1 * stride + x1] - sat[y0 * stride + x1] - sat[y1 * stride + x0] + sat[y0 * stride + x0]
}

/// Inputs to [`full_report`]; mask pairs are optional but must come in pairs.
#[derive(Debug, Clone, Copy)]
pub struct ReportInputs<'a> {
    pub warped: &'a Image,
    pub fixed: &'a Image,
    pub warped_ribs: Option<&'a LabelMask>,
    pub fixed_ribs: Option<&'a LabelMask>,
    pub warped_lungs: Option<&'a LabelMask>,
    pub fixed_lungs: Option<&'a LabelMask>,
    pub field: &'a DisplacementField,
}

/// Per-pair record of all evaluation metrics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct MetricsReport {
    pub dcr: Option<f64>,
    pub h95r: Option<f64>,
    pub dcl: Option<f64>,
    pub h95l: Option<f64>,
    pub mse: f64,
    pub ssim: f64,
    pub negjac: f64,
    pub rib_detail: Option<Vec<LabelScore>>,
    pub lung_detail: Option<Vec<LabelScore>>,
}

/// Computes every metric available from the given inputs.
pub fn full_report(inputs: &ReportInputs<'_>) -> Result<MetricsReport> {
    let ReportInputs {
        warped,
        fixed,
        warped_ribs,
        fixed_ribs,
        warped_lungs,
        fixed_lungs,
        field,
    } = *inputs;
    ensure_same_dims(warped.dims(), fixed.dims())?;

    let ribs = match (warped_ribs, fixed_ribs) {
        (Some(a), Some(b)) => Some(rib_overlap(a, b)?),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig(
                "rib masks must both be present or both absent",
            ))
        }
    };
    let lungs = match (warped_lungs, fixed_lungs) {
        (Some(a), Some(b)) => Some(lung_overlap(a, b)?),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig(
                "lung masks must both be present or both absent",
            ))
        }
    };

    Ok(MetricsReport {
        dcr: ribs.as_ref().and_then(|o| o.mean_dice),
        h95r: ribs.as_ref().and_then(|o| o.mean_h95),
        dcl: lungs.as_ref().and_then(|o| o.mean_dice),
        h95l: lungs.as_ref().and_then(|o| o.mean_h95),
        mse: mse(warped, fixed)?,
        ssim: ssim(warped, fixed)?,
        negjac: neg_jacobian_fraction(field),
        rib_detail: ribs.map(|o| o.per_label),
        lung_detail: lungs.map(|o| o.per_label),
    })
}
