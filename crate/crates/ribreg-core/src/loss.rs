//! Registration loss: negative normalized cross-correlation of the warped
//! moving image against the fixed image, a squared-difference smoothness term
//! on the displacement field, and a categorical cross-entropy anatomy penalty
//! on softly warped segmentation masks — plus the analytic gradient of the
//! combined loss with respect to the field.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::{
    ensure_same_dims, sample_with_grad_slice, warp_image, warp_mask_soft, DisplacementField,
    Image, LabelMask, SoftOccupancy,
};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Guard added under the square root of the NCC denominator.
pub const NCC_EPS: f64 = 1e-8;
/// Occupancies are clipped to [CE_CLIP_EPS, 1] inside the cross-entropy.
pub const CE_CLIP_EPS: f64 = 1e-7;

/// Weights of the smoothness and anatomy terms.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LossWeights {
    pub lambda_r: f64,
    pub lambda_seg: f64,
}

impl LossWeights {
    pub fn new(lambda_r: f64, lambda_seg: f64) -> Result<Self> {
        if !lambda_r.is_finite() || lambda_r < 0.0 {
            return Err(Error::InvalidConfig("lambda_r must be finite and >= 0"));
        }
        if !lambda_seg.is_finite() || lambda_seg < 0.0 {
            return Err(Error::InvalidConfig("lambda_seg must be finite and >= 0"));
        }
        Ok(Self {
            lambda_r,
            lambda_seg,
        })
    }
}

/// The three loss terms and their weighted total.
///
/// `total = -ncc_term + lambda_r * tv_term + lambda_seg * ce_term`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct LossBreakdown {
    pub ncc_term: f64,
    pub tv_term: f64,
    pub ce_term: f64,
    pub total: f64,
    /// Set when an NCC input was (numerically) constant and the epsilon
    /// guard decided the correlation.
    pub degenerate: bool,
}

/// Global zero-mean normalized cross-correlation in [-1, 1].
///
/// A constant input makes the correlation 0 through the epsilon guard; the
/// caller can detect that case via the variance of its inputs (the combined
/// loss flags it in the breakdown).
pub fn ncc(a: &Image, b: &Image) -> Result<f64> {
    ensure_same_dims(a.dims(), b.dims())?;
    Ok(ncc_slices(a.data(), b.data()).0)
}

fn ncc_slices(a: &[f64], b: &[f64]) -> (f64, NccSums) {
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    let mut sab = 0.0;
    for (&va, &vb) in a.iter().zip(b) {
        let da = va - mean_a;
        let db = vb - mean_b;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    let denom = fmath::sqrt(saa * sbb + NCC_EPS);
    let sums = NccSums {
        mean_a,
        mean_b,
        saa,
        sbb,
        sab,
        denom,
    };
    (sab / denom, sums)
}

struct NccSums {
    mean_a: f64,
    #[allow(dead_code)]
    mean_b: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
    denom: f64,
}

/// Smoothness of the field: squared forward differences of each displacement
/// component along x and y, each direction averaged over its valid
/// difference count, the four means summed.
///
/// A unit-slope linear ramp in one component therefore contributes exactly 1
/// along its axis, and any constant offset of the field leaves the value
/// unchanged.
pub fn total_variation(field: &DisplacementField) -> f64 {
    let (w, h) = field.dims();
    let u = field.vectors();
    let nx = ((w - 1) * h) as f64;
    let ny = (w * (h - 1)) as f64;
    let mut total = 0.0;
    for c in 0..2 {
        let mut sum_x = 0.0;
        let mut sum_y = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                if x + 1 < w {
                    let d = u[i + 1][c] - u[i][c];
                    sum_x += d * d;
                }
                if y + 1 < h {
                    let d = u[i + w][c] - u[i][c];
                    sum_y += d * d;
                }
            }
        }
        total += sum_x / nx + sum_y / ny;
    }
    total
}

/// Categorical cross-entropy of warped occupancies against the fixed mask:
/// mean over pixels of -ln(occupancy of the fixed pixel's label), with
/// occupancies clipped to [CE_CLIP_EPS, 1]. Background is a class.
pub fn cross_entropy(warped_occ: &SoftOccupancy, fixed: &LabelMask) -> Result<f64> {
    ensure_same_dims(warped_occ.dims(), fixed.dims())?;
    if warped_occ.semantics() != fixed.semantics() {
        return Err(Error::LabelSetMismatch);
    }
    let (w, h) = fixed.dims();
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let p = warped_occ.occupancy(fixed.label(x, y), x, y);
            sum += -fmath::ln(p.clamp(CE_CLIP_EPS, 1.0));
        }
    }
    Ok(sum / (w * h) as f64)
}

fn check_loss_inputs(
    m: &Image,
    f: &Image,
    field: &DisplacementField,
    s_m: Option<&LabelMask>,
    s_f: Option<&LabelMask>,
) -> Result<()> {
    ensure_same_dims(m.dims(), f.dims())?;
    ensure_same_dims(m.dims(), field.dims())?;
    match (s_m, s_f) {
        (None, None) => {}
        (Some(sm), Some(sf)) => {
            ensure_same_dims(m.dims(), sm.dims())?;
            ensure_same_dims(m.dims(), sf.dims())?;
            if sm.semantics() != sf.semantics() {
                return Err(Error::LabelSetMismatch);
            }
        }
        _ => {
            return Err(Error::InvalidConfig(
                "moving and fixed masks must both be present or both absent",
            ))
        }
    }
    Ok(())
}

/// Evaluates the combined loss at `field`.
///
/// With masks absent the run is unsupervised and the anatomy term is 0.
pub fn combined_loss(
    m: &Image,
    f: &Image,
    field: &DisplacementField,
    s_m: Option<&LabelMask>,
    s_f: Option<&LabelMask>,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    check_loss_inputs(m, f, field, s_m, s_f)?;
    let warped = warp_image(m, field)?;
    let (ncc_term, sums) = ncc_slices(warped.data(), f.data());
    let tv_term = total_variation(field);
    let ce_term = match (s_m, s_f) {
        (Some(sm), Some(sf)) => cross_entropy(&warp_mask_soft(sm, field)?, sf)?,
        _ => 0.0,
    };
    Ok(LossBreakdown {
        ncc_term,
        tv_term,
        ce_term,
        total: -ncc_term + w.lambda_r * tv_term + w.lambda_seg * ce_term,
        degenerate: sums.saa < 1e-12 || sums.sbb < 1e-12,
    })
}

/// Analytic gradient of the combined loss with respect to every displacement
/// vector, returned row-major alongside the loss value.
///
/// Assembly: chain rule through the bilinear sampler for the correlation
/// term, the forward-difference adjoint for the smoothness term, and the
/// occupancy chain rule (through the fixed label's warped indicator) for the
/// anatomy term. Pixels whose occupancy sits outside the open clip interval
/// contribute no anatomy gradient.
pub fn loss_value_and_gradient(
    m: &Image,
    f: &Image,
    field: &DisplacementField,
    s_m: Option<&LabelMask>,
    s_f: Option<&LabelMask>,
    w: &LossWeights,
) -> Result<(LossBreakdown, Vec<[f64; 2]>)> {
    check_loss_inputs(m, f, field, s_m, s_f)?;
    let (width, height) = m.dims();
    let n = (width * height) as f64;
    let u = field.vectors();

    let warped = warp_image(m, field)?;
    let (ncc_term, sums) = ncc_slices(warped.data(), f.data());
    let tv_term = total_variation(field);

    let mut grad = vec![[0.0f64; 2]; width * height];

    // -ncc term: d(-ncc)/dW(x) composed with the sampler's spatial gradient.
    let mean_f = f.data().iter().sum::<f64>() / n;
    let denom = sums.denom;
    let denom3 = denom * denom * denom;
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let a = warped.data()[i] - sums.mean_a;
            let b = f.data()[i] - mean_f;
            let dncc_dw = b / denom - sums.sab * sums.sbb * a / denom3;
            let coeff = -dncc_dw;
            let (_, dvdx, dvdy) = sample_with_grad_slice(
                m.data(),
                width,
                height,
                x as f64 + u[i][0],
                y as f64 + u[i][1],
            );
            grad[i][0] += coeff * dvdx;
            grad[i][1] += coeff * dvdy;
        }
    }

    // Smoothness adjoint.
    if w.lambda_r != 0.0 {
        let nx = ((width - 1) * height) as f64;
        let ny = (width * (height - 1)) as f64;
        for c in 0..2 {
            for y in 0..height {
                for x in 0..width {
                    let i = y * width + x;
                    let mut g = 0.0;
                    if x + 1 < width {
                        g -= 2.0 * (u[i + 1][c] - u[i][c]) / nx;
                    }
                    if x > 0 {
                        g += 2.0 * (u[i][c] - u[i - 1][c]) / nx;
                    }
                    if y + 1 < height {
                        g -= 2.0 * (u[i + width][c] - u[i][c]) / ny;
                    }
                    if y > 0 {
                        g += 2.0 * (u[i][c] - u[i - width][c]) / ny;
                    }
                    grad[i][c] += w.lambda_r * g;
                }
            }
        }
    }

    // Anatomy term through the fixed label's warped indicator plane.
    let mut ce_term = 0.0;
    if let (Some(sm), Some(sf)) = (s_m, s_f) {
        let class_labels = sm.semantics().class_labels();
        let planes: Vec<Vec<f64>> = class_labels.iter().map(|&l| sm.indicator(l)).collect();
        let plane_of = |label: u8| -> &Vec<f64> {
            let idx = class_labels
                .iter()
                .position(|&l| l == label)
                .expect("validated label");
            &planes[idx]
        };
        let mut sum = 0.0;
        for y in 0..height {
            for x in 0..width {
                let i = y * width + x;
                let plane = plane_of(sf.label(x, y));
                let (p, dpdx, dpdy) = sample_with_grad_slice(
                    plane,
                    width,
                    height,
                    x as f64 + u[i][0],
                    y as f64 + u[i][1],
                );
                sum += -fmath::ln(p.clamp(CE_CLIP_EPS, 1.0));
                if p > CE_CLIP_EPS && p < 1.0 {
                    let coeff = w.lambda_seg * (-1.0 / p) / n;
                    grad[i][0] += coeff * dpdx;
                    grad[i][1] += coeff * dpdy;
                }
            }
        }
        ce_term = sum / n;
    }

    let breakdown = LossBreakdown {
        ncc_term,
        tv_term,
        ce_term,
        total: -ncc_term + w.lambda_r * tv_term + w.lambda_seg * ce_term,
        degenerate: sums.saa < 1e-12 || sums.sbb < 1e-12,
    };
    Ok((breakdown, grad))
}

/// Gradient-only wrapper around [`loss_value_and_gradient`].
pub fn loss_gradient(
    m: &Image,
    f: &Image,
    field: &DisplacementField,
    s_m: Option<&LabelMask>,
    s_f: Option<&LabelMask>,
    w: &LossWeights,
) -> Result<Vec<[f64; 2]>> {
    loss_value_and_gradient(m, f, field, s_m, s_f, w).map(|(_, g)| g)
}
