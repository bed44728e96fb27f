//! Two-stage coarse-to-fine minimization of the registration loss over the
//! displacement field.
//!
//! Stage 1 optimizes at a coarse resolution from the zero field; its output
//! is bilinearly upsampled (with scale-covariant components) and refined at
//! the second resolution under a lower smoothness weight; the refined field
//! is finally upsampled to the native resolution and applied to the moving
//! image. Every run is a deterministic function of its inputs and config.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::{
    ensure_same_dims, resample_image, resample_mask, upsample_field, warp_image,
    DisplacementField, Image, LabelMask, LabelSemantics,
};
use crate::loss::{loss_value_and_gradient, LossBreakdown, LossWeights};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Which anatomy (if any) penalizes the registration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum PenalizationMode {
    Unsupervised,
    Lung,
    RibCage,
    RibPairs,
}

impl PenalizationMode {
    /// Label semantics the mode's masks must carry; None for unsupervised.
    pub fn expected_semantics(self) -> Option<LabelSemantics> {
        match self {
            PenalizationMode::Unsupervised => None,
            PenalizationMode::Lung => Some(LabelSemantics::LungPair),
            PenalizationMode::RibCage => Some(LabelSemantics::Binary),
            PenalizationMode::RibPairs => Some(LabelSemantics::RibPairs),
        }
    }
}

/// First-order optimizer choice for the per-pair descent.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum OptimizerKind {
    GradientDescent,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Full configuration of a two-stage registration run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct RegistrationConfig {
    pub stage1_size: usize,
    pub stage2_size: usize,
    pub lr: f64,
    pub lambda_seg: f64,
    pub lambda_r_stage1: f64,
    pub lambda_r_stage2: f64,
    pub iters_stage1: usize,
    pub iters_stage2: usize,
    pub optimizer: OptimizerKind,
    pub mode: PenalizationMode,
    pub seed: u64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            stage1_size: 64,
            stage2_size: 128,
            lr: 1e-3,
            lambda_seg: 3.0,
            lambda_r_stage1: 6e-5,
            lambda_r_stage2: 3e-5,
            iters_stage1: 400,
            iters_stage2: 400,
            optimizer: OptimizerKind::adam_default(),
            mode: PenalizationMode::Unsupervised,
            seed: 0,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage1_size < 2 || self.stage2_size < self.stage1_size {
            return Err(Error::InvalidConfig(
                "stage sizes must satisfy 2 <= stage1_size <= stage2_size",
            ));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::InvalidConfig("lr must be finite and positive"));
        }
        for (v, what) in [
            (self.lambda_seg, "lambda_seg"),
            (self.lambda_r_stage1, "lambda_r_stage1"),
            (self.lambda_r_stage2, "lambda_r_stage2"),
        ] {
            if !ypos(v) {
                let _ = what;
                return Err(Error::InvalidConfig("loss weights must be finite and >= 0"));
            }
        }
        if self.iters_stage1 == 0 || self.iters_stage2 == 0 {
            return Err(Error::InvalidConfig("iteration budgets must be positive"));
        }
        if let OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1)
                || !(0.0..1.0).contains(&beta2)
                || !(epsilon.is_finite() && epsilon > 0.0)
            {
                return Err(Error::InvalidConfig("invalid Adam parameters"));
            }
        }
        Ok(())
    }
}

fn ypos(v: f64) -> bool {
    v.is_finite() && v >= 0.0
}

/// Output of a single-stage optimization.
#[derive(Debug, Clone)]
pub struct StageResult {
    /// Iterate with the lowest recorded total loss.
    pub field: DisplacementField,
    /// Loss at the initial field and after every iteration (iters + 1 rows).
    pub trace: Vec<LossBreakdown>,
    /// Set when a non-finite loss aborted the stage early; `field` is the
    /// best iterate recorded before the abort.
    pub non_finite_abort: bool,
}

/// Output of the full multi-stage pipeline.
#[derive(Debug, Clone)]
pub struct RegistrationResult {
    /// Final field at the native resolution of the inputs.
    pub field_native: DisplacementField,
    pub field_stage1: DisplacementField,
    pub field_stage2: DisplacementField,
    /// Stage-1 trace followed by the stage-2 trace.
    pub loss_trace: Vec<LossBreakdown>,
    /// Number of leading `loss_trace` rows belonging to stage 1.
    pub stage1_trace_len: usize,
    /// Moving image warped by `field_native`.
    pub warped: Image,
    pub non_finite_abort: bool,
}

struct AdamState {
    m: Vec<[f64; 2]>,
    v: Vec<[f64; 2]>,
    t: u32,
}

/// Minimizes the loss at one resolution starting from `init`, returning the
/// best-loss iterate. Deterministic given identical inputs.
pub fn register_stage(
    m: &Image,
    f: &Image,
    s_m: Option<&LabelMask>,
    s_f: Option<&LabelMask>,
    init: &DisplacementField,
    w: &LossWeights,
    cfg: &RegistrationConfig,
    iters: usize,
) -> Result<StageResult> {
    cfg.validate()?;
    ensure_same_dims(m.dims(), init.dims())?;
    let (width, height) = m.dims();
    let n = width * height;

    let mut field = init.clone();
    let mut trace = Vec::with_capacity(iters + 1);
    let mut best_field = field.clone();
    let mut best_total = f64::INFINITY;
    let mut adam = AdamState {
        m: vec![[0.0; 2]; n],
        v: vec![[0.0; 2]; n],
        t: 0,
    };

    for _ in 0..iters {
        let (breakdown, grad) = loss_value_and_gradient(m, f, &field, s_m, s_f, w)?;
        trace.push(breakdown);
        if !breakdown.total.is_finite() {
            return Ok(StageResult {
                field: best_field,
                trace,
                non_finite_abort: true,
            });
        }
        if breakdown.total < best_total {
            best_total = breakdown.total;
            best_field = field.clone();
        }
        step(&mut field, &grad, cfg, &mut adam);
    }
    let (final_breakdown, _) = loss_value_and_gradient(m, f, &field, s_m, s_f, w)?;
    trace.push(final_breakdown);
    if final_breakdown.total.is_finite() && final_breakdown.total < best_total {
        best_field = field;
    }

    Ok(StageResult {
        field: best_field,
        trace,
        non_finite_abort: false,
    })
}

fn step(
    field: &mut DisplacementField,
    grad: &[[f64; 2]],
    cfg: &RegistrationConfig,
    adam: &mut AdamState,
) {
    let lr = cfg.lr;
    match cfg.optimizer {
        OptimizerKind::GradientDescent => {
            for (u, g) in field.vectors_mut().iter_mut().zip(grad) {
                u[0] -= lr * g[0];
                u[1] -= lr * g[1];
            }
        }
        OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            adam.t += 1;
            let bc1 = 1.0 - fmath::pow(beta1, adam.t as f64);
            let bc2 = 1.0 - fmath::pow(beta2, adam.t as f64);
            for i in 0..grad.len() {
                for c in 0..2 {
                    let g = grad[i][c];
                    adam.m[i][c] = beta1 * adam.m[i][c] + (1.0 - beta1) * g;
                    adam.v[i][c] = beta2 * adam.v[i][c] + (1.0 - beta2) * g * g;
                    let m_hat = adam.m[i][c] / bc1;
                    let v_hat = adam.v[i][c] / bc2;
                    field.vectors_mut()[i][c] -= lr * m_hat / (fmath::sqrt(v_hat) + epsilon);
                }
            }
        }
    }
}

fn masks_for_mode<'a>(
    mode: PenalizationMode,
    s_m: Option<&'a LabelMask>,
    s_f: Option<&'a LabelMask>,
) -> Result<Option<(&'a LabelMask, &'a LabelMask)>> {
    match mode.expected_semantics() {
        None => {
            if s_m.is_some() || s_f.is_some() {
                return Err(Error::InvalidConfig(
                    "unsupervised mode takes no segmentation masks",
                ));
            }
            Ok(None)
        }
        Some(expected) => match (s_m, s_f) {
            (Some(a), Some(b)) => {
                if a.semantics() != expected || b.semantics() != expected {
                    return Err(Error::LabelSetMismatch);
                }
                Ok(Some((a, b)))
            }
            _ => Err(Error::InvalidConfig(
                "penalized mode requires both moving and fixed masks",
            )),
        },
    }
}

/// Runs the full pipeline: downsample, coarse stage, field upsample, fine
/// stage, upsample to native resolution, warp the moving image.
pub fn register_multistage(
    m: &Image,
    f: &Image,
    s_m: Option<&LabelMask>,
    s_f: Option<&LabelMask>,
    cfg: &RegistrationConfig,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    ensure_same_dims(m.dims(), f.dims())?;
    let (native_w, native_h) = m.dims();
    if native_w < cfg.stage2_size || native_h < cfg.stage2_size {
        return Err(Error::InvalidConfig(
            "native resolution must be at least stage2_size",
        ));
    }
    let masks = masks_for_mode(cfg.mode, s_m, s_f)?;
    if let Some((sm, sf)) = masks {
        ensure_same_dims(m.dims(), sm.dims())?;
        ensure_same_dims(m.dims(), sf.dims())?;
    }

    let s1 = cfg.stage1_size;
    let s2 = cfg.stage2_size;

    let m1 = resample_image(m, s1, s1)?;
    let f1 = resample_image(f, s1, s1)?;
    let masks1 = match masks {
        Some((sm, sf)) => Some((resample_mask(sm, s1, s1)?, resample_mask(sf, s1, s1)?)),
        None => None,
    };
    let w1 = LossWeights::new(cfg.lambda_r_stage1, cfg.lambda_seg)?;
    let init1 = DisplacementField::zeros(s1, s1)?;
    let stage1 = register_stage(
        &m1,
        &f1,
        masks1.as_ref().map(|(a, _)| a),
        masks1.as_ref().map(|(_, b)| b),
        &init1,
        &w1,
        cfg,
        cfg.iters_stage1,
    )?;

    let init2 = upsample_field(&stage1.field, s2, s2)?;
    let m2 = resample_image(m, s2, s2)?;
    let f2 = resample_image(f, s2, s2)?;
    let masks2 = match masks {
        Some((sm, sf)) => Some((resample_mask(sm, s2, s2)?, resample_mask(sf, s2, s2)?)),
        None => None,
    };
    let w2 = LossWeights::new(cfg.lambda_r_stage2, cfg.lambda_seg)?;
    let stage2 = register_stage(
        &m2,
        &f2,
        masks2.as_ref().map(|(a, _)| a),
        masks2.as_ref().map(|(_, b)| b),
        &init2,
        &w2,
        cfg,
        cfg.iters_stage2,
    )?;

    let field_native = upsample_field(&stage2.field, native_w, native_h)?;
    let warped = warp_image(m, &field_native)?;

    let stage1_trace_len = stage1.trace.len();
    let mut loss_trace = stage1.trace;
    loss_trace.extend_from_slice(&stage2.trace);

    Ok(RegistrationResult {
        field_native,
        field_stage1: stage1.field,
        field_stage2: stage2.field,
        loss_trace,
        stage1_trace_len,
        warped,
        non_finite_abort: stage1.non_finite_abort || stage2.non_finite_abort,
    })
}

/// Warps the native-resolution moving image with the result's native field.
pub fn apply_registration(m_native: &Image, result: &RegistrationResult) -> Result<Image> {
    warp_image(m_native, &result.field_native)
}
