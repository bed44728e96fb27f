//! Deterministic synthetic chest phantoms.
//!
//! Phantoms are stylized — elliptic torso, lungs and heart, a domed
//! diaphragm, and rib pairs drawn as curved bright bands with labels 2..=10 —
//! not anatomically realistic. Their job is controllable ground truth: every
//! output is a pure function of the parameter struct (seed included), and
//! parametric deformations return the exact displacement field that produced
//! them, so registration accuracy can be scored against a known answer.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::{
    sample_with_grad_slice, warp_image, warp_mask_hard, DisplacementField, Image, LabelMask,
    LabelSemantics,
};
use crate::rng::SplitMix64;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Geometry and noise parameters; all length-like fields are fractions of the
/// grid size so the same defaults work at any resolution.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PhantomParams {
    pub size: usize,
    /// Number of rib pairs; labels run 2..=(rib_pair_count + 1).
    pub rib_pair_count: u8,
    pub rib_thickness_frac: f64,
    /// Lateral droop of the rib arcs.
    pub rib_curvature_frac: f64,
    /// Vertical distance between consecutive pairs.
    pub rib_spacing_frac: f64,
    pub lung_rx_frac: f64,
    pub lung_ry_frac: f64,
    pub lung_cy_frac: f64,
    /// Horizontal distance of each lung center from the midline.
    pub lung_cx_offset_frac: f64,
    /// Height of the topmost rib arc, independent of the (soft) lung
    /// geometry so lung perturbations never move the bony cage.
    pub rib_apex_frac: f64,
    pub heart_cx_frac: f64,
    pub heart_cy_frac: f64,
    pub heart_rx_frac: f64,
    pub heart_ry_frac: f64,
    /// Height of the diaphragm dome.
    pub diaphragm_frac: f64,
    /// Standard deviation of the additive intensity noise.
    pub noise: f64,
    /// Shift applied to all geometry, in pixels; used by re-render oracles.
    pub center_offset: (f64, f64),
    pub seed: u64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            size: 256,
            rib_pair_count: 9,
            rib_thickness_frac: 0.024,
            rib_curvature_frac: 0.065,
            rib_spacing_frac: 0.066,
            lung_rx_frac: 0.17,
            lung_ry_frac: 0.30,
            lung_cy_frac: 0.46,
            lung_cx_offset_frac: 0.20,
            rib_apex_frac: 0.16,
            heart_cx_frac: 0.565,
            heart_cy_frac: 0.645,
            heart_rx_frac: 0.14,
            heart_ry_frac: 0.165,
            diaphragm_frac: 0.76,
            noise: 0.01,
            center_offset: (0.0, 0.0),
            seed: 0,
        }
    }
}

impl PhantomParams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.size < 32 {
            return Err(Error::GeometryOverflow("grid smaller than 32 px"));
        }
        if !(1..=9).contains(&self.rib_pair_count) {
            return Err(Error::GeometryOverflow("rib pair count outside 1..=9"));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidValue("noise level"));
        }
        let n = self.size as f64;
        let apex = self.rib_apex_frac * n;
        let last_arc = apex
            + (self.rib_pair_count as f64 + 0.5) * self.rib_spacing_frac * n
            + self.rib_curvature_frac * n
            + self.rib_thickness_frac * n;
        if apex < 2.0 || last_arc > n - 2.0 {
            return Err(Error::GeometryOverflow("rib stack leaves the grid"));
        }
        if (self.diaphragm_frac + 0.06) * n > n - 2.0 {
            return Err(Error::GeometryOverflow("diaphragm leaves the grid"));
        }
        Ok(())
    }
}

/// A generated phantom: image, rib-pair labels, lung labels and the binary
/// rib cage (all foreground rib labels collapsed to 1).
#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: Image,
    pub rib_pairs: LabelMask,
    pub lungs: LabelMask,
    pub rib_cage: LabelMask,
    pub params: PhantomParams,
}

struct Geometry {
    n: f64,
    cx: f64,
    torso_rx: f64,
    torso_ry: f64,
    torso_cy: f64,
    lung_rx: f64,
    lung_ry: f64,
    lung_cy: f64,
    lung_dx: f64,
    heart_cx: f64,
    heart_cy: f64,
    heart_rx: f64,
    heart_ry: f64,
    diaphragm_y: f64,
    rib_half: f64,
    rib_drop: f64,
    rib_spacing: f64,
    rib_apex: f64,
}

impl Geometry {
    fn new(p: &PhantomParams) -> Self {
        let n = p.size as f64;
        let cx = 0.5 * n + p.center_offset.0;
        let offy = p.center_offset.1;
        Self {
            n,
            cx,
            torso_rx: 0.43 * n,
            torso_ry: 0.47 * n,
            torso_cy: 0.53 * n + offy,
            lung_rx: p.lung_rx_frac * n,
            lung_ry: p.lung_ry_frac * n,
            lung_cy: p.lung_cy_frac * n + offy,
            lung_dx: p.lung_cx_offset_frac * n,
            heart_cx: p.heart_cx_frac * n + p.center_offset.0,
            heart_cy: p.heart_cy_frac * n + offy,
            heart_rx: p.heart_rx_frac * n,
            heart_ry: p.heart_ry_frac * n,
            diaphragm_y: p.diaphragm_frac * n + offy,
            rib_half: 0.5 * p.rib_thickness_frac * n,
            rib_drop: p.rib_curvature_frac * n,
            rib_spacing: p.rib_spacing_frac * n,
            rib_apex: p.rib_apex_frac * n + offy,
        }
    }

    fn in_ellipse(x: f64, y: f64, cx: f64, cy: f64, rx: f64, ry: f64) -> bool {
        let dx = (x - cx) / rx;
        let dy = (y - cy) / ry;
        dx * dx + dy * dy <= 1.0
    }

    fn in_torso(&self, x: f64, y: f64) -> bool {
        Self::in_ellipse(x, y, self.cx, self.torso_cy, self.torso_rx, self.torso_ry)
    }

    /// Diaphragm dome height at column x (lower y = higher in the image).
    fn diaphragm_at(&self, x: f64) -> f64 {
        let t = (x - self.cx) / (0.45 * self.n);
        self.diaphragm_y - 0.05 * self.n + 0.05 * self.n * t * t
    }

    /// 0 = outside, 1 = left lung, 2 = right lung.
    fn lung_label(&self, x: f64, y: f64) -> u8 {
        if y >= self.diaphragm_at(x) {
            return 0;
        }
        if Self::in_ellipse(x, y, self.cx - self.lung_dx, self.lung_cy, self.lung_rx, self.lung_ry)
        {
            return 1;
        }
        if Self::in_ellipse(x, y, self.cx + self.lung_dx, self.lung_cy, self.lung_rx, self.lung_ry)
        {
            return 2;
        }
        0
    }

    fn in_heart(&self, x: f64, y: f64) -> bool {
        Self::in_ellipse(x, y, self.heart_cx, self.heart_cy, self.heart_rx, self.heart_ry)
    }

    /// Rib-pair label (2..=1+count) covering (x, y), or 0.
    fn rib_label(&self, x: f64, y: f64, pairs: u8) -> u8 {
        // medial and lateral extents of the rib bands
        let med_gap = 0.045 * self.n;
        let lat = 0.40 * self.n;
        let (t, side_ok) = if x <= self.cx - med_gap && x >= self.cx - lat {
            (((self.cx - med_gap) - x) / (lat - med_gap), true)
        } else if x >= self.cx + med_gap && x <= self.cx + lat {
            ((x - (self.cx + med_gap)) / (lat - med_gap), true)
        } else {
            (0.0, false)
        };
        if !side_ok {
            return 0;
        }
        for i in 0..pairs {
            let base = self.rib_apex + (i as f64 + 0.5) * self.rib_spacing;
            let arc = base + self.rib_drop * t * t;
            if fmath::abs(y - arc) <= self.rib_half {
                return i + 2;
            }
        }
        0
    }
}

/// Renders a phantom; bit-identical for identical parameters.
pub fn generate_phantom(p: &PhantomParams) -> Result<Phantom> {
    p.validate()?;
    let n = p.size;
    let geo = Geometry::new(p);

    let mut intensity = vec![0.08f64; n * n];
    let mut rib_labels = vec![0u8; n * n];
    let mut lung_labels = vec![0u8; n * n];

    for yi in 0..n {
        for xi in 0..n {
            let (x, y) = (xi as f64, yi as f64);
            let i = yi * n + xi;
            if !geo.in_torso(x, y) {
                continue;
            }
            let mut v = 0.45;
            let lung = geo.lung_label(x, y);
            if lung != 0 {
                v = 0.20;
            }
            if geo.in_torso(x, y) && y >= geo.diaphragm_at(x) {
                v = 0.55;
            }
            if geo.in_heart(x, y) {
                v = 0.58;
            }
            let rib = geo.rib_label(x, y, p.rib_pair_count);
            if rib != 0 {
                v += 0.28;
            }
            intensity[i] = v;
            rib_labels[i] = rib;
            lung_labels[i] = lung;
        }
    }

    // light binomial smoothing so downsampled stages keep usable gradients
    smooth_3x3(&mut intensity, n, n);
    smooth_3x3(&mut intensity, n, n);

    if p.noise > 0.0 {
        let mut rng = SplitMix64::new(p.seed);
        for v in &mut intensity {
            *v += rng.normal(0.0, p.noise);
        }
    }

    let image = Image::from_clamped(n, n, intensity)?;
    let rib_pairs = LabelMask::new(n, n, rib_labels, LabelSemantics::RibPairs)?;
    let lungs = LabelMask::new(n, n, lung_labels, LabelSemantics::LungPair)?;
    let rib_cage = rib_pairs.to_binary();
    Ok(Phantom {
        image,
        rib_pairs,
        lungs,
        rib_cage,
        params: p.clone(),
    })
}

fn smooth_3x3(data: &mut Vec<f64>, w: usize, h: usize) {
    // separable [1 2 1]/4 with clamped borders
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            tmp[y * w + x] =
                0.25 * data[y * w + xm] + 0.5 * data[y * w + x] + 0.25 * data[y * w + xp];
        }
    }
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        for x in 0..w {
            data[y * w + x] =
                0.25 * tmp[ym * w + x] + 0.5 * tmp[y * w + x] + 0.25 * tmp[yp * w + x];
        }
    }
}

/// Parametric deformations with analytic (or exactly reconstructible) ground
/// truth. The deformed outputs play the fixed image of a registration pair:
/// deformed(x) = original(x + u(x)), so the field that registers
/// original -> deformed is exactly the returned ground truth.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum DeformationSpec {
    Translation {
        dx: f64,
        dy: f64,
    },
    AffineScaleRotate {
        scale: f64,
        angle_rad: f64,
    },
    SmoothRandomField {
        amplitude: f64,
        cell_px: f64,
        seed: u64,
    },
    HeartEnlargement {
        factor: f64,
    },
    DiaphragmRaise {
        pixels: f64,
    },
    /// Intensity-only pathology analog; the ground-truth field is zero.
    OpacityBlob {
        center: (f64, f64),
        radius: f64,
        intensity: f64,
    },
}

/// A deformed phantom plus the displacement field that produced it.
#[derive(Debug, Clone)]
pub struct DeformedPhantom {
    pub image: Image,
    pub rib_pairs: LabelMask,
    pub lungs: LabelMask,
    pub rib_cage: LabelMask,
    pub gt_field: DisplacementField,
}

/// Builds the ground-truth displacement field of `spec` on an n-by-n grid.
pub fn ground_truth_field(
    params: &PhantomParams,
    spec: &DeformationSpec,
) -> Result<DisplacementField> {
    let n = params.size;
    let geo = Geometry::new(params);
    let mut u = vec![[0.0f64; 2]; n * n];
    match *spec {
        DeformationSpec::Translation { dx, dy } => {
            if !(dx.is_finite() && dy.is_finite()) {
                return Err(Error::InvalidValue("translation components"));
            }
            for v in &mut u {
                *v = [dx, dy];
            }
        }
        DeformationSpec::AffineScaleRotate { scale, angle_rad } => {
            if !(scale.is_finite() && scale > 0.0 && angle_rad.is_finite()) {
                return Err(Error::InvalidValue("affine parameters"));
            }
            let (s, c) = (fmath::sin(angle_rad), fmath::cos(angle_rad));
            let cx = geo.cx;
            let cy = geo.torso_cy;
            for yi in 0..n {
                for xi in 0..n {
                    let dx = xi as f64 - cx;
                    let dy = yi as f64 - cy;
                    let ax = scale * (c * dx - s * dy);
                    let ay = scale * (s * dx + c * dy);
                    u[yi * n + xi] = [ax - dx, ay - dy];
                }
            }
        }
        DeformationSpec::SmoothRandomField {
            amplitude,
            cell_px,
            seed,
        } => {
            if !(amplitude.is_finite() && amplitude >= 0.0) {
                return Err(Error::InvalidValue("field amplitude"));
            }
            if !(cell_px.is_finite() && cell_px >= 2.0) {
                return Err(Error::InvalidValue("field cell size"));
            }
            let nc = ((n as f64 / cell_px) as usize + 2).max(2);
            let mut rng = SplitMix64::new(seed);
            let mut coarse_x = Vec::with_capacity(nc * nc);
            let mut coarse_y = Vec::with_capacity(nc * nc);
            for _ in 0..nc * nc {
                coarse_x.push(rng.uniform(-1.0, 1.0));
                coarse_y.push(rng.uniform(-1.0, 1.0));
            }
            let scale = (nc - 1) as f64 / (n - 1) as f64;
            for yi in 0..n {
                for xi in 0..n {
                    let sx = xi as f64 * scale;
                    let sy = yi as f64 * scale;
                    let (vx, _, _) = sample_with_grad_slice(&coarse_x, nc, nc, sx, sy);
                    let (vy, _, _) = sample_with_grad_slice(&coarse_y, nc, nc, sx, sy);
                    u[yi * n + xi] = [amplitude * vx, amplitude * vy];
                }
            }
        }
        DeformationSpec::HeartEnlargement { factor } => {
            if !(factor.is_finite() && factor > 0.0) {
                return Err(Error::InvalidValue("heart enlargement factor"));
            }
            let r_in = geo.heart_rx.max(geo.heart_ry);
            let r_out = 2.2 * r_in;
            let g0 = 1.0 / factor - 1.0;
            for yi in 0..n {
                for xi in 0..n {
                    let dx = xi as f64 - geo.heart_cx;
                    let dy = yi as f64 - geo.heart_cy;
                    let r = fmath::hypot(dx, dy);
                    let w = if r <= r_in {
                        1.0
                    } else if r < r_out {
                        let t = (r_out - r) / (r_out - r_in);
                        t * t
                    } else {
                        0.0
                    };
                    u[yi * n + xi] = [g0 * w * dx, g0 * w * dy];
                }
            }
        }
        DeformationSpec::DiaphragmRaise { pixels } => {
            if !pixels.is_finite() {
                return Err(Error::InvalidValue("diaphragm raise"));
            }
            let sigma = 0.08 * geo.n;
            for yi in 0..n {
                let dy = yi as f64 - geo.diaphragm_y;
                let s = fmath::exp(-(dy * dy) / (sigma * sigma));
                for xi in 0..n {
                    u[yi * n + xi] = [0.0, pixels * s];
                }
            }
        }
        DeformationSpec::OpacityBlob { .. } => {}
    }
    DisplacementField::new(n, n, u)
}

/// Applies a deformation to a phantom, returning the deformed image, the
/// consistently warped masks, and the exact ground-truth field.
pub fn deform_phantom(phantom: &Phantom, spec: &DeformationSpec) -> Result<DeformedPhantom> {
    let gt_field = ground_truth_field(&phantom.params, spec)?;
    let mut image = warp_image(&phantom.image, &gt_field)?;
    let rib_pairs = warp_mask_hard(&phantom.rib_pairs, &gt_field)?;
    let lungs = warp_mask_hard(&phantom.lungs, &gt_field)?;
    let rib_cage = rib_pairs.to_binary();

    if let DeformationSpec::OpacityBlob {
        center,
        radius,
        intensity,
    } = *spec
    {
        if !(radius.is_finite() && radius > 0.0 && intensity.is_finite()) {
            return Err(Error::InvalidValue("opacity blob parameters"));
        }
        let n = phantom.params.size;
        let mut data = image.data().to_vec();
        for yi in 0..n {
            for xi in 0..n {
                let d = fmath::hypot(xi as f64 - center.0, yi as f64 - center.1);
                let w = if d <= radius {
                    1.0
                } else if d <= radius + 2.0 {
                    (radius + 2.0 - d) / 2.0
                } else {
                    0.0
                };
                if w > 0.0 {
                    data[yi * n + xi] = (data[yi * n + xi] + intensity * w).clamp(0.0, 1.0);
                }
            }
        }
        image = Image::from_clamped(n, n, data)?;
    }

    Ok(DeformedPhantom {
        image,
        rib_pairs,
        lungs,
        rib_cage,
        gt_field,
    })
}
