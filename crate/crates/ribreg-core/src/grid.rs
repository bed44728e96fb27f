//! Grid containers and differentiable resampling.
//!
//! All grids are row-major with pixel-center coordinates: pixel (x, y) sits
//! at real coordinate (x, y), x running along columns. Warping follows the
//! pull-back convention — output pixel x reads the input at x + u(x) — and
//! out-of-bounds samples clamp to the border pixel, so every warp is total.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Declared label alphabet of a [`LabelMask`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum LabelSemantics {
    /// 0 background, 1 left lung, 2 right lung.
    LungPair,
    /// 0 background, rib pairs labeled 2..=10 (left and right rib of a pair
    /// share the label).
    RibPairs,
    /// 0 background, 1 foreground.
    Binary,
}

impl LabelSemantics {
    /// Whether `label` belongs to this alphabet (background included).
    pub fn allows(self, label: u8) -> bool {
        match self {
            LabelSemantics::LungPair => label <= 2,
            LabelSemantics::RibPairs => label == 0 || (2..=10).contains(&label),
            LabelSemantics::Binary => label <= 1,
        }
    }

    /// Foreground labels of the alphabet, ascending.
    pub fn foreground_labels(self) -> Vec<u8> {
        match self {
            LabelSemantics::LungPair => vec![1, 2],
            LabelSemantics::RibPairs => (2..=10).collect(),
            LabelSemantics::Binary => vec![1],
        }
    }

    /// All class labels including background, ascending.
    pub fn class_labels(self) -> Vec<u8> {
        let mut labels = vec![0];
        labels.extend(self.foreground_labels());
        labels
    }
}

/// 2D image of intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, validating dimensions and that every value is finite
    /// and inside [0, 1].
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidValue("image buffer length"));
        }
        for &v in &data {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidValue("image intensity outside [0,1]"));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image, clamping finite values into [0, 1].
    pub fn from_clamped(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidValue("image buffer length"));
        }
        let mut data = data;
        for v in &mut data {
            if !v.is_finite() {
                return Err(Error::InvalidValue("non-finite image intensity"));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Internal constructor for values already known to satisfy invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// 2D multi-label segmentation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    semantics: LabelSemantics,
}

impl LabelMask {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        semantics: LabelSemantics,
    ) -> Result<Self> {
        check_dims(width, height)?;
        if labels.len() != width * height {
            return Err(Error::InvalidValue("mask buffer length"));
        }
        for &l in &labels {
            if !semantics.allows(l) {
                return Err(Error::InvalidLabel { label: l });
            }
        }
        Ok(Self {
            width,
            height,
            labels,
            semantics,
        })
    }

    pub(crate) fn from_raw(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        semantics: LabelSemantics,
    ) -> Self {
        debug_assert_eq!(labels.len(), width * height);
        Self {
            width,
            height,
            labels,
            semantics,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn semantics(&self) -> LabelSemantics {
        self.semantics
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u8 {
        debug_assert!(x < self.width && y < self.height);
        self.labels[y * self.width + x]
    }

    /// Binary mask of pixels carrying `label`.
    pub fn binary_for(&self, label: u8) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    /// Collapses all foreground labels to a single binary foreground.
    pub fn to_binary(&self) -> LabelMask {
        LabelMask {
            width: self.width,
            height: self.height,
            labels: self
                .labels
                .iter()
                .map(|&l| u8::from(l != 0))
                .collect(),
            semantics: LabelSemantics::Binary,
        }
    }

    /// Indicator grid (1.0 where the pixel carries `label`).
    pub fn indicator(&self, label: u8) -> Vec<f64> {
        self.labels
            .iter()
            .map(|&l| if l == label { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Plain binary grid used by metrics, QC and ROI computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidValue("mask buffer length"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// Dense displacement field u(x); the induced map is T(x) = x + u(x).
///
/// Components are (dx, dy) in pixels of the field's own grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementField {
    width: usize,
    height: usize,
    u: Vec<[f64; 2]>,
}

impl DisplacementField {
    pub fn new(width: usize, height: usize, u: Vec<[f64; 2]>) -> Result<Self> {
        check_dims(width, height)?;
        if u.len() != width * height {
            return Err(Error::InvalidValue("field buffer length"));
        }
        for v in &u {
            if !v[0].is_finite() || !v[1].is_finite() {
                return Err(Error::InvalidValue("non-finite displacement"));
            }
        }
        Ok(Self { width, height, u })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        check_dims(width, height)?;
        Ok(Self {
            width,
            height,
            u: vec![[0.0; 2]; width * height],
        })
    }

    pub fn uniform(width: usize, height: usize, dx: f64, dy: f64) -> Result<Self> {
        Self::new(width, height, vec![[dx, dy]; width * height])
    }

    pub(crate) fn from_raw(width: usize, height: usize, u: Vec<[f64; 2]>) -> Self {
        debug_assert_eq!(u.len(), width * height);
        Self { width, height, u }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn vectors(&self) -> &[[f64; 2]] {
        &self.u
    }

    pub fn vectors_mut(&mut self) -> &mut [[f64; 2]] {
        &mut self.u
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 2] {
        debug_assert!(x < self.width && y < self.height);
        self.u[y * self.width + x]
    }

    /// Mean Euclidean magnitude of the displacement vectors.
    pub fn mean_magnitude(&self) -> f64 {
        if self.u.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.u.iter().map(|v| fmath::hypot(v[0], v[1])).sum();
        sum / self.u.len() as f64
    }
}

/// Per-label soft occupancy grids produced by [`warp_mask_soft`].
///
/// One grid per class (background included); at every pixel the occupancies
/// sum to 1 because the warped indicators form a partition of unity.
#[derive(Debug, Clone)]
pub struct SoftOccupancy {
    width: usize,
    height: usize,
    semantics: LabelSemantics,
    labels: Vec<u8>,
    grids: Vec<Vec<f64>>,
}

impl SoftOccupancy {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn semantics(&self) -> LabelSemantics {
        self.semantics
    }

    /// Class labels, ascending, background first.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn grid(&self, label: u8) -> Option<&[f64]> {
        let idx = self.labels.iter().position(|&l| l == label)?;
        Some(&self.grids[idx])
    }

    /// Occupancy of `label` at (x, y); 0 for labels outside the class set.
    pub fn occupancy(&self, label: u8, x: usize, y: usize) -> f64 {
        match self.grid(label) {
            Some(g) => g[y * self.width + x],
            None => 0.0,
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::InvalidDimensions { width, height });
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            got: b,
        });
    }
    Ok(())
}

/// Resolves a sample coordinate against one axis: clamps to the border and
/// returns (base index, fractional part, derivative pass-through factor).
///
/// The factor is 0 when the raw coordinate lies outside [0, n-1], where the
/// clamped interpolant is constant. At the exact right edge the last interior
/// cell is used (fraction 1), so the value is unchanged and the derivative is
/// the left-sided slope.
#[inline]
fn resolve_axis(coord: f64, n: usize) -> (usize, f64, f64) {
    let max = (n - 1) as f64;
    let inside = if coord <= 0.0 {
        return (0, 0.0, if coord < 0.0 { 0.0 } else { 1.0 });
    } else if coord >= max {
        return (n - 2, 1.0, if coord > max { 0.0 } else { 1.0 });
    } else {
        1.0
    };
    let base = fmath::floor(coord);
    let mut i = base as usize;
    if i > n - 2 {
        i = n - 2;
    }
    (i, coord - i as f64, inside)
}

/// Bilinear interpolation of `img` at real coordinates (x, y).
///
/// Out-of-bounds coordinates clamp to the border pixel, making the sampler
/// total over the plane.
pub fn bilinear_sample(img: &Image, x: f64, y: f64) -> f64 {
    let (v, _, _) = sample_with_grad_slice(img.data(), img.width, img.height, x, y);
    v
}

/// Bilinear sample plus its analytic spatial derivatives (dv/dx, dv/dy).
pub fn bilinear_sample_with_grad(img: &Image, x: f64, y: f64) -> (f64, f64, f64) {
    sample_with_grad_slice(img.data(), img.width, img.height, x, y)
}

/// Slice-level sampler shared by image and indicator-plane warping.
#[inline]
pub(crate) fn sample_with_grad_slice(
    data: &[f64],
    width: usize,
    height: usize,
    x: f64,
    y: f64,
) -> (f64, f64, f64) {
    let (ix, fx, sx) = resolve_axis(x, width);
    let (iy, fy, sy) = resolve_axis(y, height);
    let i00 = iy * width + ix;
    let v00 = data[i00];
    let v10 = data[i00 + 1];
    let v01 = data[i00 + width];
    let v11 = data[i00 + width + 1];
    // convex form is exact at fraction 0 and 1, keeping integer-coordinate
    // samples and same-size resampling bit-identical
    let top = (1.0 - fx) * v00 + fx * v10;
    let bottom = (1.0 - fx) * v01 + fx * v11;
    let value = (1.0 - fy) * top + fy * bottom;
    let dvdx = ((1.0 - fy) * (v10 - v00) + fy * (v11 - v01)) * sx;
    let dvdy = ((1.0 - fx) * (v01 - v00) + fx * (v11 - v10)) * sy;
    (value, dvdx, dvdy)
}

/// Nearest-neighbor lookup with border clamping.
#[inline]
fn nearest_label(mask: &LabelMask, x: f64, y: f64) -> u8 {
    let xi = fmath::floor(x + 0.5).clamp(0.0, (mask.width - 1) as f64) as usize;
    let yi = fmath::floor(y + 0.5).clamp(0.0, (mask.height - 1) as f64) as usize;
    mask.labels[yi * mask.width + xi]
}

/// Warps `img` by `field` under the pull-back convention:
/// out(x) = img(x + u(x)).
pub fn warp_image(img: &Image, field: &DisplacementField) -> Result<Image> {
    ensure_same_dims(img.dims(), field.dims())?;
    let (w, h) = img.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let u = field.u[y * w + x];
            out.push(bilinear_sample(img, x as f64 + u[0], y as f64 + u[1]));
        }
    }
    Ok(Image::from_raw(w, h, out))
}

/// Soft (bilinear) warp of every label's indicator grid.
pub fn warp_mask_soft(mask: &LabelMask, field: &DisplacementField) -> Result<SoftOccupancy> {
    ensure_same_dims(mask.dims(), field.dims())?;
    let (w, h) = mask.dims();
    let labels = mask.semantics.class_labels();
    let mut grids = Vec::with_capacity(labels.len());
    for &label in &labels {
        let plane = mask.indicator(label);
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let u = field.u[y * w + x];
                let (v, _, _) =
                    sample_with_grad_slice(&plane, w, h, x as f64 + u[0], y as f64 + u[1]);
                out.push(v);
            }
        }
        grids.push(out);
    }
    Ok(SoftOccupancy {
        width: w,
        height: h,
        semantics: mask.semantics,
        labels,
        grids,
    })
}

/// Nearest-neighbor warp of a label mask (metric-time warping).
pub fn warp_mask_hard(mask: &LabelMask, field: &DisplacementField) -> Result<LabelMask> {
    ensure_same_dims(mask.dims(), field.dims())?;
    let (w, h) = mask.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let u = field.u[y * w + x];
            out.push(nearest_label(mask, x as f64 + u[0], y as f64 + u[1]));
        }
    }
    Ok(LabelMask::from_raw(w, h, out, mask.semantics))
}

/// Maps a destination index to a source coordinate so that grid corners
/// coincide (bilinear interpolation of a linear field is then exact).
#[inline]
fn axis_map(dst: usize, dst_n: usize, src_n: usize) -> f64 {
    if dst_n == 1 {
        return 0.0;
    }
    dst as f64 * (src_n - 1) as f64 / (dst_n - 1) as f64
}

/// Bilinear resampling of an image to a new size.
pub fn resample_image(img: &Image, new_w: usize, new_h: usize) -> Result<Image> {
    check_dims(new_w, new_h)?;
    let mut out = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let sy = axis_map(y, new_h, img.height);
        for x in 0..new_w {
            let sx = axis_map(x, new_w, img.width);
            out.push(bilinear_sample(img, sx, sy));
        }
    }
    Ok(Image::from_raw(new_w, new_h, out))
}

/// Nearest-neighbor resampling of a mask, preserving label discreteness.
pub fn resample_mask(mask: &LabelMask, new_w: usize, new_h: usize) -> Result<LabelMask> {
    check_dims(new_w, new_h)?;
    let mut out = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let sy = axis_map(y, new_h, mask.height);
        for x in 0..new_w {
            let sx = axis_map(x, new_w, mask.width);
            out.push(nearest_label(mask, sx, sy));
        }
    }
    Ok(LabelMask::from_raw(new_w, new_h, out, mask.semantics))
}

/// Bilinearly upsamples a displacement field; each component is multiplied by
/// the axis scale factor new/old so the geometric transformation carries over
/// to the finer grid.
pub fn upsample_field(
    field: &DisplacementField,
    new_w: usize,
    new_h: usize,
) -> Result<DisplacementField> {
    check_dims(new_w, new_h)?;
    if new_w < field.width || new_h < field.height {
        return Err(Error::DimensionMismatch {
            expected: field.dims(),
            got: (new_w, new_h),
        });
    }
    let scale_x = new_w as f64 / field.width as f64;
    let scale_y = new_h as f64 / field.height as f64;
    let (w, h) = field.dims();
    let mut dx_plane = Vec::with_capacity(w * h);
    let mut dy_plane = Vec::with_capacity(w * h);
    for v in &field.u {
        dx_plane.push(v[0]);
        dy_plane.push(v[1]);
    }
    let mut out = Vec::with_capacity(new_w * new_h);
    for y in 0..new_h {
        let sy = axis_map(y, new_h, h);
        for x in 0..new_w {
            let sx = axis_map(x, new_w, w);
            let (dx, _, _) = sample_with_grad_slice(&dx_plane, w, h, sx, sy);
            let (dy, _, _) = sample_with_grad_slice(&dy_plane, w, h, sx, sy);
            out.push([dx * scale_x, dy * scale_y]);
        }
    }
    Ok(DisplacementField::from_raw(new_w, new_h, out))
}
