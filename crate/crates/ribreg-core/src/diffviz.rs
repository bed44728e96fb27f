//! Difference-image pipeline: rib-hull region of interest, 10-component 1D
//! Gaussian-mixture histogram transfer, subtraction with ±4σ clipping, and
//! rendering on a zero-centered blue—white—yellow colormap.
//!
//! The intensity transfer maps the warped image into the fixed image's value
//! range through piecewise-linear interpolation between matched control
//! points (lower bound 0, the sorted mixture means of each image, and each
//! image's ROI maximum), which makes the rendered difference robust to how
//! the two acquisitions were processed.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::{ensure_same_dims, BinaryMask, Image};
use crate::metrics::percentile;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Variance floor of the EM fit.
pub const GMM_VARIANCE_FLOOR: f64 = 1e-6;
/// EM stops when the log-likelihood gain drops below this.
pub const GMM_TOLERANCE: f64 = 1e-6;
pub const GMM_MAX_ITERATIONS: usize = 300;

/// One mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

/// A fitted 1D Gaussian mixture; components are sorted by mean ascending and
/// the weights sum to 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct Gmm1D {
    pub components: Vec<GmmComponent>,
    pub log_likelihood_trace: Vec<f64>,
}

impl Gmm1D {
    pub fn sorted_means(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.mean).collect()
    }
}

#[inline]
fn gaussian_pdf(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    fmath::exp(-d * d / (2.0 * variance)) / fmath::sqrt(2.0 * core::f64::consts::PI * variance)
}

/// Fits a k-component 1D mixture by EM.
///
/// Means are initialized at the k midpoint quantiles of the data, variances
/// at the (floored) sample variance, weights uniform — a deterministic start,
/// so the seed only matters if callers layer their own randomization on top.
/// With fewer than k distinct values the fit degrades to one component per
/// distinct value. Large samples are binned to 1024 weighted points, which is
/// exact EM on the binned histogram.
pub fn fit_gmm_1d(values: &[f64], k: usize, _seed: u64) -> Result<Gmm1D> {
    if values.is_empty() || k == 0 {
        return Err(Error::InvalidValue("GMM needs data and k >= 1"));
    }
    for &v in values {
        if !v.is_finite() {
            return Err(Error::InvalidValue("non-finite GMM input"));
        }
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut distinct = 1usize;
    for i in 1..sorted.len() {
        if sorted[i] != sorted[i - 1] {
            distinct += 1;
        }
    }
    let k_eff = k.min(distinct);

    // weighted sample points (binned above 2048 raw values)
    let (points, weights): (Vec<f64>, Vec<f64>) = if values.len() > 2048 && distinct > 1 {
        let bins = 1024usize;
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0.0f64; bins];
        for &v in values {
            let mut b = ((v - lo) / width) as usize;
            if b >= bins {
                b = bins - 1;
            }
            counts[b] += 1.0;
        }
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        for (b, &c) in counts.iter().enumerate() {
            if c > 0.0 {
                pts.push(lo + (b as f64 + 0.5) * width);
                wts.push(c);
            }
        }
        (pts, wts)
    } else {
        (values.to_vec(), vec![1.0; values.len()])
    };
    let total_weight: f64 = weights.iter().sum();

    let n_raw = values.len() as f64;
    let mean_all = values.iter().sum::<f64>() / n_raw;
    let var_all = (values.iter().map(|v| (v - mean_all) * (v - mean_all)).sum::<f64>() / n_raw)
        .max(GMM_VARIANCE_FLOOR);

    let mut comps: Vec<GmmComponent> = (0..k_eff)
        .map(|i| GmmComponent {
            weight: 1.0 / k_eff as f64,
            mean: percentile(&sorted, (i as f64 + 0.5) / k_eff as f64 * 100.0),
            variance: var_all,
        })
        .collect();

    let mut trace = Vec::new();
    let mut resp = vec![0.0f64; points.len() * k_eff];
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..GMM_MAX_ITERATIONS {
        // E-step
        let mut ll = 0.0;
        for (j, (&x, &wj)) in points.iter().zip(&weights).enumerate() {
            let mut tot = 0.0;
            for (c, comp) in comps.iter().enumerate() {
                let r = comp.weight * gaussian_pdf(x, comp.mean, comp.variance);
                resp[j * k_eff + c] = r;
                tot += r;
            }
            let tot = tot + 1e-300;
            ll += wj * fmath::ln(tot);
            for c in 0..k_eff {
                resp[j * k_eff + c] /= tot;
            }
        }
        trace.push(ll);
        // M-step
        for c in 0..k_eff {
            let mut nk = 0.0;
            let mut sum_x = 0.0;
            for (j, (&x, &wj)) in points.iter().zip(&weights).enumerate() {
                let r = wj * resp[j * k_eff + c];
                nk += r;
                sum_x += r * x;
            }
            if nk < 1e-12 {
                comps[c].weight = nk / total_weight;
                continue;
            }
            let mean = sum_x / nk;
            let mut sum_sq = 0.0;
            for (j, (&x, &wj)) in points.iter().zip(&weights).enumerate() {
                let d = x - mean;
                sum_sq += wj * resp[j * k_eff + c] * d * d;
            }
            comps[c] = GmmComponent {
                weight: nk / total_weight,
                mean,
                variance: (sum_sq / nk).max(GMM_VARIANCE_FLOOR),
            };
        }
        if ll - prev_ll < GMM_TOLERANCE && prev_ll.is_finite() {
            break;
        }
        prev_ll = ll;
    }

    comps.sort_by(|a, b| a.mean.partial_cmp(&b.mean).expect("finite means"));
    // renormalize against accumulated rounding so the weights sum to 1
    let wsum: f64 = comps.iter().map(|c| c.weight).sum();
    if wsum > 0.0 {
        for c in &mut comps {
            c.weight /= wsum;
        }
    }
    Ok(Gmm1D {
        components: comps,
        log_likelihood_trace: trace,
    })
}

/// Convex hull of the mask's foreground pixel centers, dilated by a Euclidean
/// `margin` in pixels.
pub fn rib_hull_roi(ribcage: &BinaryMask, margin: f64) -> Result<BinaryMask> {
    if !(margin.is_finite() && margin >= 0.0) {
        return Err(Error::InvalidValue("hull margin"));
    }
    if ribcage.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = ribcage.dims();
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if ribcage.get(x, y) {
                pts.push((x as f64, y as f64));
            }
        }
    }
    let hull = convex_hull(&mut pts);

    let mut filled = BinaryMask::empty(w, h)?;
    match hull.len() {
        1 => {
            filled.set(hull[0].0 as usize, hull[0].1 as usize, true);
        }
        2 => {
            for y in 0..h {
                for x in 0..w {
                    if point_segment_distance((x as f64, y as f64), hull[0], hull[1]) <= 1e-9 {
                        filled.set(x, y, true);
                    }
                }
            }
        }
        _ => {
            for y in 0..h {
                for x in 0..w {
                    if point_in_convex_hull((x as f64, y as f64), &hull) {
                        filled.set(x, y, true);
                    }
                }
            }
        }
    }
    if margin == 0.0 {
        return Ok(filled);
    }
    let d2 = squared_edt(&filled);
    let limit = margin * margin;
    let mut roi = BinaryMask::empty(w, h)?;
    for i in 0..w * h {
        if d2[i] <= limit {
            roi.data_mut()[i] = true;
        }
    }
    Ok(roi)
}

/// Monotone-chain convex hull, counterclockwise in image coordinates.
fn convex_hull(pts: &mut Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite points"));
    pts.dedup();
    let n = pts.len();
    if n <= 2 {
        return pts.clone();
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * n);
    for &p in pts.iter() {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower = hull.len() + 1;
    for &p in pts.iter().rev() {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        // collinear input collapses to its extreme points
        let mut ends = vec![pts[0], pts[n - 1]];
        ends.dedup();
        return ends;
    }
    hull
}

fn point_in_convex_hull(p: (f64, f64), hull: &[(f64, f64)]) -> bool {
    let n = hull.len();
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross < -1e-9 {
            return false;
        }
    }
    true
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let abx = b.0 - a.0;
    let aby = b.1 - a.1;
    let len2 = abx * abx + aby * aby;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * abx + (p.1 - a.1) * aby) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    fmath::hypot(p.0 - (a.0 + t * abx), p.1 - (a.1 + t * aby))
}

/// Exact squared Euclidean distance transform (Felzenszwalb-Huttenlocher),
/// distance 0 on foreground.
fn squared_edt(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = mask.dims();
    const INF: f64 = 1e20;
    let mut grid = vec![INF; w * h];
    for i in 0..w * h {
        if mask.data()[i] {
            grid[i] = 0.0;
        }
    }
    let mut column = vec![0.0; h.max(w)];
    // columns
    for x in 0..w {
        for y in 0..h {
            column[y] = grid[y * w + x];
        }
        let out = edt_1d(&column[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    // rows
    let mut row = vec![0.0; w];
    for y in 0..h {
        row.copy_from_slice(&grid[y * w..(y + 1) * w]);
        let out = edt_1d(&row);
        grid[y * w..(y + 1) * w].copy_from_slice(&out);
    }
    grid
}

fn edt_1d(f: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = -1e20;
    z[1] = 1e20;
    for q in 1..n {
        loop {
            let s = ((f[q] + (q * q) as f64) - (f[v[k]] + (v[k] * v[k]) as f64))
                / (2.0 * q as f64 - 2.0 * v[k] as f64);
            if s <= z[k] {
                if k == 0 {
                    // degenerate only when f is -inf; unreachable with our inputs
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = 1e20;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
    d
}

fn roi_values(img: &Image, roi: &BinaryMask) -> Vec<f64> {
    img.data()
        .iter()
        .zip(roi.data())
        .filter_map(|(&v, &m)| m.then_some(v))
        .collect()
}

/// Transfers the source image's intensities into the target's value range.
///
/// Control points for the source are [0, sorted source-mixture means,
/// max(source in ROI)]; the target list is built the same way from a mixture
/// fitted on the target's ROI values; source intensities map through the
/// piecewise-linear correspondence of the matched lists.
pub fn histogram_transfer(
    source: &Image,
    target: &Image,
    roi: &BinaryMask,
    source_gmm: &Gmm1D,
) -> Result<Image> {
    ensure_same_dims(source.dims(), target.dims())?;
    ensure_same_dims(source.dims(), roi.dims())?;
    if roi.is_empty() {
        return Err(Error::EmptyMask);
    }
    let k = source_gmm.components.len();
    let target_values = roi_values(target, roi);
    let target_gmm = fit_gmm_1d(&target_values, k, 0)?;
    if target_gmm.components.len() != k {
        return Err(Error::InvalidConfig(
            "source and target mixtures have different component counts",
        ));
    }

    let source_values = roi_values(source, roi);
    let max_src = source_values.iter().copied().fold(0.0f64, f64::max);
    let max_tgt = target_values.iter().copied().fold(0.0f64, f64::max);

    let mut cs = vec![0.0];
    cs.extend(source_gmm.sorted_means());
    cs.push(max_src);
    let mut ct = vec![0.0];
    ct.extend(target_gmm.sorted_means());
    ct.push(max_tgt);
    for list in [&cs, &ct] {
        if list.windows(2).any(|w| w[1] < w[0] - 1e-12) {
            return Err(Error::NonMonotoneControlPoints);
        }
    }

    let mapped = source
        .data()
        .iter()
        .map(|&v| piecewise_map(v, &cs, &ct))
        .collect();
    Image::from_clamped(source.width(), source.height(), mapped)
}

fn piecewise_map(v: f64, cs: &[f64], ct: &[f64]) -> f64 {
    if v <= cs[0] {
        return ct[0];
    }
    let last = cs.len() - 1;
    if v >= cs[last] {
        return ct[last];
    }
    for i in 0..last {
        if v <= cs[i + 1] {
            let width = cs[i + 1] - cs[i];
            if width <= 1e-15 {
                return ct[i + 1];
            }
            let t = (v - cs[i]) / width;
            return ct[i] + t * (ct[i + 1] - ct[i]);
        }
    }
    ct[last]
}

/// Zero-centered signed difference with its rendering.
#[derive(Debug, Clone)]
pub struct DifferenceImage {
    width: usize,
    height: usize,
    /// Clipped, mean-subtracted difference; 0 outside the ROI.
    pub signed: Vec<f64>,
    pub roi: BinaryMask,
    pub clip_lo: f64,
    pub clip_hi: f64,
    /// Symmetric render scale: signed/scale spans [-1, 1].
    pub scale: f64,
    /// Colormap index per pixel (128 = neutral).
    pub index: Vec<u8>,
    /// RGB render through the blue-white-yellow map.
    pub rgb: Vec<[u8; 3]>,
}

impl DifferenceImage {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Subtracts the intensity-matched warped image from the fixed image inside
/// the ROI, clips at mean ± 4 std, removes the mean, and renders the result
/// on the symmetric colormap (negative = blue, positive = yellow).
pub fn difference_image(
    fixed: &Image,
    matched_warped: &Image,
    roi: &BinaryMask,
) -> Result<DifferenceImage> {
    ensure_same_dims(fixed.dims(), matched_warped.dims())?;
    ensure_same_dims(fixed.dims(), roi.dims())?;
    if roi.is_empty() {
        return Err(Error::EmptyMask);
    }
    let (w, h) = fixed.dims();
    let count = roi.count() as f64;

    let mut mean = 0.0;
    for i in 0..w * h {
        if roi.data()[i] {
            mean += fixed.data()[i] - matched_warped.data()[i];
        }
    }
    mean /= count;
    let mut var = 0.0;
    for i in 0..w * h {
        if roi.data()[i] {
            let d = fixed.data()[i] - matched_warped.data()[i] - mean;
            var += d * d;
        }
    }
    var /= count;
    let std = fmath::sqrt(var);
    let clip_lo = mean - 4.0 * std;
    let clip_hi = mean + 4.0 * std;

    let mut clipped = vec![0.0f64; w * h];
    let mut clipped_mean = 0.0;
    for i in 0..w * h {
        if roi.data()[i] {
            let d = (fixed.data()[i] - matched_warped.data()[i]).clamp(clip_lo, clip_hi);
            clipped[i] = d;
            clipped_mean += d;
        }
    }
    clipped_mean /= count;

    let mut signed = vec![0.0f64; w * h];
    let mut scale = 0.0f64;
    for i in 0..w * h {
        if roi.data()[i] {
            signed[i] = clipped[i] - clipped_mean;
            scale = scale.max(fmath::abs(signed[i]));
        }
    }
    if scale < 1e-15 {
        scale = 1.0;
    }

    let mut index = vec![128u8; w * h];
    let mut rgb = vec![COLORMAP_BLUE_WHITE_YELLOW[128]; w * h];
    for i in 0..w * h {
        if roi.data()[i] {
            let t = (signed[i] / scale).clamp(-1.0, 1.0);
            let idx = fmath::round((t + 1.0) / 2.0 * 255.0) as usize;
            index[i] = idx as u8;
            rgb[i] = COLORMAP_BLUE_WHITE_YELLOW[idx];
        }
    }

    Ok(DifferenceImage {
        width: w,
        height: h,
        signed,
        roi: roi.clone(),
        clip_lo,
        clip_hi,
        scale,
        index,
        rgb,
    })
}

/// 256-entry diverging colormap: dark blue at 0, near-white at 128, yellow at
/// 255, built by integer linear interpolation so renders are bit-exact.
pub static COLORMAP_BLUE_WHITE_YELLOW: [[u8; 3]; 256] = build_colormap();

const fn lerp_channel(a: u8, b: u8, i: usize, n: usize) -> u8 {
    ((a as usize * (n - i) + b as usize * i + n / 2) / n) as u8
}

const fn build_colormap() -> [[u8; 3]; 256] {
    const BLUE: [u8; 3] = [12, 30, 118];
    const WHITE: [u8; 3] = [245, 245, 245];
    const YELLOW: [u8; 3] = [250, 217, 28];
    let mut map = [[0u8; 3]; 256];
    let mut i = 0;
    while i < 256 {
        if i <= 128 {
            map[i] = [
                lerp_channel(BLUE[0], WHITE[0], i, 128),
                lerp_channel(BLUE[1], WHITE[1], i, 128),
                lerp_channel(BLUE[2], WHITE[2], i, 128),
            ];
        } else {
            map[i] = [
                lerp_channel(WHITE[0], YELLOW[0], i - 128, 127),
                lerp_channel(WHITE[1], YELLOW[1], i - 128, 127),
                lerp_channel(WHITE[2], YELLOW[2], i - 128, 127),
            ];
        }
        i += 1;
    }
    map
}
