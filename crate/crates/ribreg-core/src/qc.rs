//! Rule-based quality control of rib-pair segmentation masks.
//!
//! Each rib pair is judged by four rules: Q1 — no more than two sizable
//! connected components; Q2 — not a single rib (two sizable components
//! required); Q3 — symmetric rib sizes; Q4 — symmetric rib top heights.
//! Components smaller than the Q1 pixel tolerance are ignored throughout, so
//! small mislabeled patches never influence Q3/Q4. Threshold defaults can be
//! recalibrated from a ground-truth corpus.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::{BinaryMask, LabelMask, LabelSemantics};

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Rule thresholds; the Q1 pixel count doubles as the small-patch tolerance.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct QcThresholds {
    /// Minimum pixel count for a component to be considered a rib.
    pub t_q1: u32,
    /// Maximum tolerated size difference of the two ribs, in percent of the
    /// smaller rib.
    pub t_q3: f64,
    /// Maximum tolerated distance of the rib top rows, in pixels.
    pub t_q4: u32,
}

impl Default for QcThresholds {
    fn default() -> Self {
        Self {
            t_q1: 300,
            t_q3: 30.0,
            t_q4: 50,
        }
    }
}

impl QcThresholds {
    pub fn validate(&self) -> Result<()> {
        if self.t_q1 == 0 || self.t_q4 == 0 {
            return Err(Error::InvalidConfig("QC pixel thresholds must be positive"));
        }
        if !(self.t_q3.is_finite() && self.t_q3 > 0.0) {
            return Err(Error::InvalidConfig("t_q3 must be finite and positive"));
        }
        Ok(())
    }
}

/// A connected component of a binary grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<(u32, u32)>,
    pub size: usize,
    /// (min_x, min_y, max_x, max_y), inclusive.
    pub bbox: (u32, u32, u32, u32),
}

impl Component {
    /// Topmost row of the component (the rib's highest point).
    pub fn top_row(&self) -> u32 {
        self.bbox.1
    }

    /// Mean column of the component's pixels.
    pub fn centroid_x(&self) -> f64 {
        self.pixels.iter().map(|&(x, _)| x as f64).sum::<f64>() / self.size as f64
    }
}

/// Connected components under 8-connectivity, largest first (ties broken by
/// scan order for determinism).
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = mask.dims();
    let mut visited = vec![false; w * h];
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.data()[start] || visited[start] {
            continue;
        }
        visited[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut min_x, mut min_y, mut max_x, mut max_y) = (u32::MAX, u32::MAX, 0u32, 0u32);
        while let Some(i) = stack.pop() {
            let x = (i % w) as u32;
            let y = (i / w) as u32;
            pixels.push((x, y));
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
            let x = i % w;
            let y = i / w;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let ni = ny as usize * w + nx as usize;
                    if mask.data()[ni] && !visited[ni] {
                        visited[ni] = true;
                        stack.push(ni);
                    }
                }
            }
        }
        let size = pixels.len();
        components.push(Component {
            pixels,
            size,
            bbox: (min_x, min_y, max_x, max_y),
        });
    }
    components.sort_by(|a, b| b.size.cmp(&a.size).then(a.bbox.cmp(&b.bbox)));
    components
}

fn sizable<'a>(components: &'a [Component], t: &QcThresholds) -> Vec<&'a Component> {
    components
        .iter()
        .filter(|c| c.size >= t.t_q1 as usize)
        .collect()
}

/// The two ribs of a pair: the two largest sizable components, ordered
/// left/right by centroid column.
fn rib_components<'a>(components: &'a [Component], t: &QcThresholds) -> Option<(&'a Component, &'a Component)> {
    let sized = sizable(components, t);
    if sized.len() < 2 {
        return None;
    }
    let (a, b) = (sized[0], sized[1]);
    if a.centroid_x() <= b.centroid_x() {
        Some((a, b))
    } else {
        Some((b, a))
    }
}

/// Q1: fails when more than two sizable components remain after ignoring
/// patches below the pixel tolerance.
pub fn rule_q1(pair: &BinaryMask, t: &QcThresholds) -> bool {
    sizable(&connected_components(pair), t).len() <= 2
}

/// Q2: fails when the pair consists of at most one sizable component (a
/// single rib, or nothing at all).
pub fn rule_q2(pair: &BinaryMask, t: &QcThresholds) -> bool {
    sizable(&connected_components(pair), t).len() >= 2
}

/// Q3: fails when the larger rib exceeds the smaller by strictly more than
/// `t_q3` percent; vacuously passes with fewer than two ribs (Q2 covers it).
pub fn rule_q3(pair: &BinaryMask, t: &QcThresholds) -> bool {
    match rib_components(&connected_components(pair), t) {
        Some((a, b)) => size_difference_percent(a.size, b.size) <= t.t_q3,
        None => true,
    }
}

/// Q4: fails when the rib top rows are strictly more than `t_q4` pixels
/// apart; vacuously passes with fewer than two ribs.
pub fn rule_q4(pair: &BinaryMask, t: &QcThresholds) -> bool {
    match rib_components(&connected_components(pair), t) {
        Some((a, b)) => top_distance(a, b) <= t.t_q4,
        None => true,
    }
}

fn size_difference_percent(a: usize, b: usize) -> f64 {
    let big = a.max(b) as f64;
    let small = a.min(b) as f64;
    (big - small) / small * 100.0
}

fn top_distance(a: &Component, b: &Component) -> u32 {
    a.top_row().abs_diff(b.top_row())
}

/// Verdicts for one rib pair.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PairQc {
    pub label: u8,
    pub q1: bool,
    pub q2: bool,
    pub q3: bool,
    pub q4: bool,
    /// Raw component count before the size tolerance.
    pub component_count: usize,
    pub sizable_count: usize,
    /// Pixel counts of the (left, right) ribs when both exist.
    pub rib_sizes: Option<(usize, usize)>,
    /// Top rows of the (left, right) ribs when both exist.
    pub rib_tops: Option<(u32, u32)>,
    /// Set when the pair has no sizable component at all.
    pub empty_pair: bool,
}

impl PairQc {
    pub fn passed(&self) -> bool {
        self.q1 && self.q2 && self.q3 && self.q4
    }
}

/// QC verdicts for a whole rib-pairs mask.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct QcReport {
    pub pairs: Vec<PairQc>,
    pub pass: bool,
    /// Lowest-numbered failing pair — the one to relabel first.
    pub first_failing_pair: Option<u8>,
}

/// Runs all four rules on every rib pair of the mask.
pub fn qc_mask(mask: &LabelMask, t: &QcThresholds) -> Result<QcReport> {
    t.validate()?;
    if mask.semantics() != LabelSemantics::RibPairs {
        return Err(Error::LabelSetMismatch);
    }
    let mut pairs = Vec::new();
    let mut first_failing = None;
    for label in LabelSemantics::RibPairs.foreground_labels() {
        let pair_mask = mask.binary_for(label);
        let components = connected_components(&pair_mask);
        let sized = sizable(&components, t);
        let ribs = rib_components(&components, t);
        let q1 = sized.len() <= 2;
        let q2 = sized.len() >= 2;
        let (q3, q4, rib_sizes, rib_tops) = match ribs {
            Some((left, right)) => (
                size_difference_percent(left.size, right.size) <= t.t_q3,
                top_distance(left, right) <= t.t_q4,
                Some((left.size, right.size)),
                Some((left.top_row(), right.top_row())),
            ),
            None => (true, true, None, None),
        };
        let pair = PairQc {
            label,
            q1,
            q2,
            q3,
            q4,
            component_count: components.len(),
            sizable_count: sized.len(),
            rib_sizes,
            rib_tops,
            empty_pair: sized.is_empty(),
        };
        if !pair.passed() && first_failing.is_none() {
            first_failing = Some(label);
        }
        pairs.push(pair);
    }
    Ok(QcReport {
        pass: first_failing.is_none(),
        first_failing_pair: first_failing,
        pairs,
    })
}

/// Calibrates thresholds from ground-truth masks: `t_q1` is mean - 2.5 std of
/// the smallest pair's (label 2) pixel counts, `t_q3` the maximum observed
/// size-difference percentage and `t_q4` the maximum observed top distance,
/// both measured on the two largest components per pair after applying the
/// freshly calibrated `t_q1` tolerance.
pub fn calibrate_thresholds(gt_masks: &[LabelMask]) -> Result<QcThresholds> {
    if gt_masks.len() < 2 {
        return Err(Error::EmptyCorpus);
    }
    for mask in gt_masks {
        if mask.semantics() != LabelSemantics::RibPairs {
            return Err(Error::LabelSetMismatch);
        }
    }

    let counts: Vec<f64> = gt_masks
        .iter()
        .map(|m| m.labels().iter().filter(|&&l| l == 2).count() as f64)
        .collect();
    let n = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / n;
    let var = counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / n;
    let t_q1_value = mean - 2.5 * fmath::sqrt(var);
    let t_q1 = fmath::round(t_q1_value.max(1.0)) as u32;

    let candidate = QcThresholds {
        t_q1,
        ..QcThresholds::default()
    };
    let mut max_percent: f64 = 0.0;
    let mut max_top: u32 = 0;
    for mask in gt_masks {
        for label in LabelSemantics::RibPairs.foreground_labels() {
            let components = connected_components(&mask.binary_for(label));
            if let Some((left, right)) = rib_components(&components, &candidate) {
                max_percent = max_percent.max(size_difference_percent(left.size, right.size));
                max_top = max_top.max(top_distance(left, right));
            }
        }
    }

    Ok(QcThresholds {
        t_q1,
        t_q3: max_percent.max(f64::MIN_POSITIVE),
        t_q4: max_top.max(1),
    })
}
