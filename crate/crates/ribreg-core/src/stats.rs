//! Non-parametric model comparison: Friedman test over a subjects-by-models
//! score matrix, Nemenyi post-hoc critical differences, Wilcoxon signed-rank
//! tests with Bonferroni correction, and a driver chaining all three.
//!
//! Conventions pinned here: ties share mean ranks (Friedman and Wilcoxon),
//! zero differences are dropped before ranking (Wilcoxon), the signed-rank
//! p-value is exact by distribution enumeration up to n = 25 and a
//! tie-corrected, continuity-corrected normal approximation above, and the
//! Nemenyi q values are upper quantiles of the infinite-df studentized range
//! divided by sqrt(2), computed from the defining integral and cross-checked
//! against published tables in the test suite.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

/// Whether larger metric values are better (dice) or worse (h95, mse).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub enum Orientation {
    HigherIsBetter,
    LowerIsBetter,
}

/// Rectangular subjects-by-models score matrix for one metric.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ScoreMatrix {
    metric: String,
    orientation: Orientation,
    model_names: Vec<String>,
    /// rows\[subject\]\[model\]
    rows: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(
        metric: String,
        orientation: Orientation,
        model_names: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let k = model_names.len();
        if k < 2 {
            return Err(Error::DegenerateMatrix("need at least 2 models"));
        }
        if rows.len() < 5 {
            return Err(Error::DegenerateMatrix("need at least 5 subjects"));
        }
        for row in &rows {
            if row.len() != k {
                return Err(Error::DegenerateMatrix("ragged rows"));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::DegenerateMatrix("non-finite entry"));
            }
        }
        Ok(Self {
            metric,
            orientation,
            model_names,
            rows,
        })
    }

    pub fn metric(&self) -> &str {
        &self.metric
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn n_subjects(&self) -> usize {
        self.rows.len()
    }

    pub fn n_models(&self) -> usize {
        self.model_names.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

/// Mean ranks with ties shared; rank 1 is the best value per `orientation`.
pub fn rank_row(values: &[f64], orientation: Orientation) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let cmp = values[a].partial_cmp(&values[b]).expect("finite scores");
        match orientation {
            Orientation::HigherIsBetter => cmp.reverse(),
            Orientation::LowerIsBetter => cmp,
        }
        .then(a.cmp(&b))
    });
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            ranks[idx] = mean_rank;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman test output.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Mean rank per model; rank 1 is best under the matrix orientation.
    pub mean_ranks: Vec<f64>,
    /// Set when every row is fully tied (statistic 0, p 1).
    pub degenerate: bool,
}

/// Friedman chi-square test over within-row ranks:
/// chi2 = 12N/(k(k+1)) * (sum R_j^2 - k(k+1)^2/4) with k-1 dof.
pub fn friedman_test(m: &ScoreMatrix) -> Result<FriedmanResult> {
    let n = m.n_subjects() as f64;
    let k = m.n_models();
    let kf = k as f64;
    let mut rank_sums = vec![0.0; k];
    for row in m.rows() {
        for (j, r) in rank_row(row, m.orientation()).into_iter().enumerate() {
            rank_sums[j] += r;
        }
    }
    let mean_ranks: Vec<f64> = rank_sums.iter().map(|s| s / n).collect();
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let statistic = (12.0 * n / (kf * (kf + 1.0))) * (sum_sq - kf * (kf + 1.0) * (kf + 1.0) / 4.0);
    let statistic = statistic.max(0.0);
    let degenerate = statistic == 0.0;
    let p_value = if degenerate {
        1.0
    } else {
        chi2_sf(statistic, kf - 1.0)
    };
    Ok(FriedmanResult {
        statistic,
        p_value,
        mean_ranks,
        degenerate,
    })
}

/// Nemenyi post-hoc output.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct NemenyiResult {
    pub alpha: f64,
    pub q_alpha: f64,
    pub critical_difference: f64,
    /// significant\[i\]\[j\]: |mean_rank_i - mean_rank_j| > CD.
    pub significant: Vec<Vec<bool>>,
}

/// Nemenyi critical difference CD = q_alpha * sqrt(k(k+1)/(6N)); a model
/// pair differs significantly iff its mean-rank gap exceeds CD.
pub fn nemenyi_posthoc(mean_ranks: &[f64], n_subjects: usize, alpha: f64) -> Result<NemenyiResult> {
    if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
        return Err(Error::UnsupportedAlpha);
    }
    let k = mean_ranks.len();
    if k < 2 || n_subjects == 0 {
        return Err(Error::DegenerateMatrix("nemenyi needs >= 2 models"));
    }
    let q_alpha = studentized_range_quantile(1.0 - alpha, k) / fmath::sqrt(2.0);
    let kf = k as f64;
    let cd = q_alpha * fmath::sqrt(kf * (kf + 1.0) / (6.0 * n_subjects as f64));
    let mut significant = vec![vec![false; k]; k];
    for i in 0..k {
        for j in 0..k {
            significant[i][j] = i != j && fmath::abs(mean_ranks[i] - mean_ranks[j]) > cd;
        }
    }
    Ok(NemenyiResult {
        alpha,
        q_alpha,
        critical_difference: cd,
        significant,
    })
}

/// Wilcoxon signed-rank output.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct WilcoxonResult {
    /// min(T+, T-) over the nonzero differences.
    pub w_statistic: f64,
    pub t_plus: f64,
    /// Two-sided p: exact for n <= 25, normal approximation above.
    pub p_value: f64,
    /// Number of nonzero differences actually ranked.
    pub n_effective: usize,
    pub exact: bool,
}

/// Paired two-sided Wilcoxon signed-rank test; zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: (a.len(), 1),
            got: (b.len(), 1),
        });
    }
    let diffs: Vec<f64> = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| x - y)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    let n = diffs.len();
    let abs_diffs: Vec<f64> = diffs.iter().map(|d| fmath::abs(*d)).collect();
    let ranks = rank_row(&abs_diffs, Orientation::LowerIsBetter);
    let t_plus: f64 = diffs
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total: f64 = ranks.iter().sum();
    let t_minus = total - t_plus;
    let w = t_plus.min(t_minus);

    let exact = n <= 25;
    let p_value = if exact {
        exact_signed_rank_p(&ranks, t_plus)
    } else {
        normal_signed_rank_p(&ranks, t_plus)
    };
    Ok(WilcoxonResult {
        w_statistic: w,
        t_plus,
        p_value: p_value.min(1.0),
        n_effective: n,
        exact,
    })
}

/// Exact two-sided p over the 2^n sign assignments of the given ranks,
/// computed by dynamic programming over the doubled (integer) rank sums:
/// p = min(1, 2 * min(P(T+ <= t), P(T+ >= t))).
fn exact_signed_rank_p(ranks: &[f64], t_plus: f64) -> f64 {
    let n = ranks.len();
    let doubled: Vec<usize> = ranks.iter().map(|r| (r * 2.0 + 0.5) as usize).collect();
    let max_sum: usize = doubled.iter().sum();
    let mut dist = vec![0.0f64; max_sum + 1];
    dist[0] = 1.0;
    let mut reach = 0usize;
    for &r in &doubled {
        reach += r;
        for s in (0..=reach.saturating_sub(r)).rev() {
            if dist[s] > 0.0 {
                dist[s + r] += dist[s];
            }
        }
    }
    let total = fmath::pow(2.0, n as f64);
    let t2 = (t_plus * 2.0 + 0.5) as usize;
    let le: f64 = dist[..=t2.min(max_sum)].iter().sum();
    let ge: f64 = dist[t2.min(max_sum)..].iter().sum();
    (2.0 * (le.min(ge)) / total).min(1.0)
}

/// Tie-corrected normal approximation with continuity correction.
fn normal_signed_rank_p(ranks: &[f64], t_plus: f64) -> f64 {
    let n = ranks.len() as f64;
    let mean = n * (n + 1.0) / 4.0;
    let mut var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
    // tie correction: subtract sum(t^3 - t)/48 over tie groups
    let mut sorted = ranks.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite ranks"));
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        var -= (t * t * t - t) / 48.0;
        i = j + 1;
    }
    if var <= 0.0 {
        return 1.0;
    }
    let d = t_plus - mean;
    let cc = 0.5 * sign(d);
    let z = (d - cc) / fmath::sqrt(var);
    2.0 * (1.0 - normal_cdf(fmath::abs(z)))
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Bonferroni adjustment: min(1, p * m).
pub fn bonferroni(p_values: &[f64], m: usize) -> Vec<f64> {
    p_values
        .iter()
        .map(|&p| (p * m as f64).min(1.0))
        .collect()
}

/// One pairwise Wilcoxon comparison inside a model-comparison run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct PairwiseComparison {
    pub model_a: usize,
    pub model_b: usize,
    pub wilcoxon: WilcoxonResult,
    pub p_adjusted: f64,
    pub significant: bool,
}

/// Output of the full comparison protocol.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct ModelComparison {
    pub metric: String,
    pub model_names: Vec<String>,
    pub alpha_friedman: f64,
    pub alpha_pairwise: f64,
    pub friedman: FriedmanResult,
    pub friedman_significant: bool,
    pub nemenyi: NemenyiResult,
    /// All model pairs, Bonferroni-corrected for their count.
    pub pairwise: Vec<PairwiseComparison>,
}

/// Runs Friedman, then Nemenyi, then every pairwise Wilcoxon signed-rank test
/// with Bonferroni correction over the number of pairs.
pub fn compare_models(
    matrix: &ScoreMatrix,
    alpha_friedman: f64,
    alpha_pairwise: f64,
) -> Result<ModelComparison> {
    for alpha in [alpha_friedman, alpha_pairwise] {
        if !(alpha.is_finite() && alpha > 0.0 && alpha < 1.0) {
            return Err(Error::UnsupportedAlpha);
        }
    }
    let friedman = friedman_test(matrix)?;
    let nemenyi = nemenyi_posthoc(&friedman.mean_ranks, matrix.n_subjects(), alpha_pairwise)?;
    let k = matrix.n_models();
    let m_comparisons = k * (k - 1) / 2;
    let mut pairwise = Vec::with_capacity(m_comparisons);
    for i in 0..k {
        for j in i + 1..k {
            let res = match wilcoxon_signed_rank(&matrix.column(i), &matrix.column(j)) {
                Ok(r) => r,
                Err(Error::AllZeroDifferences) => WilcoxonResult {
                    w_statistic: 0.0,
                    t_plus: 0.0,
                    p_value: 1.0,
                    n_effective: 0,
                    exact: true,
                },
                Err(e) => return Err(e),
            };
            let p_adjusted = (res.p_value * m_comparisons as f64).min(1.0);
            pairwise.push(PairwiseComparison {
                model_a: i,
                model_b: j,
                p_adjusted,
                significant: p_adjusted < alpha_pairwise,
                wilcoxon: res,
            });
        }
    }
    Ok(ModelComparison {
        metric: String::from(matrix.metric()),
        model_names: matrix.model_names().to_vec(),
        alpha_friedman,
        alpha_pairwise,
        friedman_significant: friedman.p_value < alpha_friedman,
        friedman,
        nemenyi,
        pairwise,
    })
}

// ---------------------------------------------------------------------------
// special functions
// ---------------------------------------------------------------------------

pub(crate) fn normal_pdf(z: f64) -> f64 {
    fmath::exp(-0.5 * z * z) / fmath::sqrt(2.0 * core::f64::consts::PI)
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + fmath::erf(z / fmath::sqrt(2.0)))
}

/// Chi-square survival function: P(X > x) with `dof` degrees of freedom.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    1.0 - gamma_p(dof / 2.0, x / 2.0)
}

/// Regularized lower incomplete gamma P(a, x): series expansion for
/// x < a + 1, continued fraction otherwise.
fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series: P(a,x) = x^a e^-x / Gamma(a) * sum x^n / (a(a+1)...(a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if fmath::abs(term) < fmath::abs(sum) * 1e-16 {
                break;
            }
        }
        sum * fmath::exp(-x + a * fmath::ln(x) - fmath::ln_gamma(a))
    } else {
        // Lentz continued fraction for Q(a,x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if fmath::abs(d) < tiny {
                d = tiny;
            }
            c = b + an / c;
            if fmath::abs(c) < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if fmath::abs(del - 1.0) < 1e-16 {
                break;
            }
        }
        let q = fmath::exp(-x + a * fmath::ln(x) - fmath::ln_gamma(a)) * h;
        1.0 - q
    }
}

/// CDF of the studentized range with infinite degrees of freedom:
/// F(q; k) = k * Integral phi(z) * (Phi(z) - Phi(z - q))^(k-1) dz.
pub(crate) fn studentized_range_cdf(q: f64, k: usize) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    // Simpson's rule over z in [-9, 9]; the integrand decays with phi(z)
    const STEPS: usize = 4096;
    let lo = -9.0f64;
    let hi = 9.0f64;
    let h = (hi - lo) / STEPS as f64;
    let km1 = (k - 1) as f64;
    let integrand = |z: f64| -> f64 {
        let inner = normal_cdf(z) - normal_cdf(z - q);
        normal_pdf(z) * fmath::pow(inner.max(0.0), km1)
    };
    let mut sum = integrand(lo) + integrand(hi);
    for i in 1..STEPS {
        let z = lo + i as f64 * h;
        sum += integrand(z) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (k as f64 * sum * h / 3.0).clamp(0.0, 1.0)
}

/// Upper quantile of the infinite-df studentized range via bisection.
pub(crate) fn studentized_range_quantile(p: f64, k: usize) -> f64 {
    debug_assert!((0.0..1.0).contains(&p));
    let mut lo = 0.0f64;
    let mut hi = 50.0f64;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if studentized_range_cdf(mid, k) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
