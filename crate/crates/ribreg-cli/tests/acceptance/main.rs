//! Acceptance suite: every criterion runs at its stated tolerance and prints
//! one `ACCEPTANCE <n> <name>: PASS` line (run with `-- --nocapture` to see
//! them). Criteria 6 and 7 share one lazily computed 20-pair phantom suite.

mod suite;

use std::time::Instant;

use ribreg_core::diffviz::{
    difference_image, fit_gmm_1d, histogram_transfer, rib_hull_roi,
};
use ribreg_core::engine::{register_multistage, PenalizationMode, RegistrationConfig};
use ribreg_core::grid::{
    warp_mask_soft, BinaryMask, DisplacementField, Image, LabelMask, LabelSemantics,
};
use ribreg_core::loss::{combined_loss, loss_value_and_gradient, LossWeights};
use ribreg_core::metrics::{
    dice, hausdorff95, mse, neg_jacobian_fraction, ssim, SSIM_C1, SSIM_C2, SSIM_WINDOW,
};
use ribreg_core::phantom::{deform_phantom, generate_phantom, DeformationSpec, PhantomParams};
use ribreg_core::rng::SplitMix64;
use ribreg_core::stats::{friedman_test, wilcoxon_signed_rank, Orientation, ScoreMatrix};

fn pass(n: u32, name: &str, detail: String) {
    println!("ACCEPTANCE {n} ({name}): PASS [{detail}]");
}

// ---------------------------------------------------------------- criterion 1

fn noise_image(w: usize, h: usize, rng: &mut SplitMix64) -> Image {
    Image::new(w, h, (0..w * h).map(|_| rng.next_f64()).collect()).unwrap()
}

fn blobby_mask(w: usize, h: usize, semantics: LabelSemantics, rng: &mut SplitMix64) -> LabelMask {
    let mut grid = vec![0u8; w * h];
    for &label in &semantics.foreground_labels() {
        let cx = rng.uniform(2.0, (w - 3) as f64);
        let cy = rng.uniform(2.0, (h - 3) as f64);
        let r = rng.uniform(1.5, 3.5);
        for y in 0..h {
            for x in 0..w {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    grid[y * w + x] = label;
                }
            }
        }
    }
    LabelMask::new(w, h, grid, semantics).unwrap()
}

/// Field whose sample coordinates avoid the sampler's cell boundaries, where
/// a central difference would straddle a kink of the piecewise interpolant.
fn fd_safe_field(w: usize, h: usize, rng: &mut SplitMix64) -> DisplacementField {
    let mut u = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut v = [0.0f64; 2];
            for (c, base) in [(0usize, x as f64), (1usize, y as f64)] {
                let mut d = rng.uniform(-2.0, 2.0);
                let frac = (base + d).rem_euclid(1.0);
                if frac < 0.05 {
                    d += 0.07;
                } else if frac > 0.95 {
                    d -= 0.07;
                }
                v[c] = d;
            }
            u.push(v);
        }
    }
    DisplacementField::new(w, h, u).unwrap()
}

#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let modes = [
        PenalizationMode::Unsupervised,
        PenalizationMode::Lung,
        PenalizationMode::RibCage,
        PenalizationMode::RibPairs,
    ];
    let weights = LossWeights::new(0.05, 2.0).unwrap();
    let mut worst: f64 = 0.0;
    let mut problems = 0;
    for (mi, mode) in modes.iter().enumerate() {
        for rep in 0..5u64 {
            let mut rng = SplitMix64::new(1000 * (mi as u64 + 1) + rep);
            let (w, h) = (16usize, 16usize);
            let m = noise_image(w, h, &mut rng);
            let f = noise_image(w, h, &mut rng);
            let masks = mode
                .expected_semantics()
                .map(|s| (blobby_mask(w, h, s, &mut rng), blobby_mask(w, h, s, &mut rng)));
            let (s_m, s_f) = match &masks {
                Some((a, b)) => (Some(a), Some(b)),
                None => (None, None),
            };
            let field = fd_safe_field(w, h, &mut rng);
            let (_, grad) = loss_value_and_gradient(&m, &f, &field, s_m, s_f, &weights).unwrap();
            let occ = s_m.map(|sm| warp_mask_soft(sm, &field).unwrap());

            let mut checked = 0;
            while checked < 10 {
                let px = (rng.next_u64() % w as u64) as usize;
                let py = (rng.next_u64() % h as u64) as usize;
                let i = py * w + px;
                // skip probes whose occupancy sits in the clip transition:
                // -ln p has unbounded curvature there and h = 1e-4 central
                // differences are numerically meaningless
                if let (Some(occ), Some(sf)) = (&occ, s_f) {
                    let p = occ.occupancy(sf.label(px, py), px, py);
                    if p > 1e-9 && p < 0.2 {
                        continue;
                    }
                }
                for c in 0..2 {
                    let h_fd = 1e-4;
                    let mut plus = field.clone();
                    plus.vectors_mut()[i][c] += h_fd;
                    let mut minus = field.clone();
                    minus.vectors_mut()[i][c] -= h_fd;
                    let lp = combined_loss(&m, &f, &plus, s_m, s_f, &weights).unwrap().total;
                    let lm = combined_loss(&m, &f, &minus, s_m, s_f, &weights)
                        .unwrap()
                        .total;
                    let fd = (lp - lm) / (2.0 * h_fd);
                    let a = grad[i][c];
                    worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-3));
                }
                checked += 1;
            }
            problems += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert_eq!(problems, 20);
    assert!(
        worst <= 1e-4,
        "criterion 1 FAIL: max relative error {worst:.3e}"
    );
    assert!(elapsed < 30.0, "criterion 1 FAIL: runtime {elapsed:.1}s");
    pass(
        1,
        "gradient correctness",
        format!("max rel err {worst:.2e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------- criterion 2

fn random_small_mask(w: usize, h: usize, rng: &mut SplitMix64) -> BinaryMask {
    loop {
        let mut m = BinaryMask::empty(w, h).unwrap();
        for _ in 0..2 {
            let x0 = (rng.next_u64() % (w as u64 - 2)) as usize;
            let y0 = (rng.next_u64() % (h as u64 - 2)) as usize;
            let dw = 1 + (rng.next_u64() % 5) as usize;
            let dh = 1 + (rng.next_u64() % 5) as usize;
            for y in y0..(y0 + dh).min(h) {
                for x in x0..(x0 + dw).min(w) {
                    m.set(x, y, true);
                }
            }
        }
        if !m.is_empty() {
            return m;
        }
    }
}

fn oracle_dice(x: &BinaryMask, y: &BinaryMask) -> f64 {
    let mut inter = 0;
    let mut cx = 0;
    let mut cy = 0;
    for (a, b) in x.data().iter().zip(y.data()) {
        cx += *a as usize;
        cy += *b as usize;
        inter += (*a && *b) as usize;
    }
    2.0 * inter as f64 / (cx + cy) as f64
}

fn oracle_boundary(m: &BinaryMask) -> Vec<(f64, f64)> {
    let (w, h) = m.dims();
    let mut pts = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x, y) {
                continue;
            }
            let interior = x > 0
                && y > 0
                && x < w - 1
                && y < h - 1
                && m.get(x - 1, y)
                && m.get(x + 1, y)
                && m.get(x, y - 1)
                && m.get(x, y + 1);
            if !interior {
                pts.push((x as f64, y as f64));
            }
        }
    }
    pts
}

fn oracle_percentile(mut v: Vec<f64>, p: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.len() == 1 {
        return v[0];
    }
    let rank = p / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let frac = rank - lo as f64;
    if lo + 1 >= v.len() {
        v[v.len() - 1]
    } else {
        v[lo] * (1.0 - frac) + v[lo + 1] * frac
    }
}

fn oracle_h95(x: &BinaryMask, y: &BinaryMask) -> f64 {
    let bx = oracle_boundary(x);
    let by = oracle_boundary(y);
    let directed = |from: &[(f64, f64)], to: &[(f64, f64)]| -> Vec<f64> {
        from.iter()
            .map(|&(px, py)| {
                to.iter()
                    .map(|&(qx, qy)| ((px - qx).powi(2) + (py - qy).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    };
    oracle_percentile(directed(&bx, &by), 95.0).max(oracle_percentile(directed(&by, &bx), 95.0))
}

fn oracle_ssim(a: &Image, b: &Image) -> f64 {
    let (w, h) = a.dims();
    let np = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let mut total = 0.0;
    let mut count = 0;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for y in y0..y0 + SSIM_WINDOW {
                for x in x0..x0 + SSIM_WINDOW {
                    xs.push(a.get(x, y));
                    ys.push(b.get(x, y));
                }
            }
            let ux = xs.iter().sum::<f64>() / np;
            let uy = ys.iter().sum::<f64>() / np;
            let vx = xs.iter().map(|v| (v - ux) * (v - ux)).sum::<f64>() / (np - 1.0);
            let vy = ys.iter().map(|v| (v - uy) * (v - uy)).sum::<f64>() / (np - 1.0);
            let vxy = xs
                .iter()
                .zip(&ys)
                .map(|(x, y)| (x - ux) * (y - uy))
                .sum::<f64>()
                / (np - 1.0);
            total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * vxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn criterion_2_metric_oracles() {
    let start = Instant::now();
    let mut rng = SplitMix64::new(2024);
    let mut worst_h95: f64 = 0.0;
    let mut worst_ssim: f64 = 0.0;
    for _ in 0..50 {
        let w = 8 + (rng.next_u64() % 9) as usize;
        let h = 8 + (rng.next_u64() % 9) as usize;
        let ma = random_small_mask(w, h, &mut rng);
        let mb = random_small_mask(w, h, &mut rng);
        let (d, _) = dice(&ma, &mb).unwrap();
        assert_eq!(d, oracle_dice(&ma, &mb), "criterion 2 FAIL: dice");
        worst_h95 = worst_h95.max((hausdorff95(&ma, &mb).unwrap() - oracle_h95(&ma, &mb)).abs());

        let ia = noise_image(w, h, &mut rng);
        let ib = noise_image(w, h, &mut rng);
        let direct = ia
            .data()
            .iter()
            .zip(ib.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            / (w * h) as f64;
        assert_eq!(mse(&ia, &ib).unwrap(), direct, "criterion 2 FAIL: mse");
        worst_ssim = worst_ssim.max((ssim(&ia, &ib).unwrap() - oracle_ssim(&ia, &ib)).abs());
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(worst_h95 <= 1e-6, "criterion 2 FAIL: h95 dev {worst_h95:.2e}");
    assert!(
        worst_ssim <= 1e-6,
        "criterion 2 FAIL: ssim dev {worst_ssim:.2e}"
    );
    assert!(elapsed < 10.0, "criterion 2 FAIL: runtime {elapsed:.1}s");
    pass(
        2,
        "metric oracles",
        format!("h95 dev {worst_h95:.1e}, ssim dev {worst_ssim:.1e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_negjac_formula() {
    let zero = DisplacementField::zeros(32, 24).unwrap();
    let shift = DisplacementField::uniform(32, 24, 7.0, -3.5).unwrap();
    let mut scale_u = Vec::new();
    for y in 0..24 {
        for x in 0..32 {
            scale_u.push([0.4 * x as f64, 0.25 * y as f64]);
        }
    }
    let scaling = DisplacementField::new(32, 24, scale_u).unwrap();
    for (field, name) in [(&zero, "identity"), (&shift, "translation"), (&scaling, "scaling")] {
        let v = neg_jacobian_fraction(field);
        assert!(v <= 1e-9, "criterion 3 FAIL: {name} negJAC {v}");
    }
    // reflection u_x = -2x folds every interior pixel
    let (w, h) = (16usize, 12usize);
    let mut u = vec![[0.0f64; 2]; w * h];
    for y in 0..h {
        for x in 0..w {
            u[y * w + x][0] = -2.0 * x as f64;
        }
    }
    let fold = DisplacementField::new(w, h, u).unwrap();
    let expected = ((w - 2) * (h - 2)) as f64 / (w * h) as f64;
    let got = neg_jacobian_fraction(&fold);
    assert_eq!(got, expected, "criterion 3 FAIL: fold fraction");
    pass(
        3,
        "negJAC formula",
        format!("fold fixture fraction {got} == {expected}"),
    );
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_identity_registration() {
    let start = Instant::now();
    let phantom = generate_phantom(&PhantomParams::default()).unwrap();
    for mode in [
        PenalizationMode::Unsupervised,
        PenalizationMode::Lung,
        PenalizationMode::RibCage,
        PenalizationMode::RibPairs,
    ] {
        let cfg = RegistrationConfig {
            mode,
            ..RegistrationConfig::default()
        };
        let masks: Option<(&LabelMask, &LabelMask)> = match mode {
            PenalizationMode::Unsupervised => None,
            PenalizationMode::Lung => Some((&phantom.lungs, &phantom.lungs)),
            PenalizationMode::RibCage => Some((&phantom.rib_cage, &phantom.rib_cage)),
            PenalizationMode::RibPairs => Some((&phantom.rib_pairs, &phantom.rib_pairs)),
        };
        let result = register_multistage(
            &phantom.image,
            &phantom.image,
            masks.map(|(a, _)| a),
            masks.map(|(_, b)| b),
            &cfg,
        )
        .unwrap();
        let negjac = neg_jacobian_fraction(&result.field_native);
        let err = mse(&result.warped, &phantom.image).unwrap();
        let mean_u = result.field_native.mean_magnitude();
        assert!(negjac <= 1e-6, "criterion 4 FAIL ({mode:?}): negJAC {negjac}");
        assert!(err <= 1e-4, "criterion 4 FAIL ({mode:?}): mse {err}");
        assert!(mean_u <= 0.05, "criterion 4 FAIL ({mode:?}): mean |u| {mean_u}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 4 FAIL: runtime {elapsed:.1}s");
    pass(4, "identity registration", format!("4 modes, {elapsed:.1}s"));
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_known_deformation_recovery() {
    let start = Instant::now();
    let mut medians = Vec::new();
    for seed in 0..10u64 {
        let spec = if seed % 2 == 0 {
            DeformationSpec::Translation { dx: 3.0, dy: 0.0 }
        } else {
            DeformationSpec::SmoothRandomField {
                amplitude: 3.0,
                cell_px: 48.0,
                seed: 400 + seed,
            }
        };
        let (moving, fixed) = suite::phantom_pair(256, 500 + seed, &spec);
        let result = register_multistage(
            &moving.image,
            &fixed.image,
            Some(&moving.rib_pairs),
            Some(&fixed.rib_pairs),
            &suite::recovery_config(),
        )
        .unwrap();
        let roi = rib_hull_roi(&fixed.rib_cage.binary_for(1), 20.0).unwrap();
        let mut errors = Vec::new();
        for y in 0..256 {
            for x in 0..256 {
                if roi.get(x, y) {
                    let u = result.field_native.get(x, y);
                    let g = fixed.gt_field.get(x, y);
                    errors.push(((u[0] - g[0]).powi(2) + (u[1] - g[1]).powi(2)).sqrt());
                }
            }
        }
        errors.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = errors[errors.len() / 2];
        assert!(
            med <= 1.0,
            "criterion 5 FAIL: seed {seed} median endpoint error {med:.3}"
        );
        medians.push(med);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let worst = medians.iter().copied().fold(0.0f64, f64::max);
    pass(
        5,
        "known-deformation recovery",
        format!("worst median EPE {worst:.3}px over 10 seeds, {elapsed:.0}s"),
    );
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_direction_of_effect() {
    let start = Instant::now();
    let results = suite::results();
    let elapsed = start.elapsed().as_secs_f64();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let dcr = |m: suite::Mode| mean(&results.mode(m).iter().map(|p| p.dcr_stage2).collect::<Vec<_>>());
    let dcr1 = |m: suite::Mode| mean(&results.mode(m).iter().map(|p| p.dcr_stage1).collect::<Vec<_>>());
    let dcl = |m: suite::Mode| mean(&results.mode(m).iter().map(|p| p.dcl_stage2).collect::<Vec<_>>());
    let nj = |m: suite::Mode| mean(&results.mode(m).iter().map(|p| p.negjac_stage2).collect::<Vec<_>>());
    let nj1 = |m: suite::Mode| mean(&results.mode(m).iter().map(|p| p.negjac_stage1).collect::<Vec<_>>());

    use suite::Mode::*;
    // (a) rib detail ordering on DCR
    assert!(
        dcr(RibPairs) > dcr(RibCage),
        "criterion 6a FAIL: DCR ribpairs {} <= ribcage {}",
        dcr(RibPairs),
        dcr(RibCage)
    );
    assert!(
        dcr(RibCage) > dcr(Lung),
        "criterion 6a FAIL: DCR ribcage {} <= lung {}",
        dcr(RibCage),
        dcr(Lung)
    );
    // (b) lung supervision wins on DCL
    assert!(
        dcl(Lung) > dcl(RibPairs),
        "criterion 6b FAIL: DCL lung {} <= ribpairs {}",
        dcl(Lung),
        dcl(RibPairs)
    );
    // (c) rib-pairs folding never worse than lung or unsupervised
    assert!(
        nj(RibPairs) <= nj(Lung) && nj(RibPairs) <= nj(Unsupervised),
        "criterion 6c FAIL: negJAC ribpairs {} lung {} unsup {}",
        nj(RibPairs),
        nj(Lung),
        nj(Unsupervised)
    );
    // (d) the refinement stage helps rib overlap and never increases folding
    for m in [RibPairs, RibCage] {
        assert!(
            dcr(m) >= dcr1(m),
            "criterion 6d FAIL: DCR stage2 {} < stage1 {} for {m:?}",
            dcr(m),
            dcr1(m)
        );
    }
    for m in [Unsupervised, Lung, RibCage, RibPairs] {
        assert!(
            nj(m) <= nj1(m) + 1e-12,
            "criterion 6d FAIL: negJAC stage2 {} > stage1 {} for {m:?}",
            nj(m),
            nj1(m)
        );
    }
    assert!(
        elapsed < 900.0,
        "criterion 6 FAIL: runtime {elapsed:.0}s"
    );
    pass(
        6,
        "direction of effect",
        format!(
            "DCR r/rc/l {:.3}/{:.3}/{:.3}; DCL l/r {:.3}/{:.3}; negJAC r/l/u {:.5}/{:.5}/{:.5}; {elapsed:.0}s",
            dcr(RibPairs),
            dcr(RibCage),
            dcr(Lung),
            dcl(Lung),
            dcl(RibPairs),
            nj(RibPairs),
            nj(Lung),
            nj(Unsupervised)
        ),
    );
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_statistics_exactness_and_driver() {
    // exact Wilcoxon vs full enumeration for n <= 12
    let mut rng = SplitMix64::new(7007);
    for n in 5..=12usize {
        for _ in 0..6 {
            let a: Vec<f64> = (0..n).map(|_| (rng.next_u64() % 32) as f64 / 4.0).collect();
            let b: Vec<f64> = (0..n).map(|_| (rng.next_u64() % 32) as f64 / 4.0).collect();
            let diffs: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            if diffs.iter().all(|d| *d == 0.0) {
                continue;
            }
            let got = wilcoxon_signed_rank(&a, &b).unwrap();
            let (w_exp, p_exp) = enumerate_wilcoxon(&diffs);
            assert!(
                (got.w_statistic - w_exp).abs() < 1e-12 && (got.p_value - p_exp).abs() < 1e-12,
                "criterion 7 FAIL: n={n} W {} vs {w_exp}, p {} vs {p_exp}",
                got.w_statistic,
                got.p_value
            );
        }
    }

    // Friedman hand-rank fixture: rank sums 16/13/7 give chi2 = 7 exactly
    let rows = vec![
        vec![0.50, 0.60, 0.70],
        vec![0.40, 0.65, 0.55],
        vec![0.70, 0.60, 0.80],
        vec![0.20, 0.30, 0.40],
        vec![0.90, 0.85, 0.95],
        vec![0.45, 0.55, 0.65],
    ];
    let m = ScoreMatrix::new(
        "dcr".into(),
        Orientation::HigherIsBetter,
        vec!["a".into(), "b".into(), "c".into()],
        rows,
    )
    .unwrap();
    let f = friedman_test(&m).unwrap();
    assert!(
        (f.statistic - 7.0).abs() < 1e-9,
        "criterion 7 FAIL: Friedman statistic {}",
        f.statistic
    );

    // driver on the criterion-6 suite: rib-pairs vs lung DCR is significant
    // at the Bonferroni-corrected 0.05 level
    let comparison = suite::dcr_comparison();
    let (i, j) = (suite::Mode::RibPairs as usize, suite::Mode::Lung as usize);
    let pairwise = comparison
        .pairwise
        .iter()
        .find(|p| {
            (p.model_a == i && p.model_b == j) || (p.model_a == j && p.model_b == i)
        })
        .expect("ribpairs-vs-lung pair present");
    assert!(
        pairwise.significant && pairwise.p_adjusted < 0.05,
        "criterion 7 FAIL: ribpairs-vs-lung DCR p_adj {}",
        pairwise.p_adjusted
    );
    pass(
        7,
        "statistics exactness + driver",
        format!(
            "Friedman 7.0, ribpairs-vs-lung DCR p_adj {:.2e}",
            pairwise.p_adjusted
        ),
    );
}

fn enumerate_wilcoxon(diffs: &[f64]) -> (f64, f64) {
    let nonzero: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    let n = nonzero.len();
    let abs: Vec<f64> = nonzero.iter().map(|d| d.abs()).collect();
    let mut ranks = vec![0.0; n];
    for i in 0..n {
        let less = abs.iter().filter(|v| **v < abs[i]).count();
        let equal = abs.iter().filter(|v| **v == abs[i]).count();
        ranks[i] = less as f64 + (equal as f64 + 1.0) / 2.0;
    }
    let t_plus_obs: f64 = nonzero
        .iter()
        .zip(&ranks)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total: f64 = ranks.iter().sum();
    let (mut le, mut ge) = (0usize, 0usize);
    for signs in 0u32..(1 << n) {
        let mut t = 0.0;
        for (i, r) in ranks.iter().enumerate() {
            if signs & (1 << i) != 0 {
                t += r;
            }
        }
        if t <= t_plus_obs + 1e-12 {
            le += 1;
        }
        if t >= t_plus_obs - 1e-12 {
            ge += 1;
        }
    }
    let denom = (1u64 << n) as f64;
    (
        t_plus_obs.min(total - t_plus_obs),
        (2.0 * le.min(ge) as f64 / denom).min(1.0),
    )
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_qc_failure_taxonomy() {
    use ribreg_core::qc::{qc_mask, QcThresholds};
    const W: usize = 512;
    let blob = |labels: &mut Vec<u8>, label: u8, x0: usize, y0: usize, w: usize, h: usize| {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                labels[y * W + x] = label;
            }
        }
    };
    let build = |pair2: &dyn Fn(&mut Vec<u8>)| -> LabelMask {
        let mut labels = vec![0u8; W * W];
        pair2(&mut labels);
        for (i, label) in (3u8..=10).enumerate() {
            blob(&mut labels, label, 60, 120 + i * 40, 40, 10);
            blob(&mut labels, label, 300, 120 + i * 40, 40, 10);
        }
        LabelMask::new(W, W, labels, LabelSemantics::RibPairs).unwrap()
    };

    let fixtures: Vec<(&str, LabelMask, [bool; 4])> = vec![
        (
            "too many components",
            build(&|l| {
                blob(l, 2, 60, 40, 40, 10);
                blob(l, 2, 200, 40, 40, 10);
                blob(l, 2, 340, 40, 40, 10);
            }),
            [false, true, true, true],
        ),
        (
            "single rib",
            build(&|l| blob(l, 2, 60, 40, 40, 10)),
            [true, false, true, true],
        ),
        (
            "size mismatch",
            build(&|l| {
                blob(l, 2, 60, 40, 56, 10);
                blob(l, 2, 300, 40, 40, 10);
            }),
            [true, true, false, true],
        ),
        (
            "height mismatch",
            build(&|l| {
                blob(l, 2, 60, 40, 40, 10);
                blob(l, 2, 300, 100, 40, 10);
            }),
            [true, true, true, false],
        ),
    ];

    for (name, mask, expected) in &fixtures {
        let report = qc_mask(mask, &QcThresholds::default()).unwrap();
        let pair = &report.pairs[0];
        let got = [pair.q1, pair.q2, pair.q3, pair.q4];
        assert_eq!(
            got, *expected,
            "criterion 8 FAIL: fixture '{name}' verdicts {got:?}"
        );
        assert_eq!(report.first_failing_pair, Some(2));
    }
    pass(8, "QC failure taxonomy", "4 fixtures, defaults 300/flag/30/50".into());
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_difference_image_robustness() {
    let phantom = generate_phantom(&PhantomParams::default()).unwrap();
    let roi = rib_hull_roi(&phantom.rib_cage.binary_for(1), 20.0).unwrap();
    let center = (105.0, 118.0);
    let radius = 12.0;
    let deformed = deform_phantom(
        &phantom,
        &DeformationSpec::OpacityBlob {
            center,
            radius,
            intensity: 0.35,
        },
    )
    .unwrap();
    let fixed = &deformed.image;
    let warped = &phantom.image;

    let roi_values = |img: &Image| -> Vec<f64> {
        img.data()
            .iter()
            .zip(roi.data())
            .filter_map(|(&v, &m)| m.then_some(v))
            .collect()
    };
    let render = |w: &Image| {
        let gmm = fit_gmm_1d(&roi_values(w), 10, 0).unwrap();
        let matched = histogram_transfer(w, fixed, &roi, &gmm).unwrap();
        difference_image(fixed, &matched, &roi).unwrap()
    };

    // monotone affine remap of the warped image (gain 0.75)
    let base = render(warped);
    let remapped = Image::new(
        warped.width(),
        warped.height(),
        warped.data().iter().map(|v| 0.75 * v).collect(),
    )
    .unwrap();
    let re = render(&remapped);
    let mut worst = 0i32;
    for (a, b) in base.index.iter().zip(&re.index) {
        worst = worst.max((*a as i32 - *b as i32).abs());
    }
    assert!(
        worst <= 1,
        "criterion 9 FAIL: remap changed render by {worst} levels"
    );

    // the inserted blob reads as a localized extreme region
    let n = phantom.image.width();
    let mut extreme = 0usize;
    let mut total = 0usize;
    for y in 0..n {
        for x in 0..n {
            let d = ((x as f64 - center.0).powi(2) + (y as f64 - center.1).powi(2)).sqrt();
            if d <= radius - 1.0 {
                total += 1;
                if base.index[y * n + x] >= 204 {
                    extreme += 1;
                }
            }
        }
    }
    let frac = extreme as f64 / total as f64;
    assert!(frac >= 0.8, "criterion 9 FAIL: blob coverage {frac:.2}");
    pass(
        9,
        "difference-image robustness",
        format!("remap dev <= {worst} level, blob coverage {frac:.2}"),
    );
}

// --------------------------------------------------------------- criterion 10

#[test]
fn criterion_10_determinism_and_round_trip() {
    use ribreg_cli::args::JobConfig;
    use ribreg_cli::formats::{field, report};
    use std::process::Command;

    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_ribreg");
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        for args in [
            vec![
                "phantom".to_string(),
                "--size".into(),
                "192".into(),
                "--seed".into(),
                "5".into(),
                "--deform".into(),
                "translate:2,1".into(),
                "--out".into(),
                out_dir.display().to_string(),
            ],
            vec![
                "register".into(),
                "--moving".into(),
                out_dir.join("phantom_moving.png").display().to_string(),
                "--fixed".into(),
                out_dir.join("phantom_fixed.png").display().to_string(),
                "--mode".into(),
                "unsup".into(),
                "--stage1-size".into(),
                "32".into(),
                "--stage2-size".into(),
                "64".into(),
                "--iters1".into(),
                "40".into(),
                "--iters2".into(),
                "30".into(),
                "--lr".into(),
                "0.1".into(),
                "--seed".into(),
                "5".into(),
                "--out".into(),
                out_dir.display().to_string(),
            ],
        ] {
            let status = Command::new(bin)
                .args(&args)
                .status()
                .expect("binary runs");
            assert!(status.success(), "criterion 10 FAIL: {args:?}");
        }
        out_dir
    };

    let a = run("a");
    let b = run("b");
    for name in [
        "phantom_moving.png",
        "phantom_fixed.png",
        "phantom_gt_field.dfld",
        "reg_field.dfld",
        "reg_warped.png",
    ] {
        let ba = std::fs::read(a.join(name)).unwrap();
        let bb = std::fs::read(b.join(name)).unwrap();
        assert_eq!(ba, bb, "criterion 10 FAIL: {name} differs between runs");
    }

    // DFLD round-trip is byte-identical
    let f1 = field::read_field(&a.join("reg_field.dfld")).unwrap();
    let rewritten = a.join("rewritten.dfld");
    field::write_field(&rewritten, &f1).unwrap();
    assert_eq!(
        std::fs::read(a.join("reg_field.dfld")).unwrap(),
        std::fs::read(&rewritten).unwrap(),
        "criterion 10 FAIL: DFLD re-write differs"
    );

    // JSON records re-parse to equal values
    let rec: report::RegisterRecord = report::read_json(&a.join("reg_register.json")).unwrap();
    let copy = a.join("reg_register_copy.json");
    report::write_json(&copy, &rec).unwrap();
    let rec2: report::RegisterRecord = report::read_json(&copy).unwrap();
    assert_eq!(
        serde_json::to_string(&rec).unwrap(),
        serde_json::to_string(&rec2).unwrap(),
        "criterion 10 FAIL: register record round-trip"
    );

    // a parsed job round-trips losslessly through its textual form
    let job = JobConfig::Phantom(ribreg_cli::args::PhantomArgs {
        size: 192,
        seed: 5,
        pairs: 9,
        noise: 0.01,
        deform: Some("translate:2,1".into()),
        out: None,
        prefix: "phantom".into(),
    });
    let text = serde_json::to_string(&job).unwrap();
    let parsed: JobConfig = serde_json::from_str(&text).unwrap();
    assert_eq!(job, parsed, "criterion 10 FAIL: job config round-trip");

    pass(10, "determinism & round-trip", "byte-identical outputs".into());
}
