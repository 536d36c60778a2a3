mod support;

use ocscreen_core::metrics::{
    self, average_precision, log_fit, mean_average_precision, pr_curve, ConfusionTally, EvalSummary,
};
use ocscreen_core::network::ClassLabel;
use ocscreen_core::ResolutionTier;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> (Vec<ClassLabel>, Vec<[f32; 3]>) {
    let truths = (0..n).map(|_| ClassLabel::ALL[rng.random_range(0..3)]).collect();
    let dists = (0..n)
        .map(|_| {
            let raw: [f32; 3] = [rng.random(), rng.random(), rng.random()];
            let s: f32 = raw.iter().sum();
            raw.map(|v| v / s)
        })
        .collect();
    (truths, dists)
}

fn argmax(d: &[f32; 3]) -> usize {
    let mut best = 0;
    for i in 1..3 {
        if d[i] > d[best] {
            best = i;
        }
    }
    best
}

/// 100 randomized 60-sample sets: counts must agree exactly, AP within 1e-9.
#[test]
fn metrics_match_brute_force_oracles_on_100_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for set in 0..100 {
        let (truths, dists) = random_set(&mut rng, 60);
        let summary = EvalSummary::from_predictions(&truths, &dists);

        let mut aps = vec![];
        for c in ClassLabel::ALL {
            let ci = c.index();
            let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
            for (t, d) in truths.iter().zip(&dists) {
                let pred = argmax(d);
                match (t.index() == ci, pred == ci) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fnn += 1,
                    _ => {}
                }
            }
            let tally = &summary.confusion;
            assert_eq!(tally.true_positives(c), tp, "set {set}");
            assert_eq!(tally.false_positives(c), fp, "set {set}");
            assert_eq!(tally.false_negatives(c), fnn, "set {set}");
            if tp + fp > 0 {
                assert_eq!(summary.precision[ci].value, tp as f64 / (tp + fp) as f64);
            }
            if tp + fnn > 0 {
                assert_eq!(summary.recall[ci].value, tp as f64 / (tp + fnn) as f64);
            }

            let scores: Vec<f64> = dists.iter().map(|d| d[ci] as f64).collect();
            let flags: Vec<bool> = truths.iter().map(|t| t.index() == ci).collect();
            if flags.iter().any(|&f| f) {
                let want = support::average_precision(&scores, &flags);
                let got = summary.average_precision[ci].unwrap();
                assert!((got - want).abs() <= 1e-9, "set {set} class {c}: {got} vs {want}");
                aps.push(want);

                // every curve point is the precision/recall at its own threshold
                let curve = pr_curve(&scores, &flags).unwrap();
                let mut sorted = scores.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                for (p, &t) in curve.points.iter().zip(&sorted) {
                    let (pp, rr) = support::precision_recall_at(&scores, &flags, t);
                    assert!((p.precision - pp).abs() <= 1e-12 && (p.recall - rr).abs() <= 1e-12);
                }
            }
        }
        let want_map = aps.iter().sum::<f64>() / aps.len() as f64;
        assert!((summary.mean_average_precision.unwrap() - want_map).abs() <= 1e-9);
        let correct = truths
            .iter()
            .zip(&dists)
            .filter(|(t, d)| t.index() == argmax(d))
            .count();
        assert_eq!(summary.accuracy, correct as f64 / 60.0);
    }
}

#[test]
fn random_scorer_map_approaches_prevalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (truths, dists) = random_set(&mut rng, 1000);
    let summary = EvalSummary::from_predictions(&truths, &dists);
    let map = summary.mean_average_precision.unwrap();
    assert!((map - 1.0 / 3.0).abs() <= 0.05, "mAP {map}");
}

#[test]
fn map_is_permutation_symmetric() {
    let aps = [0.2, 0.9, 0.55];
    let base = mean_average_precision(&aps);
    for p in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
        assert!((mean_average_precision(&p.map(|i| aps[i])) - base).abs() <= 1e-15);
    }
}

#[test]
fn precision_recall_match_counts_on_random_tallies() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let mut t = ConfusionTally::new();
        for row in &mut t.counts {
            for v in row.iter_mut() {
                *v = rng.random_range(0..20);
            }
        }
        for c in ClassLabel::ALL {
            let i = c.index();
            let tp = t.counts[i][i];
            let col: u64 = (0..3).map(|r| t.counts[r][i]).sum();
            let row: u64 = t.counts[i].iter().sum();
            let p = metrics::precision(&t, c);
            let r = metrics::recall(&t, c);
            assert_eq!(p.degenerate, col == 0);
            assert_eq!(r.degenerate, row == 0);
            if col > 0 {
                assert_eq!(p.value, tp as f64 / col as f64);
            }
            if row > 0 {
                assert_eq!(r.value, tp as f64 / row as f64);
            }
        }
    }
}

fn tier_pixels() -> Vec<f64> {
    ResolutionTier::ALL.iter().map(|t| t.pixel_count() as f64).collect()
}

#[test]
fn log_fit_recovers_planted_curve_over_tiers() {
    let (a, b) = (0.0437, -0.21);
    let pts: Vec<(f64, f64)> = tier_pixels().into_iter().map(|x| (x, a * x.ln() + b)).collect();
    let fit = log_fit(&pts).unwrap();
    assert!((fit.slope - a).abs() <= 1e-9);
    assert!((fit.intercept - b).abs() <= 1e-9);
    assert!((fit.r2 - 1.0).abs() <= 1e-12);
}

#[test]
fn log_fit_with_small_noise_keeps_high_r2() {
    let (a, b) = (0.0437, -0.21);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let pts: Vec<(f64, f64)> = tier_pixels()
            .into_iter()
            .map(|x| (x, a * x.ln() + b + noise.sample(&mut rng)))
            .collect();
        let fit = log_fit(&pts).unwrap();
        let (oa, ob, or2) = support::log_fit(&pts);
        assert!((fit.slope - oa).abs() <= 1e-9 && (fit.intercept - ob).abs() <= 1e-9);
        assert!((fit.r2 - or2).abs() <= 1e-9);
        assert!(fit.r2 >= 0.95, "r2 {}", fit.r2);
    }
}

#[test]
fn log_fit_degenerate_inputs() {
    assert!(log_fit(&[(36864.0, 0.5)]).is_err());
    assert!(log_fit(&[(36864.0, 0.5), (36864.0, 0.7)]).is_err());
    let two = log_fit(&[(36864.0, 0.5), (230400.0, 0.9)]).unwrap();
    assert!((two.r2 - 1.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ap_invariant_under_monotone_transform(
        seed in any::<u64>(),
        scale in 0.1f64..10.0,
        shift in -5f64..5.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let mut truths: Vec<bool> = (0..40).map(|_| rng.random_bool(0.4)).collect();
        truths[0] = true;
        let base = average_precision(&pr_curve(&scores, &truths).unwrap());
        let moved: Vec<f64> = scores.iter().map(|s| (s * scale + shift).exp()).collect();
        let again = average_precision(&pr_curve(&moved, &truths).unwrap());
        prop_assert!((base - again).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&base));
    }

    #[test]
    fn curve_recall_is_monotone_and_bounded(seed in any::<u64>(), n in 1usize..80) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let mut truths: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
        truths[n - 1] = true;
        let c = pr_curve(&scores, &truths).unwrap();
        prop_assert_eq!(c.points.len(), n);
        for w in c.points.windows(2) {
            prop_assert!(w[1].recall >= w[0].recall);
        }
        for p in &c.points {
            prop_assert!((0.0..=1.0).contains(&p.recall) && (0.0..=1.0).contains(&p.precision));
        }
        prop_assert_eq!(c.points.last().unwrap().recall, 1.0);
    }
}
