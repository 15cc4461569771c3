use influence_ad_core::eval::{
    aggregate_runs, f1_score, flag_count, paired_t_statistic, random_ranking_f1,
    threshold_by_ratio, ScoreReport,
};
use influence_ad_core::numeric::Rng;
use influence_ad_oracles::two_pass_mean_std;
use proptest::prelude::*;

/// Smallest k with k >= rho * n, found by counting.
fn ceil_by_counting(rho: f64, n: usize) -> usize {
    let target = rho * n as f64;
    let mut k = 1;
    while (k as f64) < target - 1e-9 && k < n {
        k += 1;
    }
    k
}

fn permuted_scores(seed: u64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|i| i as f64).collect();
    Rng::new(seed).shuffle(&mut v);
    v
}

proptest! {
    #[test]
    fn flags_exactly_ceil_rho_n(
        scores in prop::collection::vec(-1e6f64..1e6, 1..300),
        rho in 0.001f64..0.999,
    ) {
        let n = scores.len();
        let t = threshold_by_ratio(&scores, rho).unwrap();
        let k = ceil_by_counting(rho, n);
        prop_assert_eq!(t.n_flagged, k);
        prop_assert_eq!(flag_count(rho, n), k);
        prop_assert_eq!(t.flagged.iter().filter(|&&f| f).count(), k);
        let min_flagged = scores.iter().zip(&t.flagged).filter(|(_, &f)| f).map(|(s, _)| *s).fold(f64::INFINITY, f64::min);
        let max_other = scores.iter().zip(&t.flagged).filter(|(_, &f)| !f).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_flagged >= max_other);
        prop_assert_eq!(t.threshold, min_flagged);
    }

    #[test]
    fn f1_invariant_under_monotone_maps(seed in any::<u64>(), n in 2usize..200, rho in 0.01f64..0.9) {
        let scores = permuted_scores(seed, n);
        let mut rng = Rng::new(seed ^ 1);
        let labels: Vec<bool> = (0..n).map(|_| rng.uniform() < rho).collect();
        let base = ScoreReport::evaluate(scores.clone(), labels.clone(), rho, 0).unwrap();
        let maps: [fn(f64) -> f64; 3] = [
            |s| s * s * s + 2.0 * s,
            |s| (s + 1.0).ln(),
            |s| 5.0 * s - 3.0,
        ];
        for f in maps {
            let mapped: Vec<f64> = scores.iter().map(|&s| f(s)).collect();
            let r = ScoreReport::evaluate(mapped, labels.clone(), rho, 0).unwrap();
            prop_assert_eq!(r.f1(), base.f1());
            prop_assert_eq!(&r.predicted, &base.predicted);
        }
    }

    #[test]
    fn aggregate_matches_two_pass(values in prop::collection::vec(0.0f64..1.0, 1..100)) {
        let a = aggregate_runs(&values).unwrap();
        let (mean, std) = two_pass_mean_std(&values);
        prop_assert!((a.mean - mean).abs() <= 1e-12);
        prop_assert!((a.std - std).abs() <= 1e-12);
        prop_assert_eq!(a.single_run, values.len() == 1);
    }

    #[test]
    fn f1_bounded(pred in prop::collection::vec(any::<bool>(), 1..100), seed in any::<u64>()) {
        let mut rng = Rng::new(seed);
        let labels: Vec<bool> = pred.iter().map(|_| rng.uniform() < 0.3).collect();
        let c = f1_score(&pred, &labels).unwrap();
        prop_assert!((0.0..=1.0).contains(&c.f1));
        prop_assert_eq!(c.true_positives + c.false_positives + c.false_negatives + c.true_negatives, pred.len());
    }
}

#[test]
fn random_ranking_expected_f1_is_rho() {
    // n anomalies out of N, flag exactly n: E[TP] = n * n / N, so precision = recall = rho
    let (n_total, n_anom) = (400, 100);
    let rho = n_anom as f64 / n_total as f64;
    let labels: Vec<bool> = (0..n_total).map(|i| i < n_anom).collect();
    let runs = 2000;
    let mut total = 0.0;
    for seed in 0..runs {
        let scores = permuted_scores(seed, n_total);
        total += ScoreReport::evaluate(scores, labels.clone(), rho, seed).unwrap().f1();
    }
    let mean = total / runs as f64;
    assert!((mean - random_ranking_f1(rho)).abs() < 0.01, "{mean}");
}

#[test]
fn paired_t_matches_hand_value() {
    // diffs 0.1, 0.3, -0.1, 0.3: mean 0.15, sd 0.191485, t = 1.5667
    let a = [0.6, 0.8, 0.4, 0.9];
    let b = [0.5, 0.5, 0.5, 0.6];
    let (t, df) = paired_t_statistic(&a, &b).unwrap();
    assert_eq!(df, 3.0);
    assert!((t - 1.566_698_903_601_281).abs() < 1e-9, "{t}");
}
