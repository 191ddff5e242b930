mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, DiscreteCDF};

use feet::deltas::paired_delta_test;
use feet::metrics::{
    auprc, auroc, bootstrap_ci, confusion_metrics, quantile_sorted, resample_indices, Averaging,
    BootstrapConfig, MetricKind, MetricSpec,
};
use feet::probes::Predictions;

use common::{brute_auroc, literal_average_precision};

fn scored_labels(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    prop::collection::vec((0i32..12, any::<bool>()), 2..max_n)
        .prop_filter("both classes", |v| v.iter().any(|x| x.1) && v.iter().any(|x| !x.1))
        .prop_map(|v| v.into_iter().map(|(s, l)| (f64::from(s) / 4.0, l)).unzip())
}

fn binary_preds(scores: &[f64], labels: &[bool]) -> Predictions {
    Predictions::from_scores(
        (0..scores.len()).map(|i| format!("i{i}")).collect(),
        scores.iter().map(|&s| vec![1.0 - s, s]).collect(),
        labels.iter().map(|&l| u32::from(l)).collect(),
    )
}

/// Hard predictions where example `i` is right when `correct[i]` holds.
fn hard_preds(correct: &[bool], truth: &[u32]) -> Predictions {
    let scores = correct
        .iter()
        .zip(truth)
        .map(|(&ok, &y)| {
            let p = if ok { y } else { 1 - y };
            if p == 1 { vec![0.2, 0.8] } else { vec![0.8, 0.2] }
        })
        .collect();
    Predictions::from_scores((0..truth.len()).map(|i| format!("i{i}")).collect(), scores, truth.to_vec())
}

proptest! {
    #[test]
    fn auroc_matches_pair_counting((scores, labels) in scored_labels(80)) {
        let got = auroc(&scores, &labels).unwrap();
        prop_assert!((got - brute_auroc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auprc_matches_literal_scan((scores, labels) in scored_labels(80)) {
        let got = auprc(&scores, &labels).unwrap();
        prop_assert!((got - literal_average_precision(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auroc_complement_symmetry((scores, labels) in scored_labels(80)) {
        let a = auroc(&scores, &labels).unwrap();
        let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
        let flipped: Vec<bool> = labels.iter().map(|l| !l).collect();
        prop_assert!((auroc(&neg, &labels).unwrap() - (1.0 - a)).abs() < 1e-12);
        prop_assert!((auroc(&scores, &flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn rank_metrics_ignore_monotone_transforms((scores, labels) in scored_labels(80)) {
        let t: Vec<f64> = scores.iter().map(|s| (s * 4.0).powi(3) + 5.0 * s - 7.0).collect();
        prop_assert_eq!(auroc(&scores, &labels).unwrap(), auroc(&t, &labels).unwrap());
        prop_assert_eq!(auprc(&scores, &labels).unwrap(), auprc(&t, &labels).unwrap());
    }

    #[test]
    fn auroc_ignores_order((scores, labels) in scored_labels(60), seed in any::<u64>()) {
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        prop_assert!((auroc(&s, &l).unwrap() - auroc(&scores, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auprc_ignores_order_when_scores_distinct(n in 2usize..60, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..n).map(|i| i as f64 + rng.random::<f64>() * 0.5).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        let s: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        prop_assert!((auprc(&s, &l).unwrap() - auprc(&scores, &labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn accuracy_is_micro_recall(
        rows in prop::collection::vec((0u32..4, 0u32..4), 1..100),
    ) {
        let scores = rows
            .iter()
            .map(|&(p, _)| (0..4).map(|k| if k == p { 0.7 } else { 0.1 }).collect())
            .collect();
        let preds = Predictions::from_scores(
            (0..rows.len()).map(|i| i.to_string()).collect(),
            scores,
            rows.iter().map(|r| r.1).collect(),
        );
        let (m, _) = confusion_metrics(&preds, Averaging::Micro).unwrap();
        let direct = rows.iter().filter(|r| r.0 == r.1).count() as f64 / rows.len() as f64;
        prop_assert!((m.accuracy - direct).abs() < 1e-15);
        prop_assert!((m.recall - m.accuracy).abs() < 1e-15);
        prop_assert!((m.precision - m.accuracy).abs() < 1e-15);
    }
}

#[test]
fn random_scores_give_chance_auroc() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 2000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
    let a = auroc(&scores, &labels).unwrap();
    assert!((a - 0.5).abs() <= 0.04, "auroc {a}");
}

#[test]
fn accuracy_interval_matches_binomial_quantiles() {
    // Resampled accuracy is Binomial(n, p_hat) / n, so its percentiles are
    // known exactly.
    let n = 400u64;
    let correct: Vec<bool> = (0..n).map(|i| i % 5 != 0).collect();
    let truth: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
    let preds = hard_preds(&correct, &truth);
    let spec = MetricSpec::new(MetricKind::Accuracy, Averaging::Macro, 1);
    let est = bootstrap_ci(&preds, &spec, &BootstrapConfig { replicates: 1000, seed: 5 }).unwrap();
    let bin = Binomial::new(0.8, n).unwrap();
    let lo = bin.inverse_cdf(0.025) as f64 / n as f64;
    let hi = bin.inverse_cdf(0.975) as f64 / n as f64;
    assert!((est.ci_low.unwrap() - lo).abs() <= 0.01, "{est:?} vs {lo}");
    assert!((est.ci_high.unwrap() - hi).abs() <= 0.01, "{est:?} vs {hi}");

    // and agrees with a long independent resampling run
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut draws: Vec<f64> = (0..100_000)
        .map(|_| (0..n).filter(|_| correct[rng.random_range(0..n as usize)]).count() as f64 / n as f64)
        .collect();
    draws.sort_by(f64::total_cmp);
    assert!((est.ci_low.unwrap() - quantile_sorted(&draws, 0.025)).abs() <= 0.01);
    assert!((est.ci_high.unwrap() - quantile_sorted(&draws, 0.975)).abs() <= 0.01);
}

#[test]
fn interval_narrows_with_more_data() {
    let spec = MetricSpec::new(MetricKind::Auroc, Averaging::Macro, 1);
    let mut narrower = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut width = |n: usize| {
            let labels: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
            let scores: Vec<f64> = labels
                .iter()
                .map(|&l| (rng.random::<f64>() + if l { 0.3 } else { 0.0 }) / 1.3)
                .collect();
            let est = bootstrap_ci(
                &binary_preds(&scores, &labels),
                &spec,
                &BootstrapConfig { replicates: 300, seed },
            )
            .unwrap();
            est.half_width.unwrap()
        };
        let small = width(100);
        let large = width(1600);
        if large < small {
            narrower += 1;
        }
    }
    assert!(narrower >= 19, "{narrower}/20");
}

#[test]
fn pairing_tightens_delta_intervals() {
    let spec = MetricSpec::new(MetricKind::Accuracy, Averaging::Macro, 1);
    let n = 300;
    let mut tighter = 0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let truth: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let frozen_ok: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let cell_ok: Vec<bool> = frozen_ok.iter().map(|&ok| ok || rng.random_bool(0.15)).collect();
        let frozen = hard_preds(&frozen_ok, &truth);
        let cell = hard_preds(&cell_ok, &truth);
        let cfg = BootstrapConfig { replicates: 500, seed };
        let paired = paired_delta_test(&cell, &frozen, &spec, &cfg).unwrap();
        let paired_width = paired.ci_high.unwrap() - paired.ci_low.unwrap();

        let mut unpaired: Vec<f64> = (0..cfg.replicates)
            .map(|b| {
                let a = spec.evaluate_on(&cell, &resample_indices(seed, b, n)).unwrap();
                let f = spec.evaluate_on(&frozen, &resample_indices(seed ^ 0xABCD, b, n)).unwrap();
                100.0 * (a - f)
            })
            .collect();
        unpaired.sort_by(f64::total_cmp);
        let unpaired_width = quantile_sorted(&unpaired, 0.975) - quantile_sorted(&unpaired, 0.025);
        if paired_width < unpaired_width {
            tighter += 1;
        }
    }
    assert!(tighter >= 18, "{tighter}/20");
}

#[test]
fn decisive_discordance_is_significant() {
    let spec = MetricSpec::new(MetricKind::Accuracy, Averaging::Macro, 1);
    let n = 400;
    let mut checked = 0;
    for seed in 0..30u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let frozen_ok: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let lift = 0.05 + 0.01 * seed as f64;
        let cell_ok: Vec<bool> = frozen_ok
            .iter()
            .map(|&ok| if ok { !rng.random_bool(0.03) } else { rng.random_bool(lift) })
            .collect();
        let b = cell_ok.iter().zip(&frozen_ok).filter(|(c, f)| **c && !**f).count() as u64;
        let c = cell_ok.iter().zip(&frozen_ok).filter(|(c, f)| !**c && **f).count() as u64;
        if b + c == 0 {
            continue;
        }
        let exact = (2.0 * Binomial::new(0.5, b + c).unwrap().cdf(b.min(c))).min(1.0);
        if exact >= 1e-6 {
            continue;
        }
        checked += 1;
        let test = paired_delta_test(
            &hard_preds(&cell_ok, &truth),
            &hard_preds(&frozen_ok, &truth),
            &spec,
            &BootstrapConfig { replicates: 1000, seed },
        )
        .unwrap();
        assert!(test.significant, "seed {seed}: exact p {exact}, bootstrap {test:?}");
    }
    assert!(checked >= 10, "only {checked} decisive cases");
}

#[test]
fn self_comparison_is_never_significant() {
    let spec = MetricSpec::new(MetricKind::Auroc, Averaging::Macro, 1);
    let scores: Vec<f64> = (0..200).map(|i| ((i * 37) % 101) as f64 / 101.0).collect();
    let labels: Vec<bool> = (0..200).map(|i| (i * 13) % 7 < 3).collect();
    let p = binary_preds(&scores, &labels);
    let t = paired_delta_test(&p, &p, &spec, &BootstrapConfig::default()).unwrap();
    assert_eq!(t.delta, Some(0.0));
    assert_eq!(t.p_value, Some(1.0));
    assert!(!t.significant);
}
