use std::sync::Arc;

use rand::Rng;

use pudroid::classifier::Learner;
use pudroid::eval::{
    generate_synthetic, protocol_rq1, protocol_rq2, protocol_rq3, protocol_rq4, synthetic_space, Corpus,
    ExperimentConfig, SyntheticSpec,
};
use pudroid::feature::{AppSample, PuDataset, SparseBinaryVector};

fn corpus(spec: SyntheticSpec) -> Corpus {
    Corpus::from_synthetic(&generate_synthetic(&spec).unwrap()).unwrap()
}

fn standard(seed: u64) -> Corpus {
    corpus(SyntheticSpec { seed, ..SyntheticSpec::default() })
}

fn small(seed: u64) -> Corpus {
    corpus(SyntheticSpec { n_positive: 600, n_negative: 1200, dimension: 60, seed, ..SyntheticSpec::default() })
}

/// Malware uses only features 0..8 and benign apps only 10..20, so a
/// contamination-free split leaves the PU step nothing to flag.
fn separable(seed: u64) -> Corpus {
    let mut r = pudroid::rng::rng(seed);
    let mut draw = |range: std::ops::Range<usize>, p: f64| {
        let start = range.start;
        let mut x: Vec<usize> = range.filter(|_| r.gen::<f64>() < p).collect();
        if x.is_empty() {
            x.push(start);
        }
        SparseBinaryVector::from_indices(x)
    };
    let p = (0..600).map(|i| AppSample::new(format!("m{i:04}"), draw(0..8, 0.6), true, Some(true)).unwrap()).collect();
    let u = (0..1200).map(|i| AppSample::new(format!("b{i:04}"), draw(10..20, 0.4), false, Some(false)).unwrap()).collect();
    Corpus::from_dataset(&PuDataset::new(Arc::new(synthetic_space(20)), p, u).unwrap()).unwrap()
}

fn only(learners: &[Learner]) -> ExperimentConfig {
    ExperimentConfig { learners: Some(learners.to_vec()), ..ExperimentConfig::default() }
}

fn median3(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[1]
}

#[test]
fn bayes_classifier_is_accurate_without_noise() {
    let spec = SyntheticSpec {
        n_positive: 1000,
        n_negative: 1000,
        dimension: 20,
        signal_features: 5,
        n_families: 2,
        flip_noise: 0.0,
        seed: 4,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec).unwrap();
    let correct = data
        .dataset
        .samples()
        .filter(|s| (data.model.posterior(&s.features) > 0.5) == s.hidden.unwrap())
        .count();
    let accuracy = correct as f64 / data.dataset.len() as f64;
    assert!(accuracy >= 0.95, "{accuracy}");
}

#[test]
fn rq1_moves_exactly_step_times_n() {
    let report = protocol_rq1(&small(1), 50, 3, &only(&[Learner::Tree]), 1).unwrap();
    let counts: Vec<(String, usize)> = report.rows.iter().map(|r| (r.condition.clone(), r.contaminants)).collect();
    assert_eq!(
        counts,
        vec![("N=0".into(), 0), ("N=1".into(), 50), ("N=2".into(), 100), ("N=3".into(), 150)]
    );
}

#[test]
fn rq1_rejects_too_many_iterations() {
    assert!(protocol_rq1(&small(1), 100, 10, &ExperimentConfig::default(), 1).is_err());
}

#[test]
fn rq1_baseline_degrades_with_contamination() {
    let mut first = Vec::new();
    let mut last = Vec::new();
    for seed in 0..3 {
        let report = protocol_rq1(&standard(seed), 100, 10, &only(&[Learner::Forest]), seed).unwrap();
        first.push(report.row("N=1", Learner::Forest).unwrap().npu_metrics.detection_rate);
        last.push(report.row("N=10", Learner::Forest).unwrap().npu_metrics.detection_rate);
    }
    assert!(median3(last.clone()) <= median3(first.clone()), "N=10 {last:?} vs N=1 {first:?}");
}

#[test]
fn rq2_realizes_each_ratio() {
    let report = protocol_rq2(&small(2), &[1.0, 2.5, 4.0], &only(&[Learner::Tree]), 2).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.condition.as_str()).collect();
    assert_eq!(labels, ["1:1", "2.5:1", "4:1"]);
    // 400 training malware: m = floor(400 / (1 + r)), contaminants = round(r * m).
    let contaminants: Vec<usize> = report.rows.iter().map(|r| r.contaminants).collect();
    assert_eq!(contaminants, [200, 285, 320]);
}

#[test]
fn rq2_without_contamination_matches_baseline() {
    let report = protocol_rq2(&separable(3), &[0.0], &ExperimentConfig::default(), 3).unwrap();
    for row in &report.rows {
        let gap = (row.pu_metrics.detection_rate - row.npu_metrics.detection_rate).abs();
        assert!(gap <= 0.01, "{}: {gap}", row.learner);
    }
}

#[test]
fn rq2_rejects_infeasible_ratios() {
    let cfg = ExperimentConfig::default();
    assert!(protocol_rq2(&small(1), &[1000.0], &cfg, 1).is_err());
    assert!(protocol_rq2(&small(1), &[-1.0], &cfg, 1).is_err());
}

#[test]
fn rq3_runs_every_family_and_rejects_unknown_ones() {
    let c = small(5);
    let report = protocol_rq3(&c, None, &ExperimentConfig::default(), 5).unwrap();
    let labels: Vec<&str> = report.rows.iter().map(|r| r.condition.as_str()).collect();
    assert_eq!(labels, ["family=0", "family=1", "family=2", "family=3"]);
    assert!(report.rows.iter().all(|r| r.learner == Learner::Linear));
    assert!(protocol_rq3(&c, Some(9), &ExperimentConfig::default(), 5).is_err());
}

#[test]
fn rq3_baseline_can_miss_a_disjoint_family_entirely() {
    let report = protocol_rq3(&standard(0), Some(2), &ExperimentConfig::default(), 0).unwrap();
    assert_eq!(report.rows[0].npu_metrics.f_measure, 0.0);
}

#[test]
fn rq4_without_contamination_matches_baseline() {
    let report = protocol_rq4(&separable(6), 0.0, &ExperimentConfig::default(), 6).unwrap();
    assert_eq!(report.rows.len(), 3);
    for row in &report.rows {
        assert_eq!(row.contaminants, 0);
        let gap = (row.pu_metrics.accuracy - row.npu_metrics.accuracy).abs();
        assert!(gap <= 0.01, "{}: {gap}", row.learner);
    }
}

#[test]
fn rq4_baseline_tree_guesses_under_heavy_contamination() {
    let report = protocol_rq4(&standard(1), 8.0, &only(&[Learner::Tree]), 1).unwrap();
    let accuracy = report.rows[0].npu_metrics.accuracy;
    assert!((accuracy - 0.5).abs() <= 0.1, "{accuracy}");
}

#[test]
fn reports_are_reproducible() {
    let cfg = only(&[Learner::Tree]);
    let a = protocol_rq2(&small(7), &[1.0, 3.0], &cfg, 7).unwrap().to_json().unwrap();
    let b = protocol_rq2(&small(7), &[1.0, 3.0], &cfg, 7).unwrap().to_json().unwrap();
    assert_eq!(a, b);
}
