//! Contamination experiments.
//!
//! Every protocol starts from a corpus whose ground truth is known, holds
//! out a third of each class as a fixed test set, plants mislabeled samples
//! in the remaining training data, then compares the PU pipeline against
//! the same learner trained directly on the contaminated labels.
//!
//! | protocol | contamination |
//! |---|---|
//! | RQ1 | `step * N` malware moved into `U`, cumulative over `N = 0..=iterations` |
//! | RQ2 | `U` holds `r` contaminants per malware left in `P` |
//! | RQ3 | one whole family moved into `U`, mixed 1:1 with benign apps |
//! | RQ4 | benign apps moved into `P` at `r` per malware; roles swapped for PU |

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::metrics::{compute_metrics, Metrics};
use super::report::{ExperimentReport, Protocol, ReportRow};
use super::synthetic::SyntheticData;
use crate::classifier::{train, Classifier, Learner, TrainingSet};
use crate::error::{Error, Result};
use crate::feature::{AppSample, FeatureSpace, PuDataset};
use crate::pu::{clean_and_retrain, PuConfig, DECISION_THRESHOLD};
use crate::rng::{self, derive_seed};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub pu: PuConfig,
    /// Learners to run; `None` uses the protocol's own set.
    pub learners: Option<Vec<Learner>>,
    /// Fraction of each class held out for testing.
    pub test_fraction: f64,
    /// RQ4: fraction of the training benign apps moved into the malicious group.
    pub reverse_share: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            pu: PuConfig::default(),
            learners: None,
            test_fraction: 1.0 / 3.0,
            reverse_share: 0.75,
        }
    }
}

impl ExperimentConfig {
    fn learners_or(&self, default: &[Learner]) -> Vec<Learner> {
        self.learners.clone().unwrap_or_else(|| default.to_vec())
    }
}

/// Samples with known ground truth, the input to every protocol. The
/// discovery state of the input is ignored: protocols start from `z = y`.
#[derive(Debug, Clone)]
pub struct Corpus {
    space: Arc<FeatureSpace>,
    samples: Vec<AppSample>,
    families: Vec<Option<usize>>,
}

impl Corpus {
    pub fn from_synthetic(data: &SyntheticData) -> Result<Self> {
        let mut corpus = Self::from_dataset(&data.dataset)?;
        corpus.families = corpus.samples.iter().map(|s| data.families.get(&s.id).copied()).collect();
        Ok(corpus)
    }

    /// Requires every sample to carry ground truth.
    pub fn from_dataset(ds: &PuDataset) -> Result<Self> {
        let mut samples = Vec::with_capacity(ds.len());
        for s in ds.samples() {
            let truth = s.hidden.ok_or_else(|| {
                Error::Dataset(format!("sample `{}` has no ground truth; protocols need labeled corpora", s.id))
            })?;
            samples.push(AppSample { discovery: truth, ..s.clone() });
        }
        Ok(Corpus { space: ds.shared_space(), families: vec![None; samples.len()], samples })
    }

    fn truth(&self, i: usize) -> bool {
        self.samples[i].hidden == Some(true)
    }

    /// The sample with discovery `z`; with `swap`, the ground truth is
    /// inverted so that benign becomes the positive class.
    fn view(&self, i: usize, z: bool, swap: bool) -> AppSample {
        let s = &self.samples[i];
        AppSample { discovery: z, hidden: Some(self.truth(i) != swap), ..s.clone() }
    }
}

/// Per-class test/train split, each list in seeded random order.
struct Holdout {
    train_pos: Vec<usize>,
    train_neg: Vec<usize>,
    test_pos: Vec<usize>,
    test_neg: Vec<usize>,
}

fn holdout(corpus: &Corpus, test_fraction: f64, seed: u64) -> Result<Holdout> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = rng::stream(seed, 0);
    let mut split = |mut idx: Vec<usize>| {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * test_fraction).round() as usize;
        let train = idx.split_off(n_test);
        (train, idx)
    };
    let (train_pos, test_pos) = split((0..corpus.samples.len()).filter(|&i| corpus.truth(i)).collect());
    let (train_neg, test_neg) = split((0..corpus.samples.len()).filter(|&i| !corpus.truth(i)).collect());
    if train_pos.is_empty() || train_neg.is_empty() || test_pos.is_empty() || test_neg.is_empty() {
        return Err(Error::Config("corpus too small for a per-class test split".into()));
    }
    Ok(Holdout { train_pos, train_neg, test_pos, test_neg })
}

/// One training configuration to run through both branches.
struct Condition {
    label: String,
    positives: Vec<usize>,
    unlabeled: Vec<usize>,
    test: Vec<usize>,
    /// Benign is the positive class (reverse contamination).
    swap: bool,
}

fn evaluate(corpus: &Corpus, model: &Classifier, test: &[usize], swap: bool) -> Result<Metrics> {
    let mut truth = Vec::with_capacity(test.len());
    let mut predicted = Vec::with_capacity(test.len());
    let mut scores = Vec::with_capacity(test.len());
    for &i in test {
        let s = model.score(&corpus.samples[i].features)?;
        let malicious_score = if swap { 1.0 - s } else { s };
        truth.push(corpus.truth(i));
        predicted.push(if swap { s <= DECISION_THRESHOLD } else { s > DECISION_THRESHOLD });
        scores.push(malicious_score);
    }
    compute_metrics(&truth, &predicted, &scores)
}

fn run_condition(
    corpus: &Corpus,
    cond: &Condition,
    index: usize,
    learner: Learner,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<ReportRow> {
    let cond_seed = derive_seed(seed, 100 + index as u64);
    let positives: Vec<AppSample> = cond.positives.iter().map(|&i| corpus.view(i, true, cond.swap)).collect();
    let unlabeled: Vec<AppSample> = cond.unlabeled.iter().map(|&i| corpus.view(i, false, cond.swap)).collect();
    let planted: BTreeSet<&str> =
        unlabeled.iter().filter(|s| s.hidden == Some(true)).map(|s| s.id.as_str()).collect();
    let ds = PuDataset::new(Arc::clone(&corpus.space), positives.clone(), unlabeled.clone())?;

    let train_cfg = cfg.pu.train.with_learner(learner).with_seed(derive_seed(cond_seed, 1));
    let pu_cfg = PuConfig { train: train_cfg, ..cfg.pu };
    let cleaned = clean_and_retrain(&ds, &pu_cfg, derive_seed(cond_seed, 2))?;
    let baseline = train(&TrainingSet::from_discovery(&ds), &train_cfg)?;

    Ok(ReportRow {
        condition: cond.label.clone(),
        condition_index: index,
        learner,
        contaminants: planted.len(),
        detected: cleaned.contaminant_ids.len(),
        detected_planted: cleaned.contaminant_ids.iter().filter(|id| planted.contains(id.as_str())).count(),
        e: cleaned.diagnostics.e,
        rescale: cleaned.diagnostics.rescale,
        mean_g_over_pm: cleaned.diagnostics.mean_g_over_pm,
        pu_metrics: evaluate(corpus, &cleaned.final_model, &cond.test, cond.swap)?,
        npu_metrics: evaluate(corpus, &baseline, &cond.test, cond.swap)?,
    })
}

fn run_all(
    corpus: &Corpus,
    conditions: &[Condition],
    learners: &[Learner],
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<ReportRow>> {
    let jobs: Vec<(usize, Learner)> =
        (0..conditions.len()).flat_map(|c| learners.iter().map(move |&l| (c, l))).collect();
    jobs.par_iter()
        .map(|&(c, l)| run_condition(corpus, &conditions[c], c, l, cfg, seed))
        .collect()
}

fn concat(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().chain(b).copied().collect()
}

fn report(protocol: Protocol, seed: u64, cfg: &ExperimentConfig, learners: &[Learner], params: serde_json::Value, rows: Vec<ReportRow>) -> Result<ExperimentReport> {
    Ok(ExperimentReport {
        protocol,
        seed,
        config: json!({
            "experiment": serde_json::to_value(cfg)?,
            "learners": learners,
            "protocol": params,
        }),
        rows,
    })
}

/// Contaminants accumulate: iteration `N` moves the first `step * N`
/// training malware (in a fixed random order) into `U`.
pub fn protocol_rq1(corpus: &Corpus, step: usize, iterations: usize, cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    let h = holdout(corpus, cfg.test_fraction, seed)?;
    let needed = step * iterations;
    if needed + 2 > h.train_pos.len() {
        return Err(Error::Config(format!(
            "RQ1 needs {} training malware for {iterations} iterations of {step}; only {} available",
            needed + 2,
            h.train_pos.len()
        )));
    }
    let test = concat(&h.test_pos, &h.test_neg);
    let conditions: Vec<Condition> = (0..=iterations)
        .map(|n| {
            let k = step * n;
            Condition {
                label: format!("N={n}"),
                positives: h.train_pos[k..].to_vec(),
                unlabeled: concat(&h.train_neg, &h.train_pos[..k]),
                test: test.clone(),
                swap: false,
            }
        })
        .collect();
    let learners = cfg.learners_or(&Learner::ALL);
    let rows = run_all(corpus, &conditions, &learners, cfg, seed)?;
    report(Protocol::Rq1, seed, cfg, &learners, json!({"step": step, "iterations": iterations}), rows)
}

/// For ratio `r`, keeps `m = floor(n / (1 + r))` training malware in `P`
/// and moves `round(r * m)` more into `U`.
pub fn protocol_rq2(corpus: &Corpus, ratios: &[f64], cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    let h = holdout(corpus, cfg.test_fraction, seed)?;
    let n = h.train_pos.len();
    let test = concat(&h.test_pos, &h.test_neg);
    let mut conditions = Vec::with_capacity(ratios.len());
    for &r in ratios {
        if !(r >= 0.0) || !r.is_finite() {
            return Err(Error::Config(format!("contamination ratio must be a finite value >= 0, got {r}")));
        }
        let m = (n as f64 / (1.0 + r)).floor() as usize;
        let k = (r * m as f64).round() as usize;
        if m < 2 || m + k > n {
            return Err(Error::Config(format!("ratio {r}:1 is infeasible with {n} training malware")));
        }
        conditions.push(Condition {
            label: format!("{}:1", format_ratio(r)),
            positives: h.train_pos[..m].to_vec(),
            unlabeled: concat(&h.train_neg, &h.train_pos[m..m + k]),
            test: test.clone(),
            swap: false,
        });
    }
    let learners = cfg.learners_or(&[Learner::Forest, Learner::Tree]);
    let rows = run_all(corpus, &conditions, &learners, cfg, seed)?;
    report(Protocol::Rq2, seed, cfg, &learners, json!({"ratios": ratios}), rows)
}

fn format_ratio(r: f64) -> String {
    if r.fract() == 0.0 { format!("{}", r as i64) } else { format!("{r}") }
}

/// Holds one family out of `P` and mixes it 1:1 with benign apps in `U`.
/// The test set is the family's held-out members plus as many held-out
/// benign apps. With `holdout_family = None` every family takes a turn.
pub fn protocol_rq3(corpus: &Corpus, holdout_family: Option<usize>, cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    let families: BTreeSet<usize> = corpus.families.iter().flatten().copied().collect();
    if families.len() < 2 {
        return Err(Error::Config("RQ3 needs a corpus with at least two malware families".into()));
    }
    let selected: Vec<usize> = match holdout_family {
        Some(f) if families.contains(&f) => vec![f],
        Some(f) => return Err(Error::Config(format!("unknown family {f}"))),
        None => families.iter().copied().collect(),
    };
    let h = holdout(corpus, cfg.test_fraction, seed)?;
    let family = |i: usize| corpus.families[i];
    let mut conditions = Vec::with_capacity(selected.len());
    for f in &selected {
        let (held, kept): (Vec<usize>, Vec<usize>) = h.train_pos.iter().partition(|&&i| family(i) == Some(*f));
        let test_family: Vec<usize> = h.test_pos.iter().copied().filter(|&i| family(i) == Some(*f)).collect();
        if held.len() > h.train_neg.len() || test_family.len() > h.test_neg.len() {
            return Err(Error::Config(format!("not enough benign apps to mix 1:1 with family {f}")));
        }
        if kept.len() < 2 || test_family.is_empty() {
            return Err(Error::Config(format!("family {f} leaves too few samples for RQ3")));
        }
        conditions.push(Condition {
            label: format!("family={f}"),
            positives: kept,
            unlabeled: concat(&held, &h.train_neg[..held.len()]),
            test: concat(&test_family, &h.test_neg[..test_family.len()]),
            swap: false,
        });
    }
    let learners = cfg.learners_or(&[Learner::Linear]);
    let rows = run_all(corpus, &conditions, &learners, cfg, seed)?;
    report(Protocol::Rq3, seed, cfg, &learners, json!({"holdout_family": holdout_family}), rows)
}

/// Moves `reverse_share` of the training benign apps into the malicious
/// group, keeping `ratio` benign per malware there. For the PU step the
/// roles are swapped: the clean benign group is labeled, the mixed group is
/// unlabeled. The test set is every held-out malware plus as many held-out
/// benign apps.
pub fn protocol_rq4(corpus: &Corpus, ratio: f64, cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    if !(ratio >= 0.0) || !ratio.is_finite() {
        return Err(Error::Config(format!("contamination ratio must be a finite value >= 0, got {ratio}")));
    }
    if !(cfg.reverse_share > 0.0 && cfg.reverse_share < 1.0) {
        return Err(Error::Config(format!("reverse share must lie in (0, 1), got {}", cfg.reverse_share)));
    }
    let h = holdout(corpus, cfg.test_fraction, seed)?;
    let (m, moved) = if ratio == 0.0 {
        (h.train_pos.len(), 0)
    } else {
        let budget = (cfg.reverse_share * h.train_neg.len() as f64).floor();
        let m = ((budget / ratio).floor() as usize).min(h.train_pos.len());
        (m, (ratio * m as f64).round() as usize)
    };
    if m == 0 || moved + 2 > h.train_neg.len() {
        return Err(Error::Config(format!(
            "ratio {ratio}:1 is infeasible with {} training benign apps",
            h.train_neg.len()
        )));
    }
    if h.test_neg.len() < h.test_pos.len() {
        return Err(Error::Config("RQ4 needs at least as many benign as malware test apps".into()));
    }
    let cond = Condition {
        label: format!("{}:1", format_ratio(ratio)),
        positives: h.train_neg[moved..].to_vec(),
        unlabeled: concat(&h.train_pos[..m], &h.train_neg[..moved]),
        test: concat(&h.test_pos, &h.test_neg[..h.test_pos.len()]),
        swap: true,
    };
    let learners = cfg.learners_or(&Learner::ALL);
    let rows = run_all(corpus, &[cond], &learners, cfg, seed)?;
    report(Protocol::Rq4, seed, cfg, &learners, json!({"ratio": ratio, "malware_in_mixed_group": m, "benign_moved": moved}), rows)
}

/// Moves `count` random labeled samples into `U`. Returns the new dataset
/// and the moved ids, sorted.
pub fn plant_contaminants(ds: &PuDataset, count: usize, seed: u64) -> Result<(PuDataset, Vec<String>)> {
    if count >= ds.positives().len() {
        return Err(Error::Config(format!(
            "cannot plant {count} contaminants from {} labeled samples",
            ds.positives().len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.positives().len()).collect();
    order.shuffle(&mut rng::rng(seed));
    let moved: BTreeSet<usize> = order[..count].iter().copied().collect();
    let mut positives = Vec::new();
    let mut unlabeled = ds.unlabeled().to_vec();
    let mut ids = Vec::with_capacity(count);
    for (i, s) in ds.positives().iter().enumerate() {
        if moved.contains(&i) {
            ids.push(s.id.clone());
            unlabeled.push(AppSample { discovery: false, ..s.clone() });
        } else {
            positives.push(s.clone());
        }
    }
    ids.sort();
    Ok((PuDataset::new(ds.shared_space(), positives, unlabeled)?, ids))
}
