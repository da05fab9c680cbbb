//! Positive-unlabeled adjustment and contaminant removal.
//!
//! A classifier trained to separate labeled apps (`z = 1`) from unlabeled
//! ones (`z = 0`) estimates the discovery probability `f(x) = p(z=1 | x)`.
//! When labeling is random among true positives, that probability is the
//! true posterior scaled by a constant:
//!
//! ```text
//! p(z=1 | x) = p(y=1 | x) * p(z=1 | y=1)
//! ```
//!
//! The constant `e = p(z=1 | y=1)` is estimated as the mean of `f` over
//! held-out labeled apps, and `g(x) = f(x) / e` recovers `p(y=1 | x)`.
//! Unlabeled apps with `g > 0.5` are contaminants.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{train, Classifier, TrainConfig, TrainingSet};
use crate::error::{Error, Result};
use crate::feature::{AppSample, PuDataset, SparseBinaryVector};
use crate::json::to_canonical_json;
use crate::rng;
use crate::select::{threshold_rule, ThresholdRule};

/// Lower clamp for `e`.
pub const E_EPSILON: f64 = 1e-6;

/// Scores strictly above this are malicious.
pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct ValidationSplit {
    pub train_part: PuDataset,
    pub validation_part: PuDataset,
}

impl ValidationSplit {
    /// `P'`: the labeled members of the validation part.
    pub fn positive_validation(&self) -> &[AppSample] {
        self.validation_part.positives()
    }

    pub fn n(&self) -> usize {
        self.validation_part.positives().len()
    }
}

/// Draws `round(fraction * |P ∪ U|)` samples uniformly as the validation part.
pub fn split_validation(ds: &PuDataset, fraction: f64, seed: u64) -> Result<ValidationSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction must lie in (0, 1), got {fraction}")));
    }
    let total = ds.len();
    let n_val = (fraction * total as f64).round() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng::rng(seed));
    let mut in_validation = vec![false; total];
    for &i in &order[..n_val] {
        in_validation[i] = true;
    }

    let (mut tp, mut tu, mut vp, mut vu) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (s, val) in ds.samples().zip(in_validation) {
        match (s.discovery, val) {
            (true, true) => vp.push(s.clone()),
            (false, true) => vu.push(s.clone()),
            (true, false) => tp.push(s.clone()),
            (false, false) => tu.push(s.clone()),
        }
    }
    if vp.is_empty() {
        return Err(Error::Split(format!(
            "validation part ({n_val} samples) holds no labeled positives; use a larger fraction or another seed"
        )));
    }
    Ok(ValidationSplit {
        train_part: PuDataset::new(ds.shared_space(), tp, tu)?,
        validation_part: PuDataset::new(ds.shared_space(), vp, vu)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub e: f64,
    pub n: usize,
    pub per_sample_scores: Vec<f64>,
}

/// `e = mean f(x)` over `P'`, clamped to `[E_EPSILON, 1]`.
pub fn estimate_e(model: &Classifier, p_prime: &[AppSample]) -> Result<EstimatorResult> {
    if p_prime.is_empty() {
        return Err(Error::Split("cannot estimate e from an empty labeled validation set".into()));
    }
    if let Some(s) = p_prime.iter().find(|s| !s.discovery) {
        return Err(Error::Dataset(format!("sample `{}` in P' is not labeled", s.id)));
    }
    let scores = p_prime.iter().map(|s| model.score(&s.features)).collect::<Result<Vec<_>>>()?;
    Ok(EstimatorResult {
        e: mean_clamped(&scores),
        n: scores.len(),
        per_sample_scores: scores,
    })
}

fn mean_clamped(scores: &[f64]) -> f64 {
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    mean.clamp(E_EPSILON, 1.0)
}

/// The adjusted scorer `g(x) = min(1, rescale * f(x) / e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PuModel {
    base: Classifier,
    e: f64,
    rescale: f64,
}

impl PuModel {
    pub fn new(base: Classifier, e: f64) -> Result<Self> {
        Self::with_rescale(base, e, 1.0)
    }

    pub fn with_rescale(base: Classifier, e: f64, rescale: f64) -> Result<Self> {
        if !(e > 0.0 && e <= 1.0) {
            return Err(Error::Config(format!("e must lie in (0, 1], got {e}")));
        }
        if !(rescale >= 1.0) || !rescale.is_finite() {
            return Err(Error::Config(format!("rescale must be >= 1, got {rescale}")));
        }
        Ok(PuModel { base, e, rescale })
    }

    pub fn base(&self) -> &Classifier {
        &self.base
    }

    pub fn e(&self) -> f64 {
        self.e
    }

    pub fn rescale(&self) -> f64 {
        self.rescale
    }

    pub fn g_score(&self, x: &SparseBinaryVector) -> Result<f64> {
        Ok(self.adjust(self.base.score(x)?))
    }

    /// Maps a base score `f` to `g`.
    pub fn adjust(&self, f: f64) -> f64 {
        (self.rescale * f / self.e).min(1.0)
    }

    /// Mean `g` over `samples`.
    pub fn mean_g(&self, samples: &[AppSample]) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Dataset("mean of g over an empty sample set".into()));
        }
        let total = samples.iter().map(|s| self.g_score(&s.features)).sum::<Result<f64>>()?;
        Ok(total / samples.len() as f64)
    }

    /// When known malware scores low on average (`mean g < trigger`), scale
    /// every score up so that the mean reaches `target`.
    pub fn apply_rescale_heuristic(self, p_m: &[AppSample], rescale: &RescaleConfig) -> Result<PuModel> {
        if let Some(s) = p_m.iter().find(|s| !s.discovery) {
            return Err(Error::Dataset(format!("sample `{}` in P_M is not labeled", s.id)));
        }
        let mu = self.mean_g(p_m)?;
        if mu < rescale.trigger {
            let factor = self.rescale * rescale.target / mu;
            return PuModel::with_rescale(self.base, self.e, factor.max(1.0));
        }
        Ok(self)
    }
}

/// Free-function form of [`PuModel::g_score`].
pub fn g_score(pu: &PuModel, x: &SparseBinaryVector) -> Result<f64> {
    pu.g_score(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaleConfig {
    pub trigger: f64,
    pub target: f64,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        RescaleConfig { trigger: 0.7, target: 1.0 }
    }
}

/// Ids of unlabeled samples with `g > 0.5`, sorted.
pub fn detect_contaminants(pu: &PuModel, u_group: &[AppSample]) -> Result<Vec<String>> {
    let flagged: Vec<Option<&str>> = u_group
        .par_iter()
        .map(|s| Ok((pu.g_score(&s.features)? > DECISION_THRESHOLD).then_some(s.id.as_str())))
        .collect::<Result<_>>()?;
    let mut ids: Vec<String> = flagged.into_iter().flatten().map(str::to_string).collect();
    ids.sort();
    Ok(ids)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ContaminantMode {
    /// Detected contaminants join `P`.
    Relabel,
    /// Detected contaminants are dropped.
    Discard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PuConfig {
    pub train: TrainConfig,
    pub split_fraction: f64,
    pub rescale: RescaleConfig,
    pub mode: ContaminantMode,
}

impl Default for PuConfig {
    fn default() -> Self {
        PuConfig {
            train: TrainConfig::default(),
            split_fraction: 0.2,
            rescale: RescaleConfig::default(),
            mode: ContaminantMode::Relabel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CleanDiagnostics {
    pub e: f64,
    pub rescale: f64,
    pub mean_g_over_pm: f64,
    pub n_validation_positives: usize,
}

#[derive(Debug, Clone)]
pub struct CleanResult {
    pub contaminant_ids: Vec<String>,
    pub cleaned: PuDataset,
    pub final_model: Classifier,
    pub diagnostics: CleanDiagnostics,
}

pub const CLEAN_SCHEMA: &str = "pudroid-clean/1";

#[derive(Serialize)]
struct CleanReport<'a> {
    schema: &'static str,
    seed: u64,
    config: &'a PuConfig,
    input: &'a serde_json::Value,
    threshold_rule: ThresholdRule,
    contaminant_ids: &'a [String],
    e: f64,
    rescale: f64,
    mean_g_over_pm: f64,
    n_validation_positives: usize,
    cleaned_positives: usize,
    cleaned_unlabeled: usize,
}

impl CleanResult {
    /// Canonical JSON with the run's settings. `input` describes where the
    /// data came from and any preprocessing.
    pub fn to_json(&self, cfg: &PuConfig, seed: u64, input: &serde_json::Value) -> Result<String> {
        to_canonical_json(&CleanReport {
            schema: CLEAN_SCHEMA,
            seed,
            config: cfg,
            input,
            threshold_rule: threshold_rule(),
            contaminant_ids: &self.contaminant_ids,
            e: self.diagnostics.e,
            rescale: self.diagnostics.rescale,
            mean_g_over_pm: self.diagnostics.mean_g_over_pm,
            n_validation_positives: self.diagnostics.n_validation_positives,
            cleaned_positives: self.cleaned.positives().len(),
            cleaned_unlabeled: self.cleaned.unlabeled().len(),
        })
    }
}

/// Full pipeline: split, train `f` on `z`, estimate `e`, rescale, flag
/// contaminants in `U`, move them (or drop them), retrain on the cleaned
/// labels. `seed` drives the split; model randomness comes from
/// `cfg.train.seed`. Ground-truth fields are never consulted.
pub fn clean_and_retrain(ds: &PuDataset, cfg: &PuConfig, seed: u64) -> Result<CleanResult> {
    let split = split_validation(ds, cfg.split_fraction, seed)?;
    let discovery = train(&TrainingSet::from_discovery(&split.train_part), &cfg.train)?;
    let estimate = estimate_e(&discovery, split.positive_validation())?;
    let pu = PuModel::new(discovery, estimate.e)?
        .apply_rescale_heuristic(split.positive_validation(), &cfg.rescale)?;
    let mean_g_over_pm = pu.mean_g(split.positive_validation())?;

    let contaminant_ids = detect_contaminants(&pu, ds.unlabeled())?;
    let cleaned = apply_cleaning(ds, &contaminant_ids, cfg.mode)?;
    let final_model = train(&TrainingSet::from_discovery(&cleaned), &cfg.train)?;

    Ok(CleanResult {
        contaminant_ids,
        cleaned,
        final_model,
        diagnostics: CleanDiagnostics {
            e: pu.e(),
            rescale: pu.rescale(),
            mean_g_over_pm,
            n_validation_positives: split.n(),
        },
    })
}

/// Moves (or drops) the flagged unlabeled samples. Relabeled samples lose
/// their ground-truth field, since a sample in `P` may not be known benign.
pub fn apply_cleaning(ds: &PuDataset, contaminant_ids: &[String], mode: ContaminantMode) -> Result<PuDataset> {
    let flagged: HashSet<&str> = contaminant_ids.iter().map(String::as_str).collect();
    let mut positives = ds.positives().to_vec();
    let mut unlabeled = Vec::with_capacity(ds.unlabeled().len());
    for s in ds.unlabeled() {
        if !flagged.contains(s.id.as_str()) {
            unlabeled.push(s.clone());
        } else if mode == ContaminantMode::Relabel {
            positives.push(AppSample { discovery: true, hidden: None, ..s.clone() });
        }
    }
    PuDataset::new(ds.shared_space(), positives, unlabeled)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::classifier::LinearModel;
    use crate::feature::{Feature, FeatureKind, FeatureSpace};
    use approx::assert_relative_eq;

    /// Bias-only logistic model scoring `p` everywhere.
    fn constant(p: f64, d: usize) -> Classifier {
        Classifier::Linear(LinearModel::from_parts(vec![0.0; d], (p / (1.0 - p)).ln()))
    }

    /// One-feature logistic model: score `a` when absent, `b` when present.
    fn two_level(a: f64, b: f64) -> Classifier {
        let logit = |p: f64| (p / (1.0 - p)).ln();
        Classifier::Linear(LinearModel::from_parts(vec![logit(b) - logit(a)], logit(a)))
    }

    fn sample(id: &str, idx: &[usize], z: bool) -> AppSample {
        AppSample::new(id, SparseBinaryVector::from_indices(idx.iter().copied()), z, None).unwrap()
    }

    fn dataset(n_pos: usize, n_unl: usize) -> PuDataset {
        let space = FeatureSpace::new([Feature::new(FeatureKind::Api, "f")]).unwrap();
        let p = (0..n_pos).map(|i| sample(&format!("p{i:03}"), &[0], true)).collect();
        let u = (0..n_unl).map(|i| sample(&format!("u{i:03}"), &[], false)).collect();
        PuDataset::new(Arc::new(space), p, u).unwrap()
    }

    #[test]
    fn split_partitions_samples() {
        let ds = dataset(100, 400);
        let split = split_validation(&ds, 0.2, 3).unwrap();
        assert_eq!(split.validation_part.len(), 100);
        assert_eq!(split.train_part.len(), 400);
        assert!(split.positive_validation().iter().all(|s| s.discovery));
        assert_eq!(split.n(), split.validation_part.positives().len());
        let mut ids: Vec<&str> = split.train_part.samples().chain(split.validation_part.samples()).map(|s| s.id.as_str()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 500);

        let again = split_validation(&ds, 0.2, 3).unwrap();
        assert_eq!(again.validation_part, split.validation_part);
    }

    #[test]
    fn split_without_validation_positives_fails() {
        let ds = dataset(1, 50);
        // Find a seed that keeps the only positive out of a 2% validation set.
        let err = (0..20).map(|s| split_validation(&ds, 0.02, s)).find(|r| r.is_err()).unwrap();
        assert!(matches!(err, Err(Error::Split(_))));
        assert!(split_validation(&ds, 0.0, 1).is_err());
        assert!(split_validation(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn estimator_examples() {
        let p = vec![sample("a", &[], true), sample("b", &[0], true)];
        assert_relative_eq!(estimate_e(&constant(1.0 - 1e-17, 1), &p).unwrap().e, 1.0);
        let r = estimate_e(&two_level(0.8, 0.6), &p).unwrap();
        assert_relative_eq!(r.e, 0.7, epsilon = 1e-12);
        assert_eq!(r.n, 2);
        assert!(estimate_e(&constant(0.5, 1), &[]).is_err());
        let tiny = estimate_e(&constant(1e-12, 1), &p).unwrap();
        assert_eq!(tiny.e, E_EPSILON);
    }

    #[test]
    fn g_examples() {
        let x = SparseBinaryVector::default();
        let pu = PuModel::new(constant(0.4, 1), 0.8).unwrap();
        assert_relative_eq!(pu.g_score(&x).unwrap(), 0.5, epsilon = 1e-12);
        let identity = PuModel::new(constant(0.3, 1), 1.0).unwrap();
        assert_relative_eq!(identity.g_score(&x).unwrap(), 0.3, epsilon = 1e-12);
        let clamped = PuModel::new(constant(0.9, 1), 0.6).unwrap();
        assert_eq!(clamped.g_score(&x).unwrap(), 1.0);
        assert!(PuModel::new(constant(0.5, 1), 0.0).is_err());
    }

    #[test]
    fn rescale_heuristic() {
        let pm = vec![sample("a", &[], true)];
        let cfg = RescaleConfig::default();
        // mean g = 0.25 / 0.5 = 0.5 < 0.7: rescale to 1 / 0.5.
        let pu = PuModel::new(constant(0.25, 1), 0.5).unwrap().apply_rescale_heuristic(&pm, &cfg).unwrap();
        assert_relative_eq!(pu.rescale(), 2.0, epsilon = 1e-9);
        let high = PuModel::new(constant(0.95, 1), 1.0).unwrap().apply_rescale_heuristic(&pm, &cfg).unwrap();
        assert_eq!(high.rescale(), 1.0);
        let edge = PuModel::new(constant(0.35, 1), 0.5).unwrap();
        let mu = edge.mean_g(&pm).unwrap();
        let edge = edge.apply_rescale_heuristic(&pm, &RescaleConfig { trigger: mu, target: 1.0 }).unwrap();
        assert_eq!(edge.rescale(), 1.0);
    }

    #[test]
    fn detection_threshold() {
        let u = vec![sample("c", &[0], false), sample("a", &[], false), sample("b", &[0], false)];
        let pu = PuModel::new(two_level(0.2, 0.9), 1.0).unwrap();
        assert_eq!(detect_contaminants(&pu, &u).unwrap(), vec!["b", "c"]);
        assert!(detect_contaminants(&pu, &[]).unwrap().is_empty());
        let low = PuModel::new(constant(0.5, 1), 1.0).unwrap();
        assert!(detect_contaminants(&low, &u).unwrap().is_empty());
    }

    #[test]
    fn cleaning_modes() {
        let ds = dataset(2, 3);
        let ids = vec!["u001".to_string()];
        let relabeled = apply_cleaning(&ds, &ids, ContaminantMode::Relabel).unwrap();
        assert_eq!((relabeled.positives().len(), relabeled.unlabeled().len()), (3, 2));
        let discarded = apply_cleaning(&ds, &ids, ContaminantMode::Discard).unwrap();
        assert_eq!((discarded.positives().len(), discarded.unlabeled().len()), (2, 2));
        assert!(discarded.samples().all(|s| s.id != "u001"));
    }
}
