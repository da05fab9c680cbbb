//! Synthetic datasets with known ground truth.
//!
//! Positives are split into families. Family `k` owns the signal block
//! `[k * s, (k + 1) * s)`; a member shows each feature of its own block with
//! probability 0.8 and every other feature with probability 0.05. Negatives
//! show every feature with probability 0.05. Each bit is then flipped with
//! probability `flip_noise`. A true positive is labeled (`z = 1`) with
//! probability `c`, independently of its features, so unlabeled true
//! positives end up in `U` as contaminants.
//!
//! Because every distribution is explicit, [`GenerativeModel::posterior`]
//! gives the exact `p(y = 1 | x)` for any vector.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{AppSample, Feature, FeatureKind, FeatureSpace, PuDataset, SparseBinaryVector};
use crate::rng;

pub const SIGNAL_PRESENCE: f64 = 0.8;
pub const BACKGROUND_PRESENCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_positive: usize,
    pub n_negative: usize,
    pub dimension: usize,
    /// Signal features per family.
    pub signal_features: usize,
    pub flip_noise: f64,
    pub label_frequency_c: f64,
    pub n_families: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// The standard experiment setting.
    fn default() -> Self {
        SyntheticSpec {
            n_positive: 2000,
            n_negative: 6000,
            dimension: 200,
            signal_features: 8,
            flip_noise: 0.05,
            label_frequency_c: 1.0,
            n_families: 4,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_positive == 0 || self.n_negative == 0 {
            return bad("generator needs at least one positive and one negative".into());
        }
        if self.n_families == 0 || self.n_families > self.n_positive {
            return bad(format!("{} families cannot partition {} positives", self.n_families, self.n_positive));
        }
        if self.signal_features == 0 || self.signal_features * self.n_families > self.dimension {
            return bad(format!(
                "{} families x {} signal features exceed dimension {}",
                self.n_families, self.signal_features, self.dimension
            ));
        }
        if !(0.0..0.5).contains(&self.flip_noise) {
            return bad(format!("flip_noise must lie in [0, 0.5), got {}", self.flip_noise));
        }
        if !(self.label_frequency_c > 0.0 && self.label_frequency_c <= 1.0) {
            return bad(format!("label frequency must lie in (0, 1], got {}", self.label_frequency_c));
        }
        Ok(())
    }

    /// Reads `key = value` lines (TOML). Missing keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    fn family_of(&self, positive_index: usize) -> usize {
        positive_index * self.n_families / self.n_positive
    }

    fn family_size(&self, family: usize) -> usize {
        (0..self.n_positive).filter(|&i| self.family_of(i) == family).count()
    }

    /// Whether feature `i` carries signal for members of `family`.
    fn is_signal(&self, family: usize, i: usize) -> bool {
        let s = self.signal_features;
        (family * s..(family + 1) * s).contains(&i)
    }
}

/// The exact distributions behind a [`SyntheticSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    prior_positive: f64,
    family_weights: Vec<f64>,
    /// Per family: probability each feature is 1 after flipping.
    family_presence: Vec<Vec<f64>>,
    negative_presence: Vec<f64>,
}

fn flipped(p: f64, flip: f64) -> f64 {
    p * (1.0 - flip) + (1.0 - p) * flip
}

fn log_likelihood(presence: &[f64], x: &SparseBinaryVector) -> f64 {
    let absent: f64 = presence.iter().map(|q| (1.0 - q).ln()).sum();
    absent + x.iter().map(|i| presence[i].ln() - (1.0 - presence[i]).ln()).sum::<f64>()
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

impl GenerativeModel {
    pub fn new(spec: &SyntheticSpec) -> Self {
        let d = spec.dimension;
        let family_presence = (0..spec.n_families)
            .map(|k| {
                (0..d)
                    .map(|i| {
                        let p = if spec.is_signal(k, i) { SIGNAL_PRESENCE } else { BACKGROUND_PRESENCE };
                        flipped(p, spec.flip_noise)
                    })
                    .collect()
            })
            .collect();
        GenerativeModel {
            prior_positive: spec.n_positive as f64 / (spec.n_positive + spec.n_negative) as f64,
            family_weights: (0..spec.n_families)
                .map(|k| spec.family_size(k) as f64 / spec.n_positive as f64)
                .collect(),
            family_presence,
            negative_presence: vec![flipped(BACKGROUND_PRESENCE, spec.flip_noise); d],
        }
    }

    /// Exact `p(y = 1 | x)`.
    pub fn posterior(&self, x: &SparseBinaryVector) -> f64 {
        let positive_terms: Vec<f64> = self
            .family_weights
            .iter()
            .zip(&self.family_presence)
            .map(|(w, q)| w.ln() + log_likelihood(q, x))
            .collect();
        let log_pos = self.prior_positive.ln() + log_sum_exp(&positive_terms);
        let log_neg = (1.0 - self.prior_positive).ln() + log_likelihood(&self.negative_presence, x);
        1.0 / (1.0 + (log_neg - log_pos).exp())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub spec: SyntheticSpec,
    pub dataset: PuDataset,
    /// Family of every true positive, by sample id.
    pub families: BTreeMap<String, usize>,
    pub model: GenerativeModel,
}

pub fn synthetic_space(dimension: usize) -> FeatureSpace {
    FeatureSpace::new((0..dimension).map(|i| Feature::new(FeatureKind::Api, format!("syn.f{i:05}"))))
        .expect("generated names are unique")
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = rng::rng(spec.seed);
    let d = spec.dimension;

    let draw = |family: Option<usize>, rng: &mut rng::StreamRng| {
        SparseBinaryVector::from_indices((0..d).filter(|&i| {
            let p = match family {
                Some(k) if spec.is_signal(k, i) => SIGNAL_PRESENCE,
                _ => BACKGROUND_PRESENCE,
            };
            let bit = rng.gen::<f64>() < p;
            let flip = rng.gen::<f64>() < spec.flip_noise;
            bit != flip
        }))
    };

    // (features, truth, family, labeled)
    let mut raw = Vec::with_capacity(spec.n_positive + spec.n_negative);
    for i in 0..spec.n_positive {
        let family = spec.family_of(i);
        let x = draw(Some(family), &mut rng);
        let labeled = rng.gen::<f64>() < spec.label_frequency_c;
        raw.push((x, true, Some(family), labeled));
    }
    for _ in 0..spec.n_negative {
        let x = draw(None, &mut rng);
        raw.push((x, false, None, false));
    }
    raw.shuffle(&mut rng);

    let width = (raw.len().max(2) - 1).to_string().len();
    let mut positives = Vec::new();
    let mut unlabeled = Vec::new();
    let mut families = BTreeMap::new();
    for (n, (x, truth, family, labeled)) in raw.into_iter().enumerate() {
        let id = format!("app-{n:0width$}");
        if let Some(k) = family {
            families.insert(id.clone(), k);
        }
        let sample = AppSample::new(id, x, labeled, Some(truth))?;
        if labeled { positives.push(sample) } else { unlabeled.push(sample) }
    }
    Ok(SyntheticData {
        spec: *spec,
        dataset: PuDataset::new(Arc::new(synthetic_space(d)), positives, unlabeled)?,
        families,
        model: GenerativeModel::new(spec),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(c: f64, seed: u64) -> SyntheticSpec {
        SyntheticSpec { n_positive: 1000, n_negative: 1000, dimension: 40, signal_features: 5, label_frequency_c: c, n_families: 2, seed, ..Default::default() }
    }

    #[test]
    fn complete_labeling_leaves_no_contaminants() {
        let data = generate_synthetic(&small(1.0, 1)).unwrap();
        assert_eq!(data.dataset.positives().len(), 1000);
        assert!(data.dataset.unlabeled().iter().all(|s| s.hidden == Some(false)));
    }

    #[test]
    fn half_labeling_is_binomial() {
        let data = generate_synthetic(&small(0.5, 2)).unwrap();
        let p = data.dataset.positives().len() as f64;
        // Binomial(1000, 0.5): sd ~ 15.8, allow 5 sd.
        assert!((p - 500.0).abs() < 80.0, "{p}");
        let contaminants = data.dataset.unlabeled().iter().filter(|s| s.hidden == Some(true)).count();
        assert_eq!(contaminants + data.dataset.positives().len(), 1000);
    }

    #[test]
    fn families_partition_positives() {
        let spec = SyntheticSpec { n_positive: 10, n_families: 3, ..small(1.0, 0) };
        let sizes: Vec<usize> = (0..3).map(|k| spec.family_size(k)).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().all(|&n| n == 3 || n == 4));
        let data = generate_synthetic(&spec).unwrap();
        assert_eq!(data.families.len(), 10);
    }

    #[test]
    fn infeasible_specs_rejected() {
        assert!(generate_synthetic(&SyntheticSpec { n_families: 2000, n_positive: 10, ..small(1.0, 0) }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { signal_features: 30, ..small(1.0, 0) }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { flip_noise: 0.5, ..small(1.0, 0) }).is_err());
        assert!(generate_synthetic(&SyntheticSpec { label_frequency_c: 0.0, ..small(1.0, 0) }).is_err());
    }

    #[test]
    fn same_seed_same_data() {
        let a = generate_synthetic(&small(0.7, 9)).unwrap();
        let b = generate_synthetic(&small(0.7, 9)).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn posterior_is_a_probability_and_orders_classes() {
        let spec = small(1.0, 4);
        let model = GenerativeModel::new(&spec);
        let signal = SparseBinaryVector::from_indices(0..5);
        let empty = SparseBinaryVector::default();
        assert!(model.posterior(&signal) > 0.99);
        assert!(model.posterior(&empty) < 0.5);
    }

    #[test]
    fn spec_from_toml() {
        let spec = SyntheticSpec::from_toml("n_positive = 50\nn_negative = 60\nseed = 3\n").unwrap();
        assert_eq!((spec.n_positive, spec.n_negative, spec.seed, spec.dimension), (50, 60, 3, 200));
        assert!(SyntheticSpec::from_toml("bogus = 1").is_err());
    }
}
