//! Occurrence-threshold feature selection.
//!
//! A feature survives when it is common enough in at least one group: it
//! occurs in at least `tm` labeled-malicious apps or in at least `tb`
//! unlabeled apps. The unlabeled threshold scales with the group-size ratio
//! so that the larger group needs proportionally more occurrences:
//!
//! ```text
//! tm = round(eta)
//! tb = ceil(tm * |U| / |P|)
//! ```

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feature::{AppSample, FeatureSpace, PuDataset, SparseBinaryVector};

pub const DEFAULT_ETA: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionThresholds {
    pub eta: f64,
    pub tm: usize,
    pub tb: usize,
}

/// Per-feature occurrence counts in `P` and in `U`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OccurrenceCounts {
    pub positive: Vec<usize>,
    pub unlabeled: Vec<usize>,
}

impl OccurrenceCounts {
    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    pub fn get(&self, index: usize) -> (usize, usize) {
        (self.positive[index], self.unlabeled[index])
    }
}

fn count_group(samples: &[AppSample], dimension: usize) -> Vec<usize> {
    samples
        .par_chunks(1024)
        .map(|chunk| {
            let mut counts = vec![0usize; dimension];
            for s in chunk {
                for i in s.features.iter() {
                    counts[i] += 1;
                }
            }
            counts
        })
        .reduce(
            || vec![0usize; dimension],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

pub fn count_occurrences(ds: &PuDataset) -> OccurrenceCounts {
    let d = ds.dimension();
    OccurrenceCounts {
        positive: count_group(ds.positives(), d),
        unlabeled: count_group(ds.unlabeled(), d),
    }
}

pub fn compute_thresholds(ds: &PuDataset, eta: f64) -> Result<SelectionThresholds> {
    thresholds_for_sizes(ds.positives().len(), ds.unlabeled().len(), eta)
}

pub fn thresholds_for_sizes(n_positive: usize, n_unlabeled: usize, eta: f64) -> Result<SelectionThresholds> {
    if n_positive == 0 || n_unlabeled == 0 {
        return Err(Error::Config("feature selection needs non-empty positive and unlabeled groups".into()));
    }
    if !(eta >= 1.0) || !eta.is_finite() {
        return Err(Error::Config(format!("eta must be a finite value >= 1, got {eta}")));
    }
    let tm = (eta.round() as usize).max(1);
    let tb = (tm * n_unlabeled).div_ceil(n_positive).max(1);
    Ok(SelectionThresholds { eta, tm, tb })
}

/// Indices of the features meeting either threshold, ascending.
pub fn select_features(counts: &OccurrenceCounts, th: &SelectionThresholds) -> Vec<usize> {
    (0..counts.len())
        .filter(|&i| counts.positive[i] >= th.tm || counts.unlabeled[i] >= th.tb)
        .collect()
}

/// Restricts a dataset to `retained` features, re-indexing in original order.
pub fn project_dataset(ds: &PuDataset, retained: &[usize]) -> Result<PuDataset> {
    let d = ds.dimension();
    let mut remap = vec![usize::MAX; d];
    let mut kept = Vec::with_capacity(retained.len());
    for &old in retained {
        if old >= d {
            return Err(Error::DimensionMismatch { index: old, dimension: d });
        }
        if remap[old] == usize::MAX {
            kept.push(old);
            remap[old] = 0;
        }
    }
    kept.sort_unstable();
    for (new, &old) in kept.iter().enumerate() {
        remap[old] = new;
    }
    let features = kept.iter().map(|&i| ds.space().features()[i].clone()).collect();
    let space = FeatureSpace::from_ordered(features)?;

    let project = |s: &AppSample| AppSample {
        features: SparseBinaryVector::from_indices(
            s.features.iter().filter(|&i| remap[i] != usize::MAX).map(|i| remap[i]),
        ),
        ..s.clone()
    };
    PuDataset::new(
        Arc::new(space),
        ds.positives().iter().map(project).collect(),
        ds.unlabeled().iter().map(project).collect(),
    )
}

/// Which reading of the threshold relation the selection applies, recorded
/// alongside any output that depends on it.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ThresholdRule {
    pub applied: &'static str,
    pub alternative: &'static str,
    pub combination: &'static str,
}

pub fn threshold_rule() -> ThresholdRule {
    ThresholdRule {
        applied: "tm = round(eta); tb = ceil(tm * |U| / |P|)",
        alternative: "tm / tb = eta * |U| / |P| (not applied)",
        combination: "or: retained if count_P >= tm or count_U >= tb",
    }
}
