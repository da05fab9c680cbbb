//! Domain types shared by every stage of the pipeline.
//!
//! A [`FeatureSpace`] fixes the index of every feature, a
//! [`SparseBinaryVector`] stores which of those features an app exhibits, and
//! a [`PuDataset`] splits apps into the labeled-malicious group `P` and the
//! unlabeled group `U`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Permission,
    Api,
    #[serde(rename = "ip")]
    IpAddress,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 3] = [FeatureKind::Permission, FeatureKind::Api, FeatureKind::IpAddress];

    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Permission => "permission",
            FeatureKind::Api => "api",
            FeatureKind::IpAddress => "ip",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permission" => Ok(FeatureKind::Permission),
            "api" => Ok(FeatureKind::Api),
            "ip" => Ok(FeatureKind::IpAddress),
            other => Err(Error::Dataset(format!("unknown feature kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Feature {
    pub kind: FeatureKind,
    pub name: String,
}

impl Feature {
    pub fn new(kind: FeatureKind, name: impl Into<String>) -> Self {
        Feature { kind, name: name.into() }
    }
}

/// The ordered universe of features. Position in the list is the vector index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSpace {
    features: Vec<Feature>,
    lookup: HashMap<(FeatureKind, String), usize>,
}

impl FeatureSpace {
    /// Builds a space ordered lexicographically by `(kind, name)`.
    ///
    /// Duplicate `(kind, name)` pairs collapse; a name reused under two
    /// different kinds is rejected.
    pub fn new(features: impl IntoIterator<Item = Feature>) -> Result<Self> {
        let mut features: Vec<Feature> = features.into_iter().collect();
        features.sort();
        features.dedup();
        Self::from_ordered(features)
    }

    /// Builds a space that keeps the given order verbatim.
    pub fn from_ordered(features: Vec<Feature>) -> Result<Self> {
        let mut names = HashSet::with_capacity(features.len());
        let mut lookup = HashMap::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Dataset(format!("duplicate feature name `{}`", f.name)));
            }
            lookup.insert((f.kind, f.name.clone()), i);
        }
        Ok(FeatureSpace { features, lookup })
    }

    pub fn empty() -> Self {
        FeatureSpace { features: Vec::new(), lookup: HashMap::new() }
    }

    pub fn dimension(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> Option<&Feature> {
        self.features.get(index)
    }

    pub fn index_of(&self, kind: FeatureKind, name: &str) -> Option<usize> {
        self.lookup.get(&(kind, name.to_string())).copied()
    }

    /// Indices of every feature of `kind`, in space order.
    pub fn kind_partition(&self, kind: FeatureKind) -> Vec<usize> {
        self.features
            .iter()
            .enumerate()
            .filter(|(_, f)| f.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Set of feature indices whose value is 1. Indices are strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SparseBinaryVector {
    indices: Vec<u32>,
}

impl SparseBinaryVector {
    /// Accepts indices in any order; duplicates collapse.
    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        let mut indices: Vec<u32> = indices.into_iter().map(|i| i as u32).collect();
        indices.sort_unstable();
        indices.dedup();
        SparseBinaryVector { indices }
    }

    /// Inverse of [`densify`](Self::densify). Every entry must be 0 or 1.
    pub fn sparsify(dense: &[u8]) -> Result<Self> {
        let mut indices = Vec::new();
        for (i, &v) in dense.iter().enumerate() {
            match v {
                0 => {}
                1 => indices.push(i as u32),
                other => {
                    return Err(Error::Dataset(format!("non-binary value {other} at position {i}")));
                }
            }
        }
        Ok(SparseBinaryVector { indices })
    }

    pub fn densify(&self, dimension: usize) -> Result<Vec<u8>> {
        self.check_dimension(dimension)?;
        let mut out = vec![0u8; dimension];
        for &i in &self.indices {
            out[i as usize] = 1;
        }
        Ok(out)
    }

    pub fn check_dimension(&self, dimension: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last as usize >= dimension => Err(Error::DimensionMismatch {
                index: last as usize,
                dimension,
            }),
            _ => Ok(()),
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.indices.iter().map(|&i| i as usize)
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&(index as u32)).is_ok()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.indices.iter().map(|&i| weights[i as usize]).sum()
    }
}

/// Free-function form of [`SparseBinaryVector::densify`].
pub fn densify(v: &SparseBinaryVector, dimension: usize) -> Result<Vec<u8>> {
    v.densify(dimension)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSample {
    pub id: String,
    pub features: SparseBinaryVector,
    /// `z`: true when the app is labeled malicious.
    pub discovery: bool,
    /// `y`: ground truth, present only for generated data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<bool>,
}

impl AppSample {
    pub fn new(
        id: impl Into<String>,
        features: SparseBinaryVector,
        discovery: bool,
        hidden: Option<bool>,
    ) -> Result<Self> {
        let sample = AppSample { id: id.into(), features, discovery, hidden };
        sample.check_consistency()?;
        Ok(sample)
    }

    /// A labeled sample is never known benign.
    pub fn check_consistency(&self) -> Result<()> {
        if self.discovery && self.hidden == Some(false) {
            return Err(Error::Dataset(format!(
                "sample `{}` is labeled malicious but its ground truth is benign",
                self.id
            )));
        }
        Ok(())
    }

    pub fn without_ground_truth(&self) -> Self {
        AppSample { hidden: None, ..self.clone() }
    }
}

/// Samples split into the labeled group `P` and the unlabeled group `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct PuDataset {
    space: Arc<FeatureSpace>,
    positives: Vec<AppSample>,
    unlabeled: Vec<AppSample>,
}

impl PuDataset {
    pub fn new(
        space: Arc<FeatureSpace>,
        positives: Vec<AppSample>,
        unlabeled: Vec<AppSample>,
    ) -> Result<Self> {
        let dimension = space.dimension();
        let mut ids = HashSet::with_capacity(positives.len() + unlabeled.len());
        for (group, expected) in [(&positives, true), (&unlabeled, false)] {
            for s in group {
                if s.discovery != expected {
                    return Err(Error::Dataset(format!(
                        "sample `{}` has discovery={} but sits in the {} group",
                        s.id,
                        u8::from(s.discovery),
                        if expected { "positive" } else { "unlabeled" }
                    )));
                }
                s.check_consistency()?;
                s.features.check_dimension(dimension)?;
                if !ids.insert(s.id.as_str()) {
                    return Err(Error::Dataset(format!("duplicate sample id `{}`", s.id)));
                }
            }
        }
        Ok(PuDataset { space, positives, unlabeled })
    }

    pub fn space(&self) -> &FeatureSpace {
        &self.space
    }

    pub fn shared_space(&self) -> Arc<FeatureSpace> {
        Arc::clone(&self.space)
    }

    pub fn dimension(&self) -> usize {
        self.space.dimension()
    }

    pub fn positives(&self) -> &[AppSample] {
        &self.positives
    }

    pub fn unlabeled(&self) -> &[AppSample] {
        &self.unlabeled
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.unlabeled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every sample, `P` first.
    pub fn samples(&self) -> impl Iterator<Item = &AppSample> {
        self.positives.iter().chain(self.unlabeled.iter())
    }

    /// Copy with every ground-truth field removed.
    pub fn without_ground_truth(&self) -> Self {
        PuDataset {
            space: Arc::clone(&self.space),
            positives: self.positives.iter().map(AppSample::without_ground_truth).collect(),
            unlabeled: self.unlabeled.iter().map(AppSample::without_ground_truth).collect(),
        }
    }

    pub fn into_parts(self) -> (Arc<FeatureSpace>, Vec<AppSample>, Vec<AppSample>) {
        (self.space, self.positives, self.unlabeled)
    }
}
