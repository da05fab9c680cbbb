//! Probabilistic binary classifiers over sparse binary features.
//!
//! Every model maps a feature vector to a score in `[0, 1]` that estimates
//! the probability of the positive target. Three learners are available: an
//! L2-regularized logistic model, a Gini decision tree with add-one smoothed
//! leaves, and a bagged forest of such trees.

mod forest;
mod linear;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};

pub use forest::RandomForest;
pub use linear::{LinearModel, LinearObjective};
pub use tree::{DecisionTree, TreeNode};

use crate::error::{Error, Result};
use crate::feature::{PuDataset, SparseBinaryVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Learner {
    Linear,
    Tree,
    Forest,
}

impl Learner {
    pub const ALL: [Learner; 3] = [Learner::Linear, Learner::Tree, Learner::Forest];

    pub fn as_str(self) -> &'static str {
        match self {
            Learner::Linear => "linear",
            Learner::Tree => "tree",
            Learner::Forest => "forest",
        }
    }
}

impl fmt::Display for Learner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Learner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(Learner::Linear),
            "tree" => Ok(Learner::Tree),
            "forest" => Ok(Learner::Forest),
            other => Err(Error::Config(format!("unknown learner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams { learning_rate: 1.0, epochs: 1000, l2: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams { max_depth: 12, min_leaf: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeaturesPerSplit {
    /// `ceil(sqrt(d))`
    Sqrt,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, dimension: usize) -> usize {
        match self {
            FeaturesPerSplit::Sqrt => (dimension as f64).sqrt().ceil() as usize,
            FeaturesPerSplit::Count(k) => k,
        }
    }
}

impl Serialize for FeaturesPerSplit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FeaturesPerSplit::Sqrt => s.serialize_str("sqrt"),
            FeaturesPerSplit::Count(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl FromStr for FeaturesPerSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("sqrt") {
            return Ok(FeaturesPerSplit::Sqrt);
        }
        s.parse::<usize>()
            .map(FeaturesPerSplit::Count)
            .map_err(|_| Error::Config(format!("features per split must be `sqrt` or a count, got `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub features_per_split: FeaturesPerSplit,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, features_per_split: FeaturesPerSplit::Sqrt, bootstrap: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub learner: Learner,
    pub linear: LinearParams,
    pub tree: TreeParams,
    pub forest: ForestParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            learner: Learner::Forest,
            linear: LinearParams::default(),
            tree: TreeParams::default(),
            forest: ForestParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_learner(self, learner: Learner) -> Self {
        TrainConfig { learner, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        TrainConfig { seed, ..self }
    }

    pub fn validate(&self, dimension: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let lin = &self.linear;
        if !(lin.learning_rate > 0.0) || !lin.learning_rate.is_finite() {
            return bad(format!("learning rate must be positive, got {}", lin.learning_rate));
        }
        if lin.epochs == 0 {
            return bad("epochs must be at least 1".into());
        }
        if !(lin.l2 >= 0.0) || !lin.l2.is_finite() {
            return bad(format!("l2 must be non-negative, got {}", lin.l2));
        }
        if self.tree.max_depth == 0 {
            return bad("max_depth must be at least 1".into());
        }
        if self.tree.min_leaf == 0 {
            return bad("min_leaf must be at least 1".into());
        }
        if self.forest.n_trees == 0 {
            return bad("n_trees must be at least 1".into());
        }
        if let FeaturesPerSplit::Count(k) = self.forest.features_per_split {
            if k == 0 || k > dimension.max(1) {
                return bad(format!("features_per_split {k} must lie in 1..={}", dimension.max(1)));
            }
        }
        Ok(())
    }
}

/// Borrowed training rows with binary targets.
#[derive(Debug, Clone)]
pub struct TrainingSet<'a> {
    dimension: usize,
    rows: Vec<&'a SparseBinaryVector>,
    targets: Vec<bool>,
}

impl<'a> TrainingSet<'a> {
    pub fn new(dimension: usize, rows: Vec<&'a SparseBinaryVector>, targets: Vec<bool>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::Training(format!("{} rows but {} targets", rows.len(), targets.len())));
        }
        for r in &rows {
            r.check_dimension(dimension)?;
        }
        Ok(TrainingSet { dimension, rows, targets })
    }

    /// Rows of `ds` with the discovery state `z` as target.
    pub fn from_discovery(ds: &'a PuDataset) -> Self {
        let rows = ds.samples().map(|s| &s.features).collect();
        let targets = ds.samples().map(|s| s.discovery).collect();
        TrainingSet { dimension: ds.dimension(), rows, targets }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn rows(&self) -> &[&'a SparseBinaryVector] {
        &self.rows
    }

    pub fn targets(&self) -> &[bool] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn positives(&self) -> usize {
        self.targets.iter().filter(|&&t| t).count()
    }
}

/// A trained model producing `f(x)` in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "learner", rename_all = "lowercase")]
pub enum Classifier {
    Linear(LinearModel),
    Tree(DecisionTree),
    Forest(RandomForest),
}

pub const MODEL_FORMAT: &str = "pudroid-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    model: Classifier,
}

impl Classifier {
    pub fn learner(&self) -> Learner {
        match self {
            Classifier::Linear(_) => Learner::Linear,
            Classifier::Tree(_) => Learner::Tree,
            Classifier::Forest(_) => Learner::Forest,
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            Classifier::Linear(m) => m.dimension(),
            Classifier::Tree(m) => m.dimension(),
            Classifier::Forest(m) => m.dimension(),
        }
    }

    pub fn score(&self, x: &SparseBinaryVector) -> Result<f64> {
        x.check_dimension(self.dimension())?;
        Ok(match self {
            Classifier::Linear(m) => m.score(x),
            Classifier::Tree(m) => m.score(x),
            Classifier::Forest(m) => m.score(x),
        })
    }

    /// `score(x) > threshold`.
    pub fn classify(&self, x: &SparseBinaryVector, threshold: f64) -> Result<bool> {
        Ok(self.score(x)? > threshold)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ModelFile { format: MODEL_FORMAT.into(), model: self.clone() };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::Serde(format!("unsupported model format `{}`", file.format)));
        }
        Ok(file.model)
    }
}

pub fn train(data: &TrainingSet<'_>, cfg: &TrainConfig) -> Result<Classifier> {
    if data.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    let pos = data.positives();
    if pos == 0 || pos == data.len() {
        return Err(Error::Training("degenerate target: only one class present".into()));
    }
    cfg.validate(data.dimension())?;
    Ok(match cfg.learner {
        Learner::Linear => Classifier::Linear(LinearModel::fit(data, &cfg.linear)),
        Learner::Tree => Classifier::Tree(DecisionTree::fit(data, &cfg.tree)),
        Learner::Forest => Classifier::Forest(RandomForest::fit(data, &cfg.tree, &cfg.forest, cfg.seed)),
    })
}

/// `1` iff `score > threshold`; the boundary itself counts as negative.
pub fn classify(model: &Classifier, x: &SparseBinaryVector, threshold: f64) -> Result<bool> {
    model.classify(x, threshold)
}
