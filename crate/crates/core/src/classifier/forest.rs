use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DecisionTree, ForestParams, TrainingSet, TreeParams};
use crate::feature::SparseBinaryVector;
use crate::rng;

/// Bagged trees; the score is the mean tree score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    dimension: usize,
    trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws from the stream `(seed, t)`, so results do not depend
    /// on how trees are scheduled across threads.
    pub fn fit(data: &TrainingSet<'_>, tree: &TreeParams, forest: &ForestParams, seed: u64) -> Self {
        let n = data.len();
        let k = forest.features_per_split.resolve(data.dimension());
        let trees = (0..forest.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(seed, t as u64);
                let mut samples: Vec<usize> = if forest.bootstrap {
                    (0..n).map(|_| rng.gen_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit_samples(data, tree, &mut samples, Some(k), Some(&mut rng))
            })
            .collect();
        RandomForest { dimension: data.dimension(), trees }
    }

    pub fn from_trees(trees: Vec<DecisionTree>) -> Self {
        let dimension = trees.first().map_or(0, DecisionTree::dimension);
        RandomForest { dimension, trees }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub(super) fn score(&self, x: &SparseBinaryVector) -> f64 {
        // Summing in sorted order makes the mean independent of tree order.
        let mut scores: Vec<f64> = self.trees.iter().map(|t| t.score(x)).collect();
        scores.sort_unstable_by(f64::total_cmp);
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}
