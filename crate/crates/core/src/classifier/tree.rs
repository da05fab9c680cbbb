//! Binary-split CART tree. Each internal node tests one feature for presence;
//! leaves store raw class counts and score `(positives + 1) / (total + 2)`.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{TrainingSet, TreeParams};
use crate::feature::SparseBinaryVector;

// Gains at or below this are treated as no improvement.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Leaf { positives: u32, total: u32 },
    Split { feature: u32, absent: u32, present: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    dimension: usize,
    nodes: Vec<TreeNode>,
}

fn gini(positives: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = positives as f64 / total as f64;
    let q = (total - positives) as f64 / total as f64;
    1.0 - p * p - q * q
}

fn leaf_probability(positives: u32, total: u32) -> f64 {
    (f64::from(positives) + 1.0) / (f64::from(total) + 2.0)
}

struct Grower<'d, 'r, R> {
    data: &'d TrainingSet<'r>,
    params: TreeParams,
    /// Candidate features per node; `None` means every feature.
    subsample: Option<usize>,
    rng: Option<&'d mut R>,
    nodes: Vec<TreeNode>,
    present_total: Vec<u32>,
    present_pos: Vec<u32>,
}

impl<R: Rng> Grower<'_, '_, R> {
    fn grow(&mut self, samples: &mut [usize], depth: usize) -> usize {
        let n = samples.len();
        let pos = samples.iter().filter(|&&i| self.data.targets()[i]).count();
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { positives: pos as u32, total: n as u32 });

        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf || pos == 0 || pos == n {
            return at;
        }
        let Some(feature) = self.best_split(samples, pos) else {
            return at;
        };

        let present_count = partition_back(samples, |&i| self.data.rows()[i].contains(feature));
        let (absent, present) = samples.split_at_mut(n - present_count);
        let absent_node = self.grow(absent, depth + 1) as u32;
        let present_node = self.grow(present, depth + 1) as u32;
        self.nodes[at] = TreeNode::Split { feature: feature as u32, absent: absent_node, present: present_node };
        at
    }

    fn best_split(&mut self, samples: &[usize], pos: usize) -> Option<usize> {
        let d = self.data.dimension();
        let candidates: Vec<usize> = match (self.subsample, self.rng.as_deref_mut()) {
            (Some(k), Some(rng)) if k < d => {
                let mut c = index::sample(rng, d, k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..d).collect(),
        };

        for &i in samples {
            let t = self.data.targets()[i];
            for f in self.data.rows()[i].iter() {
                self.present_total[f] += 1;
                self.present_pos[f] += u32::from(t);
            }
        }

        let n = samples.len();
        let parent = gini(pos, n);
        let min_leaf = self.params.min_leaf;
        let mut best: Option<(usize, f64)> = None;
        for &f in &candidates {
            let nl = self.present_total[f] as usize;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let pl = self.present_pos[f] as usize;
            let pr = pos - pl;
            let child = (nl as f64 / n as f64) * gini(pl, nl) + (nr as f64 / n as f64) * gini(pr, nr);
            let gain = parent - child;
            if gain > MIN_GAIN && best.is_none_or(|(_, g)| gain > g) {
                best = Some((f, gain));
            }
        }

        for &i in samples {
            for f in self.data.rows()[i].iter() {
                self.present_total[f] = 0;
                self.present_pos[f] = 0;
            }
        }
        best.map(|(f, _)| f)
    }
}

/// Moves elements matching `pred` to the back; returns how many matched.
fn partition_back<T>(items: &mut [T], pred: impl Fn(&T) -> bool) -> usize {
    let mut boundary = items.len();
    let mut i = 0;
    while i < boundary {
        if pred(&items[i]) {
            boundary -= 1;
            items.swap(i, boundary);
        } else {
            i += 1;
        }
    }
    items.len() - boundary
}

impl DecisionTree {
    pub fn fit(data: &TrainingSet<'_>, params: &TreeParams) -> Self {
        let mut samples: Vec<usize> = (0..data.len()).collect();
        Self::fit_samples::<rand_chacha::ChaCha8Rng>(data, params, &mut samples, None, None)
    }

    /// Grows a tree over `samples` (indices into `data`, repeats allowed).
    /// When `subsample` and `rng` are given, each node considers only that
    /// many randomly drawn features.
    pub(super) fn fit_samples<R: Rng>(
        data: &TrainingSet<'_>,
        params: &TreeParams,
        samples: &mut [usize],
        subsample: Option<usize>,
        rng: Option<&mut R>,
    ) -> Self {
        let d = data.dimension();
        let mut grower = Grower {
            data,
            params: *params,
            subsample,
            rng,
            nodes: Vec::new(),
            present_total: vec![0; d],
            present_pos: vec![0; d],
        };
        grower.grow(samples, 0);
        DecisionTree { dimension: d, nodes: grower.nodes }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], at: usize) -> usize {
            match nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { absent, present, .. } => {
                    1 + walk(nodes, absent as usize).max(walk(nodes, present as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// The split skeleton: features tested, in node order, with leaves as `None`.
    pub fn structure(&self) -> Vec<Option<u32>> {
        self.nodes
            .iter()
            .map(|n| match n {
                TreeNode::Leaf { .. } => None,
                TreeNode::Split { feature, .. } => Some(*feature),
            })
            .collect()
    }

    pub(super) fn score(&self, x: &SparseBinaryVector) -> f64 {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { positives, total } => return leaf_probability(positives, total),
                TreeNode::Split { feature, absent, present } => {
                    at = if x.contains(feature as usize) { present } else { absent } as usize;
                }
            }
        }
    }
}
