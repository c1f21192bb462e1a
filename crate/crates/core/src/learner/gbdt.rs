//! Gradient-boosted regression trees on the logistic loss.
//!
//! Each round fits a depth-limited tree to the residuals `y - p` by variance
//! reduction, then sets every leaf to the Newton step `Σ(y - p) / Σp(1 - p)`
//! over its rows. A leaf step that would raise the loss of its rows is halved
//! until it does not, so the training loss never increases between rounds.

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::Classifier;
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams<F> {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: F,
    /// Minimum rows on each side of a split.
    pub min_leaf: usize,
}

impl<F: Scalar> Default for GbdtParams<F> {
    fn default() -> Self {
        GbdtParams {
            n_trees: 100,
            max_depth: 3,
            learning_rate: F::lit(0.1),
            min_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode<F> {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: F,
        left: usize,
        right: usize,
        gain: F,
    },
    Leaf { value: F },
}

/// Nodes in preorder; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<F> {
    pub nodes: Vec<TreeNode<F>>,
}

impl<F: Scalar> Tree<F> {
    pub fn predict(&self, row: &[F]) -> F {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
                TreeNode::Leaf { value } => return *value,
            }
        }
    }

    /// `(feature, depth, gain)` for every split node.
    pub fn splits(&self) -> Vec<(usize, usize, F)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, depth)) = stack.pop() {
            if let TreeNode::Split {
                feature,
                left,
                right,
                gain,
                ..
            } = &self.nodes[at]
            {
                out.push((*feature, depth, *gain));
                stack.push((*right, depth + 1));
                stack.push((*left, depth + 1));
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.splits().iter().map(|&(_, d, _)| d + 1).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt<F> {
    pub base_score: F,
    pub learning_rate: F,
    pub trees: Vec<Tree<F>>,
    /// Mean logistic loss on the training set after each round, starting
    /// with the constant model.
    pub training_loss: Vec<F>,
}

impl<F: Scalar> Gbdt<F> {
    pub fn decision(&self, row: &[F]) -> F {
        self.trees
            .iter()
            .fold(self.base_score, |z, t| z + self.learning_rate * t.predict(row))
    }
}

impl<F: Scalar> Classifier<F> for Gbdt<F> {
    fn predict_proba(&self, row: &[F]) -> F {
        sigmoid(self.decision(row))
    }
}

fn target<F: Scalar>(y: bool) -> F {
    if y {
        F::one()
    } else {
        F::zero()
    }
}

fn row_loss<F: Scalar>(z: F, y: bool) -> F {
    softplus(z) - if y { z } else { F::zero() }
}

fn mean_loss<F: Scalar>(margins: &[F], labels: &[bool]) -> F {
    let total = margins
        .iter()
        .zip(labels)
        .fold(F::zero(), |a, (&z, &y)| a + row_loss(z, y));
    total / F::from_count(margins.len())
}

struct Builder<'a, F> {
    data: &'a Dataset<F>,
    residual: &'a [F],
    params: &'a GbdtParams<F>,
    nodes: Vec<TreeNode<F>>,
    /// Row sets of the leaves, parallel to their node index.
    leaves: Vec<(usize, Vec<usize>)>,
}

impl<F: Scalar> Builder<'_, F> {
    fn best_split(&self, rows: &[usize]) -> Option<(usize, F, F)> {
        let n = rows.len();
        if n < 2 * self.params.min_leaf.max(1) {
            return None;
        }
        let total = rows.iter().fold(F::zero(), |a, &i| a + self.residual[i]);
        let base = total * total / F::from_count(n);
        let mut best: Option<(usize, F, F)> = None;
        let mut order = rows.to_vec();
        for feature in 0..self.data.n_features() {
            order.sort_by(|&a, &b| {
                self.data
                    .value(a, feature)
                    .partial_cmp(&self.data.value(b, feature))
                    .unwrap()
                    .then(a.cmp(&b))
            });
            let mut left = F::zero();
            for k in 0..n - 1 {
                left = left + self.residual[order[k]];
                let (lo, hi) = (self.data.value(order[k], feature), self.data.value(order[k + 1], feature));
                let n_left = k + 1;
                if lo == hi || n_left < self.params.min_leaf || n - n_left < self.params.min_leaf {
                    continue;
                }
                let right = total - left;
                let gain = left * left / F::from_count(n_left) + right * right / F::from_count(n - n_left) - base;
                if best.is_none_or(|(_, _, g)| gain > g) {
                    let mid = lo + (hi - lo) / F::lit(2.0);
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some((feature, threshold, gain));
                }
            }
        }
        best.filter(|&(_, _, g)| g > F::epsilon())
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let at = self.nodes.len();
        self.nodes.push(TreeNode::Leaf { value: F::zero() });
        let split = if depth < self.params.max_depth {
            self.best_split(&rows)
        } else {
            None
        };
        match split {
            Some((feature, threshold, gain)) => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| self.data.value(i, feature) <= threshold);
                let left = self.grow(l, depth + 1);
                let right = self.grow(r, depth + 1);
                self.nodes[at] = TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    gain,
                };
            }
            None => self.leaves.push((at, rows)),
        }
        at
    }
}

pub fn train_gbdt<F: Scalar>(data: &Dataset<F>, params: &GbdtParams<F>) -> Result<Gbdt<F>> {
    data.check_two_classes()?;
    if params.learning_rate <= F::zero() || params.max_depth == 0 {
        return Err(Error::Config("gbdt needs learning_rate > 0 and max_depth >= 1".into()));
    }
    let labels = data.labels();
    let prior = F::from_count(data.positives()) / F::from_count(data.len());
    let base_score = (prior / (F::one() - prior)).ln();
    let mut margins = vec![base_score; data.len()];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut training_loss = vec![mean_loss(&margins, labels)];
    let lr = params.learning_rate;

    for _ in 0..params.n_trees {
        let residual: Vec<F> = margins
            .iter()
            .zip(labels)
            .map(|(&z, &y)| target::<F>(y) - sigmoid(z))
            .collect();
        let mut builder = Builder {
            data,
            residual: &residual,
            params,
            nodes: Vec::new(),
            leaves: Vec::new(),
        };
        builder.grow((0..data.len()).collect(), 0);
        let Builder { mut nodes, leaves, .. } = builder;

        for (at, rows) in leaves {
            let g = rows.iter().fold(F::zero(), |a, &i| a + residual[i]);
            let h = rows.iter().fold(F::zero(), |a, &i| {
                let p = sigmoid(margins[i]);
                a + p * (F::one() - p)
            });
            let mut value = if h > F::zero() { g / h } else { F::zero() };
            let before = rows.iter().fold(F::zero(), |a, &i| a + row_loss(margins[i], labels[i]));
            let mut halvings = 0;
            loop {
                let after = rows
                    .iter()
                    .fold(F::zero(), |a, &i| a + row_loss(margins[i] + lr * value, labels[i]));
                if after <= before {
                    break;
                }
                halvings += 1;
                value = if halvings > 60 { F::zero() } else { value / F::lit(2.0) };
            }
            for &i in &rows {
                margins[i] = margins[i] + lr * value;
            }
            nodes[at] = TreeNode::Leaf { value };
        }
        trees.push(Tree { nodes });
        training_loss.push(mean_loss(&margins, labels));
    }

    Ok(Gbdt {
        base_score,
        learning_rate: lr,
        trees,
        training_loss,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: usize,
    pub name: String,
    /// Σ 2^-depth over the splits that use the feature (root depth 0).
    pub level_score: f64,
    /// Total variance reduction of those splits.
    pub gain_score: f64,
}

/// Feature scores sorted by `level_score` descending, ties by index.
pub fn feature_importance<F: Scalar>(model: &Gbdt<F>, names: &[&str]) -> Vec<FeatureScore> {
    let mut scores: Vec<FeatureScore> = names
        .iter()
        .enumerate()
        .map(|(feature, name)| FeatureScore {
            feature,
            name: name.to_string(),
            level_score: 0.0,
            gain_score: 0.0,
        })
        .collect();
    for tree in &model.trees {
        for (feature, depth, gain) in tree.splits() {
            if let Some(s) = scores.get_mut(feature) {
                s.level_score += 0.5f64.powi(depth as i32);
                s.gain_score += gain.as_f64();
            }
        }
    }
    scores.sort_by(|a, b| {
        b.level_score
            .partial_cmp(&a.level_score)
            .unwrap()
            .then(a.feature.cmp(&b.feature))
    });
    scores
}
