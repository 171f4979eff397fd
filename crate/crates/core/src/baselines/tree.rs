use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Node of a tree stored as a flat arena; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        counts: Vec<u32>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    /// Nodes with fewer rows become leaves.
    pub min_samples: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub nodes: Vec<TreeNode>,
    pub classes: usize,
    pub width: usize,
}

pub fn gini(counts: &[u32]) -> f64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    if n == 0 {
        return 0.0;
    }
    let sq: u64 = counts.iter().map(|&c| c as u64 * c as u64).sum();
    1.0 - sq as f64 / (n * n) as f64
}

pub(crate) fn check_inputs(x: &Matrix, labels: &[u32], classes: usize) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::data("cannot fit a tree on an empty table"));
    }
    if labels.len() != x.rows() {
        return Err(Error::data(format!(
            "{} labels for {} rows",
            labels.len(),
            x.rows()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::data(format!("label {l} outside {classes} classes")));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("design matrix has non-finite entries"));
    }
    Ok(())
}

struct Candidate {
    score: f64,
    feature: usize,
    threshold: f64,
}

/// Lowest weighted child Gini over the given features; ties keep the
/// earlier feature, then the lower threshold.
fn best_split(
    x: &Matrix,
    labels: &[u32],
    classes: usize,
    rows: &[usize],
    features: &[usize],
) -> Option<Candidate> {
    let n = rows.len();
    let mut total = vec![0i64; classes];
    for &r in rows {
        total[labels[r] as usize] += 1;
    }
    let total_sq: i64 = total.iter().map(|c| c * c).sum();
    let mut pairs: Vec<(f64, u32)> = Vec::with_capacity(n);
    let mut left = vec![0i64; classes];
    let mut best: Option<Candidate> = None;
    for &f in features {
        pairs.clear();
        pairs.extend(rows.iter().map(|&r| (x.row(r)[f], labels[r])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        left.fill(0);
        let (mut sq_l, mut sq_r) = (0i64, total_sq);
        for i in 0..n - 1 {
            let c = pairs[i].1 as usize;
            let right_c = total[c] - left[c];
            sq_l += 2 * left[c] + 1;
            sq_r -= 2 * right_c - 1;
            left[c] += 1;
            if pairs[i].0 == pairs[i + 1].0 {
                continue;
            }
            let (nl, nr) = ((i + 1) as f64, (n - i - 1) as f64);
            let g_l = 1.0 - sq_l as f64 / (nl * nl);
            let g_r = 1.0 - sq_r as f64 / (nr * nr);
            let score = (nl * g_l + nr * g_r) / n as f64;
            if best.as_ref().is_none_or(|b| score < b.score) {
                best = Some(Candidate {
                    score,
                    feature: f,
                    threshold: 0.5 * (pairs[i].0 + pairs[i + 1].0),
                });
            }
        }
    }
    best
}

/// Grows a tree; `pick_features` is asked for a candidate feature set at every split.
pub(crate) fn grow(
    x: &Matrix,
    labels: &[u32],
    classes: usize,
    rows: Vec<usize>,
    config: &TreeConfig,
    pick_features: &mut dyn FnMut() -> Vec<usize>,
) -> TreeModel {
    let mut nodes = vec![TreeNode::Leaf { counts: Vec::new() }];
    let mut work = vec![(0usize, rows, 0usize)];
    while let Some((id, rows, depth)) = work.pop() {
        let mut counts = vec![0u32; classes];
        for &r in &rows {
            counts[labels[r] as usize] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let capped = config.max_depth.is_some_and(|d| depth >= d);
        let split = if pure || capped || rows.len() < config.min_samples.max(2) {
            None
        } else {
            best_split(x, labels, classes, &rows, &pick_features())
        };
        match split {
            None => nodes[id] = TreeNode::Leaf { counts },
            Some(c) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows
                    .iter()
                    .partition(|&&r| x.row(r)[c.feature] <= c.threshold);
                let (li, ri) = (nodes.len(), nodes.len() + 1);
                nodes.push(TreeNode::Leaf { counts: Vec::new() });
                nodes.push(TreeNode::Leaf { counts: Vec::new() });
                nodes[id] = TreeNode::Split {
                    feature: c.feature,
                    threshold: c.threshold,
                    left: li,
                    right: ri,
                };
                work.push((ri, r, depth + 1));
                work.push((li, l, depth + 1));
            }
        }
    }
    TreeModel {
        nodes,
        classes,
        width: x.cols(),
    }
}

/// CART with Gini impurity and an exhaustive threshold scan.
pub fn tree_fit(
    x: &Matrix,
    labels: &[u32],
    classes: usize,
    config: &TreeConfig,
) -> Result<TreeModel> {
    check_inputs(x, labels, classes)?;
    let all: Vec<usize> = (0..x.cols()).collect();
    Ok(grow(
        x,
        labels,
        classes,
        (0..x.rows()).collect(),
        config,
        &mut || all.clone(),
    ))
}

impl TreeModel {
    pub fn leaf_counts(&self, row: &[f64]) -> &[u32] {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    id = if row[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    /// Majority class of the reached leaf, ties to the lowest index.
    pub fn predict_row(&self, row: &[f64]) -> u32 {
        argmax_counts(self.leaf_counts(row))
    }

    pub fn predict(&self, x: &Matrix) -> Vec<u32> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Leaf class frequencies.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.width {
            return Err(Error::data(format!(
                "expected {} features, got {}",
                self.width,
                x.cols()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.classes);
        for i in 0..x.rows() {
            let counts = self.leaf_counts(x.row(i));
            let n: u32 = counts.iter().sum();
            for (o, &c) in out.row_mut(i).iter_mut().zip(counts) {
                *o = c as f64 / n as f64;
            }
        }
        Ok(out)
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut work = vec![(0usize, 0usize)];
        while let Some((id, d)) = work.pop() {
            deepest = deepest.max(d);
            if let TreeNode::Split { left, right, .. } = &self.nodes[id] {
                work.push((*left, d + 1));
                work.push((*right, d + 1));
            }
        }
        deepest
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }
}

pub(crate) fn argmax_counts(counts: &[u32]) -> u32 {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as u32
}
