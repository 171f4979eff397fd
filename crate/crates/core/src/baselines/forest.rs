use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::tensor::Matrix;

use super::tree::{argmax_counts, check_inputs, grow, TreeConfig, TreeModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples: usize,
    pub bootstrap: bool,
    /// Features tried per split; `None` means `floor(sqrt(width))`.
    pub max_features: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples: 2,
            bootstrap: true,
            max_features: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<TreeModel>,
    pub feature_subsample: usize,
    pub seed: u64,
    pub classes: usize,
}

/// Bagged CART trees; tree `t` draws from its own generator seeded by `derive_seed(seed, t)`.
pub fn forest_fit(
    x: &Matrix,
    labels: &[u32],
    classes: usize,
    config: &ForestConfig,
) -> Result<ForestModel> {
    if config.n_trees == 0 {
        return Err(Error::config("a forest needs at least one tree"));
    }
    check_inputs(x, labels, classes)?;
    let width = x.cols();
    let m = config
        .max_features
        .unwrap_or_else(|| (width as f64).sqrt().floor() as usize)
        .clamp(1, width.max(1));
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_samples: config.min_samples,
    };
    let n = x.rows();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded(derive_seed(config.seed, t as u64));
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let all: Vec<usize> = (0..width).collect();
            let mut pick = || {
                if m >= width {
                    all.clone()
                } else {
                    let mut f = sample(&mut rng, width, m).into_vec();
                    f.sort_unstable();
                    f
                }
            };
            grow(x, labels, classes, rows, &tree_config, &mut pick)
        })
        .collect();
    Ok(ForestModel {
        trees,
        feature_subsample: m,
        seed: config.seed,
        classes,
    })
}

impl ForestModel {
    pub fn votes(&self, row: &[f64]) -> Vec<u32> {
        let mut votes = vec![0u32; self.classes];
        for t in &self.trees {
            votes[t.predict_row(row) as usize] += 1;
        }
        votes
    }

    /// Majority vote, ties to the lowest class index.
    pub fn predict(&self, x: &Matrix) -> Vec<u32> {
        x.iter_rows()
            .map(|r| argmax_counts(&self.votes(r)))
            .collect()
    }

    /// Vote fractions.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix> {
        let width = self.trees[0].width;
        if x.cols() != width {
            return Err(Error::data(format!(
                "expected {width} features, got {}",
                x.cols()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), self.classes);
        let n = self.trees.len() as f64;
        for i in 0..x.rows() {
            let votes = self.votes(x.row(i));
            for (o, v) in out.row_mut(i).iter_mut().zip(votes) {
                *o = v as f64 / n;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::tree::{tree_fit, TreeNode};

    fn noisy(n: usize, seed: u64) -> (Matrix, Vec<u32>) {
        let mut rng = seeded(seed);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let a = rng.gen_range(0..3usize);
            let b = rng.gen_range(0..3usize);
            let mut row = vec![0.0; 9];
            row[a] = 1.0;
            row[3 + b] = 1.0;
            row[6 + rng.gen_range(0..3usize)] = 1.0;
            data.extend(row);
            labels.push(if rng.gen::<f64>() < 0.1 {
                rng.gen_range(0..3)
            } else {
                ((a + b) % 3) as u32
            });
        }
        (Matrix::from_vec(n, 9, data), labels)
    }

    #[test]
    fn degenerate_forest_is_a_tree() {
        let (x, y) = noisy(150, 1);
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            max_features: Some(9),
            ..Default::default()
        };
        let f = forest_fit(&x, &y, 3, &cfg).unwrap();
        let t = tree_fit(&x, &y, 3, &TreeConfig::default()).unwrap();
        assert_eq!(f.trees[0], t);
    }

    #[test]
    fn same_seed_same_forest() {
        let (x, y) = noisy(120, 2);
        let cfg = ForestConfig {
            n_trees: 7,
            seed: 5,
            ..Default::default()
        };
        let a = forest_fit(&x, &y, 3, &cfg).unwrap();
        assert_eq!(a, forest_fit(&x, &y, 3, &cfg).unwrap());
        assert_eq!(a.feature_subsample, 3);
        let other = forest_fit(&x, &y, 3, &ForestConfig { seed: 6, ..cfg }).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn vote_ties_go_to_lowest_class() {
        let leaf = |c: u32| TreeModel {
            nodes: vec![TreeNode::Leaf {
                counts: if c == 0 {
                    vec![1, 0, 0]
                } else if c == 1 {
                    vec![0, 1, 0]
                } else {
                    vec![0, 0, 1]
                },
            }],
            classes: 3,
            width: 1,
        };
        let f = ForestModel {
            trees: vec![leaf(2), leaf(1), leaf(2), leaf(1)],
            feature_subsample: 1,
            seed: 0,
            classes: 3,
        };
        let x = Matrix::from_vec(1, 1, vec![0.0]);
        assert_eq!(f.predict(&x), vec![1]);
        assert_eq!(f.predict_proba(&x).unwrap().row(0), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn forest_reports_against_tree() {
        let (x, y) = noisy(400, 3);
        let (xt, yt) = noisy(200, 4);
        let f = forest_fit(
            &x,
            &y,
            3,
            &ForestConfig {
                n_trees: 25,
                seed: 1,
                ..Default::default()
            },
        )
        .unwrap();
        let t = tree_fit(&x, &y, 3, &TreeConfig::default()).unwrap();
        let acc = |p: Vec<u32>, l: &[u32]| {
            p.iter().zip(l).filter(|(a, b)| a == b).count() as f64 / l.len() as f64
        };
        let forest_train = acc(f.predict(&x), &y);
        let tree_test = acc(t.predict(&xt), &yt);
        eprintln!("forest train accuracy {forest_train:.3}, tree test accuracy {tree_test:.3}");
        assert!(forest_fit(
            &x,
            &y,
            3,
            &ForestConfig {
                n_trees: 0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
