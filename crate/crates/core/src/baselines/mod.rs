//! Non-neural comparison models over encoded design matrices.

mod forest;
mod logreg;
mod tree;

pub use forest::{forest_fit, ForestConfig, ForestModel};
pub use logreg::{logreg_fit, LogRegConfig, LogRegModel};
pub use tree::{gini, tree_fit, TreeConfig, TreeModel, TreeNode};
