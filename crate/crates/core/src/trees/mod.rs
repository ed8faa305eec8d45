//! CART trees and the two ensembles used as chain classifiers.
//!
//! * [`fit_random_forest`]: bootstrap-aggregated Gini trees grown to purity
//!   with a fresh random feature subset at every node.
//! * [`fit_gbm`]: multinomial-deviance gradient boosting of small
//!   best-first regression trees with Newton-step leaves.

pub mod cart;
pub mod forest;
pub mod gbm;
pub mod model;

pub use cart::{fit_tree, newton_step, DecisionTree, LeafRule, Node, SplitCriterion, Target, TreeConfig};
pub use forest::{bootstrap_weights, default_mtry, fit_random_forest, ForestConfig, ForestModel};
pub use gbm::{fit_gbm, softmax, GbmConfig, GbmModel};
pub use model::{argmax, ClassifierModel, MODEL_SCHEMA_VERSION};
