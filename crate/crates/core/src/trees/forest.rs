use super::cart::{DecisionTree, Features, Grower, Ranks, Target, TreeConfig};
use crate::chain_store::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_tree: usize,
    /// Features tried per split; `None` means `floor(√K)`, at least 1.
    pub mtry: Option<usize>,
    pub tree: TreeConfig,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_tree: 500,
            mtry: None,
            tree: TreeConfig::forest_default(),
        }
    }
}

/// `floor(√K)` clamped to at least 1.
pub fn default_mtry(n_features: usize) -> usize {
    ((n_features as f64).sqrt().floor() as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub n_tree: usize,
    pub mtry: usize,
    pub seed: u64,
    pub n_features: usize,
    pub n_classes: usize,
}

impl ForestModel {
    /// Fraction of trees voting for each class.
    pub fn predict_proba_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut votes = vec![0u32; self.n_classes];
        for t in &self.trees {
            votes[t.predict(x) as usize] += 1;
        }
        let n = self.trees.len() as f64;
        votes.into_iter().map(|v| v as f64 / n).collect()
    }
}

/// Multiplicity of each of `n` rows in a size-`n` bootstrap sample.
pub fn bootstrap_weights(n: usize, rng: &mut Rng) -> Vec<u32> {
    let mut w = vec![0u32; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1;
    }
    w
}

/// Trains a classification forest on the training rows of `ds`.
///
/// Tree `t` draws its bootstrap and per-node feature subsets from stream
/// `t` under `seed`, so the result does not depend on thread scheduling.
pub fn fit_random_forest(ds: &LabeledDataset, cfg: &ForestConfig, seed: u64) -> Result<ForestModel> {
    cfg.tree.validate()?;
    let train = ds.train();
    if train.is_empty() {
        return Err(Error::InvalidArgument("training partition is empty".into()));
    }
    if cfg.n_tree == 0 {
        return Err(Error::InvalidArgument("n_tree must be positive".into()));
    }
    let k = ds.n_features();
    let mtry = cfg.mtry.unwrap_or_else(|| default_mtry(k));
    if mtry == 0 || mtry > k {
        return Err(Error::InvalidArgument(format!("mtry {mtry} outside 1..={k}")));
    }
    // compact copy of the training rows so ranks and weights index densely
    let x: Vec<f64> = train.iter().flat_map(|&i| ds.row(i).iter().copied()).collect();
    let labels: Vec<u32> = train.iter().map(|&i| ds.label(i)).collect();
    let ranks = Ranks::new(&x, k);
    let n = train.len();
    let trees = (0..cfg.n_tree)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, t as u64);
            let weights = bootstrap_weights(n, &mut r);
            let rows: Vec<u32> = (0..n as u32).filter(|&i| weights[i as usize] > 0).collect();
            Grower::new(
                &x,
                k,
                &ranks,
                Target::Classes {
                    labels: &labels,
                    n_classes: ds.n_classes(),
                },
                &weights,
                cfg.tree.max_splits,
                cfg.tree.min_node,
                Features::PerNode(mtry),
                r,
            )
            .grow(rows)
        })
        .collect();
    Ok(ForestModel {
        trees,
        n_tree: cfg.n_tree,
        mtry,
        seed,
        n_features: k,
        n_classes: ds.n_classes(),
    })
}
