use super::cart::{midpoint, newton_step, sse_gain, DecisionTree, Node, SplitCriterion, TreeConfig};
use crate::chain_store::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_rounds: usize,
    pub shrinkage: f64,
    pub bag_fraction: f64,
    pub tree: TreeConfig,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            n_rounds: 50,
            shrinkage: 0.1,
            bag_fraction: 0.5,
            tree: TreeConfig::gbm_default(),
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        if self.tree.criterion != SplitCriterion::SquaredError {
            return Err(Error::InvalidArgument("boosted trees use the squared-error criterion".into()));
        }
        if self.n_rounds == 0 {
            return Err(Error::InvalidArgument("n_rounds must be positive".into()));
        }
        if !(self.shrinkage > 0.0 && self.shrinkage <= 1.0) {
            return Err(Error::InvalidArgument(format!("shrinkage {} outside (0, 1]", self.shrinkage)));
        }
        if !(self.bag_fraction > 0.0 && self.bag_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "bag_fraction {} outside (0, 1]",
                self.bag_fraction
            )));
        }
        Ok(())
    }
}

/// Multinomial boosted trees: one regression tree per class per round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub init_scores: Vec<f64>,
    pub rounds: Vec<Vec<DecisionTree>>,
    pub shrinkage: f64,
    pub n_rounds: usize,
    pub bag_fraction: f64,
    pub n_features: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// Mean multinomial deviance over all training rows after each round.
    pub train_deviance: Vec<f64>,
}

impl GbmModel {
    /// Per-class scores `F(x)`.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut f = self.init_scores.clone();
        for round in &self.rounds {
            for (fc, tree) in f.iter_mut().zip(round) {
                *fc += self.shrinkage * tree.predict(x);
            }
        }
        f
    }

    pub fn predict_proba_unchecked(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.scores(x))
    }
}

/// Shift-stabilized softmax.
pub fn softmax(f: &[f64]) -> Vec<f64> {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = f.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn log_sum_exp(f: &[f64]) -> f64 {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + f.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Trains a multinomial boosted model on the training rows of `ds`.
///
/// Round `m` draws its subsample from stream `m` under `seed`; the per-class
/// trees of a round are fit in parallel against the same residual snapshot.
pub fn fit_gbm(ds: &LabeledDataset, cfg: &GbmConfig, seed: u64) -> Result<GbmModel> {
    cfg.validate()?;
    let train = ds.train();
    let n = train.len();
    let k = ds.n_features();
    let n_classes = ds.n_classes();
    let labels: Vec<u32> = train.iter().map(|&i| ds.label(i)).collect();
    let mut per_class = vec![0usize; n_classes];
    for &l in &labels {
        per_class[l as usize] += 1;
    }
    if let Some(c) = per_class.iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(c + 1));
    }
    let n_bag = (cfg.bag_fraction * n as f64).floor() as usize;
    if n_bag < 2 * cfg.tree.min_node {
        return Err(Error::InvalidArgument(format!(
            "subsample of {n_bag} rows is too small for min_node {}",
            cfg.tree.min_node
        )));
    }
    let x: Vec<f64> = train.iter().flat_map(|&i| ds.row(i).iter().copied()).collect();
    let presorted: Vec<Vec<u32>> = (0..k)
        .map(|f| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            // stable, so equal values stay in position order
            order.sort_by(|&a, &b| x[a as usize * k + f].total_cmp(&x[b as usize * k + f]));
            order
        })
        .collect();

    let mut scores = vec![0.0; n * n_classes];
    let mut rounds = Vec::with_capacity(cfg.n_rounds);
    let mut train_deviance = Vec::with_capacity(cfg.n_rounds);
    let mut in_bag = vec![false; n];
    for m in 0..cfg.n_rounds {
        let bag: Vec<u32> = if n_bag == n {
            (0..n as u32).collect()
        } else {
            let mut b: Vec<u32> = index::sample(&mut rng::stream(seed, m as u64), n, n_bag)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            b.sort_unstable();
            b
        };
        in_bag.iter_mut().for_each(|b| *b = false);
        for &p in &bag {
            in_bag[p as usize] = true;
        }
        let sorted_bag: Vec<Vec<u32>> = presorted
            .iter()
            .map(|o| o.iter().copied().filter(|&p| in_bag[p as usize]).collect())
            .collect();
        let probs: Vec<f64> = scores.chunks(n_classes).flat_map(softmax).collect();
        let trees: Vec<DecisionTree> = (0..n_classes)
            .into_par_iter()
            .map(|c| {
                let r: Vec<f64> = (0..n)
                    .map(|i| (labels[i] as usize == c) as u8 as f64 - probs[i * n_classes + c])
                    .collect();
                BoostGrower {
                    x: &x,
                    n_features: k,
                    sorted: &sorted_bag,
                    bag: &bag,
                    r: &r,
                    min_node: cfg.tree.min_node,
                    max_splits: cfg.tree.max_splits,
                    n_classes,
                }
                .grow()
            })
            .collect();
        for i in 0..n {
            let row = &x[i * k..(i + 1) * k];
            for (c, tree) in trees.iter().enumerate() {
                scores[i * n_classes + c] += cfg.shrinkage * tree.predict(row);
            }
        }
        let dev: f64 = scores
            .chunks(n_classes)
            .zip(&labels)
            .map(|(f, &y)| log_sum_exp(f) - f[y as usize])
            .sum::<f64>()
            / n as f64;
        train_deviance.push(dev);
        rounds.push(trees);
    }
    Ok(GbmModel {
        init_scores: vec![0.0; n_classes],
        rounds,
        shrinkage: cfg.shrinkage,
        n_rounds: cfg.n_rounds,
        bag_fraction: cfg.bag_fraction,
        n_features: k,
        n_classes,
        seed,
        train_deviance,
    })
}

#[derive(Clone, Copy)]
struct Best {
    feature: usize,
    threshold: f64,
    improvement: f64,
}

#[derive(Clone, Copy, Default)]
struct Scan {
    n_left: usize,
    s_left: f64,
    last: f64,
    best_imp: f64,
}

/// Best-first squared-error tree over presorted feature orders.
///
/// Each search pass walks every feature's sorted subsample once and scores
/// candidate splits for all newly created nodes at the same time, so a
/// tree with `s` splits costs `s` passes instead of a sort per node.
pub(crate) struct BoostGrower<'a> {
    pub x: &'a [f64],
    pub n_features: usize,
    /// Subsample positions per feature, ascending by value then position.
    pub sorted: &'a [Vec<u32>],
    /// Subsample positions, ascending.
    pub bag: &'a [u32],
    /// Residual per position.
    pub r: &'a [f64],
    pub min_node: usize,
    pub max_splits: usize,
    pub n_classes: usize,
}

const NOT_FRESH: u32 = u32::MAX;

impl BoostGrower<'_> {
    pub fn grow(&self) -> DecisionTree {
        let k = self.n_features;
        let mut node_of = vec![0u32; self.x.len() / k];
        let root_sum: f64 = self.bag.iter().map(|&p| self.r[p as usize]).sum();
        let mut stats = vec![(self.bag.len(), root_sum)];
        let mut nodes: Vec<Option<Node>> = vec![None];
        let mut best: Vec<Option<Best>> = vec![None];
        let mut fresh = vec![0usize];
        let mut splits = 0;
        while splits < self.max_splits {
            self.search(&fresh, &node_of, &stats, &mut best);
            let mut pick: Option<(usize, Best)> = None;
            for (i, b) in best.iter().enumerate() {
                if let (None, Some(b)) = (&nodes[i], b) {
                    if pick.is_none_or(|(_, p)| b.improvement > p.improvement) {
                        pick = Some((i, *b));
                    }
                }
            }
            let Some((nd, split)) = pick else { break };
            let (l, r) = (nodes.len(), nodes.len() + 1);
            let (mut nl, mut sl, mut nr, mut sr) = (0, 0.0, 0, 0.0);
            for &p in self.bag {
                let p = p as usize;
                if node_of[p] as usize == nd {
                    if self.x[p * k + split.feature] <= split.threshold {
                        node_of[p] = l as u32;
                        nl += 1;
                        sl += self.r[p];
                    } else {
                        node_of[p] = r as u32;
                        nr += 1;
                        sr += self.r[p];
                    }
                }
            }
            nodes[nd] = Some(Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l,
                right: r,
                improvement: split.improvement,
            });
            best[nd] = None;
            nodes.extend([None, None]);
            best.extend([None, None]);
            stats.extend([(nl, sl), (nr, sr)]);
            fresh = vec![l, r];
            splits += 1;
        }
        let mut leaf_rows: Vec<Vec<f64>> = vec![Vec::new(); nodes.len()];
        for &p in self.bag {
            leaf_rows[node_of[p as usize] as usize].push(self.r[p as usize]);
        }
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, node)| {
                node.unwrap_or_else(|| Node::Leaf {
                    value: newton_step(leaf_rows[i].iter().copied(), self.n_classes),
                    counts: Vec::new(),
                })
            })
            .collect();
        DecisionTree {
            nodes,
            n_features: k,
            n_classes: 0,
        }
    }

    fn search(&self, fresh: &[usize], node_of: &[u32], stats: &[(usize, f64)], best: &mut [Option<Best>]) {
        let k = self.n_features;
        let mut slot_of = vec![NOT_FRESH; stats.len()];
        for (s, &nd) in fresh.iter().enumerate() {
            if stats[nd].0 >= 2 * self.min_node {
                slot_of[nd] = s as u32;
            }
        }
        let mut scans = vec![Scan::default(); fresh.len()];
        let mut found: Vec<Option<Best>> = vec![None; fresh.len()];
        for (f, order) in self.sorted.iter().enumerate() {
            for s in scans.iter_mut() {
                *s = Scan {
                    best_imp: s.best_imp,
                    ..Scan::default()
                };
            }
            for &p in order {
                let p = p as usize;
                let slot = slot_of[node_of[p] as usize];
                if slot == NOT_FRESH {
                    continue;
                }
                let slot = slot as usize;
                let (n_total, s_total) = stats[fresh[slot]];
                let v = self.x[p * k + f];
                let sc = &mut scans[slot];
                if sc.n_left > 0
                    && v != sc.last
                    && sc.n_left >= self.min_node
                    && n_total - sc.n_left >= self.min_node
                {
                    let nl = sc.n_left as f64;
                    let imp = sse_gain(nl, sc.s_left, n_total as f64 - nl, s_total - sc.s_left);
                    if imp > sc.best_imp {
                        sc.best_imp = imp;
                        found[slot] = Some(Best {
                            feature: f,
                            threshold: midpoint(sc.last, v),
                            improvement: imp,
                        });
                    }
                }
                sc.n_left += 1;
                sc.s_left += self.r[p];
                sc.last = v;
            }
        }
        for (slot, &nd) in fresh.iter().enumerate() {
            best[nd] = found[slot];
        }
    }
}
