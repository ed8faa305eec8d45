use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitCriterion {
    Gini,
    SquaredError,
}

/// Growth limits for a single tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Maximum number of internal (split) nodes.
    pub max_splits: usize,
    /// Minimum number of observations in each child of a split.
    pub min_node: usize,
    pub criterion: SplitCriterion,
}

impl TreeConfig {
    /// Boosting defaults: three splits, ten observations per node.
    pub fn gbm_default() -> Self {
        Self {
            max_splits: 3,
            min_node: 10,
            criterion: SplitCriterion::SquaredError,
        }
    }

    /// Forest defaults: grown to purity.
    pub fn forest_default() -> Self {
        Self {
            max_splits: usize::MAX,
            min_node: 1,
            criterion: SplitCriterion::Gini,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_splits == 0 || self.min_node == 0 {
            return Err(Error::InvalidArgument(format!(
                "max_splits and min_node must be positive, got {} and {}",
                self.max_splits, self.min_node
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        improvement: f64,
    },
    /// `value` is the predicted class index for classification trees and
    /// the fitted value for regression trees. `counts` holds the weighted
    /// class histogram (classification only).
    Leaf {
        value: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        counts: Vec<u32>,
    },
}

/// A binary tree stored as a node array rooted at index 0. Observations go
/// left when `x[feature] <= threshold`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    /// 0 for regression trees.
    pub n_classes: usize,
}

impl DecisionTree {
    pub fn leaf_node(&self, x: &[f64]) -> &Node {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    /// Leaf value reached by `x` (class index or regression value).
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.leaf_node(x) {
            Node::Leaf { value, .. } => *value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn n_splits(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Split { .. }))
            .count()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.len() - self.n_splits()
    }

    /// Checks that every node is reached exactly once from the root.
    pub fn is_well_formed(&self) -> bool {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return false;
            }
            seen[i] = true;
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push(left);
                stack.push(right);
            }
        }
        seen.iter().all(|&s| s) && self.n_leaves() == self.n_splits() + 1
    }

    /// Adds each split's improvement to `acc[feature]`.
    pub fn accumulate_importance(&self, acc: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Split {
                feature,
                improvement,
                ..
            } = node
            {
                acc[*feature] += improvement;
            }
        }
    }
}

/// How regression leaves turn their residuals into a value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LeafRule {
    Mean,
    /// Multinomial-deviance Newton step for a model with this many classes.
    Newton { n_classes: usize },
}

/// Response used to grow a tree; indexed by row id.
#[derive(Clone, Copy, Debug)]
pub enum Target<'a> {
    Classes { labels: &'a [u32], n_classes: usize },
    Values { values: &'a [f64], leaf: LeafRule },
}

/// `((N−1)/N)·Σr / Σ|r|(1−|r|)`, or 0 when the denominator vanishes.
pub fn newton_step(residuals: impl Iterator<Item = f64>, n_classes: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for r in residuals {
        num += r;
        den += r.abs() * (1.0 - r.abs());
    }
    if den == 0.0 {
        0.0
    } else {
        (n_classes as f64 - 1.0) / n_classes as f64 * num / den
    }
}

/// Squared-error reduction from splitting into (count, sum) halves.
#[inline]
pub(crate) fn sse_gain(nl: f64, sl: f64, nr: f64, sr: f64) -> f64 {
    let d = sl / nl - sr / nr;
    nl * nr / (nl + nr) * d * d
}

/// A threshold strictly separating `lo < hi`.
#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo * 0.5 + hi * 0.5;
    if mid >= hi || mid < lo {
        lo
    } else {
        mid
    }
}

/// Per-feature dense ranks of every row, feature-major.
#[derive(Clone, Debug)]
pub(crate) struct Ranks {
    n_rows: usize,
    ranks: Vec<u32>,
}

impl Ranks {
    pub fn new(x: &[f64], n_features: usize) -> Self {
        let n_rows = x.len() / n_features;
        let mut ranks = vec![0u32; n_rows * n_features];
        let mut order: Vec<u32> = (0..n_rows as u32).collect();
        for f in 0..n_features {
            let v = |r: u32| x[r as usize * n_features + f];
            order.sort_by(|&a, &b| v(a).total_cmp(&v(b)));
            let out = &mut ranks[f * n_rows..(f + 1) * n_rows];
            let mut rank = 0u32;
            for (i, &r) in order.iter().enumerate() {
                if i > 0 && v(r) != v(order[i - 1]) {
                    rank += 1;
                }
                out[r as usize] = rank;
            }
        }
        Self { n_rows, ranks }
    }

    #[inline]
    fn get(&self, feature: usize, row: u32) -> u32 {
        self.ranks[feature * self.n_rows + row as usize]
    }
}

/// Which features a node may split on.
#[derive(Clone, Debug)]
pub(crate) enum Features {
    All,
    Subset(Vec<usize>),
    /// A fresh uniform subset of this size at every node.
    PerNode(usize),
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    feature: usize,
    threshold: f64,
    improvement: f64,
}

struct Pending {
    improvement: f64,
    node: usize,
    split: Candidate,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // largest improvement first, then lowest node id
    fn cmp(&self, other: &Self) -> Ordering {
        self.improvement
            .total_cmp(&other.improvement)
            .then(other.node.cmp(&self.node))
    }
}

/// Best-first CART grower over a weighted subset of rows.
pub(crate) struct Grower<'a> {
    pub x: &'a [f64],
    pub n_features: usize,
    pub ranks: &'a Ranks,
    pub target: Target<'a>,
    /// Observation weight per row id.
    pub weights: &'a [u32],
    pub max_splits: usize,
    pub min_node: usize,
    pub features: Features,
    pub rng: Rng,
    keys: Vec<u64>,
    left: Vec<f64>,
    total: Vec<f64>,
}

impl<'a> Grower<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x: &'a [f64],
        n_features: usize,
        ranks: &'a Ranks,
        target: Target<'a>,
        weights: &'a [u32],
        max_splits: usize,
        min_node: usize,
        features: Features,
        rng: Rng,
    ) -> Self {
        let n_classes = match target {
            Target::Classes { n_classes, .. } => n_classes,
            Target::Values { .. } => 0,
        };
        Self {
            x,
            n_features,
            ranks,
            target,
            weights,
            max_splits,
            min_node,
            features,
            rng,
            keys: Vec::new(),
            left: vec![0.0; n_classes],
            total: vec![0.0; n_classes],
        }
    }

    /// Grows a tree on `rows` (ascending row ids with positive weight).
    pub fn grow(mut self, mut rows: Vec<u32>) -> DecisionTree {
        let mut nodes: Vec<Option<Node>> = vec![None];
        let mut ranges = vec![(0usize, rows.len())];
        let mut heap = BinaryHeap::new();
        let mut splits = 0usize;
        if self.max_splits > 0 {
            if let Some(split) = self.best_split(&rows) {
                heap.push(Pending {
                    improvement: split.improvement,
                    node: 0,
                    split,
                });
            }
        }
        let mut scratch = Vec::new();
        while splits < self.max_splits {
            let Some(Pending { node, split, .. }) = heap.pop() else {
                break;
            };
            let (start, end) = ranges[node];
            let mid = self.partition(&mut rows[start..end], &split, &mut scratch) + start;
            let (l, r) = (nodes.len(), nodes.len() + 1);
            nodes.push(None);
            nodes.push(None);
            ranges.push((start, mid));
            ranges.push((mid, end));
            nodes[node] = Some(Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: l,
                right: r,
                improvement: split.improvement,
            });
            splits += 1;
            if splits < self.max_splits {
                for child in [l, r] {
                    let (s, e) = ranges[child];
                    if let Some(split) = self.best_split(&rows[s..e]) {
                        heap.push(Pending {
                            improvement: split.improvement,
                            node: child,
                            split,
                        });
                    }
                }
            }
        }
        let n_classes = self.left.len();
        let nodes = nodes
            .into_iter()
            .zip(&ranges)
            .map(|(node, &(s, e))| node.unwrap_or_else(|| self.leaf(&rows[s..e])))
            .collect();
        DecisionTree {
            nodes,
            n_features: self.n_features,
            n_classes,
        }
    }

    fn leaf(&self, rows: &[u32]) -> Node {
        match self.target {
            Target::Classes { labels, n_classes } => {
                let mut counts = vec![0u32; n_classes];
                for &r in rows {
                    counts[labels[r as usize] as usize] += self.weights[r as usize];
                }
                Node::Leaf {
                    value: argmax_u32(&counts) as f64,
                    counts,
                }
            }
            Target::Values { values, leaf } => {
                let value = match leaf {
                    LeafRule::Mean => {
                        let (mut w, mut s) = (0.0, 0.0);
                        for &r in rows {
                            let wr = self.weights[r as usize] as f64;
                            w += wr;
                            s += wr * values[r as usize];
                        }
                        if w > 0.0 {
                            s / w
                        } else {
                            0.0
                        }
                    }
                    LeafRule::Newton { n_classes } => newton_step(
                        rows.iter().flat_map(|&r| {
                            std::iter::repeat_n(values[r as usize], self.weights[r as usize] as usize)
                        }),
                        n_classes,
                    ),
                };
                Node::Leaf {
                    value,
                    counts: Vec::new(),
                }
            }
        }
    }

    /// Stable partition of `rows` by the split; returns the left count.
    fn partition(&self, rows: &mut [u32], split: &Candidate, scratch: &mut Vec<u32>) -> usize {
        scratch.clear();
        let mut n_left = 0;
        for i in 0..rows.len() {
            let r = rows[i];
            if self.x[r as usize * self.n_features + split.feature] <= split.threshold {
                rows[n_left] = r;
                n_left += 1;
            } else {
                scratch.push(r);
            }
        }
        rows[n_left..].copy_from_slice(scratch);
        n_left
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        match &self.features {
            Features::All => (0..self.n_features).collect(),
            Features::Subset(s) => s.clone(),
            Features::PerNode(m) => {
                let mut f = index::sample(&mut self.rng, self.n_features, *m).into_vec();
                f.sort_unstable();
                f
            }
        }
    }

    fn best_split(&mut self, rows: &[u32]) -> Option<Candidate> {
        let w_total: u64 = rows.iter().map(|&r| self.weights[r as usize] as u64).sum();
        if w_total < 2 * self.min_node as u64 {
            return None;
        }
        if let Target::Classes { labels, .. } = self.target {
            self.total.iter_mut().for_each(|t| *t = 0.0);
            for &r in rows {
                self.total[labels[r as usize] as usize] += self.weights[r as usize] as f64;
            }
            if self.total.iter().filter(|&&t| t > 0.0).count() < 2 {
                return None;
            }
        }
        // rows arrive in ascending id order, matching the boosting grower's
        // summation order so both produce identical totals
        let s_total: f64 = match self.target {
            Target::Values { values, .. } => rows
                .iter()
                .map(|&r| self.weights[r as usize] as f64 * values[r as usize])
                .sum(),
            Target::Classes { .. } => 0.0,
        };
        let features = self.candidate_features();
        let mut best: Option<Candidate> = None;
        for f in features {
            self.keys.clear();
            self.keys.extend(
                rows.iter()
                    .map(|&r| ((self.ranks.get(f, r) as u64) << 32) | r as u64),
            );
            self.keys.sort_unstable();
            let found = match self.target {
                Target::Classes { labels, .. } => self.scan_gini(f, labels, w_total, best),
                Target::Values { values, .. } => self.scan_sse(f, values, w_total, s_total, best),
            };
            if found.is_some() {
                best = found;
            }
        }
        best
    }

    fn threshold(&self, f: usize, lo_row: u64, hi_row: u64) -> f64 {
        let v = |r: u64| self.x[(r & 0xFFFF_FFFF) as usize * self.n_features + f];
        midpoint(v(lo_row), v(hi_row))
    }

    /// Returns a candidate only when it beats `best`.
    fn scan_gini(
        &mut self,
        f: usize,
        labels: &[u32],
        w_total: u64,
        best: Option<Candidate>,
    ) -> Option<Candidate> {
        let mut best_imp = best.map_or(f64::NEG_INFINITY, |b| b.improvement);
        let mut found = None;
        let min = self.min_node as u64;
        let wt = w_total as f64;
        let sq_total: f64 = self.total.iter().map(|t| t * t).sum();
        let parent = sq_total / wt;
        self.left.iter_mut().for_each(|l| *l = 0.0);
        let (mut sq_l, mut sq_r) = (0.0, sq_total);
        let mut w_l = 0u64;
        for i in 0..self.keys.len() {
            let key = self.keys[i];
            if i > 0 && (key >> 32) != (self.keys[i - 1] >> 32) && w_l >= min && w_total - w_l >= min {
                let wl = w_l as f64;
                let imp = sq_l / wl + sq_r / (wt - wl) - parent;
                if imp > best_imp && gini_gain_positive(sq_l, sq_r, sq_total, w_l, w_total) {
                    best_imp = imp;
                    found = Some(Candidate {
                        feature: f,
                        threshold: self.threshold(f, self.keys[i - 1], key),
                        improvement: imp,
                    });
                }
            }
            let r = (key & 0xFFFF_FFFF) as usize;
            let c = labels[r] as usize;
            let w = self.weights[r] as f64;
            let (l, t) = (self.left[c], self.total[c]);
            sq_l += 2.0 * l * w + w * w;
            sq_r += -2.0 * (t - l) * w + w * w;
            self.left[c] = l + w;
            w_l += self.weights[r] as u64;
        }
        found
    }

    fn scan_sse(
        &mut self,
        f: usize,
        values: &[f64],
        w_total: u64,
        s_total: f64,
        best: Option<Candidate>,
    ) -> Option<Candidate> {
        let mut best_imp = best.map_or(0.0, |b| b.improvement);
        let mut found = None;
        let min = self.min_node as u64;
        let wt = w_total as f64;
        let (mut w_l, mut s_l) = (0u64, 0.0);
        for i in 0..self.keys.len() {
            let key = self.keys[i];
            if i > 0 && (key >> 32) != (self.keys[i - 1] >> 32) && w_l >= min && w_total - w_l >= min {
                let wl = w_l as f64;
                let imp = sse_gain(wl, s_l, wt - wl, s_total - s_l);
                if imp > best_imp {
                    best_imp = imp;
                    found = Some(Candidate {
                        feature: f,
                        threshold: self.threshold(f, self.keys[i - 1], key),
                        improvement: imp,
                    });
                }
            }
            let r = (key & 0xFFFF_FFFF) as usize;
            w_l += self.weights[r] as u64;
            s_l += self.weights[r] as f64 * values[r];
        }
        found
    }
}

/// Exact sign test for a Gini gain: all quantities are integer-valued, so
/// `sqL·wR·W + sqR·wL·W − sqP·wL·wR > 0` is evaluated in integers.
fn gini_gain_positive(sq_l: f64, sq_r: f64, sq_p: f64, w_l: u64, w: u64) -> bool {
    let (sl, sr, sp) = (sq_l.round() as i128, sq_r.round() as i128, sq_p.round() as i128);
    let (wl, wr, w) = (w_l as i128, (w - w_l) as i128, w as i128);
    sl * wr * w + sr * wl * w - sp * wl * wr > 0
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax_u32(v: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c > v[best] {
            best = i;
        }
    }
    best
}

/// Fits one tree on `rows` of the row-major matrix `x`.
///
/// `feature_subset`, if given, restricts every split to those features.
/// The seed only matters when the grower samples features.
pub fn fit_tree(
    x: &[f64],
    n_features: usize,
    rows: &[usize],
    target: Target<'_>,
    cfg: &TreeConfig,
    feature_subset: Option<&[usize]>,
    seed: u64,
) -> Result<DecisionTree> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument("cannot fit a tree on zero rows".into()));
    }
    if n_features == 0 || x.len() % n_features != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} values do not form rows of {n_features} features",
            x.len()
        )));
    }
    let n_rows = x.len() / n_features;
    if let Some(&bad) = rows.iter().find(|&&r| r >= n_rows) {
        return Err(Error::InvalidArgument(format!("row {bad} out of range")));
    }
    let expected = match (cfg.criterion, &target) {
        (SplitCriterion::Gini, Target::Classes { labels, n_classes }) => {
            if let Some(&l) = labels.iter().find(|&&l| l as usize >= *n_classes) {
                return Err(Error::InvalidArgument(format!("label {l} outside 0..{n_classes}")));
            }
            labels.len()
        }
        (SplitCriterion::SquaredError, Target::Values { values, .. }) => values.len(),
        _ => {
            return Err(Error::InvalidArgument(
                "gini needs class labels, squared-error needs real values".into(),
            ))
        }
    };
    if expected != n_rows {
        return Err(Error::DimensionMismatch {
            expected: n_rows,
            found: expected,
        });
    }
    let features = match feature_subset {
        Some(s) => {
            if s.is_empty() || s.iter().any(|&f| f >= n_features) {
                return Err(Error::InvalidArgument(format!(
                    "feature subset {s:?} invalid for {n_features} features"
                )));
            }
            let mut s = s.to_vec();
            s.sort_unstable();
            s.dedup();
            Features::Subset(s)
        }
        None => Features::All,
    };
    let ranks = Ranks::new(x, n_features);
    let mut weights = vec![0u32; n_rows];
    for &r in rows {
        weights[r] += 1;
    }
    let mut unique: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    unique.sort_unstable();
    unique.dedup();
    let grower = Grower::new(
        x,
        n_features,
        &ranks,
        target,
        &weights,
        cfg.max_splits,
        cfg.min_node,
        features,
        rng::stream(seed, 0),
    );
    Ok(grower.grow(unique))
}
