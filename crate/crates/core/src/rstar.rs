//! R*: chain-identification accuracy of a classifier relative to chance.

use crate::chain_store::{make_labeled, ChainSet, LabeledDataset, TestRows, DEFAULT_TEST_FRAC};
use crate::error::{Error, Result};
use crate::rng::{self, mix};
use crate::stats::{sorted, QuantileSummary};
use crate::trees::{argmax, fit_gbm, fit_random_forest, ClassifierModel, ForestConfig, GbmConfig};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierKind {
    Gbm,
    Rf,
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gbm => "gbm",
            Self::Rf => "rf",
        })
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gbm" => Ok(Self::Gbm),
            "rf" | "forest" => Ok(Self::Rf),
            other => Err(Error::InvalidArgument(format!(
                "unknown classifier {other:?}; expected gbm or rf"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RStarConfig {
    pub classifier: ClassifierKind,
    /// Each chain is cut into this many consecutive pieces first; 1 = no split.
    pub split: usize,
    pub test_frac: f64,
    /// Number of uncertainty draws; 0 skips them.
    pub draws: usize,
    /// Appends an iteration-block index with this many blocks as a feature.
    pub iteration_blocks: Option<usize>,
    pub gbm: GbmConfig,
    pub forest: ForestConfig,
}

impl Default for RStarConfig {
    fn default() -> Self {
        Self {
            classifier: ClassifierKind::Gbm,
            split: 2,
            test_frac: DEFAULT_TEST_FRAC,
            draws: 1000,
            iteration_blocks: None,
            gbm: GbmConfig::default(),
            forest: ForestConfig::default(),
        }
    }
}

impl RStarConfig {
    pub fn with_classifier(mut self, classifier: ClassifierKind) -> Self {
        self.classifier = classifier;
        self
    }

    pub fn with_split(mut self, split: usize) -> Self {
        self.split = split;
        self
    }

    pub fn with_draws(mut self, draws: usize) -> Self {
        self.draws = draws;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RStarResult {
    pub r_star: f64,
    pub accuracy: f64,
    /// Chain count after splitting; R* ranges over `[0, n_chains_effective]`.
    pub n_chains_effective: usize,
    pub classifier: ClassifierKind,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub uncertainty_draws: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_decile: Option<Vec<DecileDraws>>,
}

impl RStarResult {
    pub fn uncertainty_mean(&self) -> Option<f64> {
        self.uncertainty_draws
            .as_ref()
            .filter(|d| !d.is_empty())
            .map(|d| d.iter().sum::<f64>() / d.len() as f64)
    }
}

/// A trained model with the data it was trained on and its point result.
#[derive(Clone, Debug)]
pub struct FittedRStar {
    pub model: ClassifierModel,
    pub dataset: LabeledDataset,
    /// Predicted simplex per test row, in test-row order.
    pub test_probs: Vec<Vec<f64>>,
    pub result: RStarResult,
}

impl FittedRStar {
    pub fn test_rows(&self) -> TestRows {
        self.dataset.test_rows()
    }
}

pub fn fit_classifier(ds: &LabeledDataset, cfg: &RStarConfig, seed: u64) -> Result<ClassifierModel> {
    Ok(match cfg.classifier {
        ClassifierKind::Gbm => ClassifierModel::Gbm(fit_gbm(ds, &cfg.gbm, seed)?),
        ClassifierKind::Rf => ClassifierModel::Forest(fit_random_forest(ds, &cfg.forest, seed)?),
    })
}

/// Prepares the classifier input: split, then the optional block feature.
pub fn prepare_chains(cs: &ChainSet, cfg: &RStarConfig) -> Result<ChainSet> {
    let split = cs.split(cfg.split)?;
    match cfg.iteration_blocks {
        Some(b) => split.with_iteration_block(b),
        None => Ok(split),
    }
}

/// Point R* with the trained model kept for further analysis.
pub fn fit_rstar(cs: &ChainSet, cfg: &RStarConfig, seed: u64) -> Result<FittedRStar> {
    let chains = prepare_chains(cs, cfg)?;
    let dataset = make_labeled(&chains, cfg.test_frac, mix(seed, 0))?;
    let model = fit_classifier(&dataset, cfg, mix(seed, 1))?;
    let test = dataset.test_rows();
    let test_probs: Vec<Vec<f64>> = (0..test.len())
        .into_par_iter()
        .map(|i| model.predict_proba(test.row(i)))
        .collect::<Result<_>>()?;
    let hits = test_probs
        .iter()
        .zip(&test.labels)
        .filter(|(p, &y)| argmax(p) == y as usize)
        .count();
    let n = chains.n_chains();
    let accuracy = hits as f64 / test.len() as f64;
    let uncertainty_draws = (cfg.draws > 0)
        .then(|| uncertainty_from_probs(&test_probs, &test.labels, n, cfg.draws, mix(seed, 2)));
    Ok(FittedRStar {
        result: RStarResult {
            r_star: n as f64 * accuracy,
            accuracy,
            n_chains_effective: n,
            classifier: cfg.classifier,
            seed,
            uncertainty_draws,
            per_decile: None,
        },
        model,
        dataset,
        test_probs,
    })
}

/// Trains the configured classifier and returns R* = N·(test accuracy).
pub fn compute_rstar(cs: &ChainSet, cfg: &RStarConfig, seed: u64) -> Result<RStarResult> {
    fit_rstar(cs, cfg, seed).map(|f| f.result)
}

/// Draws of R* obtained by sampling each test row's chain from its
/// predicted simplex and scoring against the truth.
pub fn rstar_uncertainty(model: &ClassifierModel, test: &TestRows, draws: usize, seed: u64) -> Result<Vec<f64>> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("no test rows".into()));
    }
    let probs: Vec<Vec<f64>> = (0..test.len())
        .into_par_iter()
        .map(|i| model.predict_proba(test.row(i)))
        .collect::<Result<_>>()?;
    Ok(uncertainty_from_probs(&probs, &test.labels, model.n_classes(), draws, seed))
}

/// Uncertainty draws from precomputed simplexes; draw `i` uses stream `i`.
pub fn uncertainty_from_probs(probs: &[Vec<f64>], labels: &[u32], n_classes: usize, draws: usize, seed: u64) -> Vec<f64> {
    if probs.is_empty() {
        return Vec::new();
    }
    let cumulative: Vec<Vec<f64>> = probs
        .iter()
        .map(|p| {
            p.iter()
                .scan(0.0, |acc, &v| {
                    *acc += v;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    (0..draws)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let hits = cumulative
                .iter()
                .zip(labels)
                .filter(|(cum, &y)| {
                    let u: f64 = r.random::<f64>() * cum[cum.len() - 1];
                    // first class whose cumulative mass exceeds u
                    let c = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
                    c == y as usize
                })
                .count();
            n_classes as f64 * hits as f64 / probs.len() as f64
        })
        .collect()
}

/// Large-draw limit of the uncertainty mean: `N·mean(p_true)`.
pub fn expected_uncertainty_mean(probs: &[Vec<f64>], labels: &[u32], n_classes: usize) -> f64 {
    let s: f64 = probs.iter().zip(labels).map(|(p, &y)| p[y as usize]).sum();
    n_classes as f64 * s / probs.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Replicates {
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
    pub summary: QuantileSummary,
}

/// Derived seeds for `count` replicates under a base seed.
pub fn replicate_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| mix(base, i)).collect()
}

/// Point R* recomputed on a fixed chain set under each seed; only the
/// partition and training randomness vary.
pub fn rstar_replicates(cs: &ChainSet, cfg: &RStarConfig, seeds: &[u64]) -> Result<Replicates> {
    rstar_replicates_with(|_| Ok(cs.clone()), cfg, seeds)
}

/// Like [`rstar_replicates`] but regenerates the chains from each seed.
pub fn rstar_replicates_with<G>(generate: G, cfg: &RStarConfig, seeds: &[u64]) -> Result<Replicates>
where
    G: Fn(u64) -> Result<ChainSet> + Sync,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one replicate is required".into()));
    }
    let cfg = RStarConfig { draws: 0, ..cfg.clone() };
    let values: Vec<f64> = seeds
        .par_iter()
        .map(|&s| compute_rstar(&generate(s)?, &cfg, s).map(|r| r.r_star))
        .collect::<Result<_>>()?;
    Ok(Replicates {
        seeds: seeds.to_vec(),
        summary: QuantileSummary::of(&values),
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecileDraws {
    /// 1-based bin index.
    pub bin: usize,
    pub lower: f64,
    pub upper: f64,
    pub n_rows: usize,
    /// Empty when the bin has no rows.
    pub draws: Vec<f64>,
}

impl DecileDraws {
    pub fn mean(&self) -> Option<f64> {
        (!self.draws.is_empty()).then(|| self.draws.iter().sum::<f64>() / self.draws.len() as f64)
    }
}

/// Assigns each row to one of `n_bins` equal-count bins of `values`.
///
/// Cut points sit at sorted positions `⌊b·n/n_bins⌋`; values tied across a
/// cut all go to the lower bin, which may leave later bins empty.
pub fn quantile_bins(values: &[f64], n_bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut bin_of = vec![0; n];
    let mut bin = 0;
    for (pos, &i) in order.iter().enumerate() {
        while bin + 1 < n_bins && pos >= (bin + 1) * n / n_bins {
            if pos > 0 && values[i] == values[order[pos - 1]] {
                break;
            }
            bin += 1;
        }
        bin_of[i] = bin;
    }
    bin_of
}

/// Uncertainty draws restricted to test rows in each quantile bin of
/// parameter `k`. Chance level stays 1/N within every bin.
pub fn decile_rstar(
    model: &ClassifierModel,
    test: &TestRows,
    k: usize,
    n_bins: usize,
    draws_per_bin: usize,
    seed: u64,
) -> Result<Vec<DecileDraws>> {
    if k >= test.n_features {
        return Err(Error::InvalidArgument(format!(
            "parameter index {k} out of range for {} features",
            test.n_features
        )));
    }
    if n_bins == 0 || test.len() < n_bins {
        return Err(Error::InvalidArgument(format!(
            "{} test rows cannot fill {n_bins} bins",
            test.len()
        )));
    }
    let probs: Vec<Vec<f64>> = (0..test.len())
        .map(|i| model.predict_proba(test.row(i)))
        .collect::<Result<_>>()?;
    let values: Vec<f64> = (0..test.len()).map(|i| test.row(i)[k]).collect();
    let bins = quantile_bins(&values, n_bins);
    Ok((0..n_bins)
        .map(|b| {
            let rows: Vec<usize> = (0..test.len()).filter(|&i| bins[i] == b).collect();
            let vals = sorted(&rows.iter().map(|&i| values[i]).collect::<Vec<_>>());
            let p: Vec<Vec<f64>> = rows.iter().map(|&i| probs[i].clone()).collect();
            let y: Vec<u32> = rows.iter().map(|&i| test.labels[i]).collect();
            DecileDraws {
                bin: b + 1,
                lower: vals.first().copied().unwrap_or(f64::NAN),
                upper: vals.last().copied().unwrap_or(f64::NAN),
                n_rows: rows.len(),
                draws: uncertainty_from_probs(&p, &y, test.n_classes, draws_per_bin, mix(seed, b as u64)),
            }
        })
        .collect())
}
