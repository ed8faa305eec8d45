//! The chain data model and every transform applied to it before a
//! diagnostic sees the draws.
//!
//! A [`ChainSet`] holds `N` chains of `S` draws of `K` parameters in a
//! single chain-major buffer. It is immutable: splitting, thinning and
//! subsetting all return new sets.

mod csv_io;
mod labeled;
mod rank;

pub use csv_io::{load_csv, load_csv_files, write_csv, CsvLayout};
pub use labeled::{make_labeled, LabeledDataset, TestRows, DEFAULT_TEST_FRAC};
pub use rank::{fold, rank_normalize, rank_normalize_chains};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Minimum draws per chain accepted when a set is built from raw data.
pub const MIN_DRAWS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSet {
    n_chains: usize,
    n_iter: usize,
    n_params: usize,
    /// `[chain][iteration][parameter]`, row-major.
    data: Vec<f64>,
    param_names: Vec<String>,
    meta: String,
}

/// Which parameters to keep in [`ChainSet::subset_params`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParamSelector {
    /// 0-based indices; output order follows the list.
    Indices(Vec<usize>),
    /// Every `n`-th parameter starting with the first.
    Stride(usize),
}

impl ChainSet {
    /// Builds a set from `chains[n][s][k]`.
    ///
    /// Requires at least two chains, [`MIN_DRAWS`] draws per chain, one
    /// parameter, identical shapes and finite values.
    pub fn new(chains: Vec<Vec<Vec<f64>>>, param_names: Option<Vec<String>>) -> Result<Self> {
        if chains.len() < 2 {
            return Err(Error::InvalidChains(format!(
                "need at least 2 chains, got {}",
                chains.len()
            )));
        }
        let n_iter = chains[0].len();
        let n_params = chains[0].first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(chains.len() * n_iter * n_params);
        for (c, chain) in chains.iter().enumerate() {
            if chain.len() != n_iter {
                return Err(Error::RaggedChains {
                    chain: c as i64 + 1,
                    expected: n_iter,
                    found: chain.len(),
                });
            }
            for (s, draw) in chain.iter().enumerate() {
                if draw.len() != n_params {
                    return Err(Error::InvalidChains(format!(
                        "chain {} draw {} has {} parameters, expected {}",
                        c + 1,
                        s + 1,
                        draw.len(),
                        n_params
                    )));
                }
                data.extend_from_slice(draw);
            }
        }
        Self::from_flat(chains.len(), n_iter, n_params, data, param_names)
    }

    /// Builds a set from a chain-major flat buffer of length `N·S·K`.
    pub fn from_flat(
        n_chains: usize,
        n_iter: usize,
        n_params: usize,
        data: Vec<f64>,
        param_names: Option<Vec<String>>,
    ) -> Result<Self> {
        if n_iter < MIN_DRAWS {
            return Err(Error::InvalidChains(format!(
                "need at least {MIN_DRAWS} draws per chain, got {n_iter}"
            )));
        }
        Self::from_parts(n_chains, n_iter, n_params, data, param_names, String::new())
    }

    /// Shared constructor; derived sets (split, thinned) may be shorter
    /// than [`MIN_DRAWS`] but never empty.
    fn from_parts(
        n_chains: usize,
        n_iter: usize,
        n_params: usize,
        data: Vec<f64>,
        param_names: Option<Vec<String>>,
        meta: String,
    ) -> Result<Self> {
        if n_chains < 2 {
            return Err(Error::InvalidChains(format!(
                "need at least 2 chains, got {n_chains}"
            )));
        }
        if n_iter == 0 {
            return Err(Error::InvalidChains("chains are empty".into()));
        }
        if n_params == 0 {
            return Err(Error::InvalidChains("need at least 1 parameter".into()));
        }
        if data.len() != n_chains * n_iter * n_params {
            return Err(Error::InvalidChains(format!(
                "buffer length {} does not match {n_chains}x{n_iter}x{n_params}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let row = pos / n_params;
            return Err(Error::InvalidChains(format!(
                "non-finite value in chain {}, draw {}, parameter {}",
                row / n_iter + 1,
                row % n_iter + 1,
                pos % n_params + 1
            )));
        }
        let param_names = match param_names {
            Some(names) if names.len() != n_params => {
                return Err(Error::InvalidChains(format!(
                    "{} parameter names for {n_params} parameters",
                    names.len()
                )))
            }
            Some(names) => names,
            None => (1..=n_params).map(|k| format!("x{k}")).collect(),
        };
        Ok(Self {
            n_chains,
            n_iter,
            n_params,
            data,
            param_names,
            meta,
        })
    }

    pub fn n_chains(&self) -> usize {
        self.n_chains
    }

    pub fn n_iter(&self) -> usize {
        self.n_iter
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn meta(&self) -> &str {
        &self.meta
    }

    pub fn with_meta(mut self, meta: impl Into<String>) -> Self {
        self.meta = meta.into();
        self
    }

    /// Flat chain-major buffer.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Parameter vector of draw `iter` in chain `chain` (both 0-based).
    pub fn draw(&self, chain: usize, iter: usize) -> &[f64] {
        let start = (chain * self.n_iter + iter) * self.n_params;
        &self.data[start..start + self.n_params]
    }

    /// All draws of one chain as a `S × K` row-major slice.
    pub fn chain(&self, chain: usize) -> &[f64] {
        let len = self.n_iter * self.n_params;
        &self.data[chain * len..(chain + 1) * len]
    }

    pub fn get(&self, chain: usize, iter: usize, param: usize) -> f64 {
        self.data[(chain * self.n_iter + iter) * self.n_params + param]
    }

    /// Trace of parameter `k` in each chain.
    pub fn param_by_chain(&self, k: usize) -> Vec<Vec<f64>> {
        (0..self.n_chains)
            .map(|c| (0..self.n_iter).map(|s| self.get(c, s, k)).collect())
            .collect()
    }

    /// Splits every chain into `factor` contiguous blocks, yielding
    /// `N·factor` chains ordered chain-by-chain, early block first.
    ///
    /// When `S` is not divisible by `factor`, the first `S mod factor`
    /// draws of each chain are dropped so the most recent draws survive.
    pub fn split(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("split factor must be positive".into()));
        }
        if factor == 1 {
            return Ok(self.clone());
        }
        let block = self.n_iter / factor;
        if block < 2 {
            return Err(Error::InvalidArgument(format!(
                "splitting {} draws by {factor} leaves {block} per chain; need at least 2",
                self.n_iter
            )));
        }
        let skip = self.n_iter % factor;
        let mut data = Vec::with_capacity(self.n_chains * factor * block * self.n_params);
        for c in 0..self.n_chains {
            let chain = self.chain(c);
            for b in 0..factor {
                let from = (skip + b * block) * self.n_params;
                data.extend_from_slice(&chain[from..from + block * self.n_params]);
            }
        }
        Self::from_parts(
            self.n_chains * factor,
            block,
            self.n_params,
            data,
            Some(self.param_names.clone()),
            self.meta.clone(),
        )
    }

    /// Keeps draws 1, 1+k, 1+2k, … of every chain (`ceil(S/k)` draws).
    pub fn thin(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("thinning factor must be positive".into()));
        }
        let kept: Vec<usize> = (0..self.n_iter).step_by(k).collect();
        let mut data = Vec::with_capacity(self.n_chains * kept.len() * self.n_params);
        for c in 0..self.n_chains {
            for &s in &kept {
                data.extend_from_slice(self.draw(c, s));
            }
        }
        Self::from_parts(
            self.n_chains,
            kept.len(),
            self.n_params,
            data,
            Some(self.param_names.clone()),
            self.meta.clone(),
        )
    }

    pub fn subset_params(&self, selector: &ParamSelector) -> Result<Self> {
        let keep: Vec<usize> = match selector {
            ParamSelector::Indices(idx) => idx.clone(),
            ParamSelector::Stride(0) => {
                return Err(Error::InvalidArgument("stride must be positive".into()))
            }
            ParamSelector::Stride(step) => (0..self.n_params).step_by(*step).collect(),
        };
        if keep.is_empty() {
            return Err(Error::InvalidArgument("empty parameter selection".into()));
        }
        if let Some(&bad) = keep.iter().find(|&&k| k >= self.n_params) {
            return Err(Error::InvalidArgument(format!(
                "parameter index {} out of range 1..={}",
                bad + 1,
                self.n_params
            )));
        }
        let mut data = Vec::with_capacity(self.n_chains * self.n_iter * keep.len());
        for row in self.data.chunks_exact(self.n_params) {
            data.extend(keep.iter().map(|&k| row[k]));
        }
        Self::from_parts(
            self.n_chains,
            self.n_iter,
            keep.len(),
            data,
            Some(keep.iter().map(|&k| self.param_names[k].clone()).collect()),
            self.meta.clone(),
        )
    }

    /// Appends an "iteration block" covariate taking values `1..=blocks`
    /// over contiguous runs of each chain.
    pub fn with_iteration_block(&self, blocks: usize) -> Result<Self> {
        if blocks == 0 || blocks > self.n_iter {
            return Err(Error::InvalidArgument(format!(
                "iteration blocks must be in 1..={}",
                self.n_iter
            )));
        }
        let k = self.n_params + 1;
        let mut data = Vec::with_capacity(self.n_chains * self.n_iter * k);
        for c in 0..self.n_chains {
            for s in 0..self.n_iter {
                data.extend_from_slice(self.draw(c, s));
                data.push((s * blocks / self.n_iter + 1) as f64);
            }
        }
        let mut names = self.param_names.clone();
        names.push("iteration_block".into());
        Self::from_parts(self.n_chains, self.n_iter, k, data, Some(names), self.meta.clone())
    }

    /// Concatenates chains `2i` and `2i+1` (and so on for larger groups);
    /// the inverse of [`ChainSet::split`] on the truncated draws.
    pub fn merge(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_chains % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot merge {} chains in groups of {factor}",
                self.n_chains
            )));
        }
        Self::from_parts(
            self.n_chains / factor,
            self.n_iter * factor,
            self.n_params,
            self.data.clone(),
            Some(self.param_names.clone()),
            self.meta.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq_chains(n: usize, s: usize, k: usize) -> ChainSet {
        let data = (0..n * s * k).map(|v| v as f64).collect();
        ChainSet::from_flat(n, s, k, data, None).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ChainSet::new(vec![vec![vec![0.0]; 10]], None).is_err());
        let ragged = vec![vec![vec![0.0]; 10], vec![vec![0.0]; 9]];
        match ChainSet::new(ragged, None) {
            Err(Error::RaggedChains { chain, .. }) => assert_eq!(chain, 2),
            other => panic!("expected ragged error, got {other:?}"),
        }
        assert!(ChainSet::new(vec![vec![vec![0.0]; 3]; 2], None).is_err());
        let mut nan = vec![vec![vec![0.0]; 10]; 2];
        nan[1][3][0] = f64::NAN;
        assert!(ChainSet::new(nan, None).is_err());
    }

    #[test]
    fn split_shapes() {
        let cs = seq_chains(4, 1000, 1);
        let s = cs.split(2).unwrap();
        assert_eq!((s.n_chains(), s.n_iter()), (8, 500));
        assert_eq!(cs.split(1).unwrap(), cs);
    }

    #[test]
    fn split_drops_earliest_remainder() {
        let cs = ChainSet::from_flat(2, 7, 1, (0..14).map(f64::from).collect(), None).unwrap();
        let s = cs.split(2).unwrap();
        assert_eq!((s.n_chains(), s.n_iter()), (4, 3));
        assert_eq!(s.param_by_chain(0)[0], vec![1.0, 2.0, 3.0]);
        assert_eq!(s.param_by_chain(0)[1], vec![4.0, 5.0, 6.0]);
        assert_eq!(s.param_by_chain(0)[2], vec![8.0, 9.0, 10.0]);
        assert!(ChainSet::from_flat(2, 5, 1, vec![0.0; 10], None).unwrap().split(3).is_err());
    }

    #[test]
    fn thin_indexing() {
        let cs = seq_chains(2, 10_000, 1);
        assert_eq!(cs.thin(5).unwrap().n_iter(), 2000);
        assert_eq!(cs.thin(1).unwrap(), cs);
        let small = ChainSet::from_flat(2, 7, 1, (0..14).map(f64::from).collect(), None).unwrap();
        let t = small.thin(3).unwrap();
        assert_eq!(t.param_by_chain(0)[0], vec![0.0, 3.0, 6.0]);
        assert_eq!(t.param_by_chain(0)[1], vec![7.0, 10.0, 13.0]);
    }

    #[test]
    fn subset_by_stride_and_index() {
        let cs = seq_chains(2, 4, 10);
        let s = cs.subset_params(&ParamSelector::Stride(5)).unwrap();
        assert_eq!(s.param_names(), &["x1".to_string(), "x6".to_string()]);
        assert_eq!(s.draw(0, 0), &[0.0, 5.0]);
        let all = cs.subset_params(&ParamSelector::Indices((0..10).collect())).unwrap();
        assert_eq!(all, cs);
        let rev = cs.subset_params(&ParamSelector::Indices(vec![9, 0])).unwrap();
        assert_eq!(rev.draw(1, 3), &[79.0, 70.0]);
        assert!(cs.subset_params(&ParamSelector::Indices(vec![10])).is_err());
        assert!(cs.subset_params(&ParamSelector::Indices(vec![])).is_err());
    }

    #[test]
    fn stride_on_wide_parameter_set() {
        let cs = ChainSet::from_flat(2, 4, 18105, vec![0.0; 2 * 4 * 18105], None).unwrap();
        assert_eq!(cs.subset_params(&ParamSelector::Stride(5)).unwrap().n_params(), 3621);
    }

    #[test]
    fn iteration_block_covariate() {
        let cs = seq_chains(2, 8, 1).with_iteration_block(4).unwrap();
        assert_eq!(cs.n_params(), 2);
        let blocks: Vec<f64> = (0..8).map(|s| cs.get(1, s, 1)).collect();
        assert_eq!(blocks, vec![1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0]);
    }

    proptest! {
        #[test]
        fn split_then_merge_recovers_truncated(n in 2usize..5, s in 4usize..40, k in 1usize..3, factor in 1usize..4) {
            let cs = seq_chains(n, s, k);
            prop_assume!(s / factor >= 2);
            let merged = cs.split(factor).unwrap().merge(factor).unwrap();
            let skip = s % factor;
            prop_assert_eq!(merged.n_iter(), s - skip);
            for c in 0..n {
                for t in 0..merged.n_iter() {
                    prop_assert_eq!(merged.draw(c, t), cs.draw(c, t + skip));
                }
            }
        }
    }
}
