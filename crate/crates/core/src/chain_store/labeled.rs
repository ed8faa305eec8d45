use super::ChainSet;
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::index;

pub const DEFAULT_TEST_FRAC: f64 = 0.3;

/// Draws flattened into `(x, chain)` rows with a per-chain stratified
/// train/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    n_features: usize,
    n_classes: usize,
    /// Row-major `n_rows × n_features`.
    x: Vec<f64>,
    /// 0-based chain index per row.
    labels: Vec<u32>,
    train: Vec<usize>,
    test: Vec<usize>,
    seed: u64,
}

/// Stacks all chains into labeled rows and samples `round(S·test_frac)`
/// test draws per chain without replacement; the rest are training rows.
pub fn make_labeled(cs: &ChainSet, test_frac: f64, seed: u64) -> Result<LabeledDataset> {
    if !(test_frac > 0.0 && test_frac < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_frac}"
        )));
    }
    let s = cs.n_iter();
    let n_test = (s as f64 * test_frac).round() as usize;
    if n_test < 1 || n_test >= s {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_frac} with {s} draws per chain leaves {n_test} test and {} training draws",
            s.saturating_sub(n_test)
        )));
    }
    let mut train = Vec::with_capacity(cs.n_chains() * (s - n_test));
    let mut test = Vec::with_capacity(cs.n_chains() * n_test);
    let mut is_test = vec![false; s];
    for c in 0..cs.n_chains() {
        let mut r = rng::stream(seed, c as u64);
        is_test.iter_mut().for_each(|t| *t = false);
        for i in index::sample(&mut r, s, n_test) {
            is_test[i] = true;
        }
        for (i, &t) in is_test.iter().enumerate() {
            let row = c * s + i;
            if t {
                test.push(row);
            } else {
                train.push(row);
            }
        }
    }
    Ok(LabeledDataset {
        n_features: cs.n_params(),
        n_classes: cs.n_chains(),
        x: cs.as_slice().to_vec(),
        labels: (0..cs.n_chains())
            .flat_map(|c| std::iter::repeat_n(c as u32, s))
            .collect(),
        train,
        test,
        seed,
    })
}

impl LabeledDataset {
    /// Builds a dataset from explicit rows and partitions.
    pub fn from_parts(
        x: Vec<f64>,
        labels: Vec<u32>,
        n_features: usize,
        n_classes: usize,
        train: Vec<usize>,
        test: Vec<usize>,
    ) -> Result<Self> {
        if n_features == 0 || x.len() != labels.len() * n_features {
            return Err(Error::InvalidArgument(format!(
                "{} values do not form rows of {n_features} features for {} labels",
                x.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        let n = labels.len();
        let mut seen = vec![false; n];
        for &i in train.iter().chain(&test) {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "row {i} is out of range or assigned twice"
                )));
            }
            seen[i] = true;
        }
        Ok(Self {
            n_features,
            n_classes,
            x,
            labels,
            train,
            test,
            seed: 0,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    /// Test rows as (features, label) pairs.
    pub fn test_rows(&self) -> TestRows {
        TestRows::new(
            self.test.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            self.test.iter().map(|&i| self.labels[i]).collect(),
            self.n_features,
            self.n_classes,
        )
    }
}

/// Held-out rows handed to the uncertainty and decile procedures.
#[derive(Clone, Debug, PartialEq)]
pub struct TestRows {
    pub x: Vec<f64>,
    pub labels: Vec<u32>,
    pub n_features: usize,
    pub n_classes: usize,
}

impl TestRows {
    pub fn new(x: Vec<f64>, labels: Vec<u32>, n_features: usize, n_classes: usize) -> Self {
        debug_assert_eq!(x.len(), labels.len() * n_features);
        Self {
            x,
            labels,
            n_features,
            n_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn chains(n: usize, s: usize) -> ChainSet {
        ChainSet::from_flat(n, s, 1, (0..n * s).map(|v| v as f64).collect(), None).unwrap()
    }

    #[test]
    fn seventy_thirty_split() {
        let ds = make_labeled(&chains(4, 2000), DEFAULT_TEST_FRAC, 1).unwrap();
        assert_eq!(ds.train().len(), 5600);
        assert_eq!(ds.test().len(), 2400);
        for c in 0..4u32 {
            let n = ds.test().iter().filter(|&&i| ds.label(i) == c).count();
            assert_eq!(n, 600);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let cs = chains(3, 50);
        assert_eq!(make_labeled(&cs, 0.3, 9).unwrap(), make_labeled(&cs, 0.3, 9).unwrap());
        assert_ne!(
            make_labeled(&cs, 0.3, 9).unwrap().test(),
            make_labeled(&cs, 0.3, 10).unwrap().test()
        );
    }

    #[test]
    fn degenerate_fraction_errors() {
        let cs = ChainSet::from_flat(2, 4, 1, vec![0.0; 8], None).unwrap().split(2).unwrap();
        assert_eq!(cs.n_iter(), 2);
        assert!(make_labeled(&cs, 0.999, 0).is_err());
        assert!(make_labeled(&cs, 0.0, 0).is_err());
        assert!(make_labeled(&cs, 1.0, 0).is_err());
    }

    #[test]
    fn rows_carry_true_labels() {
        let cs = chains(3, 10);
        let ds = make_labeled(&cs, 0.3, 4).unwrap();
        for i in 0..ds.n_rows() {
            assert_eq!(ds.row(i)[0] as usize / 10, ds.label(i) as usize);
        }
    }

    proptest! {
        #[test]
        fn partition_is_a_bijection(seed in any::<u64>(), n in 2usize..5, s in 4usize..60, frac in 0.1f64..0.6) {
            let cs = chains(n, s);
            if let Ok(ds) = make_labeled(&cs, frac, seed) {
                let mut all: Vec<usize> = ds.train().iter().chain(ds.test()).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n * s).collect::<Vec<_>>());
            }
        }
    }
}
