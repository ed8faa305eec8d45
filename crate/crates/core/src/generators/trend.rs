use crate::chain_store::ChainSet;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendMode {
    #[default]
    AllChains,
    /// Only the listed chains (0-based) drift.
    Chains(Vec<usize>),
}

/// Adds `trend · (2s/S − 1)` to draw `s = 1..=S` of the selected
/// parameters (0-based), so their mean rises by `2 · trend` over the run.
pub fn gen_trending(base: &ChainSet, trend: f64, dims: &[usize], mode: &TrendMode) -> Result<ChainSet> {
    let (n, s_len, k) = (base.n_chains(), base.n_iter(), base.n_params());
    if let Some(&bad) = dims.iter().find(|&&d| d >= k) {
        return Err(Error::InvalidArgument(format!("trend dimension {} out of range 1..={k}", bad + 1)));
    }
    let chains: Vec<usize> = match mode {
        TrendMode::AllChains => (0..n).collect(),
        TrendMode::Chains(list) => {
            if let Some(&bad) = list.iter().find(|&&c| c >= n) {
                return Err(Error::InvalidArgument(format!("chain {} out of range 1..={n}", bad + 1)));
            }
            list.clone()
        }
    };
    let mut data = base.as_slice().to_vec();
    for &c in &chains {
        for s in 0..s_len {
            let shift = trend * (2.0 * (s + 1) as f64 / s_len as f64 - 1.0);
            for &d in dims {
                data[(c * s_len + s) * k + d] += shift;
            }
        }
    }
    ChainSet::from_flat(n, s_len, k, data, Some(base.param_names().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{gen_mvn, CovarianceSpec};
    use crate::stats::mean;

    fn base(k: usize) -> ChainSet {
        gen_mvn(&vec![CovarianceSpec::identity(k); 4], 4000, 1).unwrap()
    }

    fn col(cs: &ChainSet, c: usize, k: usize, range: std::ops::Range<usize>) -> Vec<f64> {
        range.map(|s| cs.get(c, s, k)).collect()
    }

    #[test]
    fn zero_trend_is_identity() {
        let b = base(2);
        assert_eq!(gen_trending(&b, 0.0, &[0, 1], &TrendMode::AllChains).unwrap().as_slice(), b.as_slice());
    }

    #[test]
    fn decile_means_differ_by_drift() {
        let b = base(1);
        let t = gen_trending(&b, 1.0, &[0], &TrendMode::AllChains).unwrap();
        for c in 0..4 {
            let diff = mean(&col(&t, c, 0, 3600..4000)) - mean(&col(&t, c, 0, 0..400));
            // 2·(1 − 0.1) = 1.8, with sampling SE about 0.07
            assert!((diff - 1.8).abs() < 0.25, "{diff}");
        }
    }

    #[test]
    fn single_dimension_only() {
        let b = base(16);
        let t = gen_trending(&b, 1.0, &[3], &TrendMode::AllChains).unwrap();
        for s in 0..4000 {
            for k in 0..16 {
                let changed = t.get(0, s, k) != b.get(0, s, k);
                assert_eq!(changed, k == 3 && s + 1 != 2000);
            }
        }
    }

    #[test]
    fn all_chain_mode_keeps_chain_means_equal() {
        let t = gen_trending(&base(1), 1.0, &[0], &TrendMode::AllChains).unwrap();
        let means: Vec<f64> = (0..4).map(|c| mean(&col(&t, c, 0, 0..4000))).collect();
        assert!(means.iter().all(|m| m.abs() < 0.08), "{means:?}");
        let one = gen_trending(&base(1), 1.0, &[0], &TrendMode::Chains(vec![2])).unwrap();
        assert_eq!(one.chain(0), base(1).chain(0));
        assert!(gen_trending(&base(1), 1.0, &[1], &TrendMode::AllChains).is_err());
    }
}
