use super::ChainSet;
use crate::stats::{average_ranks, median, normal_quantile};

/// Absolute deviation of each value from the median of all values.
pub fn fold(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let m = median(values);
    values.iter().map(|v| (v - m).abs()).collect()
}

/// Rank-normalizes parameter `k` of `cs` over all chains pooled.
pub fn rank_normalize(cs: &ChainSet, k: usize) -> Vec<Vec<f64>> {
    rank_normalize_chains(&cs.param_by_chain(k))
}

/// Pooled average ranks mapped through `Φ⁻¹((r − 3/8) / (n + 1/4))`,
/// reshaped back into the input's chains.
pub fn rank_normalize_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = pooled.len() as f64;
    let ranks = average_ranks(&pooled);
    let mut z = ranks
        .into_iter()
        .map(|r| normal_quantile((r - 0.375) / (n + 0.25)));
    chains
        .iter()
        .map(|c| z.by_ref().take(c.len()).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn fold_examples() {
        assert_eq!(fold(&[1.0, 2.0, 3.0]), vec![1.0, 0.0, 1.0]);
        assert_eq!(fold(&[-2.5, 2.5]), vec![2.5, 2.5]);
        assert_eq!(fold(&[5.0; 4]), vec![0.0; 4]);
    }

    #[test]
    fn smallest_of_four_maps_to_frozen_quantile() {
        // statrs inverts the CDF through erfc⁻¹, a route independent of AS241.
        let oracle = Normal::new(0.0, 1.0).unwrap().inverse_cdf(0.625 / 4.25);
        assert!((oracle - (-1.049_131)).abs() < 1e-5);
        let z = rank_normalize_chains(&[vec![0.1, 3.0], vec![2.0, 1.0]]);
        assert!((z[0][0] - oracle).abs() < 1e-9);
    }

    #[test]
    fn quantile_matches_oracle_across_range() {
        let oracle = Normal::new(0.0, 1.0).unwrap();
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            assert!((normal_quantile(p) - oracle.inverse_cdf(p)).abs() < 1e-9, "p = {p}");
        }
        for &p in &[1e-10, 1e-6, 1e-3, 0.999, 1.0 - 1e-7] {
            assert!((normal_quantile(p) - oracle.inverse_cdf(p)).abs() < 1e-9, "p = {p}");
        }
    }

    #[test]
    fn constant_values_map_to_zero() {
        let z = rank_normalize_chains(&[vec![4.0; 3], vec![4.0; 3]]);
        assert!(z.iter().flatten().all(|v| v.abs() < 1e-15));
    }

    proptest! {
        #[test]
        fn invariant_under_increasing_maps(vals in proptest::collection::vec(-50.0f64..50.0, 8..40)) {
            let half = vals.len() / 2;
            let chains = vec![vals[..half].to_vec(), vals[half..].to_vec()];
            let mapped: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.iter().map(|v| (v / 10.0).exp() * 3.0 + 1.0).collect())
                .collect();
            prop_assert_eq!(rank_normalize_chains(&chains), rank_normalize_chains(&mapped));
        }

        #[test]
        fn fold_nonnegative_with_zero_for_odd_length(vals in proptest::collection::vec(-1e3f64..1e3, 1..60)) {
            let f = fold(&vals);
            prop_assert!(f.iter().all(|v| *v >= 0.0));
            if vals.len() % 2 == 1 {
                prop_assert!(f.iter().any(|v| *v == 0.0));
            }
        }
    }
}
