//! Variance-ratio and effective-sample-size diagnostics.
//!
//! `rank_rhat`, `bulk_ess` and `tail_ess` split the chains in two
//! internally, so callers pass unsplit chains. `multivariate_rhat` uses the
//! chains exactly as given.

use crate::chain_store::{fold, rank_normalize_chains, ChainSet};
use crate::error::{Error, Result};
use crate::stats::{mean, quantile, variance};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub const RHAT_THRESHOLD: f64 = 1.01;
pub const ESS_THRESHOLD: f64 = 400.0;
/// ESS estimates are capped at this multiple of the total draw count.
pub const ESS_CAP_FACTOR: f64 = 10.0;

/// Potential scale reduction of already split chains.
///
/// All-identical values give `sqrt((L−1)/L)`; zero within-chain variance
/// with differing chain means gives `+∞`.
pub fn split_rhat(chains: &[Vec<f64>]) -> Result<f64> {
    let l = check_chains(chains, 2)?;
    let lf = l as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let b = lf * variance(&means);
    let w = mean(&chains.iter().map(|c| variance(c)).collect::<Vec<_>>());
    if w == 0.0 {
        return Ok(if b == 0.0 { ((lf - 1.0) / lf).sqrt() } else { f64::INFINITY });
    }
    Ok((((lf - 1.0) / lf * w + b / lf) / w).sqrt())
}

fn check_chains(chains: &[Vec<f64>], min_len: usize) -> Result<usize> {
    if chains.len() < 2 {
        return Err(Error::InvalidChains(format!("need at least 2 chains, got {}", chains.len())));
    }
    let l = chains[0].len();
    if let Some((c, bad)) = chains.iter().enumerate().find(|(_, c)| c.len() != l) {
        return Err(Error::RaggedChains {
            chain: c as i64 + 1,
            expected: l,
            found: bad.len(),
        });
    }
    if l < min_len {
        return Err(Error::InvalidChains(format!(
            "need at least {min_len} draws per chain, got {l}"
        )));
    }
    Ok(l)
}

fn split_param(cs: &ChainSet, k: usize) -> Result<Vec<Vec<f64>>> {
    if k >= cs.n_params() {
        return Err(Error::InvalidArgument(format!(
            "parameter {} out of range 1..={}",
            k + 1,
            cs.n_params()
        )));
    }
    Ok(cs.split(2)?.param_by_chain(k))
}

/// Larger of the rank-normalized split-R̂ and its folded counterpart.
pub fn rank_rhat(cs: &ChainSet, k: usize) -> Result<f64> {
    let chains = split_param(cs, k)?;
    let bulk = split_rhat(&rank_normalize_chains(&chains))?;
    let lens: Vec<usize> = chains.iter().map(Vec::len).collect();
    let folded = fold(&chains.concat());
    let mut it = folded.into_iter();
    let folded: Vec<Vec<f64>> = lens.iter().map(|&n| it.by_ref().take(n).collect()).collect();
    let tail = split_rhat(&rank_normalize_chains(&folded))?;
    Ok(bulk.max(tail))
}

/// Brooks–Gelman multivariate potential scale reduction factor:
/// `(L−1)/L + (M+1)/M · λmax(W⁻¹ B/L)`.
pub fn multivariate_rhat(cs: &ChainSet) -> Result<f64> {
    let (m, l, k) = (cs.n_chains(), cs.n_iter(), cs.n_params());
    if l <= k {
        return Err(Error::SingularCovariance { k, l });
    }
    let mut w = DMatrix::<f64>::zeros(k, k);
    let mut means = Vec::with_capacity(m);
    for c in 0..m {
        let rows = DMatrix::from_row_slice(l, k, cs.chain(c));
        let mu = rows.row_mean();
        let centered = DMatrix::from_fn(l, k, |i, j| rows[(i, j)] - mu[j]);
        w += centered.transpose() * &centered / (l as f64 - 1.0);
        means.push(mu.transpose());
    }
    w /= m as f64;
    let grand: DVector<f64> = means.iter().sum::<DVector<f64>>() / m as f64;
    let mut b_over_l = DMatrix::<f64>::zeros(k, k);
    for mu in &means {
        let d = mu - &grand;
        b_over_l += &d * d.transpose();
    }
    b_over_l /= m as f64 - 1.0;
    let chol = w.clone().cholesky().ok_or(Error::SingularCovariance { k, l })?;
    // conditioning guard: a numerically singular W passes Cholesky with a
    // vanishing pivot
    let diag = chol.l().diagonal();
    let (dmin, dmax) = diag.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if !(dmin > dmax * 1e-7) {
        return Err(Error::SingularCovariance { k, l });
    }
    // L⁻¹ (B/L) L⁻ᵀ shares eigenvalues with W⁻¹ B/L and is symmetric
    let lower = chol.l();
    let x = lower
        .solve_lower_triangular(&b_over_l)
        .ok_or(Error::SingularCovariance { k, l })?;
    let s = lower
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::SingularCovariance { k, l })?;
    let s = (&s + s.transpose()) * 0.5;
    let lambda = SymmetricEigen::new(s).eigenvalues.max().max(0.0);
    let (lf, mf) = (l as f64, m as f64);
    Ok((lf - 1.0) / lf + (mf + 1.0) / mf * lambda)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EssFlag {
    Ok,
    /// The sequence was constant; the total draw count is reported.
    Constant,
    /// The estimate exceeded the sanity cap and was clamped.
    Capped,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssEstimate {
    pub value: f64,
    pub flag: EssFlag,
}

/// Biased (divide by n) autocovariance at `lag` of a centered chain.
fn autocov(centered: &[f64], lag: usize) -> f64 {
    let n = centered.len();
    centered[..n - lag]
        .iter()
        .zip(&centered[lag..])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / n as f64
}

/// Effective sample size of the given chains using combined
/// autocorrelations truncated by Geyer's initial positive sequence and
/// made monotone.
pub fn ess(chains: &[Vec<f64>]) -> Result<EssEstimate> {
    let n = check_chains(chains, 4)?;
    let m = chains.len();
    let total = (m * n) as f64;
    let first = chains[0][0];
    if chains.iter().flatten().all(|&v| v == first) {
        return Ok(EssEstimate {
            value: total,
            flag: EssFlag::Constant,
        });
    }
    let chain_means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let centered: Vec<Vec<f64>> = chains
        .iter()
        .zip(&chain_means)
        .map(|(c, mu)| c.iter().map(|v| v - mu).collect())
        .collect();
    let mean_acov = |lag: usize| centered.iter().map(|c| autocov(c, lag)).sum::<f64>() / m as f64;
    let nf = n as f64;
    let mean_var = mean_acov(0) * nf / (nf - 1.0);
    let var_plus = mean_var * (nf - 1.0) / nf + variance(&chain_means);
    let rho = |lag: usize| 1.0 - (mean_var - mean_acov(lag)) / var_plus;

    let mut rho_t = vec![0.0; n];
    let mut t = 0;
    let mut even = 1.0;
    rho_t[0] = even;
    let mut odd = rho(1);
    rho_t[1] = odd;
    while t + 5 < n && !(even + odd).is_nan() && even + odd > 0.0 {
        t += 2;
        even = rho(t);
        odd = rho(t + 1);
        if even + odd >= 0.0 {
            rho_t[t] = even;
            rho_t[t + 1] = odd;
        }
    }
    let max_t = t;
    if even > 0.0 {
        rho_t[max_t] = even;
    }
    let mut t = 0;
    while t + 4 <= max_t {
        t += 2;
        if rho_t[t] + rho_t[t + 1] > rho_t[t - 2] + rho_t[t - 1] {
            rho_t[t] = (rho_t[t - 2] + rho_t[t - 1]) / 2.0;
            rho_t[t + 1] = rho_t[t];
        }
    }
    let tau = -1.0 + 2.0 * rho_t[..max_t].iter().sum::<f64>() + rho_t[max_t];
    let tau = tau.max(1.0 / total.log10());
    let value = total / tau;
    let cap = ESS_CAP_FACTOR * total;
    Ok(if value > cap {
        EssEstimate {
            value: cap,
            flag: EssFlag::Capped,
        }
    } else {
        EssEstimate {
            value,
            flag: EssFlag::Ok,
        }
    })
}

/// ESS of the rank-normalized split chains of parameter `k`.
pub fn bulk_ess(cs: &ChainSet, k: usize) -> Result<EssEstimate> {
    let chains = split_param(cs, k)?;
    if is_constant(&chains) {
        return ess(&chains);
    }
    ess(&rank_normalize_chains(&chains))
}

/// Smaller ESS of the indicators `x ≤ q05` and `x ≥ q95` on split chains.
pub fn tail_ess(cs: &ChainSet, k: usize) -> Result<EssEstimate> {
    let chains = split_param(cs, k)?;
    let pooled = chains.concat();
    let (q05, q95) = (quantile(&pooled, 0.05), quantile(&pooled, 0.95));
    let indicator = |pred: &dyn Fn(f64) -> bool| -> Vec<Vec<f64>> {
        chains
            .iter()
            .map(|c| c.iter().map(|&v| pred(v) as u8 as f64).collect())
            .collect()
    };
    let lo = ess(&indicator(&|v| v <= q05))?;
    let hi = ess(&indicator(&|v| v >= q95))?;
    Ok(if hi.value < lo.value { hi } else { lo })
}

fn is_constant(chains: &[Vec<f64>]) -> bool {
    let first = chains[0][0];
    chains.iter().flatten().all(|&v| v == first)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDiagnostics {
    pub name: String,
    pub rank_rhat: f64,
    pub bulk_ess: f64,
    pub tail_ess: f64,
    pub bulk_ess_flag: EssFlag,
    pub tail_ess_flag: EssFlag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub per_param: Vec<ParamDiagnostics>,
    /// Computed on chains split in two; `None` when W is singular.
    pub multivariate_rhat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub multivariate_rhat_note: Option<String>,
}

impl DiagnosticsReport {
    pub fn max_rank_rhat(&self) -> f64 {
        self.per_param.iter().map(|p| p.rank_rhat).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_bulk_ess(&self) -> f64 {
        self.per_param.iter().map(|p| p.bulk_ess).fold(f64::INFINITY, f64::min)
    }

    pub fn min_tail_ess(&self) -> f64 {
        self.per_param.iter().map(|p| p.tail_ess).fold(f64::INFINITY, f64::min)
    }
}

/// Every per-parameter diagnostic plus multivariate R̂ on split chains.
pub fn diagnose(cs: &ChainSet) -> Result<DiagnosticsReport> {
    let per_param = (0..cs.n_params())
        .map(|k| {
            let bulk = bulk_ess(cs, k)?;
            let tail = tail_ess(cs, k)?;
            Ok(ParamDiagnostics {
                name: cs.param_names()[k].clone(),
                rank_rhat: rank_rhat(cs, k)?,
                bulk_ess: bulk.value,
                tail_ess: tail.value,
                bulk_ess_flag: bulk.flag,
                tail_ess_flag: tail.flag,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (multivariate_rhat, multivariate_rhat_note) = match multivariate_rhat(&cs.split(2)?) {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(DiagnosticsReport {
        per_param,
        multivariate_rhat,
        multivariate_rhat_note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(n: usize, s: usize, k: usize, seed: u64) -> ChainSet {
        let mut r = rng::stream(seed, 0);
        let data = (0..n * s * k).map(|_| StandardNormal.sample(&mut r)).collect();
        ChainSet::from_flat(n, s, k, data, None).unwrap()
    }

    fn ar1(n: usize, s: usize, rho: f64, seed: u64) -> ChainSet {
        let mut data = Vec::with_capacity(n * s);
        for c in 0..n {
            let mut r = rng::stream(seed, c as u64);
            let mut x = 0.0;
            for _ in 0..s {
                let e: f64 = StandardNormal.sample(&mut r);
                x = rho * x + e;
                data.push(x);
            }
        }
        ChainSet::from_flat(n, s, 1, data, None).unwrap()
    }

    #[test]
    fn identical_chains_limit() {
        let c = vec![1.0, 2.0, 3.0, 4.0];
        let r = split_rhat(&[c.clone(), c]).unwrap();
        assert!((r - (3.0f64 / 4.0).sqrt()).abs() < 1e-15);
        let r = split_rhat(&[vec![2.0; 5], vec![2.0; 5]]).unwrap();
        assert!((r - (4.0f64 / 5.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_offset_chains_infinite() {
        assert_eq!(split_rhat(&[vec![0.0; 6], vec![0.5; 6]]).unwrap(), f64::INFINITY);
    }

    #[test]
    fn split_rhat_matches_hand_computation() {
        // means 2 and 5, variances 1 and 1, L = 3: B = 3·4.5 = 13.5, W = 1
        // R̂ = sqrt((2/3 + 4.5)/1)
        let r = split_rhat(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert!((r - (2.0f64 / 3.0 + 4.5).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn iid_chains_below_threshold() {
        let below = (0..20).filter(|&s| rank_rhat(&normal(4, 1000, 1, s), 0).unwrap() < RHAT_THRESHOLD).count();
        assert!(below >= 19, "{below}/20");
    }

    #[test]
    fn shifted_chain_flagged() {
        let cs = normal(4, 500, 1, 3);
        let mut chains: Vec<Vec<Vec<f64>>> = (0..4)
            .map(|c| (0..500).map(|s| vec![cs.get(c, s, 0)]).collect())
            .collect();
        chains[2].iter_mut().for_each(|d| d[0] += 5.0);
        let shifted = ChainSet::new(chains, None).unwrap();
        assert!(rank_rhat(&shifted, 0).unwrap() > 1.5);
    }

    #[test]
    fn multivariate_k1_cross_check() {
        // for K = 1: mv − (L−1)/L = (M+1)/M · (R̂² − (L−1)/L)
        for seed in 0..5 {
            let cs = ar1(4, 300, 0.5, seed);
            let mv = multivariate_rhat(&cs).unwrap();
            let r = split_rhat(&cs.param_by_chain(0)).unwrap();
            let (l, m) = (300.0, 4.0);
            let base = (l - 1.0) / l;
            assert!(((mv - base) - (m + 1.0) / m * (r * r - base)).abs() < 1e-12);
        }
    }

    #[test]
    fn multivariate_identical_chains_floor() {
        let cs = normal(2, 50, 3, 2);
        let one: Vec<Vec<f64>> = (0..50).map(|s| cs.draw(0, s).to_vec()).collect();
        let twin = ChainSet::new(vec![one.clone(), one], None).unwrap();
        assert!((multivariate_rhat(&twin).unwrap() - 49.0 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn multivariate_needs_more_draws_than_params() {
        let cs = normal(3, 5, 5, 1);
        assert!(matches!(multivariate_rhat(&cs), Err(Error::SingularCovariance { .. })));
        // collinear columns
        let dup: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|c| (0..40).map(|s| vec![cs.get(c, s % 5, 0), 2.0 * cs.get(c, s % 5, 0)]).collect())
            .collect();
        let dup = ChainSet::new(dup, None).unwrap();
        assert!(matches!(multivariate_rhat(&dup), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn iid_bulk_ess_near_nominal() {
        let inside = (0..20)
            .filter(|&s| {
                let e = bulk_ess(&normal(4, 2000, 1, 100 + s), 0).unwrap().value;
                (0.8 * 8000.0..=1.25 * 8000.0).contains(&e)
            })
            .count();
        assert!(inside >= 18, "{inside}/20");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // (1 − ρ)/(1 + ρ) = 0.0526 of 16000 ≈ 842
        let e = bulk_ess(&ar1(4, 4000, 0.9, 7), 0).unwrap();
        assert!(e.value > 842.0 * 0.7 && e.value < 842.0 * 1.3, "{}", e.value);
        assert!(tail_ess(&ar1(4, 4000, 0.9, 7), 0).unwrap().value < 0.2 * 16000.0);
    }

    #[test]
    fn antithetic_chain_exceeds_nominal_but_capped() {
        // alternating chains: strongly negative lag-1 autocorrelation
        let mut r = rng::stream(4, 0);
        let chains: Vec<Vec<f64>> = (0..2)
            .map(|c| {
                (0..200)
                    .map(|i| {
                        let e: f64 = StandardNormal.sample(&mut r);
                        (if (i + c) % 2 == 0 { 1.0 } else { -1.0 }) + 0.1 * e
                    })
                    .collect()
            })
            .collect();
        let e = ess(&chains).unwrap();
        assert!(e.value > 400.0);
        assert!(e.value <= ESS_CAP_FACTOR * 400.0);
    }

    #[test]
    fn constant_parameter_flagged() {
        let cs = ChainSet::from_flat(2, 20, 1, vec![3.0; 40], None).unwrap();
        let e = bulk_ess(&cs, 0).unwrap();
        assert_eq!((e.value, e.flag), (40.0, EssFlag::Constant));
    }

    #[test]
    fn report_covers_every_parameter() {
        let rep = diagnose(&normal(4, 400, 3, 9)).unwrap();
        assert_eq!(rep.per_param.len(), 3);
        assert!(rep.multivariate_rhat.unwrap() >= 199.0 / 200.0);
        assert!(rep.per_param.iter().all(|p| p.rank_rhat > 0.0 && p.bulk_ess > 0.0 && p.tail_ess > 0.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rank_rhat_invariant_under_positive_scaling(seed in 0u64..1000, power in -8i32..8) {
            let cs = ar1(3, 40, 0.4, seed);
            let scale = 2f64.powi(power);
            let data: Vec<f64> = cs.as_slice().iter().map(|v| v * scale).collect();
            let mapped = ChainSet::from_flat(3, 40, 1, data, None).unwrap();
            let a = rank_rhat(&cs, 0).unwrap();
            prop_assert_eq!(a, rank_rhat(&mapped, 0).unwrap());
            prop_assert_eq!(a.to_bits(), rank_rhat(&cs, 0).unwrap().to_bits());
        }

        #[test]
        fn multivariate_at_least_floor(seed in 0u64..1000) {
            let cs = normal(3, 30, 2, seed);
            prop_assert!(multivariate_rhat(&cs).unwrap() >= 29.0 / 30.0 - 1e-12);
        }

        #[test]
        fn ess_positive_and_capped(seed in 0u64..1000, rho in -0.9f64..0.95) {
            let cs = ar1(2, 64, rho, seed);
            let e = ess(&cs.param_by_chain(0)).unwrap();
            prop_assert!(e.value > 0.0 && e.value <= ESS_CAP_FACTOR * 128.0);
        }
    }
}
