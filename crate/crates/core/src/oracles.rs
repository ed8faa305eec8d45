//! Ground-truth references: the Bayes-optimal chain classifier, quantile-R²
//! and exact stationary distributions.

use crate::error::{Error, Result};
use crate::generators::continuous::{cholesky_lower, to_dmatrix, Matrix};
use crate::generators::TransitionMatrix;
use crate::rng::{self, Rng};
use crate::stats::{quantile_sorted, sorted};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// A chain's stationary law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum DensitySpec {
    Mvn { mean: Vec<f64>, cov: Matrix },
    StudentT { mean: Vec<f64>, shape: Matrix, dof: f64 },
    /// Stationary marginal `N(0, σ²/(1−ρ²))` of an AR(1) process.
    Ar1Marginal { rho: f64, sigma: f64 },
    /// `dim` independent Cauchy components.
    Cauchy { dim: usize, loc: f64, scale: f64 },
    /// Probabilities of the 1-based states.
    Discrete { probs: Vec<f64> },
}

enum Prepared {
    Gaussian {
        mean: DVector<f64>,
        chol: DMatrix<f64>,
        log_norm: f64,
    },
    StudentT {
        mean: DVector<f64>,
        chol: DMatrix<f64>,
        dof: f64,
        chi2: ChiSquared<f64>,
        log_norm: f64,
    },
    Cauchy {
        dim: usize,
        loc: f64,
        scale: f64,
    },
    Discrete {
        cumulative: Vec<f64>,
        log_p: Vec<f64>,
    },
}

fn log_det(chol: &DMatrix<f64>) -> f64 {
    2.0 * chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `(x − μ)ᵀ Σ⁻¹ (x − μ)` through the Cholesky factor.
fn mahalanobis(chol: &DMatrix<f64>, mean: &DVector<f64>, x: &[f64]) -> f64 {
    let d = DVector::from_column_slice(x) - mean;
    chol.solve_lower_triangular(&d).expect("positive diagonal").norm_squared()
}

impl DensitySpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::Mvn { mean, .. } | Self::StudentT { mean, .. } => mean.len(),
            Self::Cauchy { dim, .. } => *dim,
            Self::Ar1Marginal { .. } | Self::Discrete { .. } => 1,
        }
    }

    fn prepare(&self) -> Result<Prepared> {
        Ok(match self {
            Self::Mvn { mean, cov } => {
                let chol = cholesky_lower(&to_dmatrix(cov)?)?;
                check_len(mean.len(), chol.nrows())?;
                let k = mean.len() as f64;
                Prepared::Gaussian {
                    log_norm: -0.5 * (k * (2.0 * PI).ln() + log_det(&chol)),
                    mean: DVector::from_column_slice(mean),
                    chol,
                }
            }
            Self::Ar1Marginal { rho, sigma } => {
                if !(rho.abs() < 1.0) || !(*sigma > 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "AR(1) marginal needs |rho| < 1 and sigma > 0 (rho = {rho}, sigma = {sigma})"
                    )));
                }
                let var = sigma * sigma / (1.0 - rho * rho);
                Self::Mvn {
                    mean: vec![0.0],
                    cov: vec![vec![var]],
                }
                .prepare()?
            }
            Self::StudentT { mean, shape, dof } => {
                let chol = cholesky_lower(&to_dmatrix(shape)?)?;
                check_len(mean.len(), chol.nrows())?;
                let chi2 = ChiSquared::new(*dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
                let k = mean.len() as f64;
                Prepared::StudentT {
                    log_norm: ln_gamma((dof + k) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * k * (dof * PI).ln() - 0.5 * log_det(&chol),
                    mean: DVector::from_column_slice(mean),
                    chol,
                    dof: *dof,
                    chi2,
                }
            }
            Self::Cauchy { dim, loc, scale } => {
                if !(*scale > 0.0) || *dim == 0 {
                    return Err(Error::InvalidArgument("Cauchy needs dim >= 1 and scale > 0".into()));
                }
                Prepared::Cauchy {
                    dim: *dim,
                    loc: *loc,
                    scale: *scale,
                }
            }
            Self::Discrete { probs } => {
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("discrete probabilities must form a simplex".into()));
                }
                Prepared::Discrete {
                    cumulative: probs
                        .iter()
                        .scan(0.0, |acc, p| {
                            *acc += p;
                            Some(*acc)
                        })
                        .collect(),
                    log_p: probs.iter().map(|p| p.ln()).collect(),
                }
            }
        })
    }

    /// Log-density (log-mass for discrete states) at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(self.prepare()?.log_density(x))
    }
}

fn check_len(mean: usize, dim: usize) -> Result<()> {
    if mean == dim {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: dim, found: mean })
    }
}

impl Prepared {
    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            Self::Gaussian { mean, chol, log_norm } => log_norm - 0.5 * mahalanobis(chol, mean, x),
            Self::StudentT {
                mean, chol, dof, log_norm, ..
            } => log_norm - 0.5 * (dof + mean.len() as f64) * (mahalanobis(chol, mean, x) / dof).ln_1p(),
            Self::Cauchy { loc, scale, .. } => x
                .iter()
                .map(|v| -(PI * scale).ln() - (((v - loc) / scale).powi(2)).ln_1p())
                .sum(),
            Self::Discrete { log_p, .. } => {
                let s = x[0];
                if s.fract() == 0.0 && s >= 1.0 && s <= log_p.len() as f64 {
                    log_p[s as usize - 1]
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn sample(&self, r: &mut Rng) -> Vec<f64> {
        let normals = |r: &mut Rng, k: usize| DVector::from_fn(k, |_, _| StandardNormal.sample(r));
        match self {
            Self::Gaussian { mean, chol, .. } => (mean + chol * normals(r, mean.len())).iter().copied().collect(),
            Self::StudentT {
                mean, chol, dof, chi2, ..
            } => {
                let z = chol * normals(r, mean.len());
                let w: f64 = chi2.sample(r);
                (mean + z * (dof / w).sqrt()).iter().copied().collect()
            }
            Self::Cauchy { dim, loc, scale } => (0..*dim)
                .map(|_| loc + scale * (PI * (r.random::<f64>() - 0.5)).tan())
                .collect(),
            Self::Discrete { cumulative, .. } => {
                let u: f64 = r.random::<f64>() * cumulative[cumulative.len() - 1];
                let i = cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1);
                vec![(i + 1) as f64]
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalRStar {
    pub r_star: f64,
    /// Binomial standard error of `r_star`.
    pub std_error: f64,
    pub n_mc: usize,
}

const SHARD: usize = 1000;

/// R* of the maximum-likelihood chain classifier under uniform chain
/// priors, estimated from `n_mc` simulated draws. Ties go to the lowest
/// chain index.
pub fn bayes_optimal_rstar(densities: &[DensitySpec], n_mc: usize, seed: u64) -> Result<OptimalRStar> {
    let n = densities.len();
    if n < 2 || n_mc == 0 {
        return Err(Error::InvalidArgument("need at least two densities and n_mc >= 1".into()));
    }
    let dim = densities[0].dim();
    if densities.iter().any(|d| d.dim() != dim) {
        return Err(Error::InvalidArgument("densities differ in dimension".into()));
    }
    let prepared = densities.iter().map(DensitySpec::prepare).collect::<Result<Vec<_>>>()?;
    let correct: usize = (0..n_mc.div_ceil(SHARD))
        .into_par_iter()
        .map(|shard| {
            let mut r = rng::stream(seed, shard as u64);
            let count = SHARD.min(n_mc - shard * SHARD);
            (0..count)
                .filter(|_| {
                    let truth = r.random_range(0..n);
                    let x = prepared[truth].sample(&mut r);
                    let mut best = 0;
                    let mut best_ll = prepared[0].log_density(&x);
                    for (c, p) in prepared.iter().enumerate().skip(1) {
                        let ll = p.log_density(&x);
                        if ll > best_ll {
                            best = c;
                            best_ll = ll;
                        }
                    }
                    best == truth
                })
                .count()
        })
        .sum();
    let acc = correct as f64 / n_mc as f64;
    Ok(OptimalRStar {
        r_star: n as f64 * acc,
        std_error: n as f64 * (acc * (1.0 - acc) / n_mc as f64).sqrt(),
        n_mc,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileFlag {
    Ok,
    /// Fewer than 1000 draws.
    LowReliability,
    /// Constant sample; R² is undefined and reported as 0.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileR2 {
    pub r2: f64,
    pub flag: QuantileFlag,
}

/// Percentile grid 0.1%, 0.2%, …, 99.9%.
pub fn percentile_grid() -> Vec<f64> {
    (1..1000).map(|i| i as f64 / 1000.0).collect()
}

/// R² of regressing true quantiles on sample quantiles over the
/// percentile grid.
pub fn quantile_r2(sample: &[f64], target_quantile: impl Fn(f64) -> f64) -> QuantileR2 {
    let s = sorted(sample);
    if s.is_empty() || s[0] == s[s.len() - 1] {
        return QuantileR2 {
            r2: 0.0,
            flag: QuantileFlag::Constant,
        };
    }
    let grid = percentile_grid();
    let est: Vec<f64> = grid.iter().map(|&p| quantile_sorted(&s, p)).collect();
    let truth: Vec<f64> = grid.iter().map(|&p| target_quantile(p)).collect();
    let r = pearson(&est, &truth);
    QuantileR2 {
        r2: r * r,
        flag: if sample.len() < 1000 {
            QuantileFlag::LowReliability
        } else {
            QuantileFlag::Ok
        },
    }
}

/// Mean quantile-R² over the columns of a row-major `n × k` sample.
pub fn quantile_r2_mean(rows: &[f64], k: usize, target_quantile: impl Fn(f64) -> f64) -> QuantileR2 {
    let per: Vec<QuantileR2> = (0..k)
        .map(|j| {
            let col: Vec<f64> = rows.iter().skip(j).step_by(k).copied().collect();
            quantile_r2(&col, &target_quantile)
        })
        .collect();
    let flag = per
        .iter()
        .map(|q| q.flag)
        .find(|f| *f != QuantileFlag::Ok)
        .unwrap_or(QuantileFlag::Ok);
    QuantileR2 {
        r2: per.iter().map(|q| q.r2).sum::<f64>() / k as f64,
        flag,
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub fn standard_cauchy_quantile(p: f64) -> f64 {
    (PI * (p - 0.5)).tan()
}

/// Stationary distribution of an irreducible aperiodic transition matrix.
///
/// Found by power iteration until `‖πP − π‖₁ ≤ 1e−12`, then checked
/// against the solution of the linear system `π(P − I) = 0, Σπ = 1`.
pub fn stationary_distribution(p: &TransitionMatrix) -> Result<Vec<f64>> {
    let d = p.n_states();
    check_irreducible(p)?;
    let period = period(p);
    if period > 1 {
        return Err(Error::InvalidTransitionMatrix(format!("chain is periodic with period {period}")));
    }
    let mut pi = vec![1.0 / d as f64; d];
    let mut next = vec![0.0; d];
    let mut converged = false;
    for _ in 0..1_000_000 {
        next.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            for j in 0..d {
                next[j] += pi[i] * p.get(i, j);
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let resid: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut pi, &mut next);
        if resid <= 1e-12 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::InvalidTransitionMatrix("power iteration did not converge".into()));
    }
    let direct = solve_stationary(p)?;
    let gap = pi.iter().zip(&direct).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if gap > 1e-9 {
        return Err(Error::InvalidTransitionMatrix(format!(
            "power iteration and linear solve disagree by {gap:e}"
        )));
    }
    Ok(pi)
}

fn solve_stationary(p: &TransitionMatrix) -> Result<Vec<f64>> {
    let d = p.n_states();
    // rows 0..d−1 of (Pᵀ − I) π = 0, last row replaced by Σπ = 1
    let mut a = DMatrix::from_fn(d, d, |i, j| p.get(j, i) - if i == j { 1.0 } else { 0.0 });
    let mut b = DVector::zeros(d);
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    b[d - 1] = 1.0;
    a.lu()
        .solve(&b)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::InvalidTransitionMatrix("singular stationary system".into()))
}

fn reachable(p: &TransitionMatrix, forward: bool) -> Vec<bool> {
    let d = p.n_states();
    let mut seen = vec![false; d];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..d {
            let w = if forward { p.get(u, v) } else { p.get(v, u) };
            if w > 0.0 && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen
}

fn check_irreducible(p: &TransitionMatrix) -> Result<()> {
    let (fwd, back) = (reachable(p, true), reachable(p, false));
    match (0..p.n_states()).find(|&i| !(fwd[i] && back[i])) {
        Some(i) => Err(Error::InvalidTransitionMatrix(format!(
            "chain is reducible: state {} does not communicate with state 1",
            i + 1
        ))),
        None => Ok(()),
    }
}

/// gcd of `level(u) + 1 − level(v)` over all edges, with BFS levels from
/// state 1; equals the period of an irreducible chain.
fn period(p: &TransitionMatrix) -> usize {
    let d = p.n_states();
    let mut level = vec![usize::MAX; d];
    level[0] = 0;
    let mut queue = std::collections::VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for v in 0..d {
            if p.get(u, v) > 0.0 && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let gcd = |mut a: usize, mut b: usize| {
        while b != 0 {
            (a, b) = (b, a % b);
        }
        a
    };
    let mut g = 0;
    for u in 0..d {
        for v in 0..d {
            if p.get(u, v) > 0.0 {
                g = gcd(g, (level[u] + 1).abs_diff(level[v]));
            }
        }
    }
    g
}
