use crate::chain_store::ChainSet;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

/// Row-major square matrix as it appears in JSON configs.
pub type Matrix = Vec<Vec<f64>>;

pub fn to_dmatrix(m: &Matrix) -> Result<DMatrix<f64>> {
    let n = m.len();
    if n == 0 || m.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidArgument("matrix must be square and non-empty".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| m[i][j]))
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 {
        return Err(Error::NotPositiveDefinite(format!("asymmetry {asym:e} exceeds 1e-12")));
    }
    m.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorisation failed".into()))
}

fn standard_normals(rng: &mut Rng, k: usize) -> DVector<f64> {
    DVector::from_fn(k, |_, _| StandardNormal.sample(rng))
}

fn assemble(chains: Vec<Vec<f64>>, n_iter: usize, k: usize) -> Result<ChainSet> {
    let n = chains.len();
    ChainSet::from_flat(n, n_iter, k, chains.concat(), None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ar1Config {
    pub rho: f64,
    /// Innovation standard deviation of each chain.
    pub sigmas: Vec<f64>,
    pub n_iter: usize,
    #[serde(default)]
    pub x0: f64,
}

impl Ar1Config {
    /// ρ = 0.3, four chains of 2000 draws, the last with σ = 1/3.
    pub fn heterogeneous_default() -> Self {
        Self {
            rho: 0.3,
            sigmas: vec![1.0, 1.0, 1.0, 1.0 / 3.0],
            n_iter: 2000,
            x0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::InvalidArgument(format!("rho {} outside [-1, 1]", self.rho)));
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("sigmas must be positive".into()));
        }
        Ok(())
    }
}

/// `X_t = ρ X_{t−1} + ε_t`, ε ~ N(0, σ_n²), one path per chain.
pub fn gen_ar1(cfg: &Ar1Config, seed: u64) -> Result<ChainSet> {
    cfg.validate()?;
    let chains = cfg
        .sigmas
        .iter()
        .enumerate()
        .map(|(c, &sigma)| {
            let mut r = rng::stream(seed, c as u64);
            let mut x = cfg.x0;
            (0..cfg.n_iter)
                .map(|_| {
                    let e: f64 = StandardNormal.sample(&mut r);
                    x = cfg.rho * x + sigma * e;
                    x
                })
                .collect()
        })
        .collect();
    assemble(chains, cfg.n_iter, 1)
}

/// One chain's covariance, given directly, as a precision matrix, or as a
/// lower Cholesky factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSpec {
    Covariance(Matrix),
    Precision(Matrix),
    Cholesky(Matrix),
}

impl CovarianceSpec {
    pub fn identity(dim: usize) -> Self {
        Self::Covariance(from_dmatrix(&DMatrix::identity(dim, dim)))
    }

    /// Unit variances with every off-diagonal equal to `rho`.
    pub fn equicorrelated(dim: usize, rho: f64) -> Self {
        Self::Covariance(from_dmatrix(&DMatrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho })))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Covariance(m) | Self::Precision(m) | Self::Cholesky(m) => m.len(),
        }
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        match self {
            Self::Covariance(m) => to_dmatrix(m),
            Self::Precision(m) => {
                let a = to_dmatrix(m)?;
                cholesky_lower(&a)?;
                a.try_inverse()
                    .map(|s| (&s + s.transpose()) * 0.5)
                    .ok_or_else(|| Error::NotPositiveDefinite("precision matrix is singular".into()))
            }
            Self::Cholesky(m) => {
                let l = to_dmatrix(m)?.lower_triangle();
                Ok(&l * l.transpose())
            }
        }
    }

    /// Lower factor `L` with `Σ = L Lᵀ`.
    pub fn factor(&self) -> Result<DMatrix<f64>> {
        match self {
            Self::Cholesky(m) => {
                let l = to_dmatrix(m)?.lower_triangle();
                if l.diagonal().iter().any(|d| *d <= 0.0) {
                    return Err(Error::NotPositiveDefinite("Cholesky factor needs a positive diagonal".into()));
                }
                Ok(l)
            }
            _ => cholesky_lower(&self.covariance()?),
        }
    }
}

/// I.i.d. `x = L z` draws, chain `n` using covariance `chains[n]`.
pub fn gen_mvn(chains: &[CovarianceSpec], n_iter: usize, seed: u64) -> Result<ChainSet> {
    let dim = chains.first().map(CovarianceSpec::dim).unwrap_or(0);
    if chains.iter().any(|c| c.dim() != dim) {
        return Err(Error::InvalidArgument("all chains need the same dimension".into()));
    }
    let factors = chains.iter().map(CovarianceSpec::factor).collect::<Result<Vec<_>>>()?;
    let data = factors
        .iter()
        .enumerate()
        .map(|(c, l)| {
            let mut r = rng::stream(seed, c as u64);
            (0..n_iter)
                .flat_map(|_| (l * standard_normals(&mut r, dim)).iter().copied().collect::<Vec<_>>())
                .collect()
        })
        .collect();
    assemble(data, n_iter, dim)
}

/// Wishart(dof, I) draw through the Bartlett decomposition.
pub fn gen_wishart_precision(dim: usize, dof: f64, seed: u64) -> Result<DMatrix<f64>> {
    if dim == 0 || !(dof >= dim as f64) {
        return Err(Error::InvalidArgument(format!(
            "Wishart needs dof >= dim (dof = {dof}, dim = {dim})"
        )));
    }
    let mut r = rng::stream(seed, 0);
    let mut g = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let chi2 = ChiSquared::new(dof - i as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        g[(i, i)] = chi2.sample(&mut r).sqrt();
        for j in 0..i {
            g[(i, j)] = StandardNormal.sample(&mut r);
        }
    }
    Ok(&g * g.transpose())
}

/// LKJ(η) correlation matrix via the onion construction.
pub fn gen_lkj(dim: usize, eta: f64, seed: u64) -> Result<DMatrix<f64>> {
    if dim == 0 || !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("LKJ needs dim >= 1 and eta > 0 (dim = {dim}, eta = {eta})")));
    }
    let mut r = rng::stream(seed, 0);
    let mut c = DMatrix::<f64>::identity(dim, dim);
    if dim == 1 {
        return Ok(c);
    }
    let beta_err = |e: rand_distr::BetaError| Error::InvalidArgument(e.to_string());
    let mut beta = eta + (dim as f64 - 2.0) / 2.0;
    let r12 = 2.0 * Beta::new(beta, beta).map_err(beta_err)?.sample(&mut r) - 1.0;
    c[(0, 1)] = r12;
    c[(1, 0)] = r12;
    for k in 2..dim {
        beta -= 0.5;
        let y = Beta::new(k as f64 / 2.0, beta).map_err(beta_err)?.sample(&mut r);
        let u = standard_normals(&mut r, k);
        let w = u.normalize() * y.sqrt();
        let lower = cholesky_lower(&c.view((0, 0), (k, k)).into_owned())?;
        let z = lower * w;
        for i in 0..k {
            c[(i, k)] = z[i];
            c[(k, i)] = z[i];
        }
    }
    Ok(c)
}

/// Leading `d × d` block.
pub fn leading_block(m: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    m.view((0, 0), (d, d)).into_owned()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudentTConfig {
    pub dof: f64,
    pub shape: Matrix,
}

impl StudentTConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dof > 0.0) {
            return Err(Error::InvalidArgument(format!("dof {} must be positive", self.dof)));
        }
        cholesky_lower(&to_dmatrix(&self.shape)?).map(|_| ())
    }
}

/// Zero-mean multivariate Student-t: `x = L z √(ν/w)`, `w ~ χ²_ν`.
pub fn gen_student_t(chains: &[StudentTConfig], n_iter: usize, seed: u64) -> Result<ChainSet> {
    let dim = chains.first().map(|c| c.shape.len()).unwrap_or(0);
    let mut prepared = Vec::with_capacity(chains.len());
    for c in chains {
        c.validate()?;
        if c.shape.len() != dim {
            return Err(Error::InvalidArgument("all chains need the same dimension".into()));
        }
        let chi2 = ChiSquared::new(c.dof).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        prepared.push((cholesky_lower(&to_dmatrix(&c.shape)?)?, chi2, c.dof));
    }
    let data = prepared
        .iter()
        .enumerate()
        .map(|(c, (l, chi2, dof))| {
            let mut r = rng::stream(seed, c as u64);
            let mut out = Vec::with_capacity(n_iter * dim);
            for _ in 0..n_iter {
                let z = l * standard_normals(&mut r, dim);
                let w: f64 = chi2.sample(&mut r);
                out.extend(z.iter().map(|v| v * (dof / w).sqrt()));
            }
            out
        })
        .collect();
    assemble(data, n_iter, dim)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauchyParam {
    /// Inverse-CDF standard Cauchy.
    Nominal,
    /// `a / √b`, `a ~ N(0, 1)`, `b ~ Gamma(shape 0.5, rate 0.5)`.
    Alternative,
}

pub fn gen_cauchy(dim: usize, n_iter: usize, n_chains: usize, param: CauchyParam, seed: u64) -> Result<ChainSet> {
    let gamma: Gamma<f64> = Gamma::new(0.5, 2.0).expect("valid gamma parameters");
    let data = (0..n_chains)
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            (0..n_iter * dim)
                .map(|_| match param {
                    CauchyParam::Nominal => (std::f64::consts::PI * (r.random::<f64>() - 0.5)).tan(),
                    CauchyParam::Alternative => {
                        let a: f64 = StandardNormal.sample(&mut r);
                        a / gamma.sample(&mut r).sqrt()
                    }
                })
                .collect()
        })
        .collect();
    assemble(data, n_iter, dim)
}

/// Bivariate normal with unit marginals whose correlation moves linearly
/// from `−rho_max` at the first draw to `rho_max` at the last.
pub fn gen_trending_correlation(rho_max: f64, n_iter: usize, n_chains: usize, seed: u64) -> Result<ChainSet> {
    if !(0.0..1.0).contains(&rho_max) {
        return Err(Error::InvalidArgument(format!("rho_max {rho_max} outside [0, 1)")));
    }
    let denom = (n_iter.max(2) - 1) as f64;
    let data = (0..n_chains)
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            (0..n_iter)
                .flat_map(|s| {
                    let rho = -rho_max + 2.0 * rho_max * s as f64 / denom;
                    let z1: f64 = StandardNormal.sample(&mut r);
                    let z2: f64 = StandardNormal.sample(&mut r);
                    [z1, rho * z1 + (1.0 - rho * rho).sqrt() * z2]
                })
                .collect()
        })
        .collect();
    assemble(data, n_iter, 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, median, quantile, variance};

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    fn column(cs: &ChainSet, c: usize, k: usize) -> Vec<f64> {
        (0..cs.n_iter()).map(|s| cs.get(c, s, k)).collect()
    }

    #[test]
    fn ar1_rho_zero_is_iid_with_chain_scale() {
        let cfg = Ar1Config { rho: 0.0, ..Ar1Config::heterogeneous_default() };
        let cs = gen_ar1(&cfg, 1).unwrap();
        let sd: Vec<f64> = (0..4).map(|c| variance(&column(&cs, c, 0)).sqrt()).collect();
        assert!((sd[0] - 1.0).abs() < 0.05 && (sd[3] - 1.0 / 3.0).abs() < 0.02);
        let x = column(&cs, 0, 0);
        assert!(corr(&x[..1999], &x[1..]).abs() < 0.06);
    }

    #[test]
    fn ar1_default_scale_ratio() {
        let cs = gen_ar1(&Ar1Config::heterogeneous_default(), 2).unwrap();
        let sd: Vec<f64> = (0..4).map(|c| variance(&column(&cs, c, 0)).sqrt()).collect();
        for &s in &sd[..3] {
            let ratio = sd[3] / s;
            assert!((ratio - 1.0 / 3.0).abs() < 0.05, "{ratio}");
        }
    }

    #[test]
    fn ar1_stationary_variance() {
        let cfg = Ar1Config { rho: 0.9, sigmas: vec![1.0; 2], n_iter: 20000, x0: 0.0 };
        let cs = gen_ar1(&cfg, 3).unwrap();
        let v = variance(&column(&cs, 0, 0));
        assert!((v / (1.0 / 0.19) - 1.0).abs() < 0.2, "{v}");
    }

    #[test]
    fn ar1_rejects_bad_rho() {
        let cfg = Ar1Config { rho: 1.5, ..Ar1Config::heterogeneous_default() };
        assert!(gen_ar1(&cfg, 0).is_err());
    }

    #[test]
    fn mvn_identity_uncorrelated() {
        let cs = gen_mvn(&[CovarianceSpec::identity(2), CovarianceSpec::identity(2)], 2000, 4).unwrap();
        assert!(corr(&column(&cs, 0, 0), &column(&cs, 0, 1)).abs() < 0.05);
    }

    #[test]
    fn mvn_bivariate_setup() {
        let mut chains = vec![CovarianceSpec::identity(2); 3];
        chains.push(CovarianceSpec::equicorrelated(2, 0.9));
        let cs = gen_mvn(&chains, 2000, 5).unwrap();
        assert!((corr(&column(&cs, 3, 0), &column(&cs, 3, 1)) - 0.9).abs() < 0.03);
        for c in 0..4 {
            for k in 0..2 {
                assert!((variance(&column(&cs, c, k)).sqrt() - 1.0).abs() < 0.05);
            }
        }
    }

    #[test]
    fn mvn_rejects_non_pd_and_asymmetric() {
        let bad = CovarianceSpec::Covariance(vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        assert!(matches!(gen_mvn(&[bad.clone(), bad], 10, 0), Err(Error::NotPositiveDefinite(_))));
        let asym = CovarianceSpec::Covariance(vec![vec![1.0, 0.1], vec![0.0, 1.0]]);
        assert!(gen_mvn(&[asym.clone(), asym], 10, 0).is_err());
    }

    #[test]
    fn covariance_forms_agree() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.6, 0.6, 1.0]);
        let prec = from_dmatrix(&sigma.clone().try_inverse().unwrap());
        let chol = from_dmatrix(&sigma.clone().cholesky().unwrap().l());
        for spec in [CovarianceSpec::Precision(prec), CovarianceSpec::Cholesky(chol)] {
            assert!((spec.covariance().unwrap() - &sigma).amax() < 1e-12);
        }
    }

    #[test]
    fn wishart_mean_and_pd() {
        let draws: Vec<f64> = (0..10000).map(|s| gen_wishart_precision(1, 5.0, s).unwrap()[(0, 0)]).collect();
        assert!((mean(&draws) / 5.0 - 1.0).abs() < 0.05);
        let a = gen_wishart_precision(6, 8.0, 1).unwrap();
        assert!(cholesky_lower(&a).is_ok());
        assert!(gen_wishart_precision(4, 3.0, 0).is_err());
    }

    #[test]
    fn wishart_250_strongly_correlated_covariance() {
        let a = gen_wishart_precision(250, 250.0, 7).unwrap();
        let s = a.try_inverse().unwrap();
        let mut max = 0.0f64;
        for i in 0..250 {
            for j in 0..i {
                max = max.max((s[(i, j)] / (s[(i, i)] * s[(j, j)]).sqrt()).abs());
            }
        }
        assert!(max > 0.5, "{max}");
    }

    #[test]
    fn lkj_is_correlation_matrix() {
        for (d, seed) in [(1, 0), (2, 1), (5, 2), (32, 3)] {
            let c = gen_lkj(d, 1.0, seed).unwrap();
            assert!(c.diagonal().iter().all(|v| (v - 1.0).abs() < 1e-12));
            assert!((&c - c.transpose()).amax() == 0.0);
            assert!(cholesky_lower(&c).is_ok());
            assert!(c.iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn lkj_eta_one_uniform_marginal() {
        // with η = 1 each off-diagonal is Beta(d/2, d/2) on [−1, 1]: variance 1/(d+1)
        let d = 4;
        let r: Vec<f64> = (0..4000).map(|s| gen_lkj(d, 1.0, s).unwrap()[(0, d - 1)]).collect();
        assert!(mean(&r).abs() < 0.03);
        assert!((variance(&r) - 1.0 / (d as f64 + 1.0)).abs() < 0.02, "{}", variance(&r));
    }

    #[test]
    fn student_t_covariance() {
        let shape = from_dmatrix(&(DMatrix::identity(2, 2) * (30.0 / 32.0)));
        let cfg = StudentTConfig { dof: 32.0, shape };
        let cs = gen_student_t(&[cfg.clone(), cfg], 20000, 6).unwrap();
        for k in 0..2 {
            assert!((variance(&column(&cs, 0, k)) - 1.0).abs() < 0.1);
        }
        assert!(corr(&column(&cs, 0, 0), &column(&cs, 0, 1)).abs() < 0.1);
    }

    #[test]
    fn student_t_large_dof_near_normal_kurtosis() {
        let cfg = StudentTConfig { dof: 1000.0, shape: vec![vec![1.0]] };
        let cs = gen_student_t(&[cfg.clone(), cfg], 50000, 8).unwrap();
        let x = column(&cs, 0, 0);
        let (m, v) = (mean(&x), variance(&x));
        let k4 = x.iter().map(|y| (y - m).powi(4)).sum::<f64>() / x.len() as f64 / (v * v) - 3.0;
        assert!(k4.abs() < 0.2, "{k4}");
    }

    #[test]
    fn cauchy_forms_share_median_and_iqr() {
        for p in [CauchyParam::Nominal, CauchyParam::Alternative] {
            let cs = gen_cauchy(2, 10000, 2, p, 9).unwrap();
            for k in 0..2 {
                let x = column(&cs, 0, k);
                assert!(median(&x).abs() < 0.1);
                let iqr = quantile(&x, 0.75) - quantile(&x, 0.25);
                assert!((iqr / 2.0 - 1.0).abs() < 0.05, "{iqr}");
            }
        }
    }

    #[test]
    fn cauchy_forms_pass_rank_sum_test() {
        // Mann–Whitney normal approximation, two-sided α = 0.01
        let a = gen_cauchy(1, 5000, 2, CauchyParam::Nominal, 10).unwrap();
        let b = gen_cauchy(1, 5000, 2, CauchyParam::Alternative, 11).unwrap();
        let (xa, xb) = (a.as_slice().to_vec(), b.as_slice().to_vec());
        let (n1, n2) = (xa.len() as f64, xb.len() as f64);
        let ranks = crate::stats::average_ranks(&[xa.clone(), xb].concat());
        let r1: f64 = ranks[..xa.len()].iter().sum();
        let u = r1 - n1 * (n1 + 1.0) / 2.0;
        let z = (u - n1 * n2 / 2.0) / (n1 * n2 * (n1 + n2 + 1.0) / 12.0).sqrt();
        assert!(z.abs() < 2.576, "{z}");
    }

    #[test]
    fn trending_correlation_sign_flip() {
        let cs = gen_trending_correlation(0.5, 4000, 4, 12).unwrap();
        let (x, y) = (column(&cs, 0, 0), column(&cs, 0, 1));
        assert!(corr(&x[..2000], &y[..2000]) < 0.0 && corr(&x[2000..], &y[2000..]) > 0.0);
        let pooled: Vec<f64> = (0..4).flat_map(|c| column(&cs, c, 1)).collect();
        assert!((variance(&pooled) - 1.0).abs() < 0.05);
        let flat = gen_trending_correlation(0.0, 3000, 2, 1).unwrap();
        assert!(corr(&column(&flat, 0, 0), &column(&flat, 0, 1)).abs() < 0.06);
    }

    #[test]
    fn generators_deterministic() {
        let cfg = vec![StudentTConfig { dof: 3.0, shape: vec![vec![1.0]] }; 2];
        let (a, b) = (gen_student_t(&cfg, 50, 1).unwrap(), gen_student_t(&cfg, 50, 1).unwrap());
        assert_eq!(a.as_slice(), b.as_slice());
        assert_eq!(gen_lkj(6, 1.0, 3).unwrap(), gen_lkj(6, 1.0, 3).unwrap());
    }
}
