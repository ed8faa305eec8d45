use super::continuous::{
    from_dmatrix, gen_ar1, gen_cauchy, gen_lkj, gen_mvn, gen_student_t, gen_trending_correlation,
    gen_wishart_precision, leading_block, Ar1Config, CauchyParam, CovarianceSpec, StudentTConfig,
};
use super::discrete::{gen_discrete_markov, TransitionMatrix};
use super::trend::{gen_trending, TrendMode};
use crate::chain_store::ChainSet;
use crate::error::{Error, Result};
use crate::oracles::{stationary_distribution, DensitySpec};
use crate::rng::mix;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Seed from which preset matrices (LKJ, Wishart, Dirichlet) are drawn.
/// Replicates vary only the chain draws, not the target.
pub const DEFAULT_MATRIX_SEED: u64 = 20_210_101;

/// A fully specified chain-generating experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum Scenario {
    Ar1(Ar1Config),
    Mvn {
        n_iter: usize,
        chains: Vec<CovarianceSpec>,
    },
    /// Every chain targets `N(0, A⁻¹)` with `A ~ Wishart(dof, I)`.
    MvnWishart {
        dim: usize,
        dof: f64,
        matrix_seed: u64,
        n_chains: usize,
        n_iter: usize,
    },
    Cauchy {
        dim: usize,
        param: CauchyParam,
        n_chains: usize,
        n_iter: usize,
    },
    Discrete {
        n_iter: usize,
        chains: Vec<TransitionMatrix>,
    },
    /// Flat-Dirichlet transition matrices; the last chain gets a second,
    /// independently drawn matrix when `last_chain_differs`.
    DiscreteDirichlet {
        n_states: usize,
        matrix_seed: u64,
        last_chain_differs: bool,
        n_chains: usize,
        n_iter: usize,
    },
    /// I.i.d. standard normals with a linear drift on `trend_dims` (1-based).
    TrendMean {
        dim: usize,
        trend: f64,
        trend_dims: Vec<usize>,
        n_chains: usize,
        n_iter: usize,
    },
    TrendCorrelation {
        rho_max: f64,
        n_chains: usize,
        n_iter: usize,
    },
    /// Student-t chains with covariance `A^{dim}` (leading block of an LKJ
    /// draw); the last chain uses `last_dof` degrees of freedom.
    StudentT {
        dim: usize,
        lkj_dim: usize,
        base_dof: f64,
        last_dof: f64,
        matrix_seed: u64,
        n_chains: usize,
        n_iter: usize,
    },
    /// Gaussian chains with LKJ covariance blocks; the last chain uses a
    /// second LKJ draw.
    LkjJoint {
        dim: usize,
        lkj_dim: usize,
        eta: f64,
        matrix_seed: u64,
        n_chains: usize,
        n_iter: usize,
    },
}

pub const PRESET_NAMES: &[&str] = &[
    "iid-normal",
    "ar1-hetero",
    "mvn-bivariate",
    "mvn-wishart",
    "cauchy-nominal",
    "cauchy-alt",
    "discrete-small-p1",
    "discrete-small-p2",
    "discrete-small-p3",
    "discrete-large",
    "trend-mean",
    "trend-corr",
    "ar1-persist",
    "studentt-tails",
    "lkj-joint",
];

/// Named experiment with its default settings.
pub fn preset(name: &str) -> Result<Scenario> {
    let discrete_small = |last: TransitionMatrix| Scenario::Discrete {
        n_iter: 10_000,
        chains: vec![
            TransitionMatrix::small_base(),
            TransitionMatrix::small_base(),
            TransitionMatrix::small_base(),
            last,
        ],
    };
    Ok(match name {
        "iid-normal" => Scenario::Mvn {
            n_iter: 2000,
            chains: vec![CovarianceSpec::identity(1); 4],
        },
        "ar1-hetero" => Scenario::Ar1(Ar1Config::heterogeneous_default()),
        "mvn-bivariate" => {
            let mut chains = vec![CovarianceSpec::identity(2); 3];
            chains.push(CovarianceSpec::equicorrelated(2, 0.9));
            Scenario::Mvn { n_iter: 2000, chains }
        }
        "mvn-wishart" => Scenario::MvnWishart {
            dim: 250,
            dof: 250.0,
            matrix_seed: DEFAULT_MATRIX_SEED,
            n_chains: 4,
            n_iter: 1000,
        },
        "cauchy-nominal" | "cauchy-alt" => Scenario::Cauchy {
            dim: 50,
            param: if name == "cauchy-alt" {
                CauchyParam::Alternative
            } else {
                CauchyParam::Nominal
            },
            n_chains: 4,
            n_iter: 1000,
        },
        "discrete-small-p1" => discrete_small(TransitionMatrix::small_base()),
        "discrete-small-p2" => discrete_small(TransitionMatrix::small_p2()),
        "discrete-small-p3" => discrete_small(TransitionMatrix::small_p3()),
        "discrete-large" => Scenario::DiscreteDirichlet {
            n_states: 20,
            matrix_seed: DEFAULT_MATRIX_SEED,
            last_chain_differs: true,
            n_chains: 4,
            n_iter: 10_000,
        },
        "trend-mean" => Scenario::TrendMean {
            dim: 1,
            trend: 1.0,
            trend_dims: vec![1],
            n_chains: 4,
            n_iter: 1000,
        },
        "trend-corr" => Scenario::TrendCorrelation {
            rho_max: 0.5,
            n_chains: 4,
            n_iter: 4000,
        },
        "ar1-persist" => Scenario::Ar1(Ar1Config {
            rho: 0.95,
            sigmas: vec![1.0; 4],
            n_iter: 1000,
            x0: 0.0,
        }),
        "studentt-tails" => Scenario::StudentT {
            dim: 4,
            lkj_dim: 32,
            base_dof: 3.0,
            last_dof: 8.0,
            matrix_seed: DEFAULT_MATRIX_SEED,
            n_chains: 4,
            n_iter: 2000,
        },
        "lkj-joint" => Scenario::LkjJoint {
            dim: 8,
            lkj_dim: 32,
            eta: 1.0,
            matrix_seed: DEFAULT_MATRIX_SEED,
            n_chains: 4,
            n_iter: 2000,
        },
        _ => {
            return Err(Error::UnknownPreset {
                name: name.to_string(),
                available: PRESET_NAMES.join(", "),
            })
        }
    })
}

/// Keeps the first entry for chains `1..n−1` and the last entry for chain
/// `n`, so "one odd chain" setups scale to any chain count.
fn resize_odd_last<T: Clone>(v: &[T], n: usize) -> Vec<T> {
    let mut out = vec![v[0].clone(); n - 1];
    out.push(v[v.len() - 1].clone());
    out
}

fn lkj_pair(lkj_dim: usize, eta: f64, matrix_seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok((
        gen_lkj(lkj_dim, eta, mix(matrix_seed, 0))?,
        gen_lkj(lkj_dim, eta, mix(matrix_seed, 1))?,
    ))
}

fn check_dim(dim: usize, lkj_dim: usize) -> Result<()> {
    if dim == 0 || dim > lkj_dim {
        return Err(Error::InvalidArgument(format!("dim {dim} outside 1..={lkj_dim}")));
    }
    Ok(())
}

impl Scenario {
    pub fn n_chains(&self) -> usize {
        match self {
            Self::Ar1(c) => c.sigmas.len(),
            Self::Mvn { chains, .. } => chains.len(),
            Self::Discrete { chains, .. } => chains.len(),
            Self::MvnWishart { n_chains, .. }
            | Self::Cauchy { n_chains, .. }
            | Self::DiscreteDirichlet { n_chains, .. }
            | Self::TrendMean { n_chains, .. }
            | Self::TrendCorrelation { n_chains, .. }
            | Self::StudentT { n_chains, .. }
            | Self::LkjJoint { n_chains, .. } => *n_chains,
        }
    }

    pub fn n_iter(&self) -> usize {
        match self {
            Self::Ar1(c) => c.n_iter,
            Self::Mvn { n_iter, .. }
            | Self::Discrete { n_iter, .. }
            | Self::MvnWishart { n_iter, .. }
            | Self::Cauchy { n_iter, .. }
            | Self::DiscreteDirichlet { n_iter, .. }
            | Self::TrendMean { n_iter, .. }
            | Self::TrendCorrelation { n_iter, .. }
            | Self::StudentT { n_iter, .. }
            | Self::LkjJoint { n_iter, .. } => *n_iter,
        }
    }

    /// Same experiment with a different draw count per chain.
    pub fn with_n_iter(mut self, s: usize) -> Self {
        match &mut self {
            Self::Ar1(c) => c.n_iter = s,
            Self::Mvn { n_iter, .. }
            | Self::Discrete { n_iter, .. }
            | Self::MvnWishart { n_iter, .. }
            | Self::Cauchy { n_iter, .. }
            | Self::DiscreteDirichlet { n_iter, .. }
            | Self::TrendMean { n_iter, .. }
            | Self::TrendCorrelation { n_iter, .. }
            | Self::StudentT { n_iter, .. }
            | Self::LkjJoint { n_iter, .. } => *n_iter = s,
        }
        self
    }

    /// Same experiment with `n` chains; list-valued setups keep their first
    /// entry for all but the last chain.
    pub fn with_n_chains(mut self, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 chains, got {n}")));
        }
        match &mut self {
            Self::Ar1(c) => c.sigmas = resize_odd_last(&c.sigmas, n),
            Self::Mvn { chains, .. } => *chains = resize_odd_last(chains, n),
            Self::Discrete { chains, .. } => *chains = resize_odd_last(chains, n),
            Self::MvnWishart { n_chains, .. }
            | Self::Cauchy { n_chains, .. }
            | Self::DiscreteDirichlet { n_chains, .. }
            | Self::TrendMean { n_chains, .. }
            | Self::TrendCorrelation { n_chains, .. }
            | Self::StudentT { n_chains, .. }
            | Self::LkjJoint { n_chains, .. } => *n_chains = n,
        }
        Ok(self)
    }

    /// Replaces one top-level field, given as JSON text (a bare word is
    /// taken as a string).
    pub fn with_field(&self, key: &str, raw: &str) -> Result<Self> {
        let mut doc = serde_json::to_value(self)?;
        let obj = doc.as_object_mut().expect("scenario serialises to an object");
        if key == "generator" || !obj.contains_key(key) {
            let mut keys: Vec<&String> = obj.keys().filter(|k| *k != "generator").collect();
            keys.sort();
            let keys: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
            return Err(Error::InvalidArgument(format!(
                "unknown field {key:?}; settable fields: {}",
                keys.join(", ")
            )));
        }
        let value = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
        obj.insert(key.to_string(), value);
        Ok(serde_json::from_value(doc)?)
    }

    fn discrete_matrices(&self) -> Result<Option<Vec<TransitionMatrix>>> {
        Ok(match self {
            Self::Discrete { chains, .. } => Some(chains.clone()),
            Self::DiscreteDirichlet {
                n_states,
                matrix_seed,
                last_chain_differs,
                n_chains,
                ..
            } => {
                let base = TransitionMatrix::dirichlet(*n_states, mix(*matrix_seed, 0))?;
                let last = if *last_chain_differs {
                    TransitionMatrix::dirichlet(*n_states, mix(*matrix_seed, 1))?
                } else {
                    base.clone()
                };
                Some(resize_odd_last(&[base, last], *n_chains))
            }
            _ => None,
        })
    }

    fn wishart_covariance(dim: usize, dof: f64, matrix_seed: u64) -> Result<CovarianceSpec> {
        Ok(CovarianceSpec::Precision(from_dmatrix(&gen_wishart_precision(
            dim,
            dof,
            matrix_seed,
        )?)))
    }

    fn student_t_configs(
        dim: usize,
        lkj_dim: usize,
        base_dof: f64,
        last_dof: f64,
        matrix_seed: u64,
        n_chains: usize,
    ) -> Result<Vec<StudentTConfig>> {
        check_dim(dim, lkj_dim)?;
        if !(base_dof > 2.0 && last_dof > 2.0) {
            return Err(Error::InvalidArgument("degrees of freedom must exceed 2".into()));
        }
        let a = leading_block(&gen_lkj(lkj_dim, 1.0, mix(matrix_seed, 0))?, dim);
        // shape (ν−2)/ν · A keeps every chain's covariance at A
        let cfg = |dof: f64| StudentTConfig {
            dof,
            shape: from_dmatrix(&(&a * ((dof - 2.0) / dof))),
        };
        Ok(resize_odd_last(&[cfg(base_dof), cfg(last_dof)], n_chains))
    }

    fn lkj_covariances(dim: usize, lkj_dim: usize, eta: f64, matrix_seed: u64, n_chains: usize) -> Result<Vec<DMatrix<f64>>> {
        check_dim(dim, lkj_dim)?;
        let (a, b) = lkj_pair(lkj_dim, eta, matrix_seed)?;
        Ok(resize_odd_last(&[leading_block(&a, dim), leading_block(&b, dim)], n_chains))
    }

    /// Draws the chains for one replicate.
    pub fn generate(&self, seed: u64) -> Result<ChainSet> {
        let cs = match self {
            Self::Ar1(cfg) => gen_ar1(cfg, seed)?,
            Self::Mvn { n_iter, chains } => gen_mvn(chains, *n_iter, seed)?,
            Self::MvnWishart {
                dim,
                dof,
                matrix_seed,
                n_chains,
                n_iter,
            } => {
                let cov = Self::wishart_covariance(*dim, *dof, *matrix_seed)?;
                gen_mvn(&vec![cov; *n_chains], *n_iter, seed)?
            }
            Self::Cauchy {
                dim,
                param,
                n_chains,
                n_iter,
            } => gen_cauchy(*dim, *n_iter, *n_chains, *param, seed)?,
            Self::Discrete { .. } | Self::DiscreteDirichlet { .. } => {
                let m = self.discrete_matrices()?.expect("discrete scenario");
                gen_discrete_markov(&m, self.n_iter(), seed)?
            }
            Self::TrendMean {
                dim,
                trend,
                trend_dims,
                n_chains,
                n_iter,
            } => {
                if trend_dims.iter().any(|&d| d == 0) {
                    return Err(Error::InvalidArgument("trend_dims are 1-based".into()));
                }
                let base = gen_mvn(&vec![CovarianceSpec::identity(*dim); *n_chains], *n_iter, seed)?;
                let dims: Vec<usize> = trend_dims.iter().map(|d| d - 1).collect();
                gen_trending(&base, *trend, &dims, &TrendMode::AllChains)?
            }
            Self::TrendCorrelation {
                rho_max,
                n_chains,
                n_iter,
            } => gen_trending_correlation(*rho_max, *n_iter, *n_chains, seed)?,
            Self::StudentT {
                dim,
                lkj_dim,
                base_dof,
                last_dof,
                matrix_seed,
                n_chains,
                n_iter,
            } => gen_student_t(
                &Self::student_t_configs(*dim, *lkj_dim, *base_dof, *last_dof, *matrix_seed, *n_chains)?,
                *n_iter,
                seed,
            )?,
            Self::LkjJoint {
                dim,
                lkj_dim,
                eta,
                matrix_seed,
                n_chains,
                n_iter,
            } => {
                let covs = Self::lkj_covariances(*dim, *lkj_dim, *eta, *matrix_seed, *n_chains)?;
                let specs: Vec<CovarianceSpec> = covs.iter().map(|c| CovarianceSpec::Covariance(from_dmatrix(c))).collect();
                gen_mvn(&specs, *n_iter, seed)?
            }
        };
        Ok(cs)
    }

    /// Each chain's stationary law, when the experiment has one.
    pub fn densities(&self) -> Result<Option<Vec<DensitySpec>>> {
        let mvn = |c: &DMatrix<f64>| DensitySpec::Mvn {
            mean: vec![0.0; c.nrows()],
            cov: from_dmatrix(c),
        };
        Ok(match self {
            Self::Ar1(cfg) if cfg.rho.abs() < 1.0 => Some(
                cfg.sigmas
                    .iter()
                    .map(|&sigma| DensitySpec::Ar1Marginal { rho: cfg.rho, sigma })
                    .collect(),
            ),
            Self::Ar1(_) | Self::TrendMean { .. } | Self::TrendCorrelation { .. } => None,
            Self::Mvn { chains, .. } => Some(
                chains
                    .iter()
                    .map(|c| c.covariance().map(|m| mvn(&m)))
                    .collect::<Result<Vec<_>>>()?,
            ),
            Self::MvnWishart {
                dim,
                dof,
                matrix_seed,
                n_chains,
                ..
            } => {
                let cov = Self::wishart_covariance(*dim, *dof, *matrix_seed)?.covariance()?;
                Some(vec![mvn(&cov); *n_chains])
            }
            Self::Cauchy { dim, n_chains, .. } => Some(vec![
                DensitySpec::Cauchy {
                    dim: *dim,
                    loc: 0.0,
                    scale: 1.0
                };
                *n_chains
            ]),
            Self::Discrete { .. } | Self::DiscreteDirichlet { .. } => {
                let m = self.discrete_matrices()?.expect("discrete scenario");
                match m.iter().map(stationary_distribution).collect::<Result<Vec<_>>>() {
                    Ok(pis) => Some(pis.into_iter().map(|probs| DensitySpec::Discrete { probs }).collect()),
                    Err(_) => None,
                }
            }
            Self::StudentT {
                dim,
                lkj_dim,
                base_dof,
                last_dof,
                matrix_seed,
                n_chains,
                ..
            } => Some(
                Self::student_t_configs(*dim, *lkj_dim, *base_dof, *last_dof, *matrix_seed, *n_chains)?
                    .into_iter()
                    .map(|c| DensitySpec::StudentT {
                        mean: vec![0.0; *dim],
                        shape: c.shape,
                        dof: c.dof,
                    })
                    .collect(),
            ),
            Self::LkjJoint {
                dim,
                lkj_dim,
                eta,
                matrix_seed,
                n_chains,
                ..
            } => Some(
                Self::lkj_covariances(*dim, *lkj_dim, *eta, *matrix_seed, *n_chains)?
                    .iter()
                    .map(mvn)
                    .collect(),
            ),
        })
    }
}
