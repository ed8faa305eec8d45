//! Classifier-based convergence diagnostics for MCMC output.
//!
//! The crate computes R*, the ratio of a tree-ensemble classifier's
//! chain-identification accuracy on held-out draws to the chance rate 1/N,
//! together with an uncertainty distribution obtained by sampling from the
//! classifier's predicted chain probabilities. Alongside it sit the classic
//! baselines (rank-normalized split-R̂, multivariate R̂, bulk/tail ESS),
//! seeded synthetic chain generators and ground-truth oracles.
//!
//! ```no_run
//! use rstar_diag::generators::{gen_ar1, Ar1Config};
//! use rstar_diag::rstar::{compute_rstar, RStarConfig};
//!
//! let chains = gen_ar1(&Ar1Config::heterogeneous_default(), 7).unwrap();
//! let result = compute_rstar(&chains, &RStarConfig::default(), 42).unwrap();
//! println!("R* = {:.3}", result.r_star);
//! ```

pub mod chain_store;
pub mod diagnostics;
pub mod error;
pub mod generators;
pub mod oracles;
pub mod rng;
pub mod rstar;
pub mod stats;
pub mod trees;

pub use chain_store::{ChainSet, LabeledDataset};
pub use error::{Error, Result};
pub use rstar::{compute_rstar, ClassifierKind, RStarConfig, RStarResult};
