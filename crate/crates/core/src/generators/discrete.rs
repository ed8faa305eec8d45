use crate::chain_store::ChainSet;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

/// Row-stochastic transition matrix over states `1..=D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(p: TransitionMatrix) -> Self {
        p.rows
    }
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::InvalidTransitionMatrix("no states".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidTransitionMatrix(format!(
                    "row {} has {} entries, expected {d}",
                    i + 1,
                    row.len()
                )));
            }
            if row.iter().any(|p| !(*p >= 0.0)) {
                return Err(Error::InvalidTransitionMatrix(format!("row {} has a negative entry", i + 1)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidTransitionMatrix(format!("row {} sums to {sum}", i + 1)));
            }
        }
        Ok(Self { rows })
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i][j]
    }

    /// Shared four-state matrix of the small state-space example.
    pub fn small_base() -> Self {
        Self::new(vec![
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.5, 0.0, 1.0 / 3.0, 1.0 / 6.0],
            vec![0.25; 4],
            vec![0.0, 1.0, 0.0, 0.0],
        ])
        .expect("valid matrix")
    }

    /// Mildly perturbed alternative for the fourth chain.
    pub fn small_p2() -> Self {
        Self::new(vec![
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.5, 0.0, 1.0 / 3.0, 1.0 / 6.0],
            vec![5.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0, 1.0 / 8.0],
            vec![0.5, 0.5, 0.0, 0.0],
        ])
        .expect("valid matrix")
    }

    /// Strongly perturbed alternative for the fourth chain.
    pub fn small_p3() -> Self {
        Self::new(vec![
            vec![0.0, 0.5, 0.5, 0.0],
            vec![0.5, 0.0, 1.0 / 3.0, 1.0 / 6.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
        ])
        .expect("valid matrix")
    }

    /// Every row drawn from a flat Dirichlet(1, …, 1).
    pub fn dirichlet(n_states: usize, seed: u64) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::InvalidTransitionMatrix("no states".into()));
        }
        let mut r = rng::stream(seed, 0);
        let rows = (0..n_states)
            .map(|_| {
                let g: Vec<f64> = (0..n_states).map(|_| Exp1.sample(&mut r)).collect();
                let total: f64 = g.iter().sum();
                let mut row: Vec<f64> = g.iter().map(|v| v / total).collect();
                // absorb rounding so the row sums to one within 1e-12
                let drift = 1.0 - row.iter().sum::<f64>();
                row[n_states - 1] = (row[n_states - 1] + drift).max(0.0);
                row
            })
            .collect();
        Self::new(rows)
    }

    fn step(&self, state: usize, r: &mut Rng) -> usize {
        let u: f64 = r.random();
        let row = &self.rows[state];
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u fell in the rounding gap above the last cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(state)
    }
}

/// Discrete Markov chains started at state 1, one matrix per chain.
/// Emits states `X(1), …, X(S)` as 1-based codes.
pub fn gen_discrete_markov(matrices: &[TransitionMatrix], n_iter: usize, seed: u64) -> Result<ChainSet> {
    let d = matrices.first().map(TransitionMatrix::n_states).unwrap_or(0);
    if matrices.iter().any(|p| p.n_states() != d) {
        return Err(Error::InvalidTransitionMatrix("all chains need the same number of states".into()));
    }
    let data: Vec<f64> = matrices
        .iter()
        .enumerate()
        .flat_map(|(c, p)| {
            let mut r = rng::stream(seed, c as u64);
            let mut state = 0;
            (0..n_iter)
                .map(|_| {
                    state = p.step(state, &mut r);
                    (state + 1) as f64
                })
                .collect::<Vec<_>>()
        })
        .collect();
    ChainSet::from_flat(matrices.len(), n_iter, 1, data, None)
}
