//! Seeded synthetic chain generators and named experiment presets.
//!
//! Chain `n` of every generator draws from stream `n` under the seed, so
//! outputs are reproducible and chains are independent.

pub mod continuous;
pub mod discrete;
pub mod presets;
pub mod trend;

pub use continuous::{
    cholesky_lower, gen_ar1, gen_cauchy, gen_lkj, gen_mvn, gen_student_t, gen_trending_correlation,
    gen_wishart_precision, leading_block, Ar1Config, CauchyParam, CovarianceSpec, Matrix, StudentTConfig,
};
pub use discrete::{gen_discrete_markov, TransitionMatrix};
pub use presets::{preset, Scenario, DEFAULT_MATRIX_SEED, PRESET_NAMES};
pub use trend::{gen_trending, TrendMode};
