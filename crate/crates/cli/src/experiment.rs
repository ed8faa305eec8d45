use crate::simulate::{resolve, Resolved, ScenarioArgs};
use crate::{read_json, write_file, write_json, ClassifierChoice, CliError, CliResult, OutArgs, Outcome, SCHEMA_VERSION};
use clap::Args;
use rayon::prelude::*;
use rstar_diag::diagnostics::diagnose;
use rstar_diag::generators::Scenario;
use rstar_diag::oracles::bayes_optimal_rstar;
use rstar_diag::rng::mix;
use rstar_diag::rstar::{compute_rstar, replicate_seeds, ClassifierKind, RStarConfig};
use rstar_diag::stats::QuantileSummary;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

/// Everything needed to rerun an experiment; flags override a JSON spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub preset: Option<String>,
    /// Full scenario, used instead of a preset.
    pub scenario: Option<Scenario>,
    pub n_iter: Option<usize>,
    pub n_chains: Option<usize>,
    /// Scenario field overrides, applied after `n_chains` and `n_iter`.
    pub set: BTreeMap<String, serde_json::Value>,
    pub replicates: usize,
    /// Base seed for the replicate seeds.
    pub seed: u64,
    /// Explicit replicate seeds; overrides `replicates` and `seed`.
    pub seeds: Option<Vec<u64>>,
    pub classifier: ClassifierChoice,
    pub split: usize,
    pub rstar_draws: usize,
    /// Monte Carlo draws for the Bayes-optimal R*; 0 skips it.
    pub optimal_draws: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            preset: None,
            scenario: None,
            n_iter: None,
            n_chains: None,
            set: BTreeMap::new(),
            replicates: 10,
            seed: 1,
            seeds: None,
            classifier: ClassifierChoice::Gbm,
            split: 2,
            rstar_draws: 1000,
            optimal_draws: 10_000,
        }
    }
}

impl ExperimentSpec {
    pub fn for_preset(name: &str) -> Self {
        Self {
            preset: Some(name.to_string()),
            ..Self::default()
        }
    }

    pub fn resolve(&self) -> CliResult<Resolved> {
        let set: Vec<(String, String)> = self
            .set
            .iter()
            .map(|(k, v)| {
                let raw = match v {
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                (k.clone(), raw)
            })
            .collect();
        resolve(self.preset.as_deref(), self.scenario.clone(), self.n_iter, self.n_chains, &set)
    }

    pub fn replicate_seeds(&self) -> CliResult<Vec<u64>> {
        let seeds = match &self.seeds {
            Some(s) => s.clone(),
            None => replicate_seeds(self.seed, self.replicates),
        };
        if seeds.is_empty() {
            return Err(CliError::Usage("at least one replicate is required".into()));
        }
        Ok(seeds)
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// JSON experiment spec; flags given here override its fields.
    #[arg(long = "spec")]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Base seed from which replicate seeds are derived.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Explicit comma-separated replicate seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long, value_enum)]
    pub classifier: Option<ClassifierChoice>,
    #[arg(long)]
    pub split: Option<usize>,
    #[arg(long = "rstar-draws")]
    pub rstar_draws: Option<usize>,
    #[arg(long = "optimal-draws")]
    pub optimal_draws: Option<usize>,
    /// Worker threads; results do not depend on this.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

impl ExperimentArgs {
    pub fn spec(&self) -> CliResult<ExperimentSpec> {
        let mut spec = match &self.spec {
            Some(path) => read_json::<ExperimentSpec>(path)?,
            None => ExperimentSpec::default(),
        };
        let s = &self.scenario;
        if let Some(p) = &s.preset {
            spec.preset = Some(p.clone());
            spec.scenario = None;
        }
        if let Some(path) = &s.config {
            spec.scenario = Some(read_json(path)?);
            spec.preset = None;
        }
        spec.n_iter = s.n_iter.or(spec.n_iter);
        spec.n_chains = s.n_chains.or(spec.n_chains);
        for (k, v) in &s.set {
            let value = serde_json::from_str(v).unwrap_or_else(|_| serde_json::Value::String(v.clone()));
            spec.set.insert(k.clone(), value);
        }
        if let Some(r) = self.replicates {
            spec.replicates = r;
            spec.seeds = None;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
            spec.seeds = None;
        }
        if let Some(seeds) = &self.seeds {
            spec.seeds = Some(seeds.clone());
        }
        spec.classifier = self.classifier.unwrap_or(spec.classifier);
        spec.split = self.split.unwrap_or(spec.split);
        spec.rstar_draws = self.rstar_draws.unwrap_or(spec.rstar_draws);
        spec.optimal_draws = self.optimal_draws.unwrap_or(spec.optimal_draws);
        Ok(spec)
    }
}

/// One replicate's results; `None` marks a value that was not computed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub replicate: usize,
    pub seed: u64,
    pub r_star_gbm: Option<f64>,
    pub r_star_rf: Option<f64>,
    pub max_rank_rhat: f64,
    pub min_bulk_ess: f64,
    pub min_tail_ess: f64,
    pub optimal_rstar: Option<f64>,
    pub r_star_gbm_draws_mean: Option<f64>,
    pub r_star_rf_draws_mean: Option<f64>,
    pub optimal_rstar_se: Option<f64>,
}

/// Runs one replicate. The generator, the classifiers and the optimal-R*
/// Monte Carlo each get their own seed derived from `seed`.
pub fn run_replicate(
    scenario: &Scenario,
    spec: &ExperimentSpec,
    replicate: usize,
    seed: u64,
) -> CliResult<ReplicateRow> {
    let cs = scenario.generate(mix(seed, 0))?;
    let mut row = ReplicateRow {
        replicate,
        seed,
        r_star_gbm: None,
        r_star_rf: None,
        max_rank_rhat: f64::NAN,
        min_bulk_ess: f64::NAN,
        min_tail_ess: f64::NAN,
        optimal_rstar: None,
        r_star_gbm_draws_mean: None,
        r_star_rf_draws_mean: None,
        optimal_rstar_se: None,
    };
    for kind in spec.classifier.kinds() {
        let cfg = RStarConfig::default()
            .with_classifier(kind)
            .with_split(spec.split)
            .with_draws(spec.rstar_draws);
        let r = compute_rstar(&cs, &cfg, mix(seed, 1))?;
        match kind {
            ClassifierKind::Gbm => {
                row.r_star_gbm = Some(r.r_star);
                row.r_star_gbm_draws_mean = r.uncertainty_mean();
            }
            ClassifierKind::Rf => {
                row.r_star_rf = Some(r.r_star);
                row.r_star_rf_draws_mean = r.uncertainty_mean();
            }
        }
    }
    let report = diagnose(&cs)?;
    row.max_rank_rhat = report.max_rank_rhat();
    row.min_bulk_ess = report.min_bulk_ess();
    row.min_tail_ess = report.min_tail_ess();
    if spec.optimal_draws > 0 {
        if let Some(densities) = scenario.densities()? {
            let opt = bayes_optimal_rstar(&densities, spec.optimal_draws, mix(seed, 2))?;
            row.optimal_rstar = Some(opt.r_star);
            row.optimal_rstar_se = Some(opt.std_error);
        }
    }
    Ok(row)
}

/// Runs every replicate on `jobs` threads; rows come back in replicate order.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> CliResult<(Resolved, Vec<ReplicateRow>)> {
    let resolved = spec.resolve()?;
    let seeds = spec.replicate_seeds()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let rows = pool.install(|| {
        seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| run_replicate(&resolved.scenario, spec, i + 1, seed))
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok((resolved, rows))
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const REPLICATE_COLUMNS: [&str; 11] = [
    "replicate",
    "seed",
    "r_star_gbm",
    "r_star_rf",
    "max_rank_rhat",
    "min_bulk_ess",
    "min_tail_ess",
    "optimal_rstar",
    "r_star_gbm_draws_mean",
    "r_star_rf_draws_mean",
    "optimal_rstar_se",
];

pub fn replicates_csv(rows: &[ReplicateRow]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPLICATE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.seed.to_string(),
            cell(r.r_star_gbm),
            cell(r.r_star_rf),
            r.max_rank_rhat.to_string(),
            r.min_bulk_ess.to_string(),
            r.min_tail_ess.to_string(),
            cell(r.optimal_rstar),
            cell(r.r_star_gbm_draws_mean),
            cell(r.r_star_rf_draws_mean),
            cell(r.optimal_rstar_se),
        ])?;
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub spec: ExperimentSpec,
    pub resolved: Resolved,
    pub n_replicates: usize,
    /// Quantiles of every column that has a finite value in each replicate.
    pub quantiles: BTreeMap<String, QuantileSummary>,
}

pub fn summarize(spec: &ExperimentSpec, resolved: &Resolved, rows: &[ReplicateRow]) -> Summary {
    let columns: [(&str, fn(&ReplicateRow) -> Option<f64>); 9] = [
        ("r_star_gbm", |r| r.r_star_gbm),
        ("r_star_rf", |r| r.r_star_rf),
        ("max_rank_rhat", |r| Some(r.max_rank_rhat)),
        ("min_bulk_ess", |r| Some(r.min_bulk_ess)),
        ("min_tail_ess", |r| Some(r.min_tail_ess)),
        ("optimal_rstar", |r| r.optimal_rstar),
        ("r_star_gbm_draws_mean", |r| r.r_star_gbm_draws_mean),
        ("r_star_rf_draws_mean", |r| r.r_star_rf_draws_mean),
        ("optimal_rstar_se", |r| r.optimal_rstar_se),
    ];
    let mut quantiles = BTreeMap::new();
    for (name, get) in columns {
        let values: Option<Vec<f64>> = rows.iter().map(|r| get(r).filter(|v| v.is_finite())).collect();
        if let Some(v) = values.filter(|v| !v.is_empty()) {
            quantiles.insert(name.to_string(), QuantileSummary::of(&v));
        }
    }
    Summary {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
        resolved: resolved.clone(),
        n_replicates: rows.len(),
        quantiles,
    }
}

/// Writes `replicates.csv` and `summary.json`.
pub fn run(args: &ExperimentArgs) -> CliResult<Outcome> {
    let spec = args.spec()?;
    let (resolved, rows) = run_experiment(&spec, args.jobs)?;
    let dir = args.out.dir()?;
    let csv_path = dir.join("replicates.csv");
    write_file(&csv_path, &replicates_csv(&rows)?)?;
    let summary = summarize(&spec, &resolved, &rows);
    let json_path = dir.join("summary.json");
    write_json(&json_path, &summary)?;
    for (name, q) in &summary.quantiles {
        if name.starts_with("r_star") || name == "optimal_rstar" {
            say!("{name}: median {:.4} [{:.4}, {:.4}]", q.q50, q.q025, q.q975);
        }
    }
    Ok(Outcome {
        strict_breach: false,
        written: vec![csv_path, json_path],
    })
}
