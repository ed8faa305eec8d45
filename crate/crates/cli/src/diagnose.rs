use crate::{write_file, write_json, ClassifierChoice, CliError, CliResult, OutArgs, Outcome, SCHEMA_VERSION};
use clap::Args;
use rstar_diag::chain_store::{load_csv, load_csv_files, CsvLayout};
use rstar_diag::diagnostics::{diagnose, DiagnosticsReport, ParamDiagnostics, ESS_THRESHOLD, RHAT_THRESHOLD};
use rstar_diag::rstar::{compute_rstar, ClassifierKind, RStarConfig, RStarResult};
use rstar_diag::stats::{mean, QuantileSummary};
use rstar_diag::ChainSet;
use serde::Serialize;
use std::path::PathBuf;

/// Default strict cutoff on the mean of the R* draws.
pub const RSTAR_STRICT_THRESHOLD: f64 = 1.05;

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    /// One long-format CSV (chain,iteration,params...), or one CSV per chain.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ClassifierChoice::Gbm)]
    pub classifier: ClassifierChoice,
    /// Split every chain into this many pieces before computing R*.
    #[arg(long, default_value_t = 2)]
    pub split: usize,
    /// Number of R* draws from the classifier's predictive distribution.
    #[arg(long = "rstar-draws", default_value_t = 1000)]
    pub rstar_draws: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Exit with status 2 when any threshold is breached.
    #[arg(long)]
    pub strict: bool,
    /// Strict cutoff on the mean R* draw.
    #[arg(long = "rstar-threshold", default_value_t = RSTAR_STRICT_THRESHOLD)]
    pub rstar_threshold: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputSummary {
    pub n_chains: usize,
    pub n_iter: usize,
    pub n_params: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RStarBlock {
    pub classifier: ClassifierKind,
    pub r_star: f64,
    pub accuracy: f64,
    pub n_chains_effective: usize,
    pub seed: u64,
    pub n_draws: usize,
    pub draws_mean: Option<f64>,
    pub draws_quantiles: Option<QuantileSummary>,
}

impl RStarBlock {
    fn new(r: &RStarResult) -> Self {
        let draws = r.uncertainty_draws.as_deref().unwrap_or(&[]);
        Self {
            classifier: r.classifier,
            r_star: r.r_star,
            accuracy: r.accuracy,
            n_chains_effective: r.n_chains_effective,
            seed: r.seed,
            n_draws: draws.len(),
            draws_mean: (!draws.is_empty()).then(|| mean(draws)),
            draws_quantiles: (!draws.is_empty()).then(|| QuantileSummary::of(draws)),
        }
    }

    /// The statistic the strict check uses: the draw mean, else the point.
    pub fn strict_value(&self) -> f64 {
        self.draws_mean.unwrap_or(self.r_star)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Thresholds {
    pub rhat: f64,
    pub ess: f64,
    pub rstar_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub input: InputSummary,
    pub split: usize,
    pub rstar: Vec<RStarBlock>,
    pub parameters: Vec<ParamDiagnostics>,
    pub multivariate_rhat: Option<f64>,
    pub multivariate_rhat_note: Option<String>,
    pub thresholds: Thresholds,
    /// Human-readable list of every threshold breach.
    pub breaches: Vec<String>,
}

pub fn load_inputs(inputs: &[PathBuf]) -> CliResult<ChainSet> {
    match inputs {
        [] => Err(CliError::Usage("no input files".into())),
        [one] => Ok(load_csv(one, &CsvLayout::default())?),
        many => Ok(load_csv_files(many)?),
    }
}

/// Builds the report without touching the filesystem.
pub fn build_report(
    cs: &ChainSet,
    classifier: ClassifierChoice,
    split: usize,
    draws: usize,
    seed: u64,
    rstar_threshold: f64,
) -> CliResult<(Report, Vec<RStarResult>)> {
    let results = classifier
        .kinds()
        .into_iter()
        .map(|kind| {
            let cfg = RStarConfig::default()
                .with_classifier(kind)
                .with_split(split)
                .with_draws(draws);
            compute_rstar(cs, &cfg, seed)
        })
        .collect::<rstar_diag::Result<Vec<_>>>()?;
    let DiagnosticsReport {
        per_param,
        multivariate_rhat,
        multivariate_rhat_note,
    } = diagnose(cs)?;
    let rstar: Vec<RStarBlock> = results.iter().map(RStarBlock::new).collect();
    let mut breaches = Vec::new();
    for b in &rstar {
        if b.strict_value() > rstar_threshold {
            breaches.push(format!("R* ({}) = {:.4} > {rstar_threshold}", b.classifier, b.strict_value()));
        }
    }
    for p in &per_param {
        // NaN or infinite R-hat counts as a breach
        if !(p.rank_rhat <= RHAT_THRESHOLD) {
            breaches.push(format!("rank R-hat ({}) = {:.4} > {RHAT_THRESHOLD}", p.name, p.rank_rhat));
        }
        for (kind, v) in [("bulk", p.bulk_ess), ("tail", p.tail_ess)] {
            if !(v >= ESS_THRESHOLD) {
                breaches.push(format!("{kind} ESS ({}) = {v:.1} < {ESS_THRESHOLD}", p.name));
            }
        }
    }
    let report = Report {
        schema_version: SCHEMA_VERSION,
        input: InputSummary {
            n_chains: cs.n_chains(),
            n_iter: cs.n_iter(),
            n_params: cs.n_params(),
        },
        split,
        rstar,
        parameters: per_param,
        multivariate_rhat,
        multivariate_rhat_note,
        thresholds: Thresholds {
            rhat: RHAT_THRESHOLD,
            ess: ESS_THRESHOLD,
            rstar_mean: rstar_threshold,
        },
        breaches,
    };
    Ok((report, results))
}

fn draws_csv(results: &[RStarResult]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["classifier", "draw", "r_star"])?;
    for r in results {
        for (i, v) in r.uncertainty_draws.iter().flatten().enumerate() {
            w.write_record([r.classifier.to_string(), (i + 1).to_string(), v.to_string()])?;
        }
    }
    w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
}

/// Writes `report.json` and `rstar_draws.csv`.
pub fn run(args: &DiagnoseArgs) -> CliResult<Outcome> {
    let cs = load_inputs(&args.inputs)?;
    let (report, results) = build_report(
        &cs,
        args.classifier,
        args.split,
        args.rstar_draws,
        args.seed,
        args.rstar_threshold,
    )?;
    let dir = args.out.dir()?;
    let report_path = dir.join("report.json");
    write_json(&report_path, &report)?;
    let draws_path = dir.join("rstar_draws.csv");
    write_file(&draws_path, &draws_csv(&results)?)?;
    for b in &report.rstar {
        match b.draws_mean {
            Some(m) => say!("R* ({}) = {:.4}, draw mean {:.4}", b.classifier, b.r_star, m),
            None => say!("R* ({}) = {:.4}", b.classifier, b.r_star),
        }
    }
    for msg in &report.breaches {
        say!("breach: {msg}");
    }
    Ok(Outcome {
        strict_breach: args.strict && !report.breaches.is_empty(),
        written: vec![report_path, draws_path],
    })
}
