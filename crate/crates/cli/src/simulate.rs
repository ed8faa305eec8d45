use crate::{parse_key_value, read_json, write_file, write_json, CliError, CliResult, OutArgs, Outcome, SCHEMA_VERSION};
use clap::Args;
use rstar_diag::chain_store::write_csv;
use rstar_diag::generators::{preset, Scenario};
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Named preset (see `rstar presets`).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// JSON scenario file, e.g. the `scenario` block of a previous config.json.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Draws per chain.
    #[arg(long = "n-iter")]
    pub n_iter: Option<usize>,
    /// Number of chains.
    #[arg(long = "n-chains")]
    pub n_chains: Option<usize>,
    /// Override one scenario field (value parsed as JSON), repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_key_value)]
    pub set: Vec<(String, String)>,
}

/// A scenario plus the preset it came from, if any.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolved {
    pub preset: Option<String>,
    pub scenario: Scenario,
}

/// Applies overrides in a fixed order: chain count, draw count, then `set`
/// fields in the order given.
pub fn resolve(
    preset_name: Option<&str>,
    scenario: Option<Scenario>,
    n_iter: Option<usize>,
    n_chains: Option<usize>,
    set: &[(String, String)],
) -> CliResult<Resolved> {
    let mut scenario = match (preset_name, scenario) {
        (Some(name), None) => preset(name)?,
        (None, Some(s)) => s,
        (Some(_), Some(_)) => return Err(CliError::Usage("give either a preset or a scenario config, not both".into())),
        (None, None) => return Err(CliError::Usage("a preset or a scenario config is required".into())),
    };
    if let Some(n) = n_chains {
        scenario = scenario.with_n_chains(n)?;
    }
    if let Some(s) = n_iter {
        if s == 0 {
            return Err(CliError::Usage("--n-iter must be positive".into()));
        }
        scenario = scenario.with_n_iter(s);
    }
    for (key, value) in set {
        scenario = scenario.with_field(key, value)?;
    }
    Ok(Resolved {
        preset: preset_name.map(str::to_string),
        scenario,
    })
}

impl ScenarioArgs {
    pub fn resolve(&self) -> CliResult<Resolved> {
        let scenario = match &self.config {
            Some(path) => Some(read_json::<Scenario>(path)?),
            None => None,
        };
        resolve(self.preset.as_deref(), scenario, self.n_iter, self.n_chains, &self.set)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Seed for the chain draws.
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    schema_version: u32,
    seed: u64,
    #[serde(flatten)]
    resolved: &'a Resolved,
}

/// Writes `draws.csv` and `config.json`, and echoes the config to stdout.
pub fn run(args: &SimulateArgs) -> CliResult<Outcome> {
    let resolved = args.scenario.resolve()?;
    let cs = resolved.scenario.generate(args.seed)?;
    let dir = args.out.dir()?;
    let draws = dir.join("draws.csv");
    let mut buf = Vec::new();
    write_csv(&cs, &mut buf)?;
    write_file(&draws, &buf)?;
    let config = SimulateConfig {
        schema_version: SCHEMA_VERSION,
        seed: args.seed,
        resolved: &resolved,
    };
    let config_path = dir.join("config.json");
    write_json(&config_path, &config)?;
    say!("{}", serde_json::to_string_pretty(&config)?);
    Ok(Outcome {
        strict_breach: false,
        written: vec![draws, config_path],
    })
}
