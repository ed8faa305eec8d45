//! `rstar` command-line front end.
//!
//! Three commands share one output convention: every artifact lands in the
//! directory given by `--out`, falling back to `$RSTAR_OUT_DIR` and then the
//! working directory. Outputs depend only on the command line and the seed.

/// Prints a line to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub mod diagnose;
pub mod error;
pub mod experiment;
pub mod simulate;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rstar_diag::rstar::ClassifierKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub use error::{CliError, CliResult};

/// Version tag written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "RSTAR_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "rstar", version, about = "Classifier-based MCMC convergence diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute R*, rank-R-hat, ESS and multivariate R-hat for a draws file.
    Diagnose(diagnose::DiagnoseArgs),
    /// Generate chains from a named preset or a JSON scenario.
    Simulate(simulate::SimulateArgs),
    /// Run a preset many times and summarise the diagnostics.
    Experiment(experiment::ExperimentArgs),
    /// List the available presets.
    Presets,
}

/// Which classifiers to run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassifierChoice {
    #[default]
    Gbm,
    Rf,
    Both,
}

impl ClassifierChoice {
    pub fn kinds(self) -> Vec<ClassifierKind> {
        match self {
            Self::Gbm => vec![ClassifierKind::Gbm],
            Self::Rf => vec![ClassifierKind::Rf],
            Self::Both => vec![ClassifierKind::Gbm, ClassifierKind::Rf],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutArgs {
    /// Output directory [default: $RSTAR_OUT_DIR, else the current directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl OutArgs {
    pub fn dir(&self) -> CliResult<PathBuf> {
        let dir = match &self.out {
            Some(d) => d.clone(),
            None => std::env::var_os(OUT_DIR_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from(".")),
        };
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }
}

/// Result of a successful command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    /// Set when `--strict` was given and a threshold was breached.
    pub strict_breach: bool,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.strict_breach {
            2
        } else {
            0
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    match &cli.command {
        Command::Diagnose(a) => diagnose::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Experiment(a) => experiment::run(a),
        Command::Presets => {
            for name in rstar_diag::generators::PRESET_NAMES {
                say!("{name}");
            }
            Ok(Outcome::default())
        }
    }
}

pub(crate) fn write_file(path: &Path, contents: &[u8]) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Parses `key=value` for `--set`.
pub(crate) fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}
