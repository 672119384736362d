//! Command-line front end: simulations, stable-belief search, graph checks
//! and the calibration oracle.

// `!(x > 0.0)` deliberately rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod analysis;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use assumption_lab::engine::LearnerMode;
use assumption_lab::parallel::init_thread_pool;
use assumption_lab::scenarios::ScenarioSpec;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{Analysis, RunConfig};
use error::CliError;

const THREADS_VAR: &str = "ASSUMPTION_LAB_THREADS";

#[derive(Parser)]
#[command(name = "assumption-lab", version, about = "Assumption-based learning simulations and analyses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an analysis. Flags override the config file.
    Run(RunArgs),
    /// Print the fully defaulted config for a scenario.
    Defaults {
        #[arg(long, default_value = "contaminated-gaussian")]
        scenario: String,
    },
    /// Print the Markdown config reference covering every scenario.
    Reference,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    AssumptionBased,
    MisspecifiedBayesian,
    CorrectBayesian,
}

impl From<ModeArg> for LearnerMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::AssumptionBased => Self::AssumptionBased,
            ModeArg::MisspecifiedBayesian => Self::MisspecifiedBayesian,
            ModeArg::CorrectBayesian => Self::CorrectBayesian,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long, value_enum)]
    analysis: Option<Analysis>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    k: Option<f64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Comma-separated true state, e.g. `0.7,0.3`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    omega_star: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_json(&std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?)?,
            None => RunConfig::default(),
        };
        if let Some(name) = &self.scenario {
            if c.scenario.name() != name {
                c.scenario = ScenarioSpec::by_name(name).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
            }
        }
        if let Some(a) = self.analysis {
            c.analysis = a;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if self.k.is_some() {
            c.k = self.k;
        }
        if let Some(h) = self.horizon {
            c.horizon = h;
        }
        if let Some(r) = self.replications {
            c.replications = r;
        }
        if let Some(m) = self.mode {
            c.mode = m.into();
        }
        if self.omega_star.is_some() {
            c.omega_star = self.omega_star;
        }
        if let Some(o) = self.out {
            c.out = o;
        }
        Ok(c)
    }
}

fn threads_from_env() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = raw.trim().parse().map_err(|_| CliError::Config(format!("{THREADS_VAR}: expected a positive integer, got `{raw}`")))?;
    init_thread_pool(n).map_err(|e| CliError::Config(format!("{THREADS_VAR}: {e}")))
}

fn defaults_json(scenario: &str) -> Result<String, CliError> {
    let spec = ScenarioSpec::by_name(scenario).map_err(|e| CliError::Config(format!("scenario: {e}")))?;
    let resolved = RunConfig { scenario: spec, ..RunConfig::default() }.resolve()?;
    serde_json::to_string_pretty(&resolved.config).map_err(|e| CliError::Config(e.to_string()))
}

const REFERENCE_HEADER: &str = "\
# Run configuration reference

Generated by `assumption-lab reference`. A run config is one JSON document;
every field is optional and unknown fields are rejected. Command-line flags
override the file. Below is the fully defaulted config of each built-in
scenario.

Fields:

- `scenario`: `name` plus scenario options.
- `analysis`: `simulate`, `stable`, `dynamics`, `graph-check` or `calibrate-oracle`.
- `omega_star`: true state; scenario default when `null`.
- `k`: research threshold; scenario default when `null`.
- `context`: context law over `[0, 1]`, one of `{\"kind\": \"uniform01\"}`,
  `{\"kind\": \"beta\", \"a\": 2, \"b\": 5}` or
  `{\"kind\": \"discrete\", \"points\": [0.1, 0.9], \"weights\": [0.5, 0.5]}`; uniform when `null`.
- `gate_space`: `s-only` or `s-and-u`; scenario default when `null`.
- `divergence`: `kl`, `reverse-kl`, `squared-hellinger`, `total-variation` or `chi-square`.
- `mode`: `assumption-based`, `misspecified-bayesian` or `correct-bayesian`.
- `execution`: `parallel` or `sequential`.
- `stable`: settings of the `stable` analysis.
- `out`: output directory.
";

fn execute(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::Defaults { scenario } => Ok(vec![defaults_json(&scenario)?]),
        Command::Reference => {
            let mut page = String::from(REFERENCE_HEADER);
            for name in ScenarioSpec::NAMES {
                page.push_str(&format!("\n## {name}\n\n```json\n{}\n```\n", defaults_json(name)?));
            }
            Ok(vec![page.trim_end().to_string()])
        }
        Command::Run(args) => {
            threads_from_env()?;
            let resolved = args.into_config()?.resolve()?;
            analysis::run(&resolved)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // Usage mistakes are configuration errors; help and version are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = serde_json::json!({ "error": e.code(), "message": e.to_string() });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
