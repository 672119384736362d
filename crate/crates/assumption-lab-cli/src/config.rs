//! Run configuration: one JSON document, overridable from the command line,
//! validated in full before any computation starts.

use std::path::PathBuf;

use assumption_lab::distributions::ContextDistribution;
use assumption_lab::divergence::{FDivergenceSpec, FKind, GateSpace};
use assumption_lab::engine::{EngineConfig, LearnerMode};
use assumption_lab::parallel::Execution;
use assumption_lab::scenarios::{Scenario, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    #[default]
    Simulate,
    Stable,
    Dynamics,
    GraphCheck,
    CalibrateOracle,
}

impl Analysis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Stable => "stable",
            Self::Dynamics => "dynamics",
            Self::GraphCheck => "graph-check",
            Self::CalibrateOracle => "calibrate-oracle",
        }
    }
}

/// Settings of the `stable` analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StableSettings {
    pub starts: usize,
    /// Estimate basins by simulation after solving.
    pub basins: bool,
    pub basin_replications: usize,
    pub basin_horizon: usize,
    /// Spread the simulation priors over the parameter box.
    pub dispersed_priors: bool,
    pub certitude_tolerance: f64,
    /// Run the regularity check before solving.
    pub check_regularity: bool,
}

impl Default for StableSettings {
    fn default() -> Self {
        Self {
            starts: 32,
            basins: false,
            basin_replications: 200,
            basin_horizon: 2000,
            dispersed_priors: true,
            certitude_tolerance: 1e-6,
            check_regularity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario name plus its options, e.g. `{"name": "contaminated-binary", "epsilon": 0.05}`.
    pub scenario: ScenarioSpec,
    pub analysis: Analysis,
    /// True state; the scenario default when absent.
    pub omega_star: Option<Vec<f64>>,
    /// Research threshold; the scenario default when absent.
    pub k: Option<f64>,
    /// Context law; uniform on `[0, 1]` when absent.
    pub context: Option<ContextDistribution>,
    /// Gate space; the scenario default when absent.
    pub gate_space: Option<GateSpace>,
    pub divergence: FKind,
    pub horizon: usize,
    pub replications: usize,
    pub mode: LearnerMode,
    pub seed: u64,
    pub execution: Execution,
    pub stable: StableSettings,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSpec::by_name("contaminated-gaussian").expect("built-in scenario"),
            analysis: Analysis::Simulate,
            omega_star: None,
            k: None,
            context: None,
            gate_space: None,
            divergence: FKind::Kl,
            horizon: 1000,
            replications: 20,
            mode: LearnerMode::AssumptionBased,
            seed: 0,
            execution: Execution::default(),
            stable: StableSettings::default(),
            out: PathBuf::from("out"),
        }
    }
}

/// A configuration that passed validation, with defaults filled in.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub scenario: Scenario,
    pub omega_star: Vec<f64>,
    pub k: f64,
    pub divergence: FDivergenceSpec,
}

impl Resolved {
    pub fn engine_config(&self, track_theta_bar: Option<bool>) -> EngineConfig {
        EngineConfig {
            k: self.k,
            horizon: self.config.horizon,
            replications: self.config.replications,
            mode: self.config.mode,
            master_seed: self.config.seed,
            divergence: self.divergence.clone(),
            execution: self.config.execution,
            record_rows: true,
            track_theta_bar,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Check every field and fill in scenario defaults.
    pub fn resolve(mut self) -> Result<Resolved, CliError> {
        let scenario = Scenario::new(self.scenario.clone(), self.context.clone(), self.gate_space)
            .map_err(|e| invalid("scenario", e))?;
        let omega_star = self.omega_star.clone().unwrap_or_else(|| self.scenario.default_omega_star());
        if omega_star.len() != scenario.omega_dim() {
            return Err(invalid(
                "omega_star",
                format!("{} needs {} coordinates, got {}", scenario.name(), scenario.omega_dim(), omega_star.len()),
            ));
        }
        scenario.validate_state(&omega_star).map_err(|e| invalid("omega_star", e))?;
        let k = self.k.unwrap_or_else(|| self.scenario.default_k());
        if !(k > 0.0) || !k.is_finite() {
            return Err(invalid("k", format!("must be positive and finite, got {k}")));
        }
        if self.horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if self.replications == 0 {
            return Err(invalid("replications", "must be at least 1"));
        }
        let divergence = FDivergenceSpec::named(self.divergence).map_err(|e| invalid("divergence", e))?;
        let s = &self.stable;
        if s.starts == 0 || s.basin_replications == 0 || s.basin_horizon == 0 {
            return Err(invalid("stable", "starts, basin_replications and basin_horizon must be at least 1"));
        }
        if !(s.certitude_tolerance >= 0.0) {
            return Err(invalid("stable.certitude_tolerance", "must be non-negative"));
        }
        self.omega_star = Some(omega_star.clone());
        self.k = Some(k);
        Ok(Resolved { config: self, scenario, omega_star, k, divergence })
    }
}
