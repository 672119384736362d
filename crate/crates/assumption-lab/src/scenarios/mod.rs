//! Data-generating processes, assumption menus and declared structures.
//!
//! Each built-in scenario implements [`Model`]; [`Scenario`] wraps a model
//! with its context distribution, gate space and validated DAG.

mod binary;
mod gaussian;
mod heckman;
mod sem;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::beliefs::BeliefState;
use crate::distributions::{std_normal_cdf, std_normal_pdf, ContextDistribution, Gaussian1D, RngStream};
use crate::divergence::{f_divergence, FDivergenceSpec, GateSpace, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::graph::{g_separable, DagModel, GSeparability, Role};

pub use binary::{BinaryOptions, BinaryPrior, ContaminatedBinary};
pub use gaussian::{Calibration, ContaminatedGaussian, GaussianOptions};
pub use heckman::{HeckmanOptions, HeckmanSelection};
pub use sem::{Coefficients, LinearSem, Normalization, SemOptions, SemVariant};

/// How a fixed-parameter assumption picks its value each period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueRule {
    Constant(f64),
    CurrentMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Assumption {
    /// Treat the context as if it were this value.
    Context(f64),
    /// Treat parameter `index` (zero-based) as known.
    FixedParameter { index: usize, rule: ValueRule },
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Context(v) => write!(f, "theta={v}"),
            Self::FixedParameter { index, rule: ValueRule::Constant(v) } => write!(f, "omega{}={v}", index + 1),
            Self::FixedParameter { index, rule: ValueRule::CurrentMean } => write!(f, "omega{}=mean", index + 1),
        }
    }
}

/// The law a statistic is evaluated under: a context value (NaN when the
/// scenario has none) and optionally one parameter pinned to a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditioning {
    pub theta: f64,
    pub fixed: Option<(usize, f64)>,
}

impl Conditioning {
    pub fn context(theta: f64) -> Self {
        Self { theta, fixed: None }
    }

    /// `omega` with the pinned coordinate substituted.
    pub fn apply(&self, omega: &[f64]) -> Vec<f64> {
        let mut w = omega.to_vec();
        if let Some((i, v)) = self.fixed {
            w[i] = v;
        }
        w
    }
}

/// Realized statistics; missing entries are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub s: Vec<f64>,
}

impl Observation {
    pub fn new(s: Vec<f64>) -> Self {
        Self { s }
    }
}

/// One draw from the true process, with the latent when the scenario has one.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Observation,
    pub u: Option<f64>,
}

/// Which assumptions and learner modes a prior is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorUse {
    AsIf,
    Correct,
}

/// Scenario-specific behaviour. Parameter indices are zero-based.
pub trait Model: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn omega_dim(&self) -> usize;
    fn statistic_names(&self) -> Vec<&'static str>;
    fn question(&self) -> Vec<usize>;
    fn theta_star(&self) -> Option<f64>;
    fn menu(&self) -> Vec<Assumption>;
    /// Declared active parameters under the first menu assumption.
    fn q_star(&self) -> Vec<usize>;
    fn has_latent(&self) -> bool;
    fn has_context(&self) -> bool {
        true
    }
    fn default_gate_space(&self) -> GateSpace;
    fn dag_text(&self) -> String;
    /// Numbers that pin down the conditional law of statistic `node` given
    /// its graph parents; used to check the declared DAG.
    fn equation(&self, node: usize, theta: f64, omega: &[f64]) -> Vec<f64>;
    fn bounds(&self) -> Vec<(f64, f64)>;
    fn validate_state(&self, omega: &[f64]) -> Result<()> {
        check_box(omega, &self.bounds())
    }
    fn prior(&self, usage: PriorUse) -> Result<BeliefState>;
    fn sample(&self, omega: &[f64], theta: f64, stream: &mut RngStream) -> Sample;
    fn likelihood(&self, obs: &Observation, cond: &Conditioning, omega: &[f64]) -> Result<f64>;
    fn update(&self, belief: &BeliefState, obs: &Observation, cond: &Conditioning) -> Result<BeliefState>;
    fn predictive(&self, belief: &BeliefState, cond: &Conditioning, space: GateSpace) -> Result<PredictiveDistribution>;
    /// `D(p(·|truth) ‖ p(·|assumed))`; closed forms override the generic path.
    fn gate_divergence(
        &self,
        belief: &BeliefState,
        truth: &Conditioning,
        assumed: &Conditioning,
        spec: &FDivergenceSpec,
        space: GateSpace,
    ) -> Result<f64> {
        let m = self.predictive(belief, truth, space)?;
        let m_star = self.predictive(belief, assumed, space)?;
        Ok(f_divergence(&m, &m_star, spec)?)
    }
    /// Statistic space cut into weighted representative points.
    fn discretize(&self, _belief: &BeliefState, _cond: &Conditioning, _bins: usize) -> Result<Vec<(f64, Observation)>> {
        Err(Error::Unsupported(format!("{} has no discretized statistic space", self.name())))
    }
    /// Every value the statistic can take, when there are finitely many.
    fn finite_outcomes(&self) -> Option<Vec<Observation>> {
        None
    }
    /// Exact minimizer over the active coordinates of the KL divergence from
    /// the `(weight, θ)` mixture of true laws to the assumed law, when one is
    /// known in closed form.
    fn berk_minimizer(&self, _nodes: &[(f64, f64)], _omega_star: &[f64]) -> Option<Vec<f64>> {
        None
    }
    /// Uniform draw from the parameter box.
    fn random_state(&self, stream: &mut RngStream) -> Vec<f64> {
        self.bounds().iter().map(|&(lo, hi)| lo + (hi - lo) * stream.uniform()).collect()
    }
}

pub(crate) fn check_box(omega: &[f64], bounds: &[(f64, f64)]) -> Result<()> {
    if omega.len() != bounds.len() {
        return Err(Error::OutOfDomain(format!("expected {} parameters, got {}", bounds.len(), omega.len())));
    }
    for (k, (w, (lo, hi))) in omega.iter().zip(bounds).enumerate() {
        if !w.is_finite() || w < lo || w > hi {
            return Err(Error::OutOfDomain(format!("omega{} = {w} outside [{lo}, {hi}]", k + 1)));
        }
    }
    Ok(())
}

/// Cut `N(mean, var)` into `bins` equal-width cells over ±8 sd plus two tail
/// cells, each represented by its conditional mean.
pub(crate) fn gaussian_cells(g: &Gaussian1D, bins: usize) -> Vec<(f64, f64)> {
    let sd = g.sd();
    let edges: Vec<f64> = (0..=bins).map(|k| -8.0 + 16.0 * k as f64 / bins as f64).collect();
    let mut out = Vec::with_capacity(bins + 2);
    let mut push = |a: f64, b: f64| {
        let p = std_normal_cdf(b) - std_normal_cdf(a);
        if p > 0.0 {
            let pdf = |x: f64| if x.is_finite() { std_normal_pdf(x) } else { 0.0 };
            out.push((p, g.mean + sd * (pdf(a) - pdf(b)) / p));
        }
    };
    push(f64::NEG_INFINITY, edges[0]);
    for w in edges.windows(2) {
        push(w[0], w[1]);
    }
    push(edges[bins], f64::INFINITY);
    out
}

/// Built-in scenario with options, as it appears in run configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum ScenarioSpec {
    ContaminatedGaussian(GaussianOptions),
    ContaminatedBinary(BinaryOptions),
    ConfoundedCausal(SemOptions),
    InstrumentalVariables(SemOptions),
    Calibration(GaussianOptions),
    HeckmanSelection(HeckmanOptions),
}

impl ScenarioSpec {
    pub const NAMES: [&'static str; 6] = [
        "contaminated-gaussian",
        "contaminated-binary",
        "confounded-causal",
        "instrumental-variables",
        "calibration",
        "heckman-selection",
    ];

    /// Defaults for a scenario addressed by name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "contaminated-gaussian" => Self::ContaminatedGaussian(GaussianOptions::default()),
            "contaminated-binary" => Self::ContaminatedBinary(BinaryOptions::default()),
            "confounded-causal" => Self::ConfoundedCausal(SemOptions::default()),
            "instrumental-variables" => Self::InstrumentalVariables(SemOptions::default()),
            "calibration" => Self::Calibration(GaussianOptions::default()),
            "heckman-selection" => Self::HeckmanSelection(HeckmanOptions::default()),
            other => {
                return Err(Error::OutOfDomain(format!(
                    "unknown scenario `{other}`; expected one of {}",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::ContaminatedGaussian(_) => Self::NAMES[0],
            Self::ContaminatedBinary(_) => Self::NAMES[1],
            Self::ConfoundedCausal(_) => Self::NAMES[2],
            Self::InstrumentalVariables(_) => Self::NAMES[3],
            Self::Calibration(_) => Self::NAMES[4],
            Self::HeckmanSelection(_) => Self::NAMES[5],
        }
    }

    fn model(&self) -> Result<Arc<dyn Model>> {
        Ok(match self {
            Self::ContaminatedGaussian(o) => Arc::new(ContaminatedGaussian::new(o)?),
            Self::ContaminatedBinary(o) => Arc::new(ContaminatedBinary::new(o)?),
            Self::ConfoundedCausal(o) => Arc::new(LinearSem::new(SemVariant::Causal { omega3: o.omega3 }, o)?),
            Self::InstrumentalVariables(o) => Arc::new(LinearSem::new(SemVariant::InstrumentalVariables, o)?),
            Self::Calibration(o) => Arc::new(Calibration::new(o)?),
            Self::HeckmanSelection(o) => Arc::new(HeckmanSelection::new(o)?),
        })
    }

    /// Default true state used when a run does not supply one.
    pub fn default_omega_star(&self) -> Vec<f64> {
        match self {
            Self::ContaminatedGaussian(_) => vec![0.2, 0.5],
            Self::ContaminatedBinary(_) => vec![0.7, 0.3],
            Self::ConfoundedCausal(_) => vec![0.3, 0.4],
            Self::InstrumentalVariables(_) => vec![0.3, 0.4, 0.2, 0.5, 0.3],
            Self::Calibration(_) => vec![0.3, -0.2],
            Self::HeckmanSelection(_) => vec![1.0, 0.5, 0.8],
        }
    }

    /// Default research threshold.
    pub fn default_k(&self) -> f64 {
        match self {
            Self::ContaminatedGaussian(_) => 0.05,
            Self::ContaminatedBinary(_) => 1e-3,
            Self::ConfoundedCausal(_) | Self::InstrumentalVariables(_) => 0.05,
            Self::Calibration(_) => 1.0,
            Self::HeckmanSelection(_) => 0.1,
        }
    }
}

/// A model bundled with its context law, gate space and validated DAG.
#[derive(Debug, Clone)]
pub struct Scenario {
    model: Arc<dyn Model>,
    spec: ScenarioSpec,
    context: ContextDistribution,
    gate_space: GateSpace,
    dag: DagModel,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec, context: Option<ContextDistribution>, gate_space: Option<GateSpace>) -> Result<Self> {
        let model = spec.model()?;
        let context = context.unwrap_or(ContextDistribution::Uniform01);
        context.validate()?;
        let gate_space = gate_space.unwrap_or_else(|| model.default_gate_space());
        if gate_space == GateSpace::SAndU && !model.has_latent() {
            return Err(Error::UnsupportedSpace);
        }
        let dag: DagModel = model.dag_text().parse()?;
        let scenario = Self { model, spec, context, gate_space, dag };
        scenario.validate_dag()?;
        Ok(scenario)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Self::new(ScenarioSpec::by_name(name)?, None, None)
    }

    pub fn model(&self) -> &dyn Model {
        self.model.as_ref()
    }

    pub fn spec(&self) -> &ScenarioSpec {
        &self.spec
    }

    pub fn name(&self) -> &'static str {
        self.model.name()
    }

    pub fn context(&self) -> &ContextDistribution {
        &self.context
    }

    pub fn gate_space(&self) -> GateSpace {
        self.gate_space
    }

    pub fn dag(&self) -> &DagModel {
        &self.dag
    }

    pub fn omega_dim(&self) -> usize {
        self.model.omega_dim()
    }

    pub fn theta_star(&self) -> Option<f64> {
        self.model.theta_star()
    }

    pub fn menu(&self) -> Vec<Assumption> {
        self.model.menu()
    }

    pub fn question(&self) -> Vec<usize> {
        self.model.question()
    }

    pub fn q_star(&self) -> Vec<usize> {
        self.model.q_star()
    }

    pub fn has_context(&self) -> bool {
        self.model.has_context()
    }

    pub fn statistic_names(&self) -> Vec<&'static str> {
        self.model.statistic_names()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.model.bounds()
    }

    pub fn validate_state(&self, omega: &[f64]) -> Result<()> {
        self.model.validate_state(omega)
    }

    pub fn prior(&self, usage: PriorUse) -> Result<BeliefState> {
        self.model.prior(usage)
    }

    pub fn truth(&self, theta: f64) -> Conditioning {
        Conditioning::context(theta)
    }

    /// Conditioning implied by `assumption` in a period with context `theta`.
    pub fn resolve(&self, assumption: &Assumption, belief: &BeliefState, theta: f64) -> Conditioning {
        match *assumption {
            Assumption::Context(v) => Conditioning::context(v),
            Assumption::FixedParameter { index, rule } => {
                let v = match rule {
                    ValueRule::Constant(v) => v,
                    ValueRule::CurrentMean => belief.mean(index),
                };
                Conditioning { theta, fixed: Some((index, v)) }
            }
        }
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if self.has_context() && !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidTheta(theta));
        }
        Ok(())
    }

    pub fn sample(&self, omega: &[f64], theta: f64, stream: &mut RngStream) -> Result<Sample> {
        self.check_theta(theta)?;
        self.validate_state(omega)?;
        Ok(self.model.sample(omega, theta, stream))
    }

    pub fn likelihood(&self, obs: &Observation, cond: &Conditioning, omega: &[f64]) -> Result<f64> {
        self.model.likelihood(obs, cond, omega)
    }

    pub fn update(&self, belief: &BeliefState, obs: &Observation, cond: &Conditioning) -> Result<BeliefState> {
        self.model.update(belief, obs, cond)
    }

    pub fn predictive(&self, belief: &BeliefState, cond: &Conditioning, space: GateSpace) -> Result<PredictiveDistribution> {
        if space == GateSpace::SAndU && !self.model.has_latent() {
            return Err(Error::UnsupportedSpace);
        }
        self.model.predictive(belief, cond, space)
    }

    pub fn discretize_statistic(&self, belief: &BeliefState, cond: &Conditioning, bins: usize) -> Result<Vec<(f64, Observation)>> {
        self.model.discretize(belief, cond, bins)
    }

    /// Gate divergence of every menu assumption at context `theta`.
    pub fn gate_divergences(&self, belief: &BeliefState, theta: f64, spec: &FDivergenceSpec) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let truth = self.truth(theta);
        self.menu()
            .iter()
            .map(|a| {
                let assumed = self.resolve(a, belief, theta);
                self.model.gate_divergence(belief, &truth, &assumed, spec, self.gate_space)
            })
            .collect()
    }

    pub fn random_state(&self, stream: &mut RngStream) -> Vec<f64> {
        self.model.random_state(stream)
    }

    /// Belief after `periods` as-if updates on data from a random true state
    /// and random contexts; used to probe history dependence.
    pub fn random_history_belief(&self, stream: &mut RngStream, periods: usize) -> Result<BeliefState> {
        let omega = self.random_state(stream);
        let menu = self.menu();
        let mut belief = self.prior(PriorUse::AsIf)?;
        for _ in 0..periods {
            let theta = if self.has_context() { self.context.sample(stream) } else { f64::NAN };
            let draw = self.model.sample(&omega, theta, stream);
            let a = &menu[(stream.uniform() * menu.len() as f64) as usize % menu.len()];
            let cond = self.resolve(a, &belief, theta);
            belief = self.update(&belief, &draw.obs, &cond)?;
        }
        Ok(belief)
    }

    /// Check that every statistic's equation reads only its graph parents.
    pub fn validate_dag(&self) -> Result<()> {
        let dag = &self.dag;
        let names = self.statistic_names();
        let mut stream = RngStream::new(0xda6, 0);
        for (j, name) in names.iter().enumerate() {
            let node = dag.index(name)?;
            if dag.role(node) != Role::Statistic {
                return Err(Error::DagMismatch(format!("`{name}` must be a statistic node")));
            }
            let parents: Vec<&str> = dag.parents(node).iter().map(|&p| dag.name(p)).collect();
            let theta_parent = parents.iter().any(|p| dag.role(dag.index(p).unwrap()) == Role::Context);
            for _ in 0..8 {
                let omega = self.random_state(&mut stream);
                let theta = if self.has_context() { 0.1 + 0.8 * stream.uniform() } else { f64::NAN };
                let base = self.model.equation(j, theta, &omega);
                let same = |other: Vec<f64>| other.iter().zip(&base).all(|(a, b)| (a - b).abs() <= 1e-12 || (a.is_nan() && b.is_nan()));
                for d in 0..omega.len() {
                    if parents.contains(&format!("omega{}", d + 1).as_str()) {
                        continue;
                    }
                    let mut w = omega.clone();
                    let (lo, hi) = self.bounds()[d];
                    w[d] = lo + (hi - lo) * stream.uniform();
                    if !same(self.model.equation(j, theta, &w)) {
                        return Err(Error::DagMismatch(format!("`{name}` depends on omega{} without an edge", d + 1)));
                    }
                }
                if self.has_context() && !theta_parent && !same(self.model.equation(j, stream.uniform(), &omega)) {
                    return Err(Error::DagMismatch(format!("`{name}` depends on the context without an edge")));
                }
            }
        }
        Ok(())
    }

    /// Whether the context and the identified parameters are G-separable in
    /// the scenario's graph.
    pub fn g_separability(&self) -> Result<GSeparability> {
        let nodes = self
            .q_star()
            .iter()
            .map(|d| self.dag.index(&format!("omega{}", d + 1)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(g_separable(&self.dag, &nodes)?)
    }

    /// Declared active parameters, confirmed by perturbing each coordinate.
    pub fn active_parameters(&self) -> Result<Vec<usize>> {
        let theta_star = self
            .theta_star()
            .ok_or_else(|| Error::Unsupported(format!("{} has no context assumption", self.name())))?;
        let declared = self.q_star();
        let cond = Conditioning::context(theta_star);
        let mut stream = RngStream::new(0xac71, 0);
        let mut moved = vec![false; self.omega_dim()];
        for _ in 0..20 {
            let omega = self.random_state(&mut stream);
            let obs = self.model.sample(&omega, theta_star, &mut stream).obs;
            let base = self.likelihood(&obs, &cond, &omega)?;
            for (d, flag) in moved.iter_mut().enumerate() {
                let mut w = omega.clone();
                let (lo, hi) = self.bounds()[d];
                w[d] = lo + (hi - lo) * stream.uniform();
                if self.validate_state(&w).is_err() {
                    continue;
                }
                if (self.likelihood(&obs, &cond, &w)? - base).abs() > 1e-9 {
                    *flag = true;
                }
            }
        }
        let measured: Vec<usize> = (0..moved.len()).filter(|&d| moved[d]).collect();
        if measured != declared {
            return Err(Error::QStarMismatch { declared, measured });
        }
        Ok(declared)
    }

    /// Three regularity conditions: proper active set, gate divergence
    /// strictly increasing in the context, and sensitivity to the question.
    pub fn regularity_check(&self, probes: usize, spec: &FDivergenceSpec) -> Result<RegularityReport> {
        let theta_star = self
            .theta_star()
            .ok_or_else(|| Error::Unsupported(format!("{} has no context assumption", self.name())))?;
        let proper_active_set = self.q_star().len() < self.omega_dim();
        let mut stream = RngStream::new(0x7e9, 0);
        let mut increasing = true;
        for _ in 0..probes {
            let periods = 1 + (stream.uniform() * 20.0) as usize;
            let belief = self.random_history_belief(&mut stream, periods)?;
            let d: Vec<f64> = (0..=100)
                .map(|k| self.gate_divergences(&belief, k as f64 / 100.0, spec).map(|v| v[0]))
                .collect::<Result<_>>()?;
            if d.windows(2).any(|w| w[1] <= w[0]) {
                increasing = false;
                break;
            }
        }
        let cond = Conditioning::context(theta_star);
        let omega = self.random_state(&mut stream);
        let obs = self.model.sample(&omega, theta_star, &mut stream).obs;
        let base = self.likelihood(&obs, &cond, &omega)?;
        let sensitive = self.question().iter().any(|&j| {
            let mut w = omega.clone();
            let (lo, hi) = self.bounds()[j];
            w[j] = (w[j] + 1e-4).min(hi).max(lo + 1e-4);
            self.likelihood(&obs, &cond, &w).map(|l| (l - base).abs() > 1e-12).unwrap_or(false)
        });
        Ok(RegularityReport { proper_active_set, increasing_divergence: increasing, question_sensitive: sensitive })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegularityReport {
    pub proper_active_set: bool,
    pub increasing_divergence: bool,
    pub question_sensitive: bool,
}

impl RegularityReport {
    pub fn regular(&self) -> bool {
        self.proper_active_set && self.increasing_divergence && self.question_sensitive
    }
}
