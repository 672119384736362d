//! The period loop: draw a context, run the plausibility gate over the menu,
//! sample and update on research, record the trace.
//!
//! Also hosts the research-region threshold, the baseline learner modes and
//! the closed-form decision rules of the calibration and selection models.

use serde::{Deserialize, Serialize};

use crate::beliefs::{BeliefState, GaussianBelief, HeckmanBelief};
use crate::distributions::{QuadratureRule, RngStream};
use crate::divergence::{heckman_r, heckman_s, DivergenceError, FDivergenceSpec, GateSpace};
use crate::error::{Error, Result};
use crate::parallel::{try_map_indices, Execution};
use crate::scenarios::{Assumption, Conditioning, PriorUse, Scenario};

/// Absolute tolerance of every threshold bisection.
pub const THRESHOLD_TOL: f64 = 1e-10;
/// Change in `θ̄` below which two consecutive values count as equal.
pub const EVENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerMode {
    #[default]
    AssumptionBased,
    /// Assumption-based with an infinite threshold.
    MisspecifiedBayesian,
    /// Always researches and updates with the true context.
    CorrectBayesian,
}

impl LearnerMode {
    pub fn effective_k(self, k: f64) -> f64 {
        match self {
            Self::AssumptionBased => k,
            Self::MisspecifiedBayesian | Self::CorrectBayesian => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateDecision {
    /// Menu index of the maintained assumption; `None` means pass.
    pub chosen: Option<usize>,
    pub divergences: Vec<f64>,
    pub k: f64,
}

impl GateDecision {
    /// Research iff the smallest divergence is at most `k`; ties go to the
    /// earlier menu entry.
    pub fn from_divergences(divergences: Vec<f64>, k: f64) -> Result<Self> {
        if divergences.iter().any(|d| d.is_nan()) {
            return Err(DivergenceError::NonFiniteDivergence.into());
        }
        let mut best: Option<usize> = None;
        for (i, d) in divergences.iter().enumerate() {
            if best.is_none_or(|b| *d < divergences[b]) {
                best = Some(i);
            }
        }
        let chosen = best.filter(|&b| divergences[b] <= k);
        Ok(Self { chosen, divergences, k })
    }

    pub fn min_divergence(&self) -> f64 {
        self.divergences.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

fn check_k(k: f64) -> Result<()> {
    if !(k > 0.0) {
        return Err(Error::OutOfDomain(format!("threshold K must be positive, got {k}")));
    }
    Ok(())
}

/// Evaluate the gate at context `theta`.
pub fn gate(belief: &BeliefState, scenario: &Scenario, theta: f64, k: f64, spec: &FDivergenceSpec) -> Result<GateDecision> {
    check_k(k)?;
    GateDecision::from_divergences(scenario.gate_divergences(belief, theta, spec)?, k)
}

fn min_divergence(belief: &BeliefState, scenario: &Scenario, theta: f64, spec: &FDivergenceSpec) -> Result<f64> {
    let d = scenario.gate_divergences(belief, theta, spec)?;
    Ok(d.into_iter().fold(f64::INFINITY, f64::min))
}

/// Upper end of the research region `[0, θ̄]`.
///
/// Requires the smallest gate divergence to be nondecreasing in the context;
/// this is probed on an 11-point grid before bisecting.
pub fn theta_bar(belief: &BeliefState, scenario: &Scenario, k: f64, spec: &FDivergenceSpec) -> Result<f64> {
    check_k(k)?;
    if !scenario.has_context() {
        return Err(Error::Unsupported(format!("{} has no context", scenario.name())));
    }
    let d = |theta: f64| min_divergence(belief, scenario, theta, spec);
    let probes: Vec<f64> = (0..=10).map(|i| d(i as f64 / 10.0)).collect::<Result<_>>()?;
    if probes.windows(2).any(|w| w[1] < w[0] - 1e-12) {
        return Err(Error::NonMonotone);
    }
    if probes[10] <= k {
        return Ok(1.0);
    }
    let above = probes.iter().position(|&v| v > k).expect("last probe exceeds k");
    if above == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = ((above - 1) as f64 / 10.0, above as f64 / 10.0);
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        if d(mid)? <= k {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Whether per-period `θ̄` tracking is both meaningful and cheap: one
/// contextual assumption, gate on the statistic alone.
pub fn theta_bar_trackable(scenario: &Scenario) -> bool {
    let menu = scenario.menu();
    scenario.has_context()
        && menu.len() == 1
        && matches!(menu[0], Assumption::Context(_))
        && scenario.gate_space() == GateSpace::SOnly
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub k: f64,
    pub horizon: usize,
    pub replications: usize,
    pub mode: LearnerMode,
    pub master_seed: u64,
    #[serde(skip)]
    pub divergence: FDivergenceSpec,
    pub execution: Execution,
    /// Keep per-period rows; off for long batch runs that only need
    /// terminal beliefs.
    pub record_rows: bool,
    /// Track `θ̄` every period; `None` tracks whenever it is cheap.
    pub track_theta_bar: Option<bool>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: 0.05,
            horizon: 5000,
            replications: 200,
            mode: LearnerMode::AssumptionBased,
            master_seed: 0,
            divergence: FDivergenceSpec::kl(),
            execution: Execution::default(),
            record_rows: true,
            track_theta_bar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub replication: usize,
    /// Period, starting at 1.
    pub t: usize,
    pub theta: f64,
    pub action: bool,
    /// Smallest gate divergence; NaN when the gate is not consulted.
    pub divergence: f64,
    pub assumption: Option<usize>,
    /// Statistics on research periods; NaN otherwise.
    pub s: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub theta_bar: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub replication: usize,
    pub rows: Vec<TraceRow>,
    /// `θ̄` in force at each period, when tracked.
    pub theta_bar: Vec<f64>,
    pub research_periods: usize,
    pub final_belief: BeliefState,
}

/// Mutable state of one replication.
#[derive(Debug, Clone)]
pub struct ReplicationState {
    pub belief: BeliefState,
    pub t: usize,
    theta_bar: Option<f64>,
}

impl ReplicationState {
    pub fn new(prior: BeliefState) -> Self {
        Self { belief: prior, t: 0, theta_bar: None }
    }
}

/// A scenario, a true state and run settings.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    scenario: &'a Scenario,
    omega_star: Vec<f64>,
    config: EngineConfig,
    menu: Vec<Assumption>,
    track: bool,
}

impl<'a> Engine<'a> {
    pub fn new(scenario: &'a Scenario, omega_star: &[f64], config: EngineConfig) -> Result<Self> {
        scenario.validate_state(omega_star)?;
        if config.mode == LearnerMode::AssumptionBased {
            check_k(config.k)?;
        }
        if config.horizon == 0 || config.replications == 0 {
            return Err(Error::OutOfDomain("horizon and replications must be at least 1".into()));
        }
        let track = config.mode != LearnerMode::CorrectBayesian
            && config.track_theta_bar.unwrap_or_else(|| theta_bar_trackable(scenario));
        if track && !scenario.has_context() {
            return Err(Error::Unsupported(format!("{} has no context to threshold", scenario.name())));
        }
        Ok(Self { scenario, omega_star: omega_star.to_vec(), menu: scenario.menu(), config, track })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn scenario(&self) -> &Scenario {
        self.scenario
    }

    pub fn tracks_theta_bar(&self) -> bool {
        self.track
    }

    fn prior_use(&self) -> PriorUse {
        match self.config.mode {
            LearnerMode::CorrectBayesian => PriorUse::Correct,
            _ => PriorUse::AsIf,
        }
    }

    pub fn default_prior(&self) -> Result<BeliefState> {
        self.scenario.prior(self.prior_use())
    }

    /// One period. On a pass the belief is left untouched.
    pub fn step(&self, state: &mut ReplicationState, replication: usize, stream: &mut RngStream) -> Result<TraceRow> {
        let sc = self.scenario;
        let spec = &self.config.divergence;
        state.t += 1;
        if self.track && state.theta_bar.is_none() {
            state.theta_bar = Some(theta_bar(&state.belief, sc, self.config.k, spec)?);
        }
        let theta_bar_now = state.theta_bar;
        let theta = if sc.has_context() { sc.context().sample(stream) } else { f64::NAN };
        let (cond, divergence, assumption) = match self.config.mode {
            LearnerMode::CorrectBayesian => (Some(sc.truth(theta)), f64::NAN, None),
            mode => {
                let decision = GateDecision::from_divergences(
                    sc.gate_divergences(&state.belief, theta, spec)?,
                    mode.effective_k(self.config.k),
                )?;
                let cond: Option<Conditioning> = decision.chosen.map(|i| sc.resolve(&self.menu[i], &state.belief, theta));
                (cond, decision.min_divergence(), decision.chosen)
            }
        };
        let n_stats = sc.statistic_names().len();
        let s = match cond {
            Some(cond) => {
                let draw = sc.sample(&self.omega_star, theta, stream)?;
                let next = sc.update(&state.belief, &draw.obs, &cond)?;
                if next != state.belief {
                    state.theta_bar = None;
                }
                state.belief = next;
                draw.obs.s
            }
            None => vec![f64::NAN; n_stats],
        };
        Ok(TraceRow {
            replication,
            t: state.t,
            theta,
            action: cond.is_some(),
            divergence,
            assumption,
            s,
            means: state.belief.means(),
            sds: state.belief.variances().iter().map(|v| v.sqrt()).collect(),
            theta_bar: theta_bar_now,
        })
    }

    /// Run replication `replication` from `prior` for the configured horizon.
    pub fn run_replication(&self, replication: usize, prior: BeliefState) -> Result<Trace> {
        let mut stream = RngStream::new(self.config.master_seed, replication as u64);
        let mut state = ReplicationState::new(prior);
        let mut rows = Vec::with_capacity(if self.config.record_rows { self.config.horizon } else { 0 });
        let mut theta_bar = Vec::with_capacity(if self.track { self.config.horizon } else { 0 });
        let mut research = 0;
        for _ in 0..self.config.horizon {
            let row = self.step(&mut state, replication, &mut stream)?;
            research += usize::from(row.action);
            if let Some(tb) = row.theta_bar {
                theta_bar.push(tb);
            }
            if self.config.record_rows {
                rows.push(row);
            }
        }
        Ok(Trace { replication, rows, theta_bar, research_periods: research, final_belief: state.belief })
    }

    /// Independent replications from the scenario's default prior.
    pub fn run(&self) -> Result<Vec<Trace>> {
        let prior = self.default_prior()?;
        self.run_with_priors(|_| Ok(prior.clone()))
    }

    /// Independent replications, each starting from `prior(replication)`.
    pub fn run_with_priors<P>(&self, prior: P) -> Result<Vec<Trace>>
    where
        P: Fn(usize) -> Result<BeliefState> + Sync + Send,
    {
        try_map_indices(self.config.replications, self.config.execution, |r| self.run_replication(r, prior(r)?))
    }
}

/// Aggregate statistics of a batch of traces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub replications: usize,
    pub horizon: usize,
    pub research_frequency: f64,
    /// Cross-replication mean of each terminal posterior mean.
    pub terminal_mean: Vec<f64>,
    /// Standard error of `terminal_mean`.
    pub terminal_mean_se: Vec<f64>,
    /// Cross-replication mean of each terminal posterior sd.
    pub terminal_sd: Vec<f64>,
}

pub fn summarize(traces: &[Trace], horizon: usize) -> RunSummary {
    let n = traces.len();
    let dim = traces.first().map_or(0, |t| t.final_belief.dim());
    let nf = n.max(1) as f64;
    let mut mean = vec![0.0; dim];
    let mut sd = vec![0.0; dim];
    for t in traces {
        for d in 0..dim {
            mean[d] += t.final_belief.mean(d) / nf;
            sd[d] += t.final_belief.variance(d).sqrt() / nf;
        }
    }
    let se = (0..dim)
        .map(|d| {
            if n < 2 {
                return f64::NAN;
            }
            let ss: f64 = traces.iter().map(|t| (t.final_belief.mean(d) - mean[d]).powi(2)).sum();
            (ss / (n - 1) as f64 / n as f64).sqrt()
        })
        .collect();
    let research: usize = traces.iter().map(|t| t.research_periods).sum();
    RunSummary {
        replications: n,
        horizon,
        research_frequency: research as f64 / (nf * horizon.max(1) as f64),
        terminal_mean: mean,
        terminal_mean_se: se,
        terminal_sd: sd,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationDynamics {
    pub replication: usize,
    pub expansions: usize,
    pub contractions: usize,
    /// Last change of `θ̄` was an expansion.
    pub unreversed_expansion: bool,
    pub initial: f64,
    pub terminal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsReport {
    pub replications: Vec<ReplicationDynamics>,
    pub total_expansions: usize,
    pub total_contractions: usize,
    /// Share of replications with at least one expansion.
    pub expansion_frequency: f64,
    /// Share of replications with at least one contraction.
    pub contraction_frequency: f64,
    /// Replications whose final `θ̄` movement was an expansion.
    pub flagged: Vec<usize>,
    /// Cross-replication mean of `θ̄` per period.
    pub mean_theta_bar: Vec<f64>,
}

/// Count rises (expansions) and falls (contractions) of the research region.
pub fn propensity_dynamics_report(traces: &[Trace]) -> DynamicsReport {
    let mut reps = Vec::with_capacity(traces.len());
    let horizon = traces.iter().map(|t| t.theta_bar.len()).max().unwrap_or(0);
    let mut sum = vec![0.0; horizon];
    let mut count = vec![0usize; horizon];
    for tr in traces {
        let (mut up, mut down, mut last_up) = (0, 0, false);
        for w in tr.theta_bar.windows(2) {
            if w[1] > w[0] + EVENT_TOL {
                up += 1;
                last_up = true;
            } else if w[1] < w[0] - EVENT_TOL {
                down += 1;
                last_up = false;
            }
        }
        for (i, v) in tr.theta_bar.iter().enumerate() {
            sum[i] += v;
            count[i] += 1;
        }
        reps.push(ReplicationDynamics {
            replication: tr.replication,
            expansions: up,
            contractions: down,
            unreversed_expansion: last_up,
            initial: tr.theta_bar.first().copied().unwrap_or(f64::NAN),
            terminal: tr.theta_bar.last().copied().unwrap_or(f64::NAN),
        });
    }
    let n = reps.len().max(1) as f64;
    DynamicsReport {
        total_expansions: reps.iter().map(|r| r.expansions).sum(),
        total_contractions: reps.iter().map(|r| r.contractions).sum(),
        expansion_frequency: reps.iter().filter(|r| r.expansions > 0).count() as f64 / n,
        contraction_frequency: reps.iter().filter(|r| r.contractions > 0).count() as f64 / n,
        flagged: reps.iter().filter(|r| r.unreversed_expansion).map(|r| r.replication).collect(),
        mean_theta_bar: sum.iter().zip(&count).map(|(s, c)| s / *c as f64).collect(),
        replications: reps,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

/// One calibration period: pin the summand with the smaller variance at its
/// mean and update the other by conjugacy. With equal variances, odd periods
/// update `ω₁` and even periods `ω₂`.
pub fn calibration_step(belief: &GaussianBelief, s: f64, parity: Parity) -> Result<GaussianBelief> {
    let (v1, v2) = (belief.variance(0), belief.variance(1));
    for v in [v1, v2] {
        if !(v > 0.0) {
            return Err(DivergenceError::InvalidVariance(v).into());
        }
    }
    let i = if v1 > v2 {
        0
    } else if v2 > v1 {
        1
    } else {
        match parity {
            Parity::Odd => 0,
            Parity::Even => 1,
        }
    };
    let other = 1 - i;
    let mut x = [0.0; 2];
    x[i] = 1.0;
    belief.observe_linear(&x, s - belief.mean(other), 1.0)
}

/// Engine run of the calibration scenario checked against the conjugate
/// recursion: after `τ` updates a summand's variance is `v/(1+τv)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub replications: usize,
    pub horizon: usize,
    /// Every replication researched in every period, pinning `ω₂` in odd
    /// periods and `ω₁` in even ones.
    pub alternation: bool,
    /// Largest gap between a recorded variance and the recursion.
    pub max_variance_error: f64,
    pub target_sum: f64,
    pub mean_sum: f64,
    pub sum_se: f64,
    /// Cross-replication variance of `m₁` after each block of two periods.
    pub block_variance_m1: Vec<f64>,
    /// Per-replication posterior sds never increase.
    pub sds_monotone: bool,
}

impl CalibrationReport {
    /// `var m₁` is non-decreasing over blocks after `from` (1-based).
    pub fn variance_non_decreasing_after(&self, from: usize) -> bool {
        self.block_variance_m1.iter().skip(from.saturating_sub(1)).collect::<Vec<_>>().windows(2).all(|w| w[1] >= w[0])
    }
}

struct CalibrationPath {
    alternation: bool,
    max_error: f64,
    sds_monotone: bool,
    block_m1: Vec<f64>,
    sum: f64,
}

/// Run the calibration scenario and compare each period with the recursion.
pub fn calibration_check(scenario: &Scenario, omega_star: &[f64], config: &EngineConfig) -> Result<CalibrationReport> {
    let prior = scenario.prior(PriorUse::AsIf)?;
    let g = prior
        .as_gaussian()
        .ok_or_else(|| Error::Unsupported(format!("{} does not carry a Gaussian belief", scenario.name())))?;
    if scenario.omega_dim() != 2 || scenario.has_context() || g.covariance(0, 1) != 0.0 {
        return Err(Error::Unsupported(format!("{} is not a calibration problem", scenario.name())));
    }
    let v = [g.variance(0), g.variance(1)];
    let config = EngineConfig { mode: LearnerMode::AssumptionBased, track_theta_bar: Some(false), ..config.clone() };
    let engine = Engine::new(scenario, omega_star, config.clone())?;
    let paths = try_map_indices(config.replications, config.execution, |r| {
        let mut stream = RngStream::new(config.master_seed, r as u64);
        let mut state = ReplicationState::new(prior.clone());
        let mut path =
            CalibrationPath { alternation: true, max_error: 0.0, sds_monotone: true, block_m1: Vec::new(), sum: 0.0 };
        let mut updates = [0usize; 2];
        let mut last_sd = [v[0].sqrt(), v[1].sqrt()];
        for t in 1..=config.horizon {
            let row = engine.step(&mut state, r, &mut stream)?;
            let expected = if t % 2 == 1 { 0 } else { 1 };
            if row.assumption != Some(expected) {
                path.alternation = false;
            }
            if let Some(a) = row.assumption {
                // Entry 0 pins ω₂ and so moves ω₁.
                updates[a] += 1;
            }
            for i in 0..2 {
                let oracle = v[i] / (1.0 + updates[i] as f64 * v[i]);
                path.max_error = path.max_error.max((row.sds[i] * row.sds[i] - oracle).abs());
                path.sds_monotone &= row.sds[i] <= last_sd[i];
                last_sd[i] = row.sds[i];
            }
            if t % 2 == 0 {
                path.block_m1.push(row.means[0]);
            }
        }
        path.sum = state.belief.mean(0) + state.belief.mean(1);
        Ok(path)
    })?;
    let n = paths.len() as f64;
    let mean_sum = paths.iter().map(|p| p.sum).sum::<f64>() / n;
    let sum_var = paths.iter().map(|p| (p.sum - mean_sum).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let blocks = config.horizon / 2;
    let block_variance_m1 = (0..blocks)
        .map(|b| {
            let mean = paths.iter().map(|p| p.block_m1[b]).sum::<f64>() / n;
            paths.iter().map(|p| (p.block_m1[b] - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)
        })
        .collect();
    Ok(CalibrationReport {
        replications: paths.len(),
        horizon: config.horizon,
        alternation: paths.iter().all(|p| p.alternation),
        max_variance_error: paths.iter().map(|p| p.max_error).fold(0.0, f64::max),
        target_sum: omega_star[0] + omega_star[1],
        mean_sum,
        sum_se: (sum_var / n).sqrt(),
        block_variance_m1,
        sds_monotone: paths.iter().all(|p| p.sds_monotone),
    })
}

/// Gate of the selection model: index 0 is random assignment, index 1 the
/// exclusion restriction.
pub fn heckman_decide(belief: &HeckmanBelief, theta: f64, k: f64) -> Result<GateDecision> {
    check_k(k)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidTheta(theta));
    }
    let rule = QuadratureRule::default_hermite();
    let r = heckman_r(belief, theta, rule)?;
    let s = heckman_s(belief, theta)?;
    GateDecision::from_divergences(vec![r, s], k)
}

/// Region boundaries of the selection model: random assignment on
/// `[0, rd]`, exclusion on `(s, 1]`, pass in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeckmanThresholds {
    pub rd: f64,
    pub s: f64,
}

fn bisect<F: Fn(f64) -> Result<bool>>(mut lo: f64, mut hi: f64, below: F) -> Result<f64> {
    while hi - lo > THRESHOLD_TOL {
        let mid = 0.5 * (lo + hi);
        if below(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn heckman_thresholds(belief: &HeckmanBelief, k: f64) -> Result<HeckmanThresholds> {
    check_k(k)?;
    let rule = QuadratureRule::default_hermite();
    let r = |t: f64| -> Result<f64> { Ok(heckman_r(belief, t, rule)?) };
    let s = |t: f64| -> Result<f64> { Ok(heckman_s(belief, t)?) };
    // R increases from 0, S decreases.
    let a = if r(1.0)? <= k { 1.0 } else { bisect(0.0, 1.0, |t| Ok(r(t)? <= k))? };
    let b = if s(0.0)? <= k {
        0.0
    } else if s(1.0)? > k {
        1.0
    } else {
        bisect(0.0, 1.0, |t| Ok(s(t)? > k))?
    };
    let c = if r(1.0)? <= s(1.0)? { 1.0 } else { bisect(0.0, 1.0, |t| Ok(r(t)? <= s(t)?))? };
    Ok(HeckmanThresholds { rd: a.min(c), s: b.max(c) })
}
