//! Long-run analysis. A stable belief is a point mass on the identified
//! coordinates that minimizes the KL divergence from the data it generates
//! (contexts restricted to the research region it induces) to the model the
//! learner assumes. Candidates are fixed points of that self-consistency map.

use argmin::core::{CostFunction, Error as SolverError, Executor, State};
use argmin::solver::brent::{BrentOpt, BrentRoot};
use argmin::solver::neldermead::NelderMead;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::beliefs::{Axis, BeliefState, GaussianBelief, GridBelief};
use crate::distributions::{ContextDistribution, QuadratureRule, RngStream};
use crate::divergence::FDivergenceSpec;
use crate::engine::{theta_bar, Engine, EngineConfig, LearnerMode};
use crate::error::{Error, Result};
use crate::parallel::{map_indices, Execution};
use crate::scenarios::{Assumption, Conditioning, Observation, PriorUse, Scenario, ScenarioSpec};
use crate::scenarios::{BinaryPrior, GaussianOptions};

pub const DEFAULT_STARTS: usize = 32;
pub const MAX_ITERATIONS: usize = 10_000;
/// Candidates closer than this (sup norm) are merged.
pub const DEDUP_TOL: f64 = 1e-6;
/// Terminal beliefs farther than this from every candidate stay unclassified.
pub const CLASSIFY_RADIUS: f64 = 0.05;

const SLOPE_STEP: f64 = 1e-6;
const SCAN_POINTS: usize = 200;
/// Stopping rule when the map itself comes from a numerical minimizer.
const NUMERIC_MAP_TOL: f64 = 1e-7;
const POINT_VARIANCE: f64 = 1e-24;
const MC_DRAWS: usize = 4000;
const MC_NODES: usize = 16;
const MC_DOMAIN: u64 = 0xbe4c;

/// Contexts in which research happens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThetaRegion {
    /// `[0, upper]`.
    Interval { upper: f64 },
    /// A single context, used as the limit of a shrinking interval.
    Point { theta: f64 },
    /// Indicator on equal-width cells of `[0, 1]` with the given centers.
    Grid { points: Vec<f64>, inside: Vec<bool> },
}

impl ThetaRegion {
    /// Normalized `(weight, θ)` nodes of the context law restricted to the
    /// region. Continuous intervals use `legendre` points.
    pub fn nodes(&self, context: &ContextDistribution, legendre: usize) -> Result<Vec<(f64, f64)>> {
        let raw: Vec<(f64, f64)> = match self {
            Self::Point { theta } => vec![(1.0, *theta)],
            Self::Interval { upper } => {
                let upper = upper.min(1.0);
                if !(upper >= 0.0) {
                    return Err(Error::ZeroMassRegion);
                }
                match context {
                    ContextDistribution::Discrete { points, weights } => points
                        .iter()
                        .zip(weights)
                        .filter(|(p, _)| **p <= upper)
                        .map(|(p, w)| (*w, *p))
                        .collect(),
                    _ => {
                        let rule = QuadratureRule::gauss_legendre(legendre);
                        let half = 0.5 * upper;
                        rule.nodes
                            .iter()
                            .zip(&rule.weights)
                            .map(|(x, w)| {
                                let t = half * (1.0 + x);
                                (w * half * context.pdf(t).unwrap_or(0.0), t)
                            })
                            .collect()
                    }
                }
            }
            Self::Grid { points, inside } => {
                if points.len() != inside.len() || points.is_empty() {
                    return Err(Error::OutOfDomain("grid region needs one flag per point".into()));
                }
                let h = 1.0 / points.len() as f64;
                match context {
                    ContextDistribution::Discrete { points: atoms, weights } => atoms
                        .iter()
                        .zip(weights)
                        .filter(|(a, _)| inside[((**a / h) as usize).min(points.len() - 1)])
                        .map(|(a, w)| (*w, *a))
                        .collect(),
                    _ => points
                        .iter()
                        .zip(inside)
                        .filter(|(_, i)| **i)
                        .map(|(p, _)| (h * context.pdf(*p).unwrap_or(0.0), *p))
                        .collect(),
                }
            }
        };
        let mass: f64 = raw.iter().map(|(w, _)| w).sum();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::ZeroMassRegion);
        }
        Ok(raw.into_iter().filter(|(w, _)| *w > 0.0).map(|(w, t)| (w / mass, t)).collect())
    }
}

fn assumed_theta(scenario: &Scenario) -> Result<f64> {
    match scenario.menu().as_slice() {
        [Assumption::Context(t)] if scenario.has_context() => Ok(*t),
        _ => Err(Error::Unsupported(format!(
            "{} does not have a single context assumption, so its research region is not an interval",
            scenario.name()
        ))),
    }
}

/// KL divergence from the context mixture of true laws over `region` to the
/// law the learner assumes at `omega_prime`.
pub fn berk_objective(omega_prime: &[f64], omega_star: &[f64], region: &ThetaRegion, scenario: &Scenario) -> Result<f64> {
    let legendre = if scenario.model().finite_outcomes().is_some() { 128 } else { MC_NODES };
    let nodes = region.nodes(scenario.context(), legendre)?;
    objective_on_nodes(omega_prime, omega_star, &nodes, scenario)
}

fn objective_on_nodes(omega_prime: &[f64], omega_star: &[f64], nodes: &[(f64, f64)], scenario: &Scenario) -> Result<f64> {
    let assumed = Conditioning::context(assumed_theta(scenario)?);
    let mixture = |obs: &Observation| -> Result<f64> {
        let mut acc = 0.0;
        for &(w, t) in nodes {
            acc += w * scenario.likelihood(obs, &Conditioning::context(t), omega_star)?;
        }
        Ok(acc)
    };
    if let Some(outcomes) = scenario.model().finite_outcomes() {
        let mut kl = 0.0;
        for obs in &outcomes {
            let p = mixture(obs)?;
            if p > 0.0 {
                let q = scenario.likelihood(obs, &assumed, omega_prime)?;
                kl += p * (p / q).ln();
            }
        }
        return Ok(kl);
    }
    // Common random numbers keep the estimate smooth in `omega_prime`.
    let mut stream = RngStream::for_domain(0, MC_DOMAIN, 0);
    let mut acc = 0.0;
    for _ in 0..MC_DRAWS {
        let u = stream.uniform();
        let mut cum = 0.0;
        let theta = nodes.iter().find(|(w, _)| {
            cum += w;
            u < cum
        });
        let theta = theta.unwrap_or(nodes.last().expect("nonempty nodes")).1;
        let obs = scenario.sample(omega_star, theta, &mut stream)?.obs;
        let p = mixture(&obs)?;
        let q = scenario.likelihood(&obs, &assumed, omega_prime)?;
        acc += (p / q).ln();
    }
    Ok(acc / MC_DRAWS as f64)
}

/// Belief degenerate at `omega_hat` on `q_star` that keeps `prior` on the
/// remaining coordinates.
pub fn point_belief(prior: &BeliefState, q_star: &[usize], omega_hat: &[f64]) -> Result<BeliefState> {
    if q_star.len() != omega_hat.len() {
        return Err(Error::OutOfDomain(format!("{} identified coordinates but {} values", q_star.len(), omega_hat.len())));
    }
    match prior {
        BeliefState::Gaussian(g) => {
            let n = g.dim();
            let mut mean: Vec<f64> = g.means().iter().copied().collect();
            let mut cov: DMatrix<f64> = g.cov().clone();
            for (&q, &v) in q_star.iter().zip(omega_hat) {
                mean[q] = v;
                for j in 0..n {
                    cov[(q, j)] = 0.0;
                    cov[(j, q)] = 0.0;
                }
                cov[(q, q)] = POINT_VARIANCE;
            }
            Ok(BeliefState::Gaussian(GaussianBelief::new(mean, cov, &g.frozen())?))
        }
        BeliefState::Grid(grid) => {
            let mut axes = Vec::with_capacity(grid.dim());
            let mut marginals = Vec::with_capacity(grid.dim());
            for d in 0..grid.dim() {
                match q_star.iter().position(|&q| q == d) {
                    Some(i) => {
                        axes.push(Axis { points: vec![omega_hat[i]] });
                        marginals.push(vec![1.0]);
                    }
                    None => {
                        axes.push(grid.axes()[d].clone());
                        marginals.push(grid.marginal(d));
                    }
                }
            }
            Ok(BeliefState::Grid(GridBelief::product(axes, marginals)?))
        }
    }
}

#[derive(Debug, Clone)]
pub struct StableOptions {
    pub starts: usize,
    /// Explicit starting points over the identified coordinates; replaces the
    /// Latin-hypercube design when present.
    pub start_points: Option<Vec<Vec<f64>>>,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Also look for repelling fixed points by bracketing on a grid (scalar
    /// case only).
    pub scan: bool,
    pub check_regularity: bool,
    /// Bias beyond this counts as incredible certitude.
    pub certitude_tolerance: f64,
    pub divergence: FDivergenceSpec,
    pub execution: Execution,
}

impl Default for StableOptions {
    fn default() -> Self {
        Self {
            starts: DEFAULT_STARTS,
            start_points: None,
            max_iterations: MAX_ITERATIONS,
            tolerance: 1e-12,
            seed: 0,
            scan: true,
            check_regularity: true,
            certitude_tolerance: 1e-6,
            divergence: FDivergenceSpec::kl(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableCandidate {
    /// Point belief over the identified coordinates.
    pub omega_hat: Vec<f64>,
    pub theta_region: ThetaRegion,
    pub objective_value: f64,
    /// `|F(ω̂) − ω̂|` in the sup norm.
    pub residual: f64,
    /// Derivative of the map at the point (scalar case).
    pub slope: Option<f64>,
    /// Scalar case: `|slope| < 1`. Otherwise set from simulation.
    pub attracting: Option<bool>,
    pub basin_frequency: Option<f64>,
    pub certitude: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartOutcome {
    pub start: Vec<f64>,
    pub iterations: usize,
    /// Index into the candidate list.
    pub candidate: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableBeliefReport {
    pub scenario: String,
    pub omega_star: Vec<f64>,
    pub k: f64,
    pub q_star: Vec<usize>,
    pub candidates: Vec<StableCandidate>,
    pub starts: Vec<StartOutcome>,
}

impl StableBeliefReport {
    pub fn attracting(&self) -> impl Iterator<Item = &StableCandidate> {
        self.candidates.iter().filter(|c| c.attracting == Some(true))
    }

    /// Record simulated basin frequencies. Candidates without a slope test
    /// are attracting exactly when some replication reached them.
    pub fn apply_basins(&mut self, basins: &BasinEstimate) {
        for (c, &f) in self.candidates.iter_mut().zip(&basins.frequencies) {
            c.basin_frequency = Some(f);
            if c.slope.is_none() {
                c.attracting = Some(f > 0.0);
            }
        }
    }
}

/// The self-consistency map restricted to the identified coordinates.
struct StableMap<'a> {
    scenario: &'a Scenario,
    omega_star: &'a [f64],
    k: f64,
    q_star: Vec<usize>,
    prior: BeliefState,
    bounds: Vec<(f64, f64)>,
    divergence: &'a FDivergenceSpec,
    closed_form: bool,
}

struct MapValue {
    next: Vec<f64>,
    region: ThetaRegion,
}

impl<'a> StableMap<'a> {
    fn new(scenario: &'a Scenario, omega_star: &'a [f64], k: f64, divergence: &'a FDivergenceSpec) -> Result<Self> {
        assumed_theta(scenario)?;
        scenario.validate_state(omega_star)?;
        let q_star = scenario.q_star();
        let all = scenario.bounds();
        let bounds = q_star.iter().map(|&q| all[q]).collect();
        let closed_form = scenario.model().berk_minimizer(&[(1.0, 0.0)], omega_star).is_some();
        Ok(Self { scenario, omega_star, k, prior: scenario.prior(PriorUse::AsIf)?, q_star, bounds, divergence, closed_form })
    }

    fn full(&self, omega_q: &[f64]) -> Vec<f64> {
        let mut w = self.omega_star.to_vec();
        for (&q, &v) in self.q_star.iter().zip(omega_q) {
            w[q] = v;
        }
        w
    }

    fn region(&self, omega_hat: &[f64]) -> Result<ThetaRegion> {
        let belief = point_belief(&self.prior, &self.q_star, omega_hat)?;
        let upper = theta_bar(&belief, self.scenario, self.k, self.divergence)?;
        Ok(if self.scenario.context().mass(0.0, upper) > 0.0 {
            ThetaRegion::Interval { upper }
        } else {
            ThetaRegion::Point { theta: upper }
        })
    }

    fn eval(&self, omega_hat: &[f64]) -> Result<MapValue> {
        let region = self.region(omega_hat)?;
        let next = self.argmin(&region, omega_hat)?;
        Ok(MapValue { next, region })
    }

    fn argmin(&self, region: &ThetaRegion, start: &[f64]) -> Result<Vec<f64>> {
        let model = self.scenario.model();
        if self.closed_form {
            let nodes = region.nodes(self.scenario.context(), 128)?;
            return Ok(model.berk_minimizer(&nodes, self.omega_star).expect("closed form checked at construction"));
        }
        let nodes = region.nodes(self.scenario.context(), MC_NODES)?;
        let problem = BerkProblem { map: self, nodes };
        if self.q_star.len() == 1 {
            let (lo, hi) = self.bounds[0];
            let solver = BrentOpt::new(lo, hi).set_tolerance(1e-10, 1e-10);
            let res =
                Executor::new(ScalarBerk(problem), solver).configure(|s| s.max_iters(500)).run().map_err(solver_error)?;
            let best = res.state().get_best_param().copied().ok_or(Error::NoConvergence(500))?;
            return Ok(vec![best]);
        }
        let mut simplex = vec![start.to_vec()];
        for d in 0..start.len() {
            let mut v = start.to_vec();
            let (lo, hi) = self.bounds[d];
            let step = 0.05 * (hi - lo);
            v[d] = if v[d] + step <= hi { v[d] + step } else { v[d] - step };
            simplex.push(v);
        }
        let solver = NelderMead::new(simplex).with_sd_tolerance(1e-12).map_err(solver_error)?;
        let res = Executor::new(problem, solver).configure(|s| s.max_iters(2000)).run().map_err(solver_error)?;
        res.state().get_best_param().cloned().map(|p| self.clamp(&p)).ok_or(Error::NoConvergence(2000))
    }

    fn clamp(&self, w: &[f64]) -> Vec<f64> {
        w.iter().zip(&self.bounds).map(|(v, (lo, hi))| v.clamp(*lo, *hi)).collect()
    }

    fn tolerance(&self, requested: f64) -> f64 {
        if self.closed_form {
            requested
        } else {
            requested.max(NUMERIC_MAP_TOL)
        }
    }

    /// Plain iteration `ω ← F(ω)` until the step is below `tol`.
    fn iterate(&self, start: &[f64], tol: f64, max_iterations: usize) -> (usize, Result<Vec<f64>>) {
        let mut w = self.clamp(start);
        for it in 1..=max_iterations {
            let next = match self.eval(&w) {
                Ok(v) => v.next,
                Err(e) => return (it, Err(e)),
            };
            let step = sup_distance(&next, &w);
            w = next;
            if step <= tol {
                return (it, Ok(w));
            }
        }
        (max_iterations, Err(Error::NoConvergence(max_iterations)))
    }

    fn gap(&self, x: f64) -> Result<f64> {
        Ok(self.eval(&[x])?.next[0] - x)
    }

    /// Roots of `F(ω) − ω` bracketed on a uniform grid (scalar case).
    fn scan(&self, tol: f64) -> Vec<f64> {
        let (lo, hi) = self.bounds[0];
        let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64).collect();
        let gaps: Vec<Option<f64>> = xs.iter().map(|&x| self.gap(x).ok()).collect();
        let mut roots = Vec::new();
        for i in 0..xs.len() {
            if gaps[i] == Some(0.0) {
                roots.push(xs[i]);
            }
            if i + 1 == xs.len() {
                break;
            }
            let (Some(a), Some(b)) = (gaps[i], gaps[i + 1]) else { continue };
            if a * b < 0.0 {
                let problem = GapProblem { map: self };
                let solver = BrentRoot::new(xs[i], xs[i + 1], tol.max(1e-14));
                if let Ok(res) = Executor::new(problem, solver).configure(|s| s.max_iters(200)).run() {
                    if let Some(&x) = res.state().get_best_param() {
                        roots.push(x);
                    }
                }
            }
        }
        roots
    }

    fn slope(&self, x: f64) -> Result<f64> {
        let (lo, hi) = self.bounds[0];
        let (a, b) = ((x - SLOPE_STEP).max(lo), (x + SLOPE_STEP).min(hi));
        Ok((self.eval(&[b])?.next[0] - self.eval(&[a])?.next[0]) / (b - a))
    }
}

fn solver_error(e: SolverError) -> Error {
    Error::Unsupported(format!("minimizer failed: {e}"))
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct BerkProblem<'m, 'a> {
    map: &'m StableMap<'a>,
    nodes: Vec<(f64, f64)>,
}

impl CostFunction for BerkProblem<'_, '_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> std::result::Result<f64, SolverError> {
        // Outside the box the clamped value plus a quadratic wall keeps the
        // simplex inside.
        let clamped = self.map.clamp(p);
        let wall: f64 = p.iter().zip(&clamped).map(|(a, b)| (a - b) * (a - b)).sum();
        let w = self.map.full(&clamped);
        objective_on_nodes(&w, self.map.omega_star, &self.nodes, self.map.scenario)
            .map(|v| v + 1e3 * wall)
            .map_err(|e| SolverError::msg(e.to_string()))
    }
}

// Scalar variant for Brent.
impl CostFunction for ScalarBerk<'_, '_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, p: &f64) -> std::result::Result<f64, SolverError> {
        self.0.cost(&vec![*p])
    }
}

struct ScalarBerk<'p, 'm>(BerkProblem<'p, 'm>);

struct GapProblem<'m, 'a> {
    map: &'m StableMap<'a>,
}

impl CostFunction for GapProblem<'_, '_> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, x: &f64) -> std::result::Result<f64, SolverError> {
        self.map.gap(*x).map_err(|e| SolverError::msg(e.to_string()))
    }
}

/// Stratified starting points over the box.
pub fn latin_hypercube(bounds: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut stream = RngStream::for_domain(seed, 0x1a7, 0);
    let mut points = vec![vec![0.0; bounds.len()]; n];
    for (d, (lo, hi)) in bounds.iter().enumerate() {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut stream);
        for (i, s) in strata.into_iter().enumerate() {
            points[i][d] = lo + (hi - lo) * (s as f64 + stream.uniform()) / n as f64;
        }
    }
    points
}

/// Fixed points of the self-consistency map from many starts.
pub fn solve_stable(scenario: &Scenario, omega_star: &[f64], k: f64, options: &StableOptions) -> Result<StableBeliefReport> {
    let map = StableMap::new(scenario, omega_star, k, &options.divergence)?;
    if options.check_regularity {
        let reg = scenario.regularity_check(8, &options.divergence)?;
        if !reg.regular() {
            return Err(Error::Unsupported(format!("{} fails the regularity check: {reg:?}", scenario.name())));
        }
    }
    let tol = map.tolerance(options.tolerance);
    let starts = match &options.start_points {
        Some(p) => {
            if let Some(bad) = p.iter().find(|s| s.len() != map.q_star.len()) {
                return Err(Error::OutOfDomain(format!("start {bad:?} needs {} coordinates", map.q_star.len())));
            }
            p.clone()
        }
        None => latin_hypercube(&map.bounds, options.starts, options.seed),
    };
    let runs = map_indices(starts.len(), options.execution, |i| map.iterate(&starts[i], tol, options.max_iterations));

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut outcomes = Vec::with_capacity(starts.len());
    for (start, (iterations, result)) in starts.into_iter().zip(runs) {
        let (candidate, error) = match result {
            Ok(p) => (Some(merge(&mut points, p)), None),
            Err(e) => (None, Some(e.to_string())),
        };
        outcomes.push(StartOutcome { start, iterations, candidate, error });
    }
    if options.scan && map.q_star.len() == 1 {
        for x in map.scan(tol) {
            merge(&mut points, vec![x]);
        }
    }

    // Sort for a stable presentation and remap start indices.
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].partial_cmp(&points[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut rank = vec![0; points.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    for o in &mut outcomes {
        o.candidate = o.candidate.map(|c| rank[c]);
    }

    let mut candidates = Vec::with_capacity(points.len());
    for &i in &order {
        let omega_hat = points[i].clone();
        let value = map.eval(&omega_hat)?;
        let residual = sup_distance(&value.next, &omega_hat);
        let objective_value = berk_objective(&map.full(&omega_hat), omega_star, &value.region, scenario)?;
        let slope = if map.q_star.len() == 1 { Some(map.slope(omega_hat[0])?) } else { None };
        let bias = omega_hat.iter().zip(&map.q_star).map(|(v, &q)| (v - omega_star[q]).abs()).fold(0.0, f64::max);
        candidates.push(StableCandidate {
            attracting: slope.map(|s| s.abs() < 1.0),
            omega_hat,
            theta_region: value.region,
            objective_value,
            residual,
            slope,
            basin_frequency: None,
            certitude: bias > options.certitude_tolerance,
        });
    }
    Ok(StableBeliefReport {
        scenario: scenario.name().to_string(),
        omega_star: omega_star.to_vec(),
        k,
        q_star: map.q_star.clone(),
        candidates,
        starts: outcomes,
    })
}

fn merge(points: &mut Vec<Vec<f64>>, p: Vec<f64>) -> usize {
    if let Some(i) = points.iter().position(|q| sup_distance(q, &p) <= DEDUP_TOL) {
        return i;
    }
    points.push(p);
    points.len() - 1
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateBias {
    pub omega_hat: Vec<f64>,
    /// `ω̂_Q − ω*_Q` over the identified coordinates.
    pub bias: Vec<f64>,
    pub flagged: bool,
    pub attracting: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertitudeSummary {
    pub candidates: Vec<CandidateBias>,
    /// Every attracting candidate is biased.
    pub all_attracting_biased: bool,
}

pub fn certitude_report(report: &StableBeliefReport, omega_star: &[f64], tolerance: f64) -> Result<CertitudeSummary> {
    if report.candidates.is_empty() {
        return Err(Error::OutOfDomain("the report has no candidates".into()));
    }
    let candidates: Vec<CandidateBias> = report
        .candidates
        .iter()
        .map(|c| {
            let bias: Vec<f64> = c.omega_hat.iter().zip(&report.q_star).map(|(v, &q)| v - omega_star[q]).collect();
            let flagged = bias.iter().any(|b| b.abs() > tolerance);
            CandidateBias { omega_hat: c.omega_hat.clone(), bias, flagged, attracting: c.attracting }
        })
        .collect();
    let mut attracting = candidates.iter().filter(|c| c.attracting != Some(false)).peekable();
    let all_attracting_biased = attracting.peek().is_some() && attracting.all(|c| c.flagged);
    Ok(CertitudeSummary { candidates, all_attracting_biased })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertitudeSweep {
    pub states: Vec<Vec<f64>>,
    pub flagged: Vec<bool>,
    pub flagged_fraction: f64,
}

/// Share of true states whose every attracting candidate is biased.
pub fn certitude_sweep(
    scenario: &Scenario,
    states: &[Vec<f64>],
    k: f64,
    tolerance: f64,
    options: &StableOptions,
) -> Result<CertitudeSweep> {
    let mut flagged = Vec::with_capacity(states.len());
    for w in states {
        let report = solve_stable(scenario, w, k, options)?;
        flagged.push(certitude_report(&report, w, tolerance)?.all_attracting_biased);
    }
    let n = flagged.len().max(1) as f64;
    let flagged_fraction = flagged.iter().filter(|f| **f).count() as f64 / n;
    Ok(CertitudeSweep { states: states.to_vec(), flagged, flagged_fraction })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasinEstimate {
    pub replications: usize,
    /// Share of replications ending near each candidate, in report order.
    pub frequencies: Vec<f64>,
    pub unclassified: f64,
    /// Terminal means over the identified coordinates.
    pub terminal: Vec<Vec<f64>>,
}

/// Prior of replication `r` when starting points should be spread out.
/// Binary: Beta priors on `ω₁` centered on `0.3, 0.4, …, 0.9`. Gaussian:
/// prior means of `ω₁` on `−1, −0.5, …, 1`. Other scenarios keep their prior.
pub fn dispersed_prior(scenario: &Scenario, r: usize) -> Result<BeliefState> {
    match scenario.spec() {
        ScenarioSpec::ContaminatedBinary(o) => {
            let centers = [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
            let mut o = o.clone();
            o.prior_omega1 = BinaryPrior::Beta { mean: centers[r % centers.len()], concentration: 50.0 };
            Scenario::new(ScenarioSpec::ContaminatedBinary(o), Some(scenario.context().clone()), Some(scenario.gate_space()))?
                .prior(PriorUse::AsIf)
        }
        ScenarioSpec::ContaminatedGaussian(o) => {
            let shifts = [-1.0, -0.5, 0.0, 0.5, 1.0];
            let mut means = o.prior_means.clone().unwrap_or_else(|| vec![0.0; 2]);
            means[0] += shifts[r % shifts.len()];
            let o = GaussianOptions { prior_means: Some(means), ..o.clone() };
            Scenario::new(ScenarioSpec::ContaminatedGaussian(o), Some(scenario.context().clone()), Some(scenario.gate_space()))?
                .prior(PriorUse::AsIf)
        }
        _ => scenario.prior(PriorUse::AsIf),
    }
}

/// Which prior each replication of [`simulate_convergence`] starts from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorScheme {
    #[default]
    Default,
    Dispersed,
}

#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRun {
    pub replications: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub mode: LearnerMode,
    pub priors: PriorScheme,
    pub execution: Execution,
}

/// Classify each replication's terminal belief to the nearest candidate.
pub fn simulate_convergence(
    scenario: &Scenario,
    omega_star: &[f64],
    k: f64,
    report: &StableBeliefReport,
    run: &ConvergenceRun,
) -> Result<BasinEstimate> {
    if report.candidates.is_empty() {
        return Err(Error::OutOfDomain("the report has no candidates".into()));
    }
    let config = EngineConfig {
        k,
        horizon: run.horizon,
        replications: run.replications,
        mode: run.mode,
        master_seed: run.master_seed,
        execution: run.execution,
        record_rows: false,
        track_theta_bar: Some(false),
        ..EngineConfig::default()
    };
    let engine = Engine::new(scenario, omega_star, config)?;
    let traces = match run.priors {
        PriorScheme::Default => engine.run()?,
        PriorScheme::Dispersed => {
            let usage = if run.mode == LearnerMode::CorrectBayesian { PriorUse::Correct } else { PriorUse::AsIf };
            let base = scenario.prior(usage)?;
            engine.run_with_priors(|r| {
                let p = dispersed_prior(scenario, r)?;
                // Keep the learner's frozen set when the prior is Gaussian.
                Ok(match (&p, &base) {
                    (BeliefState::Gaussian(g), BeliefState::Gaussian(b)) => BeliefState::Gaussian(GaussianBelief::new(
                        g.means().iter().copied().collect(),
                        g.cov().clone(),
                        &b.frozen(),
                    )?),
                    _ => p,
                })
            })?
        }
    };
    let mut counts = vec![0usize; report.candidates.len()];
    let mut terminal = Vec::with_capacity(traces.len());
    for tr in &traces {
        let m: Vec<f64> = report.q_star.iter().map(|&q| tr.final_belief.mean(q)).collect();
        let nearest = report
            .candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (i, euclidean(&c.omega_hat, &m)))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((i, d)) = nearest {
            if d <= CLASSIFY_RADIUS {
                counts[i] += 1;
            }
        }
        terminal.push(m);
    }
    let n = traces.len().max(1) as f64;
    let classified: usize = counts.iter().sum();
    Ok(BasinEstimate {
        replications: traces.len(),
        frequencies: counts.iter().map(|c| *c as f64 / n).collect(),
        unclassified: (traces.len() - classified) as f64 / n,
        terminal,
    })
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::truncated_mean;
    use crate::scenarios::{BinaryOptions, ContaminatedBinary};
    use approx::assert_abs_diff_eq;

    fn binary() -> Scenario {
        Scenario::by_name("contaminated-binary").unwrap()
    }

    fn gaussian() -> Scenario {
        Scenario::by_name("contaminated-gaussian").unwrap()
    }

    fn quick() -> StableOptions {
        StableOptions { starts: 8, check_regularity: false, ..Default::default() }
    }

    #[test]
    fn objective_vanishes_when_the_laws_coincide() {
        let sc = gaussian();
        let w = [0.2, 0.5];
        let v = berk_objective(&w, &w, &ThetaRegion::Point { theta: 0.0 }, &sc).unwrap();
        assert!(v.abs() < 1e-12);
        let v = berk_objective(&w, &w, &ThetaRegion::Point { theta: 0.0 }, &binary()).unwrap();
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn binary_objective_is_the_bernoulli_kl_to_the_mixture() {
        let sc = binary();
        let ws = [0.7, 0.3];
        let region = ThetaRegion::Interval { upper: 0.6 };
        let p = ContaminatedBinary::success(0.3, &ws);
        for w1 in [0.2, 0.5, p, 0.8] {
            let v = berk_objective(&[w1, 0.5], &ws, &region, &sc).unwrap();
            let oracle = p * (p / w1).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - w1)).ln();
            assert_abs_diff_eq!(v, oracle, epsilon = 1e-12);
        }
        let nodes = region.nodes(sc.context(), 128).unwrap();
        assert_abs_diff_eq!(sc.model().berk_minimizer(&nodes, &ws).unwrap()[0], p, epsilon = 1e-12);
    }

    #[test]
    fn empty_region_is_rejected() {
        let sc = binary();
        let region = ThetaRegion::Grid { points: vec![0.25, 0.75], inside: vec![false, false] };
        assert_eq!(berk_objective(&[0.5, 0.5], &[0.7, 0.3], &region, &sc), Err(Error::ZeroMassRegion));
    }

    #[test]
    fn point_belief_keeps_the_prior_elsewhere() {
        let sc = binary();
        let prior = sc.prior(PriorUse::AsIf).unwrap();
        let b = point_belief(&prior, &[0], &[0.62]).unwrap();
        assert_eq!(b.mean(0), 0.62);
        assert_eq!(b.variance(0), 0.0);
        assert_abs_diff_eq!(b.mean(1), prior.mean(1), epsilon = 1e-12);
        let g = point_belief(&gaussian().prior(PriorUse::AsIf).unwrap(), &[0], &[0.3]).unwrap();
        assert_eq!((g.mean(0), g.mean(1), g.variance(1)), (0.3, 0.0, 1.0));
        assert!(g.variance(0) < 1e-20);
    }

    #[test]
    fn binary_has_two_attracting_points() {
        let sc = binary();
        let ws = [0.7, 0.3];
        let report = solve_stable(&sc, &ws, 1e-3, &quick()).unwrap();
        let attracting: Vec<&StableCandidate> = report.attracting().collect();
        assert!(attracting.len() >= 2, "{report:#?}");
        assert!(attracting.iter().any(|c| (c.omega_hat[0] - 0.5).abs() < 1e-9));
        assert!(attracting.iter().any(|c| c.omega_hat[0] > 0.6));
        let ctx = sc.context();
        for c in &report.candidates {
            let upper = match c.theta_region {
                ThetaRegion::Interval { upper } => upper,
                _ => unreachable!(),
            };
            let rhs = truncated_mean(ctx, upper).unwrap() * (ws[1] - ws[0]) + ws[0];
            assert!((c.omega_hat[0] - rhs).abs() <= 1e-8, "{c:?}");
        }
        // A repelling point separates the two basins.
        assert!(report.candidates.iter().any(|c| c.attracting == Some(false)));
    }

    #[test]
    fn contaminated_fixed_point_has_the_closed_form_bias() {
        let sc = gaussian();
        for ws in [[0.2, 0.5], [0.2, 0.0]] {
            let report = solve_stable(&sc, &ws, 0.05, &quick()).unwrap();
            assert_eq!(report.candidates.len(), 1);
            let c = &report.candidates[0];
            let ThetaRegion::Interval { upper } = c.theta_region else { panic!() };
            let expected = ws[0] + truncated_mean(sc.context(), upper).unwrap() * ws[1];
            assert_abs_diff_eq!(c.omega_hat[0], expected, epsilon = 1e-10);
            assert_eq!(c.certitude, ws[1] != 0.0);
            assert_eq!(c.slope, Some(0.0));
        }
    }

    #[test]
    fn numeric_minimizer_matches_the_closed_form() {
        let sc = binary();
        let ws = [0.7, 0.3];
        let kl = FDivergenceSpec::kl();
        let map = StableMap::new(&sc, &ws, 1e-3, &kl).unwrap();
        let region = ThetaRegion::Interval { upper: 0.4 };
        let nodes = region.nodes(sc.context(), 128).unwrap();
        let problem = ScalarBerk(BerkProblem { map: &map, nodes });
        let res = Executor::new(problem, BrentOpt::new(0.05, 0.95).set_tolerance(1e-10, 1e-10))
            .configure(|s| s.max_iters(500))
            .run()
            .unwrap();
        let x = *res.state().get_best_param().unwrap();
        assert_abs_diff_eq!(x, ContaminatedBinary::success(0.2, &[0.7, 0.3]), epsilon = 1e-7);
    }

    #[test]
    fn certitude_flags_bias() {
        let sc = gaussian();
        let report = solve_stable(&sc, &[0.2, 0.5], 0.05, &quick()).unwrap();
        let s = certitude_report(&report, &[0.2, 0.5], 1e-6).unwrap();
        assert!(s.all_attracting_biased);
        assert!(s.candidates[0].bias[0] > 0.0);
    }

    #[test]
    fn starts_cover_the_box() {
        let pts = latin_hypercube(&[(0.0, 1.0), (-2.0, 2.0)], 10, 3);
        for d in 0..2 {
            let mut strata: Vec<usize> = pts
                .iter()
                .map(|p| if d == 0 { (p[0] * 10.0) as usize } else { ((p[1] + 2.0) / 0.4) as usize })
                .collect();
            strata.sort();
            assert_eq!(strata, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn unsupported_scenarios_are_reported() {
        let sc = Scenario::by_name("heckman-selection").unwrap();
        assert!(matches!(solve_stable(&sc, &[1.0, 0.5, 0.8], 0.1, &quick()), Err(Error::Unsupported(_))));
    }

    #[test]
    fn dispersed_binary_priors_vary() {
        let sc = Scenario::new(
            ScenarioSpec::ContaminatedBinary(BinaryOptions { resolution: 100, ..Default::default() }),
            None,
            None,
        )
        .unwrap();
        let a = dispersed_prior(&sc, 0).unwrap().mean(0);
        let b = dispersed_prior(&sc, 6).unwrap().mean(0);
        assert!(a < 0.35 && b > 0.85);
    }
}
