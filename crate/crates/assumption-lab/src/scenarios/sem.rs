//! Recursive linear-Gaussian systems with a latent confounder `u`.
//!
//! Statistic `j` follows `s_j = Σ_k b_jk s_k + c_j u + ε_j` with `u, ε_j`
//! independent normals. Beliefs live on a block grid over `ω`. The gate
//! divergence on the (s, u) space is estimated by Monte Carlo; the density
//! of the belief mixture factorizes over groups of statistics whose
//! parameters share grid blocks, which is what makes the estimate exactly
//! history-invariant when the graph separates context from active parameters.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_box, Assumption, Conditioning, Model, Observation, PriorUse, Sample};
use crate::beliefs::{Axis, BeliefState, GridBelief};
use crate::distributions::RngStream;
use crate::divergence::{GateSpace, Predictive, PredictiveDistribution, SampledDensity, DENSITY_FLOOR};
use crate::error::{Error, Result};
use crate::graph::{DagModel, Role};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// How the noise variances are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Each noise variance depends only on the parameters of its own
    /// equation, making every statistic unit-variance when the context is 0.
    #[default]
    DagConsistent,
    /// Every statistic is exactly unit-variance for all contexts. Noise
    /// variances then read the context and upstream parameters, which adds
    /// edges to the graph.
    UnitVariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemOptions {
    /// Common box for every parameter.
    pub bounds: (f64, f64),
    /// Grid cells per axis; 41 for the causal system and 7 for the
    /// instrumental-variables system when absent.
    pub resolution: Option<usize>,
    pub normalization: Normalization,
    /// Known confounding loading of the outcome in the causal system.
    pub omega3: f64,
}

impl Default for SemOptions {
    fn default() -> Self {
        Self { bounds: (-0.6, 0.6), resolution: None, normalization: Normalization::DagConsistent, omega3: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemVariant {
    Causal { omega3: f64 },
    InstrumentalVariables,
}

/// Row `j` of `b` holds the loadings of `s_j` on earlier statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub b: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub noise: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearSem {
    variant: SemVariant,
    normalization: Normalization,
    bounds: (f64, f64),
    resolution: usize,
    /// Parameter dependencies of each statistic, read off the graph.
    deps: Vec<Vec<usize>>,
}

impl LinearSem {
    pub fn new(variant: SemVariant, options: &SemOptions) -> Result<Self> {
        let (lo, hi) = options.bounds;
        if !(lo < hi) || lo <= -1.0 || hi >= 1.0 {
            return Err(Error::OutOfDomain(format!("parameter box [{lo}, {hi}] must lie inside (-1, 1)")));
        }
        let resolution = options.resolution.unwrap_or(match variant {
            SemVariant::Causal { .. } => 41,
            SemVariant::InstrumentalVariables => 7,
        });
        if resolution < 2 {
            return Err(Error::OutOfDomain("grid resolution must be at least 2".into()));
        }
        if let SemVariant::Causal { omega3 } = variant {
            if !(omega3 > 0.0 && omega3 < 1.0) {
                return Err(Error::OutOfDomain(format!("omega3 must lie in (0, 1), got {omega3}")));
            }
        }
        let mut sem = Self { variant, normalization: options.normalization, bounds: options.bounds, resolution, deps: Vec::new() };
        let dag: DagModel = sem.dag_text().parse()?;
        sem.deps = sem
            .statistic_names()
            .iter()
            .map(|name| {
                let node = dag.index(name).expect("declared statistic");
                let mut d: Vec<usize> = dag
                    .parents(node)
                    .iter()
                    .filter(|&&p| dag.role(p) == Role::Parameter)
                    .map(|&p| dag.name(p)[5..].parse::<usize>().expect("omega<k>") - 1)
                    .collect();
                d.sort_unstable();
                d
            })
            .collect();
        sem.check_feasible()?;
        Ok(sem)
    }

    fn n(&self) -> usize {
        match self.variant {
            SemVariant::Causal { .. } => 2,
            SemVariant::InstrumentalVariables => 3,
        }
    }

    pub fn coefficients(&self, theta: f64, w: &[f64]) -> Coefficients {
        let unit = self.normalization == Normalization::UnitVariance;
        match self.variant {
            SemVariant::Causal { omega3 } => {
                let (w1, w2) = (w[0], w[1]);
                let mut n2 = 1.0 - w1 * w1 - omega3 * omega3;
                if unit {
                    n2 -= 2.0 * theta * w1 * w2 * omega3;
                }
                Coefficients {
                    b: vec![vec![0.0, 0.0], vec![w1, 0.0]],
                    c: vec![theta * w2, omega3],
                    noise: vec![1.0 - theta * theta * w2 * w2, n2],
                }
            }
            SemVariant::InstrumentalVariables => {
                let (w1, w2, w3, w4, w5) = (w[0], w[1], w[2], w[3], w[4]);
                let mut n2 = 1.0 - w2 * w2 - w3 * w3;
                let mut n3 = 1.0 - w4 * w4 - w5 * w5;
                if unit {
                    n2 -= 2.0 * w1 * w2 * w3 * theta;
                    n3 -= 2.0 * w4 * w5 * (w1 * w2 * theta + w3);
                }
                Coefficients {
                    b: vec![vec![0.0; 3], vec![w2, 0.0, 0.0], vec![0.0, w4, 0.0]],
                    c: vec![w1 * theta, w3, w5],
                    noise: vec![1.0 - w1 * w1 * theta * theta, n2, n3],
                }
            }
        }
    }

    /// Covariance of `s` with `u` integrated out: `A (ccᵀ + D) Aᵀ`, `A = (I − B)⁻¹`.
    pub fn marginal_cov(&self, coef: &Coefficients) -> DMatrix<f64> {
        let n = self.n();
        let b = DMatrix::from_fn(n, n, |i, j| coef.b[i][j]);
        let a = (DMatrix::identity(n, n) - b).try_inverse().expect("unit lower-triangular");
        let c = DVector::from_column_slice(&coef.c);
        let inner = &c * c.transpose() + DMatrix::from_diagonal(&DVector::from_column_slice(&coef.noise));
        &a * inner * a.transpose()
    }

    fn axes(&self) -> Result<Vec<Axis>> {
        (0..self.omega_dim()).map(|_| Axis::cells(self.bounds.0, self.bounds.1, self.resolution)).collect()
    }

    /// Every noise variance must stay positive on the whole box for all
    /// contexts. Each variance is concave or linear in every coordinate,
    /// so checking the vertices suffices.
    fn check_feasible(&self) -> Result<()> {
        let dim = self.omega_dim();
        let (lo, hi) = self.bounds;
        let mut w = vec![0.0; dim];
        for corner in 0..1usize << dim {
            for (d, x) in w.iter_mut().enumerate() {
                *x = if corner >> d & 1 == 1 { hi } else { lo };
            }
            for k in 0..=10 {
                let theta = k as f64 / 10.0;
                if let Some((j, v)) = self.coefficients(theta, &w).noise.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
                    return Err(Error::Infeasible(format!(
                        "noise variance of s{} is {v:.4} at omega={w:?}, theta={theta}",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    fn likelihood_deps(&self, cond: &Conditioning) -> Vec<usize> {
        if cond.theta == 0.0 {
            self.q_star()
        } else {
            (0..self.omega_dim()).collect()
        }
    }

    fn mvn_density(&self, s: &[f64], theta: f64, w: &[f64]) -> f64 {
        let cov = self.marginal_cov(&self.coefficients(theta, w));
        match cov.cholesky() {
            Some(ch) => {
                let z = ch.l().solve_lower_triangular(&DVector::from_column_slice(s)).expect("nonsingular");
                let ln_det: f64 = ch.l().diagonal().iter().map(|x| 2.0 * x.ln()).sum();
                (-0.5 * (z.norm_squared() + ln_det + s.len() as f64 * LN_2PI)).exp()
            }
            None => 0.0,
        }
    }
}

impl Model for LinearSem {
    fn name(&self) -> &'static str {
        match self.variant {
            SemVariant::Causal { .. } => "confounded-causal",
            SemVariant::InstrumentalVariables => "instrumental-variables",
        }
    }

    fn omega_dim(&self) -> usize {
        match self.variant {
            SemVariant::Causal { .. } => 2,
            SemVariant::InstrumentalVariables => 5,
        }
    }

    fn statistic_names(&self) -> Vec<&'static str> {
        match self.variant {
            SemVariant::Causal { .. } => vec!["s1", "s2"],
            SemVariant::InstrumentalVariables => vec!["s1", "s2", "s3"],
        }
    }

    fn question(&self) -> Vec<usize> {
        match self.variant {
            SemVariant::Causal { .. } => vec![0],
            SemVariant::InstrumentalVariables => vec![3],
        }
    }

    fn theta_star(&self) -> Option<f64> {
        Some(0.0)
    }

    fn menu(&self) -> Vec<Assumption> {
        vec![Assumption::Context(0.0)]
    }

    fn q_star(&self) -> Vec<usize> {
        match self.variant {
            SemVariant::Causal { .. } => vec![0],
            SemVariant::InstrumentalVariables => vec![1, 2, 3, 4],
        }
    }

    fn has_latent(&self) -> bool {
        true
    }

    fn default_gate_space(&self) -> GateSpace {
        GateSpace::SAndU
    }

    fn dag_text(&self) -> String {
        let unit = self.normalization == Normalization::UnitVariance;
        let mut text = String::from("node theta theta\nnode u u\n");
        match self.variant {
            SemVariant::Causal { .. } => {
                text.push_str("node omega1 omega\nnode omega2 omega\nnode s1 s\nnode s2 s\n");
                text.push_str("theta -> s1\nu -> s1\nomega2 -> s1\ns1 -> s2\nu -> s2\nomega1 -> s2\n");
                if unit {
                    text.push_str("theta -> s2\nomega2 -> s2\n");
                }
            }
            SemVariant::InstrumentalVariables => {
                for k in 1..=5 {
                    text.push_str(&format!("node omega{k} omega\n"));
                }
                text.push_str("node s1 s\nnode s2 s\nnode s3 s\n");
                text.push_str("theta -> s1\nu -> s1\nomega1 -> s1\n");
                text.push_str("s1 -> s2\nu -> s2\nomega2 -> s2\nomega3 -> s2\n");
                text.push_str("s2 -> s3\nu -> s3\nomega4 -> s3\nomega5 -> s3\n");
                if unit {
                    text.push_str("theta -> s2\nomega1 -> s2\ntheta -> s3\nomega1 -> s3\nomega2 -> s3\nomega3 -> s3\n");
                }
            }
        }
        text
    }

    fn equation(&self, node: usize, theta: f64, omega: &[f64]) -> Vec<f64> {
        let c = self.coefficients(theta, omega);
        let mut out = c.b[node].clone();
        out.push(c.c[node]);
        out.push(c.noise[node]);
        out
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.bounds; self.omega_dim()]
    }

    fn validate_state(&self, omega: &[f64]) -> Result<()> {
        check_box(omega, &self.bounds())?;
        for k in 0..=10 {
            let theta = k as f64 / 10.0;
            if self.coefficients(theta, omega).noise.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Infeasible(format!("omega={omega:?} gives a non-positive noise variance")));
            }
        }
        Ok(())
    }

    fn prior(&self, _usage: PriorUse) -> Result<BeliefState> {
        Ok(BeliefState::Grid(GridBelief::uniform(self.axes()?)?))
    }

    fn sample(&self, omega: &[f64], theta: f64, stream: &mut RngStream) -> Sample {
        let coef = self.coefficients(theta, omega);
        let u = stream.standard_normal();
        let mut s = vec![0.0; self.n()];
        for j in 0..self.n() {
            let mean: f64 = (0..j).map(|k| coef.b[j][k] * s[k]).sum::<f64>() + coef.c[j] * u;
            s[j] = mean + coef.noise[j].sqrt() * stream.standard_normal();
        }
        Sample { obs: Observation::new(s), u: Some(u) }
    }

    fn likelihood(&self, obs: &Observation, cond: &Conditioning, omega: &[f64]) -> Result<f64> {
        if obs.s.len() != self.n() || obs.s.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfDomain(format!("{} expects {} finite statistics", self.name(), self.n())));
        }
        Ok(self.mvn_density(&obs.s, cond.theta, &cond.apply(omega)))
    }

    fn update(&self, belief: &BeliefState, obs: &Observation, cond: &Conditioning) -> Result<BeliefState> {
        let grid = belief.as_grid().ok_or_else(|| Error::Unsupported("grid belief expected".into()))?;
        if obs.s.len() != self.n() || obs.s.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfDomain(format!("{} expects {} finite statistics", self.name(), self.n())));
        }
        let deps = self.likelihood_deps(cond);
        let next = grid.update(&deps, |w| self.mvn_density(&obs.s, cond.theta, &cond.apply(w)))?;
        Ok(BeliefState::Grid(next))
    }

    fn predictive(&self, belief: &BeliefState, cond: &Conditioning, space: GateSpace) -> Result<PredictiveDistribution> {
        let grid = belief.as_grid().ok_or_else(|| Error::Unsupported("grid belief expected".into()))?;
        if cond.fixed.is_some() {
            return Err(Error::Unsupported("parameter assumptions are not part of this menu".into()));
        }
        let density = SemMixture::new(self.clone(), grid, cond.theta, space);
        Ok(PredictiveDistribution::new(Predictive::Sampled(Arc::new(density)), space))
    }
}

/// Statistics whose parameters share grid blocks, with the joint cells of
/// those blocks. `index[c][k]` is the table entry of node `nodes[k]` in cell `c`.
struct Group {
    nodes: Vec<usize>,
    mass: Vec<f64>,
    index: Vec<Vec<usize>>,
}

struct Component {
    ln_weight: f64,
    l_inv: DMatrix<f64>,
}

/// Belief-averaged law of `(s, u)` or `s` at one context value.
/// `(b row, c, sd)` of one equation at one table entry.
type EquationEntry = (Vec<f64>, f64, f64);

struct SemMixture {
    sem: LinearSem,
    theta: f64,
    space: GateSpace,
    grid: GridBelief,
    cumulative: Vec<Vec<f64>>,
    /// Per node: dependency dims and, per table entry, the equation
    /// `(b row, c, sd)` evaluated at that entry.
    tables: Vec<(Vec<usize>, Vec<EquationEntry>)>,
    groups: Vec<Group>,
    components: Vec<Component>,
}

impl SemMixture {
    fn new(sem: LinearSem, grid: &GridBelief, theta: f64, space: GateSpace) -> Self {
        let grid = grid.clone();
        let axes = grid.axes();
        let reference: Vec<f64> = axes.iter().map(Axis::reference).collect();
        let cumulative = grid
            .blocks()
            .iter()
            .map(|b| {
                let mut acc = 0.0;
                b.mass.iter().map(|m| { acc += m; acc }).collect()
            })
            .collect();
        let n = sem.n();
        let mut tables = Vec::with_capacity(n);
        for j in 0..n {
            let deps = sem.deps[j].clone();
            let size: usize = deps.iter().map(|&d| axes[d].len()).product();
            let mut entries = Vec::with_capacity(size);
            let mut w = reference.clone();
            for e in 0..size {
                let mut rest = e;
                for &d in deps.iter().rev() {
                    w[d] = axes[d].points[rest % axes[d].len()];
                    rest /= axes[d].len();
                }
                let coef = sem.coefficients(theta, &w);
                entries.push((coef.b[j].clone(), coef.c[j], coef.noise[j].sqrt()));
            }
            tables.push((deps, entries));
        }
        let mut out = Self { sem, theta, space, grid, cumulative, tables, groups: Vec::new(), components: Vec::new() };
        match space {
            GateSpace::SAndU => out.groups = out.build_groups(),
            GateSpace::SOnly => out.components = out.build_components(),
        }
        out
    }

    /// Enumerate joint cells of `blocks`, calling `f(mass, axis index per dim)`.
    fn for_each_cell(&self, blocks: &[usize], mut f: impl FnMut(f64, &[usize])) {
        let dim = self.grid.dim();
        let mut axis_idx = vec![usize::MAX; dim];
        let mut scratch = vec![0; dim];
        let sizes: Vec<usize> = blocks.iter().map(|&b| self.grid.blocks()[b].mass.len()).collect();
        let total: usize = sizes.iter().product();
        let mut cell = vec![0; blocks.len()];
        for flat in 0..total {
            let mut rest = flat;
            for k in (0..blocks.len()).rev() {
                cell[k] = rest % sizes[k];
                rest /= sizes[k];
            }
            let mut mass = 1.0;
            for (k, &b) in blocks.iter().enumerate() {
                let block = &self.grid.blocks()[b];
                mass *= block.mass[cell[k]];
                self.grid.cell_indices(b, cell[k], &mut scratch[..block.dims.len()]);
                for (q, &d) in block.dims.iter().enumerate() {
                    axis_idx[d] = scratch[q];
                }
            }
            f(mass, &axis_idx);
        }
    }

    fn table_index(&self, node: usize, axis_idx: &[usize]) -> usize {
        let axes = self.grid.axes();
        self.tables[node].0.iter().fold(0, |acc, &d| acc * axes[d].len() + axis_idx[d])
    }

    fn build_groups(&self) -> Vec<Group> {
        let n = self.sem.n();
        let node_blocks: Vec<Vec<usize>> = (0..n)
            .map(|j| {
                let mut b: Vec<usize> = self.tables[j].0.iter().map(|&d| self.grid.block_of(d)).collect();
                b.sort_unstable();
                b.dedup();
                b
            })
            .collect();
        // Union nodes that share a block.
        let mut label: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for j in 0..i {
                if node_blocks[i].iter().any(|b| node_blocks[j].contains(b)) {
                    let (from, to) = (label[i], label[j]);
                    label.iter_mut().filter(|l| **l == from).for_each(|l| *l = to);
                }
            }
        }
        let mut groups = Vec::new();
        let mut roots: Vec<usize> = label.clone();
        roots.sort_unstable();
        roots.dedup();
        for root in roots {
            let nodes: Vec<usize> = (0..n).filter(|&j| label[j] == root).collect();
            let mut blocks: Vec<usize> = nodes.iter().flat_map(|&j| node_blocks[j].iter().copied()).collect();
            blocks.sort_unstable();
            blocks.dedup();
            let mut mass = Vec::new();
            let mut index = Vec::new();
            self.for_each_cell(&blocks, |m, axis_idx| {
                if m > 0.0 {
                    mass.push(m);
                    index.push(nodes.iter().map(|&j| self.table_index(j, axis_idx)).collect());
                }
            });
            groups.push(Group { nodes, mass, index });
        }
        groups
    }

    fn build_components(&self) -> Vec<Component> {
        let blocks: Vec<usize> = (0..self.grid.blocks().len()).collect();
        let axes = self.grid.axes();
        let mut w = vec![0.0; self.grid.dim()];
        let mut comps = Vec::new();
        self.for_each_cell(&blocks, |m, axis_idx| {
            if m <= 0.0 {
                return;
            }
            for (d, &i) in axis_idx.iter().enumerate() {
                w[d] = axes[d].points[i];
            }
            let cov = self.sem.marginal_cov(&self.sem.coefficients(self.theta, &w));
            if let Some(ch) = cov.cholesky() {
                let l = ch.l();
                let ln_det: f64 = l.diagonal().iter().map(|x| 2.0 * x.ln()).sum();
                let l_inv = l.try_inverse().expect("nonsingular factor");
                let ln_weight = m.ln() - 0.5 * (ln_det + self.sem.n() as f64 * LN_2PI);
                comps.push(Component { ln_weight, l_inv });
            }
        });
        comps
    }
}

fn ln_normal(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (z * z + LN_2PI) - sd.ln()
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return DENSITY_FLOOR.ln();
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl SampledDensity for SemMixture {
    fn dim(&self) -> usize {
        self.sem.n() + usize::from(self.space == GateSpace::SAndU)
    }

    /// Draw order: `u`, one noise per statistic, then one uniform per grid
    /// block. Fixing the order keeps draws aligned across beliefs whose
    /// leading blocks agree.
    fn sample(&self, stream: &mut RngStream) -> Vec<f64> {
        let n = self.sem.n();
        let u = stream.standard_normal();
        let eps: Vec<f64> = (0..n).map(|_| stream.standard_normal()).collect();
        let axes = self.grid.axes();
        let mut w = vec![0.0; self.grid.dim()];
        let mut scratch = vec![0; self.grid.dim()];
        for (b, cum) in self.cumulative.iter().enumerate() {
            let x = stream.uniform() * cum.last().copied().unwrap_or(1.0);
            let cell = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
            let block = &self.grid.blocks()[b];
            self.grid.cell_indices(b, cell, &mut scratch[..block.dims.len()]);
            for (q, &d) in block.dims.iter().enumerate() {
                w[d] = axes[d].points[scratch[q]];
            }
        }
        let coef = self.sem.coefficients(self.theta, &w);
        let mut s = vec![0.0; n];
        for j in 0..n {
            let mean: f64 = (0..j).map(|k| coef.b[j][k] * s[k]).sum::<f64>() + coef.c[j] * u;
            s[j] = mean + coef.noise[j].sqrt() * eps[j];
        }
        if self.space == GateSpace::SAndU {
            s.push(u);
        }
        s
    }

    fn ln_density(&self, x: &[f64]) -> f64 {
        let n = self.sem.n();
        let s = &x[..n];
        match self.space {
            GateSpace::SAndU => {
                let u = x[n];
                let values: Vec<Vec<f64>> = self
                    .tables
                    .iter()
                    .enumerate()
                    .map(|(j, (_, entries))| {
                        entries
                            .iter()
                            .map(|(b, c, sd)| {
                                let mean: f64 = (0..j).map(|k| b[k] * s[k]).sum::<f64>() + c * u;
                                ln_normal(s[j], mean, *sd)
                            })
                            .collect()
                    })
                    .collect();
                let mut total = ln_normal(u, 0.0, 1.0);
                for g in &self.groups {
                    total += log_sum_exp(g.mass.iter().zip(&g.index).map(|(m, idx)| {
                        m.ln() + g.nodes.iter().zip(idx).map(|(&j, &e)| values[j][e]).sum::<f64>()
                    }));
                }
                total
            }
            GateSpace::SOnly => {
                let sv = DVector::from_column_slice(s);
                log_sum_exp(self.components.iter().map(|c| c.ln_weight - 0.5 * (&c.l_inv * &sv).norm_squared()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::{f_divergence, FDivergenceSpec};

    fn causal() -> LinearSem {
        LinearSem::new(SemVariant::Causal { omega3: 0.5 }, &SemOptions::default()).unwrap()
    }

    fn iv() -> LinearSem {
        LinearSem::new(SemVariant::InstrumentalVariables, &SemOptions::default()).unwrap()
    }

    #[test]
    fn causal_cross_moment_matches_structural_equations() {
        // E[s1 s2] = ω1 Var(s1) + ω3 Cov(s1, u) = ω1 + θ ω2 ω3 with unit-variance s1.
        let sem = causal();
        let (w, theta) = ([0.3, 0.4], 0.7);
        let mut stream = RngStream::new(11, 0);
        let n = 400_000;
        let mut acc = 0.0;
        let mut acc2 = 0.0;
        for _ in 0..n {
            let s = sem.sample(&w, theta, &mut stream).obs.s;
            acc += s[0] * s[1];
            acc2 += (s[0] * s[1]).powi(2);
        }
        let mean = acc / n as f64;
        let se = ((acc2 / n as f64 - mean * mean) / n as f64).sqrt();
        let expected = 0.3 + theta * 0.4 * 0.5;
        assert!((mean - expected).abs() < 4.0 * se, "{mean} vs {expected} ± {se}");
        let cov = sem.marginal_cov(&sem.coefficients(theta, &w));
        assert!((cov[(0, 1)] - expected).abs() < 1e-12);
        assert!((cov[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_variance_mode_normalizes_every_statistic() {
        let opts = SemOptions { normalization: Normalization::UnitVariance, ..SemOptions::default() };
        let sem = LinearSem::new(SemVariant::Causal { omega3: 0.5 }, &opts).unwrap();
        for (w, theta) in [([0.3, 0.4], 0.7), ([-0.5, 0.5], 1.0), ([0.1, -0.6], 0.2)] {
            let cov = sem.marginal_cov(&sem.coefficients(theta, &w));
            for j in 0..2 {
                assert!((cov[(j, j)] - 1.0).abs() < 1e-12);
            }
        }
        let iv_unit = LinearSem::new(SemVariant::InstrumentalVariables, &opts);
        assert!(matches!(iv_unit, Err(Error::Infeasible(_))));
        let narrow = SemOptions { bounds: (-0.3, 0.3), ..opts };
        let sem = LinearSem::new(SemVariant::InstrumentalVariables, &narrow).unwrap();
        let cov = sem.marginal_cov(&sem.coefficients(0.6, &[0.2, -0.1, 0.25, 0.3, -0.2]));
        for j in 0..3 {
            assert!((cov[(j, j)] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dag_consistent_mode_variances_at_the_assumed_context() {
        let sem = iv();
        let w = [0.2, -0.1, 0.25, 0.3, -0.2];
        let cov = sem.marginal_cov(&sem.coefficients(0.0, &w));
        for j in 0..2 {
            assert!((cov[(j, j)] - 1.0).abs() < 1e-12);
        }
        // s3 inherits the confounder through s2.
        assert!((cov[(2, 2)] - (1.0 + 2.0 * w[2] * w[3] * w[4])).abs() < 1e-12);
    }

    #[test]
    fn graph_dependencies() {
        assert_eq!(causal().deps, vec![vec![1], vec![0]]);
        assert_eq!(iv().deps, vec![vec![0], vec![1, 2], vec![3, 4]]);
    }

    #[test]
    fn mixture_density_matches_sampling_and_identical_contexts_give_zero() {
        let sem = causal();
        let belief = sem.prior(PriorUse::AsIf).unwrap();
        let a = sem.predictive(&belief, &Conditioning::context(0.6), GateSpace::SAndU).unwrap();
        let spec = FDivergenceSpec::kl().with_monte_carlo(500, 3);
        assert_eq!(f_divergence(&a, &a, &spec).unwrap(), 0.0);
        let b = sem.predictive(&belief, &Conditioning::context(0.0), GateSpace::SAndU).unwrap();
        let d = f_divergence(&a, &b, &spec).unwrap();
        assert!(d > 0.0 && d.is_finite());
        let (sa, sb) = (
            sem.predictive(&belief, &Conditioning::context(0.6), GateSpace::SOnly).unwrap(),
            sem.predictive(&belief, &Conditioning::context(0.0), GateSpace::SOnly).unwrap(),
        );
        let d_s = f_divergence(&sa, &sb, &spec).unwrap();
        assert!(d_s >= -0.01 && d_s < d + 0.05, "s-only {d_s} vs s-and-u {d}");
    }

    #[test]
    fn sampled_density_integrates_to_one_on_the_prior() {
        // Importance check: E_m[1/m(x) · q(x)] = 1 for a reference density q.
        let sem = causal();
        let belief = sem.prior(PriorUse::AsIf).unwrap();
        let m = SemMixture::new(sem.clone(), belief.as_grid().unwrap(), 0.5, GateSpace::SAndU);
        let mut stream = RngStream::new(5, 0);
        let n = 20_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let x = m.sample(&mut stream);
            let q: f64 = x.iter().map(|v| ln_normal(*v, 0.0, 0.5)).sum();
            acc += (q - m.ln_density(&x)).exp();
        }
        assert!((acc / n as f64 - 1.0).abs() < 0.05, "{}", acc / n as f64);
    }
}
