//! Belief representations over the structural parameters `ω`.
//!
//! Two families cover every scenario: a multivariate Gaussian updated by the
//! rank-one Kalman form of conjugate regression, and a grid belief stored as a
//! product of independent blocks. Blocks merge only when a likelihood couples
//! their parameters, so a learner who never couples two parameters keeps them
//! in separate, cheap blocks. Values are immutable: updates return new states.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{std_normal_cdf, Gaussian1D};
use crate::divergence::{GateSpace, PredictiveDistribution};
use crate::error::{Error, Result};
use crate::scenarios::{Assumption, Observation, Scenario};

/// Gaussian belief with full covariance. Indices in the frozen set never move.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    frozen: Vec<bool>,
}

impl GaussianBelief {
    pub fn new(mean: Vec<f64>, cov: DMatrix<f64>, frozen: &[usize]) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::OutOfDomain(format!("covariance must be {n}×{n}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::OutOfDomain("prior means must be finite".into()));
        }
        if cov.clone().cholesky().is_none() {
            return Err(Error::OutOfDomain("prior covariance must be positive definite".into()));
        }
        let mut mask = vec![false; n];
        for &i in frozen {
            *mask.get_mut(i).ok_or_else(|| Error::OutOfDomain(format!("frozen index {i} out of range")))? = true;
        }
        Ok(Self { mean: DVector::from_vec(mean), cov, frozen: mask })
    }

    /// Independent marginals.
    pub fn product(means: &[f64], variances: &[f64], frozen: &[usize]) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::OutOfDomain("means and variances differ in length".into()));
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
            return Err(Error::OutOfDomain(format!("prior variance must be positive, got {v}")));
        }
        let cov = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
        Self::new(means.to_vec(), cov, frozen)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.mean[i]
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov[(i, i)]
    }

    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.cov[(i, j)]
    }

    pub fn means(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn frozen(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.frozen[i]).collect()
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.frozen[i]
    }

    /// Predictive of `xᵀω + ε` with `Var ε = noise_var`.
    pub fn predictive_linear(&self, x: &[f64], noise_var: f64) -> Result<Gaussian1D> {
        let x = DVector::from_column_slice(x);
        let m = x.dot(&self.mean);
        let v = (x.transpose() * &self.cov * &x)[(0, 0)] + noise_var;
        Ok(Gaussian1D::new(m, v)?)
    }

    /// Posterior after observing `y = xᵀω + ε`, `ε ~ N(0, noise_var)`.
    pub fn observe_linear(&self, x: &[f64], y: f64, noise_var: f64) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::OutOfDomain(format!("regressor has length {}, expected {}", x.len(), self.dim())));
        }
        if !y.is_finite() {
            return Err(Error::OutOfDomain(format!("observation {y} is not finite")));
        }
        let x = DVector::from_column_slice(x);
        let sx = &self.cov * &x;
        let s = x.dot(&sx) + noise_var;
        if !(s > 0.0) {
            return Err(Error::Infeasible(format!("innovation variance {s} is not positive")));
        }
        let mut gain = &sx / s;
        for (i, frozen) in self.frozen.iter().enumerate() {
            if *frozen {
                gain[i] = 0.0;
            }
        }
        let resid = y - x.dot(&self.mean);
        let mean = &self.mean + &gain * resid;
        let mut cov = &self.cov - &gain * sx.transpose();
        cov = (&cov + cov.transpose()) * 0.5;
        Ok(Self { mean, cov, frozen: self.frozen.clone() })
    }

    /// Drop cross-covariances, keeping the marginals.
    pub fn project_independent(&self) -> Self {
        let cov = DMatrix::from_diagonal(&self.cov.diagonal());
        Self { mean: self.mean.clone(), cov, frozen: self.frozen.clone() }
    }

    fn box_mass(&self, region: &Region) -> Result<f64> {
        let dims: Vec<usize> = region.bounds.iter().map(|b| b.0).collect();
        for (a, &i) in dims.iter().enumerate() {
            for &j in &dims[a + 1..] {
                if i != j && self.cov[(i, j)].abs() > 1e-14 {
                    return Err(Error::Unsupported(
                        "box events over correlated Gaussian coordinates are not supported".into(),
                    ));
                }
            }
        }
        let mut mass = 1.0;
        for &(i, lo, hi) in &region.bounds {
            let sd = self.variance(i).sqrt();
            let m = self.mean(i);
            mass *= std_normal_cdf((hi - m) / sd) - std_normal_cdf((lo - m) / sd);
        }
        Ok(mass)
    }
}

/// Independent Gaussian marginals for the three selection-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeckmanBelief {
    pub mean: [f64; 3],
    pub var: [f64; 3],
}

impl From<&GaussianBelief> for HeckmanBelief {
    fn from(g: &GaussianBelief) -> Self {
        Self {
            mean: [g.mean(0), g.mean(1), g.mean(2)],
            var: [g.variance(0), g.variance(1), g.variance(2)],
        }
    }
}

/// One coordinate of a grid belief; `points` are cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub points: Vec<f64>,
}

impl Axis {
    pub fn cells(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n == 0 || !(hi > lo) {
            return Err(Error::OutOfDomain(format!("axis [{lo}, {hi}] with {n} cells")));
        }
        let h = (hi - lo) / n as f64;
        Ok(Self { points: (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect() })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Placeholder value used for coordinates a likelihood does not read.
    pub fn reference(&self) -> f64 {
        self.points[self.points.len() / 2]
    }
}

/// Joint mass over a subset of coordinates, row-major with the last
/// coordinate fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridBlock {
    pub dims: Vec<usize>,
    pub mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBelief {
    axes: Vec<Axis>,
    blocks: Vec<GridBlock>,
    /// Cached marginal (mean, variance) per axis.
    moments: Vec<(f64, f64)>,
}

fn normalize(mass: &mut [f64]) -> Result<()> {
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroLikelihood);
    }
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(())
}

impl GridBelief {
    /// Independent coordinates with the given (unnormalized) marginal weights.
    pub fn product(axes: Vec<Axis>, marginals: Vec<Vec<f64>>) -> Result<Self> {
        if axes.len() != marginals.len() {
            return Err(Error::OutOfDomain("one marginal per axis is required".into()));
        }
        let mut blocks = Vec::with_capacity(axes.len());
        for (d, (axis, mut mass)) in axes.iter().zip(marginals).enumerate() {
            if mass.len() != axis.len() || mass.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
                return Err(Error::OutOfDomain(format!("invalid marginal for axis {d}")));
            }
            normalize(&mut mass).map_err(|_| Error::OutOfDomain(format!("marginal {d} has no mass")))?;
            blocks.push(GridBlock { dims: vec![d], mass });
        }
        let mut grid = Self { moments: vec![(0.0, 0.0); axes.len()], axes, blocks };
        grid.refresh_moments(&(0..grid.dim()).collect::<Vec<_>>());
        Ok(grid)
    }

    fn refresh_moments(&mut self, dims: &[usize]) {
        for &d in dims {
            let m = self.marginal(d);
            let pts = &self.axes[d].points;
            let mu: f64 = m.iter().zip(pts).map(|(p, x)| p * x).sum();
            let var: f64 = m.iter().zip(pts).map(|(p, x)| p * (x - mu).powi(2)).sum();
            self.moments[d] = (mu, var);
        }
    }

    pub fn uniform(axes: Vec<Axis>) -> Result<Self> {
        let marginals = axes.iter().map(|a| vec![1.0; a.len()]).collect();
        Self::product(axes, marginals)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn blocks(&self) -> &[GridBlock] {
        &self.blocks
    }

    pub fn block_of(&self, d: usize) -> usize {
        self.blocks.iter().position(|b| b.dims.contains(&d)).expect("every axis belongs to a block")
    }

    /// Axis indices of `cell` within `block`.
    pub fn cell_indices(&self, block: usize, mut cell: usize, out: &mut [usize]) {
        let dims = &self.blocks[block].dims;
        for (k, &d) in dims.iter().enumerate().rev() {
            let n = self.axes[d].len();
            out[k] = cell % n;
            cell /= n;
        }
    }

    pub fn marginal(&self, d: usize) -> Vec<f64> {
        let b = &self.blocks[self.block_of(d)];
        let pos = b.dims.iter().position(|&x| x == d).unwrap();
        let stride: usize = b.dims[pos + 1..].iter().map(|&x| self.axes[x].len()).product();
        let n = self.axes[d].len();
        let mut out = vec![0.0; n];
        for (cell, m) in b.mass.iter().enumerate() {
            out[(cell / stride) % n] += m;
        }
        out
    }

    pub fn mean(&self, d: usize) -> f64 {
        self.moments[d].0
    }

    pub fn variance(&self, d: usize) -> f64 {
        self.moments[d].1
    }

    /// Posterior after multiplying by `lik`, which may read only `deps`.
    /// Coordinates outside the touched blocks are set to their axis reference.
    pub fn update<F>(&self, deps: &[usize], lik: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> f64,
    {
        let mut touched: Vec<usize> = deps.iter().map(|&d| self.block_of(d)).collect();
        touched.sort_unstable();
        touched.dedup();
        let mut omega: Vec<f64> = self.axes.iter().map(Axis::reference).collect();
        if touched.is_empty() {
            let l = lik(&omega);
            if !(l > 0.0) || !l.is_finite() {
                return Err(Error::ZeroLikelihood);
            }
            return Ok(self.clone());
        }
        let merged = self.merge(&touched);
        let mut idx = vec![0; merged.dims.len()];
        let mut mass = merged.mass.clone();
        let grid = Self { axes: self.axes.clone(), blocks: vec![merged], moments: Vec::new() };
        for (cell, m) in mass.iter_mut().enumerate() {
            if *m == 0.0 {
                continue;
            }
            grid.cell_indices(0, cell, &mut idx);
            for (k, &d) in grid.blocks[0].dims.iter().enumerate() {
                omega[d] = self.axes[d].points[idx[k]];
            }
            *m *= lik(&omega);
        }
        normalize(&mut mass)?;
        let merged = GridBlock { dims: grid.blocks[0].dims.clone(), mass };
        let mut blocks = Vec::with_capacity(self.blocks.len() - touched.len() + 1);
        for (b, block) in self.blocks.iter().enumerate() {
            if b == touched[0] {
                blocks.push(merged.clone());
            } else if !touched.contains(&b) {
                blocks.push(block.clone());
            }
        }
        let dims = merged.dims.clone();
        let mut out = Self { axes: grid.axes, blocks, moments: self.moments.clone() };
        out.refresh_moments(&dims);
        Ok(out)
    }

    fn merge(&self, touched: &[usize]) -> GridBlock {
        let mut dims = Vec::new();
        let mut mass = vec![1.0];
        for &b in touched {
            let block = &self.blocks[b];
            dims.extend_from_slice(&block.dims);
            let mut next = Vec::with_capacity(mass.len() * block.mass.len());
            for m in &mass {
                next.extend(block.mass.iter().map(|x| m * x));
            }
            mass = next;
        }
        GridBlock { dims, mass }
    }

    fn box_mass(&self, region: &Region) -> f64 {
        let mut total = 1.0;
        for (b, block) in self.blocks.iter().enumerate() {
            let constraints: Vec<(usize, f64, f64)> = region
                .bounds
                .iter()
                .filter_map(|&(d, lo, hi)| block.dims.iter().position(|&x| x == d).map(|k| (k, lo, hi)))
                .collect();
            if constraints.is_empty() {
                continue;
            }
            let mut idx = vec![0; block.dims.len()];
            let mut acc = 0.0;
            for (cell, m) in block.mass.iter().enumerate() {
                self.cell_indices(b, cell, &mut idx);
                let inside = constraints.iter().all(|&(k, lo, hi)| {
                    let x = self.axes[block.dims[k]].points[idx[k]];
                    x >= lo && x <= hi
                });
                if inside {
                    acc += m;
                }
            }
            total *= acc;
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BeliefState {
    Gaussian(GaussianBelief),
    Grid(GridBelief),
}

impl BeliefState {
    pub fn dim(&self) -> usize {
        match self {
            Self::Gaussian(g) => g.dim(),
            Self::Grid(g) => g.dim(),
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        match self {
            Self::Gaussian(g) => g.mean(i),
            Self::Grid(g) => g.mean(i),
        }
    }

    pub fn variance(&self, i: usize) -> f64 {
        match self {
            Self::Gaussian(g) => g.variance(i),
            Self::Grid(g) => g.variance(i),
        }
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.mean(i)).collect()
    }

    pub fn variances(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.variance(i)).collect()
    }

    pub fn as_gaussian(&self) -> Option<&GaussianBelief> {
        match self {
            Self::Gaussian(g) => Some(g),
            Self::Grid(_) => None,
        }
    }

    pub fn as_grid(&self) -> Option<&GridBelief> {
        match self {
            Self::Grid(g) => Some(g),
            Self::Gaussian(_) => None,
        }
    }

    /// Belief probability of a box event.
    pub fn event_mass(&self, region: &Region) -> Result<f64> {
        match self {
            Self::Gaussian(g) => g.box_mass(region),
            Self::Grid(g) => Ok(g.box_mass(region)),
        }
    }
}

/// Axis-aligned box `{ω : lo ≤ ω_d ≤ hi}` over the listed coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bounds: Vec<(usize, f64, f64)>,
}

impl Region {
    pub fn below(d: usize, cut: f64) -> Self {
        Self { bounds: vec![(d, f64::NEG_INFINITY, cut)] }
    }
}

/// One period as the learner remembers it.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryEntry {
    pub theta: f64,
    pub researched: bool,
    /// Menu index of the maintained assumption, or `None` for the true-context update.
    pub assumption: Option<usize>,
    pub observation: Option<Observation>,
}

/// Append-only history with belief checkpoints every `interval` periods.
#[derive(Debug, Clone)]
pub struct History {
    entries: Vec<HistoryEntry>,
    checkpoints: Vec<(usize, BeliefState)>,
    interval: usize,
}

impl History {
    pub const DEFAULT_INTERVAL: usize = 64;

    pub fn new(prior: BeliefState, interval: usize) -> Self {
        Self { entries: Vec::new(), checkpoints: vec![(0, prior)], interval: interval.max(1) }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    /// Record a period; `after` is the belief once it has been applied.
    pub fn push(&mut self, entry: HistoryEntry, after: &BeliefState) {
        self.entries.push(entry);
        if self.entries.len().is_multiple_of(self.interval) {
            self.checkpoints.push((self.entries.len(), after.clone()));
        }
    }

    /// Belief after the first `t` periods, replayed from the nearest checkpoint.
    pub fn belief_at<F>(&self, t: usize, mut replay: F) -> Result<BeliefState>
    where
        F: FnMut(&BeliefState, &HistoryEntry) -> Result<BeliefState>,
    {
        if t > self.entries.len() {
            return Err(Error::OutOfDomain(format!("history has {} periods, asked for {t}", self.entries.len())));
        }
        let (start, base) = self.checkpoints.iter().rev().find(|(k, _)| *k <= t).expect("prior checkpoint");
        let mut belief = base.clone();
        for entry in &self.entries[*start..t] {
            belief = replay(&belief, entry)?;
        }
        Ok(belief)
    }
}

/// Posterior after updating on `obs` as if `assumption` were true in a period
/// with context `theta`.
pub fn update_as_if(
    belief: &BeliefState,
    obs: &Observation,
    scenario: &Scenario,
    assumption: &Assumption,
    theta: f64,
) -> Result<BeliefState> {
    let cond = scenario.resolve(assumption, belief, theta);
    scenario.update(belief, obs, &cond)
}

/// Belief-averaged distribution of the statistics (and latent, on the
/// s-and-u space) in a period with context `theta`.
pub fn predictive(
    belief: &BeliefState,
    scenario: &Scenario,
    theta: f64,
    space: GateSpace,
) -> Result<PredictiveDistribution> {
    scenario.predictive(belief, &scenario.truth(theta), space)
}

/// Which measure the next statistic is drawn from in [`martingale_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CheckMeasure {
    /// The learner's own predictive under the assumption.
    Assumed,
    /// The true predictive at context `θ`.
    True(f64),
}

/// `E[μ_{t+1}(E)] − μ_t(E)` for one as-if update, with the expectation taken
/// over `bins` cells of the statistic space (exact for discrete statistics).
pub fn martingale_check(
    belief: &BeliefState,
    scenario: &Scenario,
    assumption: &Assumption,
    event: &Region,
    measure: CheckMeasure,
    bins: usize,
) -> Result<f64> {
    let theta_update = match measure {
        CheckMeasure::Assumed => scenario.theta_star().unwrap_or(0.0),
        CheckMeasure::True(t) => t,
    };
    let assumed = scenario.resolve(assumption, belief, theta_update);
    let draw_from = match measure {
        CheckMeasure::Assumed => assumed,
        CheckMeasure::True(t) => scenario.truth(t),
    };
    let now = belief.event_mass(event)?;
    let mut expected = 0.0;
    for (p, obs) in scenario.discretize_statistic(belief, &draw_from, bins)? {
        if p > 0.0 {
            expected += p * scenario.update(belief, &obs, &assumed)?.event_mass(event)?;
        }
    }
    Ok(expected - now)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn scalar_conjugate_recursion() {
        let mut b = GaussianBelief::product(&[0.0, 0.0], &[1.0, 1.0], &[1]).unwrap();
        let mut v: f64 = 1.0;
        for k in 0..500 {
            b = b.observe_linear(&[1.0, 0.0], 0.1 * k as f64, 1.0).unwrap();
            v = v / (v + 1.0);
            assert_abs_diff_eq!(b.variance(0), v, epsilon = 1e-12);
        }
        assert_eq!(b.variance(1), 1.0);
        assert_eq!(b.mean(1), 0.0);
    }

    #[test]
    fn frozen_coordinates_do_not_move() {
        let b = GaussianBelief::product(&[0.2, 0.7], &[1.0, 2.0], &[1]).unwrap();
        let after = b.observe_linear(&[1.0, 0.0], 3.0, 1.0).unwrap();
        assert_eq!(after.mean(1), 0.7);
        assert_eq!(after.variance(1), 2.0);
        assert_abs_diff_eq!(after.mean(0), 0.2 + 0.5 * 2.8, epsilon = 1e-15);
    }

    #[test]
    fn bivariate_update_matches_normal_equations() {
        // Posterior precision = prior precision + x xᵀ.
        let b = GaussianBelief::product(&[0.0, 0.0], &[1.0, 1.0], &[]).unwrap();
        let after = b.observe_linear(&[1.0, 0.5], 1.0, 1.0).unwrap();
        let prec = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.25]);
        let cov = prec.try_inverse().unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(after.covariance(i, j), cov[(i, j)], epsilon = 1e-14);
            }
        }
        let mean = cov * DVector::from_vec(vec![1.0, 0.5]);
        assert_abs_diff_eq!(after.mean(0), mean[0], epsilon = 1e-14);
        assert_abs_diff_eq!(after.mean(1), mean[1], epsilon = 1e-14);
    }

    #[test]
    fn invalid_priors_are_rejected() {
        assert!(GaussianBelief::product(&[0.0], &[0.0], &[]).is_err());
        assert!(GaussianBelief::product(&[0.0], &[1.0], &[3]).is_err());
        assert!(Axis::cells(1.0, 0.0, 4).is_err());
    }

    #[test]
    fn grid_blocks_merge_only_when_coupled() {
        let axes = vec![Axis::cells(0.0, 1.0, 4).unwrap(), Axis::cells(0.0, 1.0, 5).unwrap()];
        let g = GridBelief::uniform(axes).unwrap();
        let one = g.update(&[0], |w| w[0]).unwrap();
        assert_eq!(one.blocks().len(), 2);
        assert_abs_diff_eq!(one.mean(0), (0.125f64.powi(2) + 0.375f64.powi(2) + 0.625f64.powi(2) + 0.875f64.powi(2)) / 2.0, epsilon = 1e-15);
        let both = one.update(&[0, 1], |w| w[0] * w[1]).unwrap();
        assert_eq!(both.blocks().len(), 1);
        assert_eq!(both.blocks()[0].mass.len(), 20);
        let total: f64 = both.blocks()[0].mass.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        // Marginal of ω₂ after the coupled update: ∝ w₂ (independent of ω₁ here).
        let m = both.marginal(1);
        let pts = &both.axes()[1].points;
        let z: f64 = pts.iter().sum();
        for (a, x) in m.iter().zip(pts) {
            assert_abs_diff_eq!(*a, x / z, epsilon = 1e-14);
        }
        assert!(matches!(g.update(&[0], |_| 0.0), Err(Error::ZeroLikelihood)));
    }

    #[test]
    fn grid_event_mass() {
        let axes = vec![Axis::cells(0.0, 1.0, 10).unwrap(), Axis::cells(0.0, 1.0, 10).unwrap()];
        let g = GridBelief::uniform(axes).unwrap();
        assert_abs_diff_eq!(g.box_mass(&Region::below(0, 0.5)), 0.5, epsilon = 1e-15);
        let r = Region { bounds: vec![(0, 0.0, 0.5), (1, 0.0, 0.3)] };
        assert_abs_diff_eq!(g.box_mass(&r), 0.15, epsilon = 1e-15);
        let joint = g.update(&[0, 1], |_| 1.0).unwrap();
        assert_abs_diff_eq!(joint.box_mass(&r), 0.15, epsilon = 1e-14);
    }

    #[test]
    fn gaussian_event_mass() {
        let b = BeliefState::Gaussian(GaussianBelief::product(&[0.0, 1.0], &[1.0, 4.0], &[]).unwrap());
        assert_abs_diff_eq!(b.event_mass(&Region::below(0, 0.0)).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(b.event_mass(&Region::below(1, 1.0)).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn history_replay_from_checkpoints() {
        let prior = BeliefState::Gaussian(GaussianBelief::product(&[0.0], &[1.0], &[]).unwrap());
        let mut hist = History::new(prior.clone(), 4);
        let replay = |b: &BeliefState, e: &HistoryEntry| -> Result<BeliefState> {
            let g = b.as_gaussian().unwrap();
            let y = e.observation.as_ref().map_or(0.0, |o| o.s[0]);
            Ok(BeliefState::Gaussian(g.observe_linear(&[1.0], y, 1.0)?))
        };
        let mut belief = prior;
        let mut trail = vec![belief.clone()];
        for k in 0..11 {
            let entry = HistoryEntry {
                theta: 0.0,
                researched: true,
                assumption: Some(0),
                observation: Some(Observation::new(vec![k as f64 * 0.3])),
            };
            belief = replay(&belief, &entry).unwrap();
            hist.push(entry, &belief);
            trail.push(belief.clone());
        }
        assert_eq!(hist.checkpoints.len(), 3);
        for (t, expected) in trail.iter().enumerate() {
            assert_eq!(&hist.belief_at(t, replay).unwrap(), expected);
        }
        assert!(hist.belief_at(12, replay).is_err());
    }
}
