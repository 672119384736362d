//! Contaminated binary experiment: `s ~ Bernoulli((1−θ)ω₁ + θω₂)` with a
//! grid belief on `[ε, 1−ε]²`.

use serde::{Deserialize, Serialize};

use super::{Assumption, Conditioning, Model, Observation, PriorUse, Sample};
use crate::beliefs::{Axis, BeliefState, GridBelief};
use crate::distributions::RngStream;
use crate::divergence::{GateSpace, Predictive, PredictiveDistribution};
use crate::error::{Error, Result};

/// Prior over `ω₁`; `ω₂` is always uniform so that its mean is one half.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BinaryPrior {
    #[default]
    Uniform,
    /// Beta shape with the given mean and `a + b = concentration`.
    Beta { mean: f64, concentration: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinaryOptions {
    pub epsilon: f64,
    /// Grid cells per axis.
    pub resolution: usize,
    pub prior_omega1: BinaryPrior,
}

impl Default for BinaryOptions {
    fn default() -> Self {
        Self { epsilon: 0.05, resolution: 400, prior_omega1: BinaryPrior::Uniform }
    }
}

#[derive(Debug, Clone)]
pub struct ContaminatedBinary {
    epsilon: f64,
    resolution: usize,
    prior_omega1: BinaryPrior,
}

impl ContaminatedBinary {
    pub fn new(options: &BinaryOptions) -> Result<Self> {
        let eps = options.epsilon;
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::OutOfDomain(format!("epsilon must lie in (0, 1/2), got {eps}")));
        }
        if options.resolution < 2 {
            return Err(Error::OutOfDomain("grid resolution must be at least 2".into()));
        }
        if let BinaryPrior::Beta { mean, concentration } = options.prior_omega1 {
            if !(mean > 0.0 && mean < 1.0) || !(concentration > 0.0) || !concentration.is_finite() {
                return Err(Error::OutOfDomain(format!(
                    "beta prior needs mean in (0, 1) and positive concentration, got ({mean}, {concentration})"
                )));
            }
        }
        Ok(Self { epsilon: eps, resolution: options.resolution, prior_omega1: options.prior_omega1 })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn axis(&self) -> Result<Axis> {
        Axis::cells(self.epsilon, 1.0 - self.epsilon, self.resolution)
    }

    /// Success probability at context `theta`.
    pub fn success(theta: f64, omega: &[f64]) -> f64 {
        (1.0 - theta) * omega[0] + theta * omega[1]
    }

    fn deps(theta: f64) -> Vec<usize> {
        if theta == 0.0 {
            vec![0]
        } else if theta == 1.0 {
            vec![1]
        } else {
            vec![0, 1]
        }
    }

    fn outcome(obs: &Observation) -> Result<bool> {
        match obs.s.as_slice() {
            [s] if *s == 0.0 || *s == 1.0 => Ok(*s == 1.0),
            _ => Err(Error::OutOfDomain("binary statistic must be 0 or 1".into())),
        }
    }

    fn no_pins(cond: &Conditioning) -> Result<()> {
        if cond.fixed.is_some() {
            return Err(Error::Unsupported("parameter assumptions are not part of this menu".into()));
        }
        Ok(())
    }

    fn predictive_success(belief: &BeliefState, cond: &Conditioning) -> f64 {
        (1.0 - cond.theta) * belief.mean(0) + cond.theta * belief.mean(1)
    }
}

impl Model for ContaminatedBinary {
    fn name(&self) -> &'static str {
        "contaminated-binary"
    }

    fn omega_dim(&self) -> usize {
        2
    }

    fn statistic_names(&self) -> Vec<&'static str> {
        vec!["s"]
    }

    fn question(&self) -> Vec<usize> {
        vec![0]
    }

    fn theta_star(&self) -> Option<f64> {
        Some(0.0)
    }

    fn menu(&self) -> Vec<Assumption> {
        vec![Assumption::Context(0.0)]
    }

    fn q_star(&self) -> Vec<usize> {
        vec![0]
    }

    fn has_latent(&self) -> bool {
        false
    }

    fn default_gate_space(&self) -> GateSpace {
        GateSpace::SOnly
    }

    fn dag_text(&self) -> String {
        "node theta theta\nnode omega1 omega\nnode omega2 omega\nnode s s\n\
         theta -> s\nomega1 -> s\nomega2 -> s\n"
            .into()
    }

    fn equation(&self, _node: usize, theta: f64, omega: &[f64]) -> Vec<f64> {
        vec![Self::success(theta, omega)]
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![(self.epsilon, 1.0 - self.epsilon); 2]
    }

    fn prior(&self, _usage: PriorUse) -> Result<BeliefState> {
        let axis = self.axis()?;
        let first = match self.prior_omega1 {
            BinaryPrior::Uniform => vec![1.0; axis.len()],
            BinaryPrior::Beta { mean, concentration } => {
                let (a, b) = (mean * concentration, (1.0 - mean) * concentration);
                let ln: Vec<f64> = axis.points.iter().map(|x| (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()).collect();
                let top = ln.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                ln.iter().map(|l| (l - top).exp()).collect()
            }
        };
        let second = vec![1.0; axis.len()];
        Ok(BeliefState::Grid(GridBelief::product(vec![axis.clone(), axis], vec![first, second])?))
    }

    fn sample(&self, omega: &[f64], theta: f64, stream: &mut RngStream) -> Sample {
        let s = if stream.uniform() < Self::success(theta, omega) { 1.0 } else { 0.0 };
        Sample { obs: Observation::new(vec![s]), u: None }
    }

    fn likelihood(&self, obs: &Observation, cond: &Conditioning, omega: &[f64]) -> Result<f64> {
        let p = Self::success(cond.theta, &cond.apply(omega));
        Ok(if Self::outcome(obs)? { p } else { 1.0 - p })
    }

    fn update(&self, belief: &BeliefState, obs: &Observation, cond: &Conditioning) -> Result<BeliefState> {
        Self::no_pins(cond)?;
        let grid = belief.as_grid().ok_or_else(|| Error::Unsupported("grid belief expected".into()))?;
        let one = Self::outcome(obs)?;
        let theta = cond.theta;
        let next = grid.update(&Self::deps(theta), |w| {
            let p = Self::success(theta, w);
            if one {
                p
            } else {
                1.0 - p
            }
        })?;
        Ok(BeliefState::Grid(next))
    }

    fn predictive(&self, belief: &BeliefState, cond: &Conditioning, space: GateSpace) -> Result<PredictiveDistribution> {
        Self::no_pins(cond)?;
        if space != GateSpace::SOnly {
            return Err(Error::UnsupportedSpace);
        }
        Ok(PredictiveDistribution::new(Predictive::Bernoulli(Self::predictive_success(belief, cond)), space))
    }

    fn finite_outcomes(&self) -> Option<Vec<Observation>> {
        Some(vec![Observation::new(vec![0.0]), Observation::new(vec![1.0])])
    }

    /// The assumed law is Bernoulli(ω₁), so the minimizer matches the
    /// mixture's success probability.
    fn berk_minimizer(&self, nodes: &[(f64, f64)], omega_star: &[f64]) -> Option<Vec<f64>> {
        Some(vec![nodes.iter().map(|&(w, t)| w * Self::success(t, omega_star)).sum()])
    }

    fn discretize(&self, belief: &BeliefState, cond: &Conditioning, _bins: usize) -> Result<Vec<(f64, Observation)>> {
        Self::no_pins(cond)?;
        let p = Self::predictive_success(belief, cond);
        Ok(vec![(1.0 - p, Observation::new(vec![0.0])), (p, Observation::new(vec![1.0]))])
    }
}
