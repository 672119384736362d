//! Linear-Gaussian scenarios with conjugate beliefs: the contaminated
//! experiment `s = ω₁ + θω₂ + ε` and the calibration problem `s = ω₁ + ω₂ + ε`.

use serde::{Deserialize, Serialize};

use super::{gaussian_cells, Assumption, Conditioning, Model, Observation, PriorUse, Sample, ValueRule};
use crate::beliefs::{BeliefState, GaussianBelief};
use crate::distributions::{Gaussian1D, RngStream};
use crate::divergence::{calibration_divergence, GateSpace, Predictive, PredictiveDistribution};
use crate::divergence::{f_divergence, FDivergenceSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianOptions {
    /// Prior means of `(ω₁, ω₂)`; zeros when absent.
    pub prior_means: Option<Vec<f64>>,
    /// Prior variances of `(ω₁, ω₂)`; ones when absent.
    pub prior_variances: Option<Vec<f64>>,
    /// Common parameter box.
    pub bounds: (f64, f64),
}

impl Default for GaussianOptions {
    fn default() -> Self {
        Self { prior_means: None, prior_variances: None, bounds: (-5.0, 5.0) }
    }
}

impl GaussianOptions {
    fn resolve(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let means = self.prior_means.clone().unwrap_or_else(|| vec![0.0; 2]);
        let vars = self.prior_variances.clone().unwrap_or_else(|| vec![1.0; 2]);
        if means.len() != 2 || vars.len() != 2 {
            return Err(Error::OutOfDomain("two prior means and two prior variances are required".into()));
        }
        let (lo, hi) = self.bounds;
        if !(lo < hi) {
            return Err(Error::OutOfDomain(format!("empty parameter box [{lo}, {hi}]")));
        }
        // Validates finiteness and positivity.
        GaussianBelief::product(&means, &vars, &[])?;
        Ok((means, vars))
    }
}

/// `y = xᵀω + ε` with one coordinate possibly pinned: its contribution moves
/// to the left-hand side and its regressor is zeroed.
pub(super) fn regress(
    g: &GaussianBelief,
    x: &[f64],
    y: f64,
    noise_var: f64,
    fixed: Option<(usize, f64)>,
) -> Result<GaussianBelief> {
    let mut x = x.to_vec();
    let mut y = y;
    if let Some((i, v)) = fixed {
        y -= x[i] * v;
        x[i] = 0.0;
    }
    g.observe_linear(&x, y, noise_var)
}

/// Predictive of `xᵀω + ε` with the same pinning convention as [`regress`].
pub(super) fn linear_predictive(
    g: &GaussianBelief,
    x: &[f64],
    noise_var: f64,
    fixed: Option<(usize, f64)>,
) -> Result<Gaussian1D> {
    let mut x = x.to_vec();
    let mut shift = 0.0;
    if let Some((i, v)) = fixed {
        shift = x[i] * v;
        x[i] = 0.0;
    }
    let p = g.predictive_linear(&x, noise_var)?;
    Ok(Gaussian1D { mean: p.mean + shift, variance: p.variance })
}

fn gaussian_of(belief: &BeliefState) -> Result<&GaussianBelief> {
    belief.as_gaussian().ok_or_else(|| Error::Unsupported("Gaussian belief expected".into()))
}

fn scalar_statistic(obs: &Observation) -> Result<f64> {
    match obs.s.as_slice() {
        [s] if s.is_finite() => Ok(*s),
        _ => Err(Error::OutOfDomain("expected one finite statistic".into())),
    }
}

fn cells(g: &Gaussian1D, bins: usize) -> Vec<(f64, Observation)> {
    gaussian_cells(g, bins).into_iter().map(|(p, x)| (p, Observation::new(vec![x]))).collect()
}

#[derive(Debug, Clone)]
pub struct ContaminatedGaussian {
    means: Vec<f64>,
    vars: Vec<f64>,
    bounds: (f64, f64),
}

impl ContaminatedGaussian {
    pub fn new(options: &GaussianOptions) -> Result<Self> {
        let (means, vars) = options.resolve()?;
        Ok(Self { means, vars, bounds: options.bounds })
    }

    fn regressor(theta: f64) -> [f64; 2] {
        [1.0, theta]
    }
}

impl Model for ContaminatedGaussian {
    fn name(&self) -> &'static str {
        "contaminated-gaussian"
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
        vec![omega[0] + theta * omega[1], 1.0]
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.bounds; 2]
    }

    /// The as-if learner never moves `ω₂`; the correctly specified one does.
    fn prior(&self, usage: PriorUse) -> Result<BeliefState> {
        let frozen: &[usize] = match usage {
            PriorUse::AsIf => &[1],
            PriorUse::Correct => &[],
        };
        Ok(BeliefState::Gaussian(GaussianBelief::product(&self.means, &self.vars, frozen)?))
    }

    fn sample(&self, omega: &[f64], theta: f64, stream: &mut RngStream) -> Sample {
        let s = omega[0] + theta * omega[1] + stream.standard_normal();
        Sample { obs: Observation::new(vec![s]), u: None }
    }

    fn likelihood(&self, obs: &Observation, cond: &Conditioning, omega: &[f64]) -> Result<f64> {
        let s = scalar_statistic(obs)?;
        let w = cond.apply(omega);
        Ok(Gaussian1D { mean: w[0] + cond.theta * w[1], variance: 1.0 }.pdf(s))
    }

    fn update(&self, belief: &BeliefState, obs: &Observation, cond: &Conditioning) -> Result<BeliefState> {
        let s = scalar_statistic(obs)?;
        let g = regress(gaussian_of(belief)?, &Self::regressor(cond.theta), s, 1.0, cond.fixed)?;
        Ok(BeliefState::Gaussian(g))
    }

    fn predictive(&self, belief: &BeliefState, cond: &Conditioning, space: GateSpace) -> Result<PredictiveDistribution> {
        if space != GateSpace::SOnly {
            return Err(Error::UnsupportedSpace);
        }
        let p = linear_predictive(gaussian_of(belief)?, &Self::regressor(cond.theta), 1.0, cond.fixed)?;
        Ok(PredictiveDistribution::new(Predictive::Gaussian(p), space))
    }

    fn discretize(&self, belief: &BeliefState, cond: &Conditioning, bins: usize) -> Result<Vec<(f64, Observation)>> {
        let p = linear_predictive(gaussian_of(belief)?, &Self::regressor(cond.theta), 1.0, cond.fixed)?;
        Ok(cells(&p, bins))
    }

    /// Unit-variance Gaussian location family: match the mixture mean.
    fn berk_minimizer(&self, nodes: &[(f64, f64)], omega_star: &[f64]) -> Option<Vec<f64>> {
        Some(vec![nodes.iter().map(|&(w, t)| w * (omega_star[0] + t * omega_star[1])).sum()])
    }

    fn random_state(&self, stream: &mut RngStream) -> Vec<f64> {
        (0..2).map(|_| 2.0 * stream.uniform() - 1.0).collect()
    }
}

/// No context; the two assumptions pin one of the summands at its current
/// belief mean.
#[derive(Debug, Clone)]
pub struct Calibration {
    means: Vec<f64>,
    vars: Vec<f64>,
    bounds: (f64, f64),
}

impl Calibration {
    pub fn new(options: &GaussianOptions) -> Result<Self> {
        let (means, vars) = options.resolve()?;
        Ok(Self { means, vars, bounds: options.bounds })
    }

    const X: [f64; 2] = [1.0, 1.0];
}

impl Model for Calibration {
    fn name(&self) -> &'static str {
        "calibration"
    }

    fn omega_dim(&self) -> usize {
        2
    }

    fn statistic_names(&self) -> Vec<&'static str> {
        vec!["s"]
    }

    fn question(&self) -> Vec<usize> {
        vec![0, 1]
    }

    fn theta_star(&self) -> Option<f64> {
        None
    }

    /// Ties go to pinning `ω₂`.
    fn menu(&self) -> Vec<Assumption> {
        vec![
            Assumption::FixedParameter { index: 1, rule: ValueRule::CurrentMean },
            Assumption::FixedParameter { index: 0, rule: ValueRule::CurrentMean },
        ]
    }

    fn q_star(&self) -> Vec<usize> {
        vec![0]
    }

    fn has_latent(&self) -> bool {
        false
    }

    fn has_context(&self) -> bool {
        false
    }

    fn default_gate_space(&self) -> GateSpace {
        GateSpace::SOnly
    }

    fn dag_text(&self) -> String {
        "node omega1 omega\nnode omega2 omega\nnode s s\nomega1 -> s\nomega2 -> s\n".into()
    }

    fn equation(&self, _node: usize, _theta: f64, omega: &[f64]) -> Vec<f64> {
        vec![omega[0] + omega[1], 1.0]
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.bounds; 2]
    }

    fn prior(&self, _usage: PriorUse) -> Result<BeliefState> {
        Ok(BeliefState::Gaussian(GaussianBelief::product(&self.means, &self.vars, &[])?))
    }

    fn sample(&self, omega: &[f64], _theta: f64, stream: &mut RngStream) -> Sample {
        let s = omega[0] + omega[1] + stream.standard_normal();
        Sample { obs: Observation::new(vec![s]), u: None }
    }

    fn likelihood(&self, obs: &Observation, cond: &Conditioning, omega: &[f64]) -> Result<f64> {
        let s = scalar_statistic(obs)?;
        let w = cond.apply(omega);
        Ok(Gaussian1D { mean: w[0] + w[1], variance: 1.0 }.pdf(s))
    }

    fn update(&self, belief: &BeliefState, obs: &Observation, cond: &Conditioning) -> Result<BeliefState> {
        let s = scalar_statistic(obs)?;
        Ok(BeliefState::Gaussian(regress(gaussian_of(belief)?, &Self::X, s, 1.0, cond.fixed)?))
    }

    /// The gate compares laws of `ω₁ + ω₂` without observation noise.
    fn predictive(&self, belief: &BeliefState, cond: &Conditioning, space: GateSpace) -> Result<PredictiveDistribution> {
        if space != GateSpace::SOnly {
            return Err(Error::UnsupportedSpace);
        }
        let p = linear_predictive(gaussian_of(belief)?, &Self::X, 0.0, cond.fixed)?;
        Ok(PredictiveDistribution::new(Predictive::Gaussian(p), space))
    }

    fn gate_divergence(
        &self,
        belief: &BeliefState,
        truth: &Conditioning,
        assumed: &Conditioning,
        spec: &FDivergenceSpec,
        space: GateSpace,
    ) -> Result<f64> {
        let g = gaussian_of(belief)?;
        match assumed.fixed {
            Some((i, v)) if spec.is_kl() && g.covariance(0, 1) == 0.0 => {
                let m = (g.mean(0), g.mean(1));
                let sd = (g.variance(0).sqrt(), g.variance(1).sqrt());
                Ok(calibration_divergence(m, sd, i + 1, v)?)
            }
            _ => {
                let m = self.predictive(belief, truth, space)?;
                let m_star = self.predictive(belief, assumed, space)?;
                Ok(f_divergence(&m, &m_star, spec)?)
            }
        }
    }

    fn discretize(&self, belief: &BeliefState, cond: &Conditioning, bins: usize) -> Result<Vec<(f64, Observation)>> {
        let p = linear_predictive(gaussian_of(belief)?, &Self::X, 1.0, cond.fixed)?;
        Ok(cells(&p, bins))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::contaminated_gate_divergence;
    use approx::assert_abs_diff_eq;

    #[test]
    fn contaminated_gate_matches_closed_form() {
        let m = ContaminatedGaussian::new(&GaussianOptions {
            prior_means: Some(vec![0.3, 1.0]),
            prior_variances: Some(vec![1.0, 1.0]),
            ..Default::default()
        })
        .unwrap();
        let b = m.prior(PriorUse::AsIf).unwrap();
        let spec = FDivergenceSpec::kl();
        for theta in [0.0, 0.2, 0.9] {
            let d = m
                .gate_divergence(&b, &Conditioning::context(theta), &Conditioning::context(0.0), &spec, GateSpace::SOnly)
                .unwrap();
            assert_abs_diff_eq!(d, contaminated_gate_divergence(1.0, 1.0, 1.0, theta), epsilon = 1e-12);
        }
    }

    #[test]
    fn as_if_update_moves_only_the_intercept() {
        let m = ContaminatedGaussian::new(&GaussianOptions::default()).unwrap();
        let b = m.prior(PriorUse::AsIf).unwrap();
        let next = m.update(&b, &Observation::new(vec![2.0]), &Conditioning::context(0.0)).unwrap();
        assert_abs_diff_eq!(next.mean(0), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(next.variance(0), 0.5, epsilon = 1e-14);
        assert_eq!((next.mean(1), next.variance(1)), (0.0, 1.0));
    }

    #[test]
    fn pinned_regression_moves_the_other_coordinate() {
        let c = Calibration::new(&GaussianOptions::default()).unwrap();
        let b = c.prior(PriorUse::AsIf).unwrap();
        let cond = Conditioning { theta: f64::NAN, fixed: Some((1, 0.0)) };
        let next = c.update(&b, &Observation::new(vec![1.0]), &cond).unwrap();
        assert_abs_diff_eq!(next.mean(0), 0.5, epsilon = 1e-14);
        assert_eq!(next.mean(1), 0.0);
        assert_eq!(next.variance(1), 1.0);
    }

    #[test]
    fn calibration_closed_form_agrees_with_generic_path() {
        let c = Calibration::new(&GaussianOptions {
            prior_means: Some(vec![0.4, -0.1]),
            prior_variances: Some(vec![0.5, 2.0]),
            ..Default::default()
        })
        .unwrap();
        let b = c.prior(PriorUse::AsIf).unwrap();
        let truth = Conditioning::context(f64::NAN);
        let assumed = Conditioning { theta: f64::NAN, fixed: Some((0, 0.4)) };
        let closed = c.gate_divergence(&b, &truth, &assumed, &FDivergenceSpec::kl(), GateSpace::SOnly).unwrap();
        let m = c.predictive(&b, &truth, GateSpace::SOnly).unwrap();
        let m_star = c.predictive(&b, &assumed, GateSpace::SOnly).unwrap();
        let generic = f_divergence(&m, &m_star, &FDivergenceSpec::kl()).unwrap();
        assert_abs_diff_eq!(closed, generic, epsilon = 1e-12);
    }

    #[test]
    fn malformed_options_are_rejected() {
        let bad = GaussianOptions { prior_variances: Some(vec![1.0, 0.0]), ..Default::default() };
        assert!(ContaminatedGaussian::new(&bad).is_err());
        let short = GaussianOptions { prior_means: Some(vec![0.0]), ..Default::default() };
        assert!(Calibration::new(&short).is_err());
    }
}
