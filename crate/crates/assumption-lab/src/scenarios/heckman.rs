//! Selective-sample model. Entry `s₁` depends on the binary covariate `s₂`
//! and, with probability `θ`, on the latent `u`; income `s₃` is observed
//! only on entry and carries the selection correction `ω₃ θ λ(s₂)`.

use serde::{Deserialize, Serialize};

use super::gaussian::regress;
use super::{Assumption, Conditioning, Model, Observation, PriorUse, Sample, ValueRule};
use crate::beliefs::{BeliefState, GaussianBelief, HeckmanBelief};
use crate::distributions::{inverse_mills, std_normal_cdf, Gaussian1D, QuadratureRule, RngStream};
use crate::divergence::{heckman_r, heckman_s, FDivergenceSpec, GateSpace, PredictiveDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeckmanOptions {
    pub prior_means: [f64; 3],
    pub prior_variances: [f64; 3],
    /// Variance of the income shock.
    pub eps2_variance: f64,
    pub bounds: (f64, f64),
}

impl Default for HeckmanOptions {
    fn default() -> Self {
        Self { prior_means: [0.0; 3], prior_variances: [1.0; 3], eps2_variance: 1.0, bounds: (-5.0, 5.0) }
    }
}

#[derive(Debug, Clone)]
pub struct HeckmanSelection {
    options: HeckmanOptions,
    lambda: [f64; 2],
}

impl HeckmanSelection {
    pub fn new(options: &HeckmanOptions) -> Result<Self> {
        GaussianBelief::product(&options.prior_means, &options.prior_variances, &[])?;
        if !(options.eps2_variance > 0.0) || !options.eps2_variance.is_finite() {
            return Err(Error::OutOfDomain(format!("eps2_variance must be positive, got {}", options.eps2_variance)));
        }
        let (lo, hi) = options.bounds;
        if !(lo < hi) {
            return Err(Error::OutOfDomain(format!("empty parameter box [{lo}, {hi}]")));
        }
        Ok(Self { options: options.clone(), lambda: [inverse_mills(0)?, inverse_mills(1)?] })
    }

    /// `E[u | s₁ = 1, s₂, θ] = θ λ(s₂)`.
    pub fn correction(&self, s2: f64, theta: f64) -> f64 {
        theta * self.lambda[usize::from(s2 == 1.0)]
    }

    /// Regressor of `s₃` on `(ω₁, ω₂, ω₃)` under `cond`.
    fn regressor(&self, s2: f64, cond: &Conditioning) -> [f64; 3] {
        [1.0, s2, self.correction(s2, cond.theta)]
    }

    fn parse(obs: &Observation) -> Result<(bool, f64, f64)> {
        let [s1, s2, s3] = obs.s.as_slice() else {
            return Err(Error::OutOfDomain("selection model expects (s1, s2, s3)".into()));
        };
        let binary = |x: f64| x == 0.0 || x == 1.0;
        if !binary(*s1) || !binary(*s2) {
            return Err(Error::OutOfDomain("s1 and s2 must be 0 or 1".into()));
        }
        let entered = *s1 == 1.0;
        if entered != s3.is_finite() {
            return Err(Error::OutOfDomain("s3 must be present exactly when s1 = 1".into()));
        }
        Ok((entered, *s2, *s3))
    }
}

impl Model for HeckmanSelection {
    fn name(&self) -> &'static str {
        "heckman-selection"
    }

    fn omega_dim(&self) -> usize {
        3
    }

    fn statistic_names(&self) -> Vec<&'static str> {
        vec!["s1", "s2", "s3"]
    }

    fn question(&self) -> Vec<usize> {
        vec![0]
    }

    fn theta_star(&self) -> Option<f64> {
        Some(0.0)
    }

    fn menu(&self) -> Vec<Assumption> {
        vec![Assumption::Context(0.0), Assumption::FixedParameter { index: 1, rule: ValueRule::Constant(0.0) }]
    }

    fn q_star(&self) -> Vec<usize> {
        vec![0, 1]
    }

    fn has_latent(&self) -> bool {
        true
    }

    fn default_gate_space(&self) -> GateSpace {
        GateSpace::SAndU
    }

    fn dag_text(&self) -> String {
        "node theta theta\nnode u u\nnode omega1 omega\nnode omega2 omega\nnode omega3 omega\n\
         node s1 s\nnode s2 s\nnode s3 s\n\
         s2 -> s1\ntheta -> s1\nu -> s1\n\
         s1 -> s3\ns2 -> s3\ntheta -> s3\nomega1 -> s3\nomega2 -> s3\nomega3 -> s3\n"
            .into()
    }

    fn equation(&self, node: usize, theta: f64, omega: &[f64]) -> Vec<f64> {
        match node {
            0 => vec![theta],
            1 => Vec::new(),
            _ => vec![
                omega[0],
                omega[1],
                omega[2] * self.correction(0.0, theta),
                omega[2] * self.correction(1.0, theta),
                self.options.eps2_variance,
            ],
        }
    }

    fn bounds(&self) -> Vec<(f64, f64)> {
        vec![self.options.bounds; 3]
    }

    fn prior(&self, _usage: PriorUse) -> Result<BeliefState> {
        let o = &self.options;
        Ok(BeliefState::Gaussian(GaussianBelief::product(&o.prior_means, &o.prior_variances, &[])?))
    }

    fn sample(&self, omega: &[f64], theta: f64, stream: &mut RngStream) -> Sample {
        let s2 = if stream.uniform() < 0.5 { 0.0 } else { 1.0 };
        let u = stream.standard_normal();
        let e1 = stream.standard_normal();
        let selective = stream.uniform() < theta;
        let e2 = stream.standard_normal() * self.options.eps2_variance.sqrt();
        let index = if selective { s2 + u } else { s2 + e1 };
        let s1 = if index >= 0.0 { 1.0 } else { 0.0 };
        let s3 = if s1 == 1.0 { omega[0] + omega[1] * s2 + omega[2] * self.correction(s2, theta) + e2 } else { f64::NAN };
        Sample { obs: Observation::new(vec![s1, s2, s3]), u: Some(u) }
    }

    /// Entry does not depend on `ω`, so only the income density carries
    /// information about it.
    fn likelihood(&self, obs: &Observation, cond: &Conditioning, omega: &[f64]) -> Result<f64> {
        let (entered, s2, s3) = Self::parse(obs)?;
        let entry = std_normal_cdf(s2);
        if !entered {
            return Ok(0.5 * (1.0 - entry));
        }
        let w = cond.apply(omega);
        let x = self.regressor(s2, cond);
        let mean: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        Ok(0.5 * entry * Gaussian1D { mean, variance: self.options.eps2_variance }.pdf(s3))
    }

    /// As-if updates keep independent marginals; the true-context update
    /// keeps the full covariance.
    fn update(&self, belief: &BeliefState, obs: &Observation, cond: &Conditioning) -> Result<BeliefState> {
        let (entered, s2, s3) = Self::parse(obs)?;
        if !entered {
            return Ok(belief.clone());
        }
        let g = belief.as_gaussian().ok_or_else(|| Error::Unsupported("Gaussian belief expected".into()))?;
        let next = regress(g, &self.regressor(s2, cond), s3, self.options.eps2_variance, cond.fixed)?;
        let as_if = cond.theta == 0.0 || cond.fixed.is_some();
        Ok(BeliefState::Gaussian(if as_if { next.project_independent() } else { next }))
    }

    fn predictive(&self, _belief: &BeliefState, _cond: &Conditioning, _space: GateSpace) -> Result<PredictiveDistribution> {
        Err(Error::Unsupported("the selection model exposes its gate only through closed forms".into()))
    }

    fn gate_divergence(
        &self,
        belief: &BeliefState,
        truth: &Conditioning,
        assumed: &Conditioning,
        spec: &FDivergenceSpec,
        _space: GateSpace,
    ) -> Result<f64> {
        if !spec.is_kl() {
            return Err(Error::Unsupported("the selection model gate is available for KL only".into()));
        }
        let g = belief.as_gaussian().ok_or_else(|| Error::Unsupported("Gaussian belief expected".into()))?;
        let hb = HeckmanBelief::from(g);
        Ok(match assumed.fixed {
            None => heckman_r(&hb, truth.theta, QuadratureRule::default_hermite())?,
            Some(_) => heckman_s(&hb, truth.theta)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn income_is_missing_exactly_without_entry() {
        let m = HeckmanSelection::new(&HeckmanOptions::default()).unwrap();
        let mut stream = RngStream::new(3, 0);
        for k in 0..2000 {
            let d = m.sample(&[1.0, 0.5, 0.8], (k % 11) as f64 / 10.0, &mut stream);
            assert_eq!(d.obs.s[0] == 1.0, d.obs.s[2].is_finite());
        }
    }

    #[test]
    fn entry_rate_does_not_depend_on_context() {
        let m = HeckmanSelection::new(&HeckmanOptions::default()).unwrap();
        let n = 100_000;
        for theta in [0.0, 1.0] {
            let mut stream = RngStream::new(5, 0);
            let mut hits = [0usize; 2];
            let mut count = [0usize; 2];
            for _ in 0..n {
                let d = m.sample(&[0.0; 3], theta, &mut stream);
                let i = d.obs.s[1] as usize;
                count[i] += 1;
                hits[i] += d.obs.s[0] as usize;
            }
            for i in 0..2 {
                let p = std_normal_cdf(i as f64);
                let se = (p * (1.0 - p) / count[i] as f64).sqrt();
                assert!((hits[i] as f64 / count[i] as f64 - p).abs() < 4.0 * se);
            }
        }
    }

    #[test]
    fn pass_periods_leave_beliefs_alone() {
        let m = HeckmanSelection::new(&HeckmanOptions::default()).unwrap();
        let b = m.prior(PriorUse::AsIf).unwrap();
        let obs = Observation::new(vec![0.0, 1.0, f64::NAN]);
        assert_eq!(m.update(&b, &obs, &Conditioning::context(0.0)).unwrap(), b);
        let bad = Observation::new(vec![1.0, 1.0, f64::NAN]);
        assert!(m.update(&b, &bad, &Conditioning::context(0.0)).is_err());
    }

    #[test]
    fn exclusion_update_leaves_the_excluded_parameter() {
        let m = HeckmanSelection::new(&HeckmanOptions::default()).unwrap();
        let b = m.prior(PriorUse::AsIf).unwrap();
        let cond = Conditioning { theta: 0.7, fixed: Some((1, 0.0)) };
        let next = m.update(&b, &Observation::new(vec![1.0, 1.0, 2.0]), &cond).unwrap();
        assert_eq!((next.mean(1), next.variance(1)), (0.0, 1.0));
        assert!(next.mean(0) > 0.0 && next.mean(2) > 0.0);
        assert_eq!(next.as_gaussian().unwrap().covariance(0, 2), 0.0);
    }
}
