//! f-divergences between predictive distributions.
//!
//! Closed forms are used for Gaussian and Bernoulli pairs; one-dimensional
//! mixtures go through Gauss–Hermite quadrature, and sampled joint
//! distributions (statistics together with latent variables) through Monte
//! Carlo with common random numbers keyed by [`FDivergenceSpec::mc_seed`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beliefs::HeckmanBelief;
use crate::distributions::{
    inverse_mills, std_normal_cdf, DistError, Gaussian1D, QuadratureRule, RngStream,
};

/// Densities are clipped at this floor before logs are taken.
pub const DENSITY_FLOOR: f64 = 1e-300;

const MC_DOMAIN: u64 = 0x6469_7665_7267_656e;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DivergenceError {
    #[error("predictive distributions are not defined on the same space")]
    SupportMismatch,
    #[error("divergence evaluated to a non-finite value")]
    NonFiniteDivergence,
    #[error("variance must be positive, got {0}")]
    InvalidVariance(f64),
    #[error("invalid f-divergence generator: {0}")]
    InvalidGenerator(String),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

/// Which variables the plausibility gate compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GateSpace {
    SOnly,
    SAndU,
}

impl fmt::Display for GateSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SOnly => "s-only",
            Self::SAndU => "s-and-u",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FKind {
    Kl,
    ReverseKl,
    SquaredHellinger,
    TotalVariation,
    ChiSquare,
    Custom,
}

type Generator = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A divergence `D(m‖m′) = E_{m′}[f(m/m′)]` together with the Monte Carlo
/// settings used when no closed form or quadrature path applies.
#[derive(Clone)]
pub struct FDivergenceSpec {
    kind: FKind,
    custom: Option<Generator>,
    pub mc_samples: usize,
    pub mc_seed: u64,
}

impl fmt::Debug for FDivergenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FDivergenceSpec")
            .field("kind", &self.kind)
            .field("mc_samples", &self.mc_samples)
            .field("mc_seed", &self.mc_seed)
            .finish()
    }
}

impl Default for FDivergenceSpec {
    fn default() -> Self {
        Self::kl()
    }
}

impl FDivergenceSpec {
    pub const DEFAULT_MC_SAMPLES: usize = 2000;
    pub const DEFAULT_MC_SEED: u64 = 0x5eed;

    pub fn kl() -> Self {
        Self::named(FKind::Kl).expect("built-in generator")
    }

    pub fn named(kind: FKind) -> Result<Self, DivergenceError> {
        if kind == FKind::Custom {
            return Err(DivergenceError::InvalidGenerator(
                "custom divergences are built with FDivergenceSpec::generic".into(),
            ));
        }
        Ok(Self {
            kind,
            custom: None,
            mc_samples: Self::DEFAULT_MC_SAMPLES,
            mc_seed: Self::DEFAULT_MC_SEED,
        })
    }

    /// A user-supplied generator; `f(1) = 0` and midpoint convexity on a grid
    /// are checked.
    pub fn generic<F>(f: F) -> Result<Self, DivergenceError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if f(1.0).abs() > 1e-12 {
            return Err(DivergenceError::InvalidGenerator(format!("f(1) = {} ≠ 0", f(1.0))));
        }
        let grid: Vec<f64> = (1..=60).map(|k| 0.05 * k as f64).collect();
        for &a in &grid {
            for &b in &grid {
                let mid = f(0.5 * (a + b));
                if mid > 0.5 * (f(a) + f(b)) + 1e-12 {
                    return Err(DivergenceError::InvalidGenerator(format!(
                        "midpoint convexity fails between {a} and {b}"
                    )));
                }
            }
        }
        Ok(Self {
            kind: FKind::Custom,
            custom: Some(Arc::new(f)),
            mc_samples: Self::DEFAULT_MC_SAMPLES,
            mc_seed: Self::DEFAULT_MC_SEED,
        })
    }

    pub fn with_monte_carlo(mut self, samples: usize, seed: u64) -> Self {
        self.mc_samples = samples.max(1);
        self.mc_seed = seed;
        self
    }

    pub fn kind(&self) -> FKind {
        self.kind
    }

    pub fn is_kl(&self) -> bool {
        self.kind == FKind::Kl
    }

    /// The generator evaluated at a likelihood ratio.
    pub fn f(&self, x: f64) -> f64 {
        match self.kind {
            FKind::Kl => {
                if x == 0.0 {
                    0.0
                } else {
                    x * x.ln()
                }
            }
            FKind::ReverseKl => -x.max(DENSITY_FLOOR).ln(),
            FKind::SquaredHellinger => (x.sqrt() - 1.0).powi(2),
            FKind::TotalVariation => 0.5 * (x - 1.0).abs(),
            FKind::ChiSquare => (x - 1.0).powi(2),
            FKind::Custom => (self.custom.as_ref().expect("custom generator"))(x),
        }
    }
}

/// Joint distribution known through a sampler and a log-density.
pub trait SampledDensity: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, stream: &mut RngStream) -> Vec<f64>;
    fn ln_density(&self, x: &[f64]) -> f64;
}

#[derive(Clone)]
pub enum Predictive {
    Gaussian(Gaussian1D),
    Bernoulli(f64),
    GaussianMixture(Vec<(f64, Gaussian1D)>),
    Sampled(Arc<dyn SampledDensity>),
}

impl fmt::Debug for Predictive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian(g) => f.debug_tuple("Gaussian").field(g).finish(),
            Self::Bernoulli(p) => f.debug_tuple("Bernoulli").field(p).finish(),
            Self::GaussianMixture(c) => f.debug_tuple("GaussianMixture").field(c).finish(),
            Self::Sampled(s) => write!(f, "Sampled(dim={})", s.dim()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PredictiveDistribution {
    pub repr: Predictive,
    pub space: GateSpace,
}

impl PredictiveDistribution {
    pub fn new(repr: Predictive, space: GateSpace) -> Self {
        Self { repr, space }
    }

    fn components(&self) -> Option<Vec<(f64, Gaussian1D)>> {
        match &self.repr {
            Predictive::Gaussian(g) => Some(vec![(1.0, *g)]),
            Predictive::GaussianMixture(c) => Some(c.clone()),
            _ => None,
        }
    }
}

fn mixture_pdf(c: &[(f64, Gaussian1D)], x: f64) -> f64 {
    c.iter().map(|(w, g)| w * g.pdf(x)).sum()
}

fn finite(v: f64) -> Result<f64, DivergenceError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(DivergenceError::NonFiniteDivergence)
    }
}

/// `D(m ‖ m_star)` under `spec`.
pub fn f_divergence(
    m: &PredictiveDistribution,
    m_star: &PredictiveDistribution,
    spec: &FDivergenceSpec,
) -> Result<f64, DivergenceError> {
    if m.space != m_star.space {
        return Err(DivergenceError::SupportMismatch);
    }
    match (&m.repr, &m_star.repr) {
        (Predictive::Gaussian(a), Predictive::Gaussian(b)) if spec.is_kl() => kl_gaussian(a, b),
        (Predictive::Bernoulli(p), Predictive::Bernoulli(q)) => {
            let mut acc = 0.0;
            for (ps, qs) in [(*p, *q), (1.0 - p, 1.0 - q)] {
                if qs <= 0.0 && ps <= 0.0 {
                    continue;
                }
                let qs = qs.max(DENSITY_FLOOR);
                acc += qs * spec.f(ps / qs);
            }
            finite(acc)
        }
        (Predictive::Sampled(a), Predictive::Sampled(b)) => {
            if a.dim() != b.dim() {
                return Err(DivergenceError::SupportMismatch);
            }
            monte_carlo_divergence(a.as_ref(), b.as_ref(), spec)
        }
        _ => match (m.components(), m_star.components()) {
            (Some(a), Some(b)) => quadrature_divergence(&a, &b, spec),
            _ => Err(DivergenceError::SupportMismatch),
        },
    }
}

fn quadrature_divergence(
    m: &[(f64, Gaussian1D)],
    m_star: &[(f64, Gaussian1D)],
    spec: &FDivergenceSpec,
) -> Result<f64, DivergenceError> {
    let rule = QuadratureRule::default_hermite();
    let log_ratio = |x: f64| {
        mixture_pdf(m, x).max(DENSITY_FLOOR).ln() - mixture_pdf(m_star, x).max(DENSITY_FLOOR).ln()
    };
    let mut acc = 0.0;
    if spec.is_kl() {
        for (w, g) in m {
            acc += w * rule.expect_normal(g.mean, g.sd(), log_ratio)?;
        }
    } else {
        for (w, g) in m_star {
            acc += w * rule.expect_normal(g.mean, g.sd(), |x| spec.f(log_ratio(x).exp()))?;
        }
    }
    finite(acc)
}

/// Monte Carlo estimate with common random numbers: sample `k` always comes
/// from the same sub-stream, so two calls that differ only in parts of the
/// model the sampler reaches later share their earlier draws.
fn monte_carlo_divergence(
    m: &dyn SampledDensity,
    m_star: &dyn SampledDensity,
    spec: &FDivergenceSpec,
) -> Result<f64, DivergenceError> {
    let n = spec.mc_samples.max(1);
    let mut acc = 0.0;
    for k in 0..n {
        let mut stream = RngStream::for_domain(spec.mc_seed, MC_DOMAIN, k as u64);
        if spec.is_kl() {
            let x = m.sample(&mut stream);
            acc += m.ln_density(&x) - m_star.ln_density(&x);
        } else {
            let x = m_star.sample(&mut stream);
            acc += spec.f((m.ln_density(&x) - m_star.ln_density(&x)).exp());
        }
    }
    finite(acc / n as f64)
}

/// Closed-form `KL(a ‖ b)` for scalar Gaussians.
pub fn kl_gaussian(a: &Gaussian1D, b: &Gaussian1D) -> Result<f64, DivergenceError> {
    for v in [a.variance, b.variance] {
        if !(v > 0.0) {
            return Err(DivergenceError::InvalidVariance(v));
        }
    }
    let r = a.variance / b.variance;
    let d = a.mean - b.mean;
    Ok(0.5 * (r + d * d / b.variance - 1.0 - r.ln()))
}

/// `KL(N(μa, Σa) ‖ N(μb, Σb))`.
pub fn kl_mvn(
    mean_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mean_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64, DivergenceError> {
    let k = mean_a.len() as f64;
    let chol_b = cov_b
        .clone()
        .cholesky()
        .ok_or(DivergenceError::InvalidVariance(cov_b.determinant()))?;
    let chol_a = cov_a
        .clone()
        .cholesky()
        .ok_or(DivergenceError::InvalidVariance(cov_a.determinant()))?;
    let inv_b = chol_b.inverse();
    let d = mean_b - mean_a;
    let trace = (&inv_b * cov_a).trace();
    let quad = (d.transpose() * &inv_b * &d)[(0, 0)];
    let ln_det = |l: &DMatrix<f64>| 2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    Ok(0.5 * (trace + quad - k + ln_det(&chol_b.l()) - ln_det(&chol_a.l())))
}

/// Bernoulli KL `h(x, y) = x ln(x/y) + (1−x) ln((1−x)/(1−y))`.
pub fn bernoulli_kl(x: f64, y: f64) -> f64 {
    let term = |p: f64, q: f64| if p <= 0.0 { 0.0 } else { p * (p / q.max(DENSITY_FLOOR)).ln() };
    term(x, y) + term(1.0 - x, 1.0 - y)
}

/// `g(x) = x − ln x − 1`.
pub fn g_fn(x: f64) -> f64 {
    x - x.ln() - 1.0
}

/// Gate divergence of the contaminated experiment under `θ* = 0`, with unit
/// noise: `½[θ²(σ₂²+m₂²)/(1+σ₁²) − ln(1 + θ²σ₂²/(1+σ₁²))]`. `sigma1` and
/// `sigma2` are standard deviations.
pub fn contaminated_gate_divergence(sigma1: f64, m2: f64, sigma2: f64, theta: f64) -> f64 {
    let base = 1.0 + sigma1 * sigma1;
    let t2 = theta * theta;
    let v2 = sigma2 * sigma2;
    0.5 * (t2 * (v2 + m2 * m2) / base - (t2 * v2 / base).ln_1p())
}

/// Divergence of fixing `ω_i = omega_star` in the calibration scenario, where
/// `i ∈ {1, 2}` and `sigma` holds standard deviations.
pub fn calibration_divergence(
    m: (f64, f64),
    sigma: (f64, f64),
    i: usize,
    omega_star: f64,
) -> Result<f64, DivergenceError> {
    let (v1, v2) = (sigma.0 * sigma.0, sigma.1 * sigma.1);
    for v in [v1, v2] {
        if !(v > 0.0) {
            return Err(DivergenceError::InvalidVariance(v));
        }
    }
    let (mi, v_other) = match i {
        1 => (m.0, v2),
        2 => (m.1, v1),
        _ => {
            return Err(DivergenceError::Distribution(DistError::InvalidParameter(format!(
                "calibration index must be 1 or 2, got {i}"
            ))))
        }
    };
    let total = v1 + v2;
    let d = mi - omega_star;
    Ok(0.5 * ((total + d * d) / v_other - (total / v_other).ln() - 1.0))
}

fn check_heckman(belief: &HeckmanBelief) -> Result<(), DivergenceError> {
    for v in belief.var {
        if !(v > 0.0) {
            return Err(DivergenceError::InvalidVariance(v));
        }
    }
    Ok(())
}

/// Divergence of the exclusion restriction `ω₂ = 0` in the selection model.
pub fn heckman_s(belief: &HeckmanBelief, theta: f64) -> Result<f64, DivergenceError> {
    check_heckman(belief)?;
    let l1 = inverse_mills(1)?;
    let [_, m2, _] = belief.mean;
    let [v1, v2, v3] = belief.var;
    let base = v1 + l1 * l1 * theta * theta * v3;
    finite(0.25 * (g_fn(1.0 + v2 / base) + m2 * m2 / base))
}

/// Divergence of the random-assignment assumption `θ* = 0` in the selection
/// model, including the entry-equation term [`heckman_entry_divergence`].
pub fn heckman_r(belief: &HeckmanBelief, theta: f64, rule: &QuadratureRule) -> Result<f64, DivergenceError> {
    check_heckman(belief)?;
    let l0 = inverse_mills(0)?;
    let l1 = inverse_mills(1)?;
    let [_, _, m3] = belief.mean;
    let [v1, v2, v3] = belief.var;
    let t2 = theta * theta;
    let a = l1 * l1 * t2;
    let b = l0 * l0 * t2;
    let outcome = 0.25
        * (g_fn(1.0 + a * v3 / (v2 + v1)) + a * m3 * m3 / (v2 + v1) + g_fn(1.0 + b * v3 / v1) + b * m3 * m3 / v1);
    finite(outcome + heckman_entry_divergence(theta, rule)?)
}

/// `D_{S1|S2,U}(θ) = ∫ ½φ(u)[h(θΦ(−1−u)+(1−θ)Φ(−1), Φ(−1)) + h(θΦ(−u)+(1−θ)/2, 1/2)] du`,
/// integrated against the standard normal with a Hermite rule.
pub fn heckman_entry_divergence(theta: f64, rule: &QuadratureRule) -> Result<f64, DivergenceError> {
    let p1 = std_normal_cdf(-1.0);
    let v = rule.expect_normal(0.0, 1.0, |u| {
        0.5 * (bernoulli_kl(theta * std_normal_cdf(-1.0 - u) + (1.0 - theta) * p1, p1)
            + bernoulli_kl(theta * std_normal_cdf(-u) + (1.0 - theta) * 0.5, 0.5))
    })?;
    finite(v)
}
