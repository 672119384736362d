//! Scalar probability primitives, Gaussian quadrature and the deterministic
//! random-number contract shared by the rest of the crate.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta as beta_fn;
use thiserror::Error;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no probability mass at or below cutoff {0}")]
    ZeroMassCutoff(f64),
    #[error("integrand is not finite at node {0}")]
    NonFiniteIntegrand(f64),
}

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF, computed as `erfc(-x/√2)/2`.
///
/// The complementary error function avoids cancellation in the lower tail, so
/// the absolute error stays at the level of the erfc approximation (a few ulp).
pub fn std_normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn std_normal_pdf_cdf(x: f64) -> (f64, f64) {
    (std_normal_pdf(x), std_normal_cdf(x))
}

/// `E[u | u ≥ c]` for a standard normal `u`.
pub fn normal_hazard(c: f64) -> f64 {
    std_normal_pdf(c) / std_normal_cdf(-c)
}

/// The selection-correction term `λ_i = φ(−i)/(1−Φ(−i))` for `i ∈ {0, 1}`.
pub fn inverse_mills(i: u8) -> Result<f64, DistError> {
    match i {
        0 | 1 => Ok(normal_hazard(-f64::from(i))),
        _ => Err(DistError::InvalidParameter(format!(
            "inverse Mills index must be 0 or 1, got {i}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub mean: f64,
    pub variance: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self, DistError> {
        if !mean.is_finite() || !(variance > 0.0) || !variance.is_finite() {
            return Err(DistError::InvalidParameter(format!(
                "Gaussian needs finite mean and positive variance, got ({mean}, {variance})"
            )));
        }
        Ok(Self { mean, variance })
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        std_normal_pdf((x - self.mean) / self.sd()) / self.sd()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = x - self.mean;
        -0.5 * (z * z / self.variance + (2.0 * PI * self.variance).ln())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        std_normal_cdf((x - self.mean) / self.sd())
    }
}

/// Distribution of the per-period context parameter on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextDistribution {
    Uniform01,
    Beta { a: f64, b: f64 },
    Discrete { points: Vec<f64>, weights: Vec<f64> },
}

impl ContextDistribution {
    pub fn beta(a: f64, b: f64) -> Result<Self, DistError> {
        let d = Self::Beta { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn discrete(points: Vec<f64>, weights: Vec<f64>) -> Result<Self, DistError> {
        let d = Self::Discrete { points, weights };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            Self::Uniform01 => Ok(()),
            Self::Beta { a, b } => {
                if *a > 0.0 && *b > 0.0 && a.is_finite() && b.is_finite() {
                    Ok(())
                } else {
                    Err(DistError::InvalidParameter(format!(
                        "beta shape parameters must be positive, got ({a}, {b})"
                    )))
                }
            }
            Self::Discrete { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return Err(DistError::InvalidParameter(
                        "discrete context needs equally many points and weights".into(),
                    ));
                }
                if points.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(DistError::InvalidParameter(
                        "discrete context points must lie in [0, 1]".into(),
                    ));
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return Err(DistError::InvalidParameter(
                        "discrete context weights must be nonnegative".into(),
                    ));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(DistError::InvalidParameter(format!(
                        "discrete context weights sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Uniform01 => 0.5,
            Self::Beta { a, b } => a / (a + b),
            Self::Discrete { points, weights } => {
                points.iter().zip(weights).map(|(p, w)| p * w).sum()
            }
        }
    }

    /// Density on `[0, 1]`; `None` for the discrete kind.
    pub fn pdf(&self, x: f64) -> Option<f64> {
        match self {
            Self::Uniform01 => Some(if (0.0..=1.0).contains(&x) { 1.0 } else { 0.0 }),
            Self::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    return Some(0.0);
                }
                let ln = (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - beta_fn::ln_beta(*a, *b);
                Some(ln.exp())
            }
            Self::Discrete { .. } => None,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return 1.0;
        }
        match self {
            Self::Uniform01 => x,
            Self::Beta { a, b } => beta_fn::beta_reg(*a, *b, x),
            Self::Discrete { points, weights } => points
                .iter()
                .zip(weights)
                .filter(|(p, _)| **p <= x)
                .map(|(_, w)| w)
                .sum(),
        }
    }

    /// `P(lo ≤ θ ≤ hi)`.
    pub fn mass(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Self::Discrete { points, weights } => points
                .iter()
                .zip(weights)
                .filter(|(p, _)| (lo..=hi).contains(*p))
                .map(|(_, w)| w)
                .sum(),
            _ => (self.cdf(hi) - self.cdf(lo)).max(0.0),
        }
    }

    /// Returns `(P(θ ∈ [lo, hi]), E[f(θ); θ ∈ [lo, hi]])`.
    ///
    /// Continuous kinds integrate `f·p_θ` with the supplied Gauss–Legendre rule
    /// rescaled to `[lo, hi]`; the mass uses the exact CDF.
    pub fn expect_on<F: Fn(f64) -> f64>(
        &self,
        lo: f64,
        hi: f64,
        rule: &QuadratureRule,
        f: F,
    ) -> Result<(f64, f64), DistError> {
        let (lo, hi) = (lo.max(0.0), hi.min(1.0));
        if hi < lo {
            return Ok((0.0, 0.0));
        }
        match self {
            Self::Discrete { points, weights } => {
                let mut mass = 0.0;
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(weights) {
                    if (lo..=hi).contains(p) {
                        mass += w;
                        acc += w * f(*p);
                    }
                }
                Ok((mass, acc))
            }
            _ => {
                let mass = self.mass(lo, hi);
                if hi == lo {
                    return Ok((mass, 0.0));
                }
                let acc = rule.integrate_on(lo, hi, |x| f(x) * self.pdf(x).unwrap_or(0.0))?;
                Ok((mass, acc))
            }
        }
    }

    pub fn sample(&self, stream: &mut RngStream) -> f64 {
        match self {
            Self::Uniform01 => stream.uniform(),
            Self::Beta { a, b } => rand_distr::Beta::new(*a, *b)
                .expect("validated shape parameters")
                .sample(stream),
            Self::Discrete { points, weights } => {
                let u = stream.uniform();
                let mut acc = 0.0;
                for (p, w) in points.iter().zip(weights) {
                    acc += w;
                    if u < acc {
                        return *p;
                    }
                }
                *points.last().expect("nonempty support")
            }
        }
    }
}

/// `E[θ | θ ≤ cutoff]`.
pub fn truncated_mean(dist: &ContextDistribution, cutoff: f64) -> Result<f64, DistError> {
    let mass = dist.cdf(cutoff);
    if !(mass > 0.0) {
        return Err(DistError::ZeroMassCutoff(cutoff));
    }
    let c = cutoff.min(1.0);
    Ok(match dist {
        ContextDistribution::Uniform01 => c / 2.0,
        ContextDistribution::Beta { a, b } => {
            if c >= 1.0 {
                a / (a + b)
            } else {
                a / (a + b) * beta_fn::beta_reg(a + 1.0, *b, c) / mass
            }
        }
        ContextDistribution::Discrete { points, weights } => {
            points
                .iter()
                .zip(weights)
                .filter(|(p, _)| **p <= cutoff)
                .map(|(p, w)| p * w)
                .sum::<f64>()
                / mass
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    /// Weight `e^{−x²}` on the real line.
    GaussHermite,
    /// Unit weight on `[−1, 1]`.
    GaussLegendre,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn gauss_hermite(n: usize) -> Self {
        let (nodes, weights) = hermite_nodes(n);
        Self { kind: QuadratureKind::GaussHermite, nodes, weights }
    }

    pub fn gauss_legendre(n: usize) -> Self {
        let (nodes, weights) = legendre_nodes(n);
        Self { kind: QuadratureKind::GaussLegendre, nodes, weights }
    }

    /// The 64-node Gauss–Hermite rule used for Gaussian expectations.
    pub fn default_hermite() -> &'static Self {
        static RULE: OnceLock<QuadratureRule> = OnceLock::new();
        RULE.get_or_init(|| Self::gauss_hermite(64))
    }

    /// The 128-node Gauss–Legendre rule used for context integrals.
    pub fn default_legendre() -> &'static Self {
        static RULE: OnceLock<QuadratureRule> = OnceLock::new();
        RULE.get_or_init(|| Self::gauss_legendre(128))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_k f(x_k)` against the rule's native weight function.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64, DistError> {
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let y = f(*x);
            if !y.is_finite() {
                return Err(DistError::NonFiniteIntegrand(*x));
            }
            acc += w * y;
        }
        Ok(acc)
    }

    /// `∫_a^b f` with a Legendre rule mapped from `[−1, 1]`.
    pub fn integrate_on<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> Result<f64, DistError> {
        debug_assert_eq!(self.kind, QuadratureKind::GaussLegendre);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        Ok(half * self.integrate(|x| f(mid + half * x))?)
    }

    /// `E[f(X)]` for `X ~ N(mean, sd²)` with a Hermite rule.
    pub fn expect_normal<F: Fn(f64) -> f64>(&self, mean: f64, sd: f64, f: F) -> Result<f64, DistError> {
        debug_assert_eq!(self.kind, QuadratureKind::GaussHermite);
        let scale = SQRT_2 * sd;
        Ok(self.integrate(|x| f(mean + scale * x))? / PI.sqrt())
    }
}

fn legendre_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / dp;
            if (z - z1).abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn hermite_nodes(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = PI.powf(-0.25);
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let mut z = 0.0_f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * nodes[0],
            3 => 1.91 * z - 0.91 * nodes[1],
            _ => 2.0 * z - nodes[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-14 {
                break;
            }
        }
        nodes[i] = z;
        weights[i] = 2.0 / (pp * pp);
    }
    // The recurrence produces the positive half in descending order.
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
    for i in 0..m {
        out.push((nodes[i], weights[i]));
        if !(n % 2 == 1 && i == m - 1) {
            out.push((-nodes[i], weights[i]));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.into_iter().unzip()
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic random stream owned by one replication.
///
/// The generator is ChaCha8 (a counter-based stream cipher). Its 256-bit key
/// is four successive SplitMix64 outputs seeded by `master_seed`, and the
/// replication index selects the 64-bit stream id, so every
/// `(master_seed, replication_index)` pair addresses a distinct, reproducible
/// sequence. Normal draws use the ziggurat sampler of `rand_distr`.
#[derive(Debug, Clone)]
pub struct RngStream {
    master_seed: u64,
    replication_index: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, replication_index: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = master_seed;
        for chunk in key.chunks_exact_mut(8) {
            state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
            chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replication_index);
        Self { master_seed, replication_index, rng }
    }

    /// A stream for an auxiliary purpose, keyed away from the main streams.
    pub fn for_domain(master_seed: u64, domain: u64, index: u64) -> Self {
        Self::new(splitmix64(master_seed ^ splitmix64(domain)), index)
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn replication_index(&self) -> u64 {
        self.replication_index
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn gaussian(&mut self, mean: f64, sd: f64) -> f64 {
        mean + sd * self.standard_normal()
    }

    pub fn bernoulli(&mut self, p: f64) -> Result<bool, DistError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(DistError::InvalidParameter(format!(
                "Bernoulli probability must lie in [0, 1], got {p}"
            )));
        }
        Ok(self.uniform() < p)
    }

    pub fn draw(&mut self, what: &Draw) -> Result<f64, DistError> {
        match what {
            Draw::Gaussian(g) => Ok(self.gaussian(g.mean, g.sd())),
            Draw::Bernoulli(p) => Ok(if self.bernoulli(*p)? { 1.0 } else { 0.0 }),
            Draw::Context(d) => {
                d.validate()?;
                Ok(d.sample(self))
            }
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// What to draw in [`RngStream::draw`].
#[derive(Debug, Clone)]
pub enum Draw {
    Gaussian(Gaussian1D),
    Bernoulli(f64),
    Context(ContextDistribution),
}
