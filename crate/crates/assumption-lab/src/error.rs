use thiserror::Error;

use crate::distributions::DistError;
use crate::divergence::DivergenceError;
use crate::graph::GraphError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error(transparent)]
    Divergence(#[from] DivergenceError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("likelihood annihilated all belief mass; grid resolution is too coarse")]
    ZeroLikelihood,
    #[error("scenario has no latent variable, so the s-and-u space is unavailable")]
    UnsupportedSpace,
    #[error("{0}")]
    Unsupported(String),
    #[error("context value {0} outside [0, 1]")]
    InvalidTheta(f64),
    #[error("input outside the model domain: {0}")]
    OutOfDomain(String),
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    #[error("declared active parameters {declared:?} contradict numeric probe {measured:?}")]
    QStarMismatch { declared: Vec<usize>, measured: Vec<usize> },
    #[error("declared graph does not cover the equations: {0}")]
    DagMismatch(String),
    #[error("gate divergence is not monotone in the context on the probe grid")]
    NonMonotone,
    #[error("the research region has zero probability mass")]
    ZeroMassRegion,
    #[error("fixed-point iteration did not converge within {0} iterations")]
    NoConvergence(usize),
}

impl Error {
    /// Numeric failures, as opposed to configuration mistakes.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Self::Divergence(DivergenceError::NonFiniteDivergence)
                | Self::Distribution(DistError::NonFiniteIntegrand(_))
                | Self::ZeroLikelihood
                | Self::NonMonotone
                | Self::ZeroMassRegion
                | Self::NoConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
