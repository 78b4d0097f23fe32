//! Partition scores: log marginal likelihoods and BIC approximations.
//!
//! Every score is additive over blocks, `score(B) = sum_k block_score(B_k) + ln Pr(B)`,
//! and defined up to an additive constant that does not depend on `B`.
//! Raw values are therefore not comparable across scorer kinds.

pub mod gaussian;
pub mod multinomial;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gaussian::{gaussian_bic_block, gaussian_bic_score, gaussian_block_logml, log_z, optimize_lambda, GaussianHyper, GaussianSuffStats};
pub use multinomial::{
    empirical_entropy, multinomial_bic_block, multinomial_bic_score, multinomial_block_logml, DirichletHyper,
    MultinomialSuffStats,
};

use crate::partition::{BlockKey, Partition};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-positive gamma argument in ln Z(d={d}, n={n})")]
    NonPositiveGammaArgument { d: usize, n: f64 },
    #[error("posterior scale matrix of block {0} is not positive definite")]
    NotPositiveDefinite(String),
    #[error("sample covariance of block {0} is singular")]
    SingularCovariance(String),
    #[error("effective sample size {n_eff} is smaller than dimension {dim}")]
    InsufficientSamples { n_eff: f64, dim: usize },
    #[error("variable {} has non-positive variance", .0 + 1)]
    NonPositiveVariance(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl ModelError {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ModelError::NonPositiveGammaArgument { .. } | ModelError::NotPositiveDefinite(_) | ModelError::SingularCovariance(_)
        )
    }
}

/// Anything that scores partitions additively over blocks.
pub trait BlockScorer: Send + Sync {
    fn dim(&self) -> usize;

    fn block_score(&self, block: &BlockKey) -> Result<f64, ModelError>;

    /// Log prior over partitions, up to a constant. Uniform by default.
    fn log_prior(&self, _p: &Partition) -> f64 {
        0.0
    }

    fn has_log_prior(&self) -> bool {
        false
    }

    /// `ln phi(B)`: sum of block scores plus the log prior.
    fn score(&self, p: &Partition) -> Result<f64, ModelError> {
        if p.dim() != self.dim() {
            return Err(ModelError::DimensionMismatch { expected: self.dim(), got: p.dim() });
        }
        let mut acc = self.log_prior(p);
        for b in p.blocks() {
            acc += self.block_score(&b)?;
        }
        Ok(acc)
    }
}

/// Which scoring rule is bound to which sufficient statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScoreModel {
    GaussianExact { stats: GaussianSuffStats, hyper: GaussianHyper },
    GaussianBic { stats: GaussianSuffStats },
    MultinomialExact { stats: MultinomialSuffStats, hyper: DirichletHyper },
    MultinomialBic { stats: MultinomialSuffStats },
    /// Every partition scores 0: the posterior equals the prior.
    Constant { dim: usize },
}

pub type LogPrior = Arc<dyn Fn(&Partition) -> f64 + Send + Sync>;

/// Immutable evaluation context mapping partitions to `ln phi(B)`.
#[derive(Clone)]
pub struct ModelScorer {
    model: ScoreModel,
    log_prior: Option<LogPrior>,
}

impl fmt::Debug for ModelScorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelScorer")
            .field("model", &self.model)
            .field("log_prior", &self.log_prior.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl ModelScorer {
    pub fn new(model: ScoreModel) -> Result<Self, ModelError> {
        match &model {
            ScoreModel::GaussianExact { stats, hyper } if stats.dim() != hyper.dim() => {
                return Err(ModelError::DimensionMismatch { expected: stats.dim(), got: hyper.dim() })
            }
            ScoreModel::Constant { dim: 0 } => return Err(ModelError::InvalidInput("dimension must be positive".into())),
            _ => {}
        }
        Ok(ModelScorer { model, log_prior: None })
    }

    /// Optimized diagonal scale with `nu = D`, applied to `S` as given.
    pub fn bayes_optim(stats: GaussianSuffStats) -> Result<Self, ModelError> {
        let hyper = optimize_lambda(&stats)?;
        Self::new(ScoreModel::GaussianExact { stats, hyper })
    }

    /// Correlation matrix input with `nu = D + 1` and identity scale.
    pub fn bayes_corr(stats: GaussianSuffStats) -> Result<Self, ModelError> {
        let stats = stats.to_correlation()?;
        let hyper = GaussianHyper::bayes_corr(stats.dim());
        Self::new(ScoreModel::GaussianExact { stats, hyper })
    }

    pub fn gaussian_bic(stats: GaussianSuffStats) -> Result<Self, ModelError> {
        Self::new(ScoreModel::GaussianBic { stats })
    }

    pub fn multinomial(stats: MultinomialSuffStats, hyper: DirichletHyper) -> Result<Self, ModelError> {
        Self::new(ScoreModel::MultinomialExact { stats, hyper })
    }

    pub fn multinomial_bic(stats: MultinomialSuffStats) -> Result<Self, ModelError> {
        Self::new(ScoreModel::MultinomialBic { stats })
    }

    pub fn constant(dim: usize) -> Result<Self, ModelError> {
        Self::new(ScoreModel::Constant { dim })
    }

    /// Adds a non-uniform log prior over partitions.
    pub fn with_log_prior(mut self, prior: LogPrior) -> Self {
        self.log_prior = Some(prior);
        self
    }

    pub fn model(&self) -> &ScoreModel {
        &self.model
    }
}

impl BlockScorer for ModelScorer {
    fn dim(&self) -> usize {
        match &self.model {
            ScoreModel::GaussianExact { stats, .. } | ScoreModel::GaussianBic { stats } => stats.dim(),
            ScoreModel::MultinomialExact { stats, .. } | ScoreModel::MultinomialBic { stats } => stats.dim(),
            ScoreModel::Constant { dim } => *dim,
        }
    }

    fn block_score(&self, block: &BlockKey) -> Result<f64, ModelError> {
        match &self.model {
            ScoreModel::GaussianExact { stats, hyper } => gaussian_block_logml(stats, hyper, block),
            ScoreModel::GaussianBic { stats } => gaussian_bic_block(stats, block),
            ScoreModel::MultinomialExact { stats, hyper } => multinomial_block_logml(stats, hyper, block),
            ScoreModel::MultinomialBic { stats } => multinomial_bic_block(stats, block),
            ScoreModel::Constant { .. } => Ok(0.0),
        }
    }

    fn log_prior(&self, p: &Partition) -> f64 {
        self.log_prior.as_ref().map_or(0.0, |f| f(p))
    }

    fn has_log_prior(&self) -> bool {
        self.log_prior.is_some()
    }
}

impl<S: BlockScorer + ?Sized> BlockScorer for &S {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn block_score(&self, block: &BlockKey) -> Result<f64, ModelError> {
        (**self).block_score(block)
    }
    fn log_prior(&self, p: &Partition) -> f64 {
        (**self).log_prior(p)
    }
    fn has_log_prior(&self) -> bool {
        (**self).has_log_prior()
    }
}

impl<S: BlockScorer + ?Sized> BlockScorer for Arc<S> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn block_score(&self, block: &BlockKey) -> Result<f64, ModelError> {
        (**self).block_score(block)
    }
    fn log_prior(&self, p: &Partition) -> f64 {
        (**self).log_prior(p)
    }
    fn has_log_prior(&self) -> bool {
        (**self).has_log_prior()
    }
}
