//! Posterior samplers for tensor regression on (compressed) covariates.
//!
//! Two prior families are supported: the hierarchical PARAFAC shrinkage prior
//! ([`parafac`]) and the matrix/tensor normal prior ([`gaussian`]). Both take
//! a [`RegressionData`] whose covariates already went through the projection.

pub mod gaussian;
pub mod output;
pub mod parafac;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub use gaussian::{run_gaussian_chain, GaussianFixed, GaussianPriorConfig};
pub use output::{ChainOutput, Draw, ModelKind};
pub use parafac::{
    run_parafac_chain, ParafacPriorConfig, ParafacSampler, ParafacState, ScaleUpdate,
};

/// Responses and covariate tensors of a common shape, stored observation by
/// observation in the canonical tensor layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionData {
    shape: Vec<usize>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl RegressionData {
    pub fn new(xs: &[DenseTensor], y: Vec<f64>) -> Result<Self> {
        let first = xs
            .first()
            .ok_or_else(|| Error::Empty("no covariates; use RegressionData::empty".into()))?;
        let shape = first.shape().to_vec();
        if xs.len() != y.len() {
            return Err(Error::Shape(format!(
                "{} covariates but {} responses",
                xs.len(),
                y.len()
            )));
        }
        let mut x = Vec::with_capacity(xs.len() * first.len());
        for (t, xt) in xs.iter().enumerate() {
            if xt.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "covariate {t} has shape {:?}, expected {shape:?}",
                    xt.shape()
                )));
            }
            x.extend_from_slice(xt.data());
        }
        Ok(Self { shape, x, y })
    }

    pub fn empty(shape: &[usize]) -> Result<Self> {
        DenseTensor::zeros(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            x: vec![],
            y: vec![],
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of observations `T`.
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Entries per covariate tensor.
    pub fn dim(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn covariate(&self, t: usize) -> &[f64] {
        let q = self.dim();
        &self.x[t * q..(t + 1) * q]
    }

    /// All covariates, observation-major: a `T × Q` row-major matrix.
    pub fn covariates(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Replaces the responses, keeping the covariates.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.len() {
            return Err(Error::Shape(format!(
                "{} responses for {} covariates",
                y.len(),
                self.len()
            )));
        }
        Ok(Self {
            shape: self.shape.clone(),
            x: self.x.clone(),
            y,
        })
    }

    /// `⟨B, X_t⟩` for every observation.
    pub fn linear_predictor(&self, coefficient: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|t| crate::tensor::dot(self.covariate(t), coefficient))
            .collect()
    }
}

/// Isotropic tensor normal prior, `Σ_m = v^{1/M} I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsotropicGaussian {
    /// Prior variance `v` of every coefficient entry.
    pub variance: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub sigma2_mu: f64,
}

impl Default for IsotropicGaussian {
    fn default() -> Self {
        Self {
            variance: 1.0,
            a_sigma: 3.0,
            b_sigma: 1.0,
            sigma2_mu: 1.0,
        }
    }
}

impl IsotropicGaussian {
    pub fn config(&self, dims: &[usize]) -> GaussianPriorConfig {
        GaussianPriorConfig {
            a_sigma: self.a_sigma,
            b_sigma: self.b_sigma,
            sigma2_mu: self.sigma2_mu,
            ..GaussianPriorConfig::isotropic(dims, self.variance)
        }
    }
}

/// Prior family and hyperparameters, independent of the coefficient shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PriorSpec {
    Parafac(ParafacPriorConfig),
    Gaussian(IsotropicGaussian),
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec::Parafac(ParafacPriorConfig::default())
    }
}

impl PriorSpec {
    pub fn family(&self, dims: &[usize]) -> crate::ensemble::PriorFamily {
        match self {
            PriorSpec::Parafac(c) => crate::ensemble::PriorFamily::Parafac(c.clone()),
            PriorSpec::Gaussian(g) => crate::ensemble::PriorFamily::Gaussian(g.config(dims)),
        }
    }

    pub fn fit(
        &self,
        data: &RegressionData,
        settings: &McmcSettings,
        seed: u64,
    ) -> Result<ChainOutput> {
        match self {
            PriorSpec::Parafac(c) => run_parafac_chain(data, c, settings, seed),
            PriorSpec::Gaussian(g) => run_gaussian_chain(
                data,
                &g.config(data.shape()),
                settings,
                seed,
                GaussianFixed::default(),
            ),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcSettings {
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thin")]
    pub thin: usize,
    /// How the PARAFAC sampler updates `(ζ, τ)`; ignored by the Gaussian one.
    #[serde(default)]
    pub scale_update: ScaleUpdate,
}

fn default_iterations() -> usize {
    1000
}

fn default_burn_in() -> usize {
    200
}

fn default_thin() -> usize {
    1
}

impl Default for McmcSettings {
    fn default() -> Self {
        Self {
            iterations: default_iterations(),
            burn_in: default_burn_in(),
            thin: default_thin(),
            scale_update: ScaleUpdate::default(),
        }
    }
}

impl McmcSettings {
    pub fn new(iterations: usize, burn_in: usize, thin: usize) -> Self {
        Self {
            iterations,
            burn_in,
            thin,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Parameter("thin must be >= 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Parameter(format!(
                "burn-in {} leaves no draws out of {} iterations",
                self.burn_in, self.iterations
            )));
        }
        Ok(())
    }

    /// Number of retained draws, `(iterations − burn_in) / thin`.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether zero-based iteration `i` is stored.
    pub fn keeps(&self, i: usize) -> bool {
        i >= self.burn_in && (i + 1 - self.burn_in).is_multiple_of(self.thin)
    }
}

pub(crate) fn sampler_error(block: &'static str, iteration: usize, e: Error) -> Error {
    Error::Sampler {
        block,
        iteration,
        message: e.to_string(),
    }
}
