//! Gibbs sampler under the tensor normal prior `vec(B) ~ N(0, Σ)`.
//!
//! With the first mode varying fastest in `vec`, the prior covariance is
//! `Σ_M ⊗ ... ⊗ Σ_1`, so its precision is `Σ_M⁻¹ ⊗ ... ⊗ Σ_1⁻¹`.
//! One sweep draws `vec(B)`, then `σ²`, then `μ`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::output::{ChainOutput, Draw, ModelKind};
use super::parafac::{mu_params, sigma2_params};
use super::{sampler_error, McmcSettings, RegressionData};
use crate::distributions::{floor_positive, sample_inverse_gamma, sample_mvn_from_precision};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, cholesky_solve};
use crate::rng::rng_from_seed;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPriorConfig {
    /// `Σ_1, ..., Σ_M`, one symmetric positive definite matrix per mode.
    pub mode_covariances: Vec<DMatrix<f64>>,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub sigma2_mu: f64,
}

impl GaussianPriorConfig {
    /// `Σ_m = v^{1/M} I` so that every entry of `B` has prior variance `v`.
    pub fn isotropic(dims: &[usize], variance: f64) -> Self {
        let per_mode = variance.powf(1.0 / dims.len().max(1) as f64);
        Self {
            mode_covariances: dims
                .iter()
                .map(|&q| DMatrix::identity(q, q) * per_mode)
                .collect(),
            a_sigma: 3.0,
            b_sigma: 1.0,
            sigma2_mu: 1.0,
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.mode_covariances.iter().map(|s| s.nrows()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("sigma2_mu", self.sigma2_mu),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.mode_covariances.is_empty() {
            return Err(Error::Parameter(
                "at least one mode covariance is required".into(),
            ));
        }
        for (m, s) in self.mode_covariances.iter().enumerate() {
            if !s.is_square() || s.nrows() == 0 {
                return Err(Error::Shape(format!(
                    "Σ_{} is {}x{}",
                    m + 1,
                    s.nrows(),
                    s.ncols()
                )));
            }
            let asym = (s - s.transpose()).abs().max();
            if asym > 1e-12 * s.abs().max() {
                return Err(Error::Parameter(format!("Σ_{} is not symmetric", m + 1)));
            }
            cholesky_lower(s.clone())
                .map_err(|_| Error::Parameter(format!("Σ_{} is not positive definite", m + 1)))?;
        }
        Ok(())
    }

    /// `Σ_1⁻¹, ..., Σ_M⁻¹`.
    pub fn mode_precisions(&self) -> Result<Vec<DMatrix<f64>>> {
        self.mode_covariances
            .iter()
            .map(|s| {
                let l = cholesky_lower(s.clone())?;
                let n = s.nrows();
                let mut inv = DMatrix::zeros(n, n);
                for j in 0..n {
                    let e = DVector::from_fn(n, |i, _| if i == j { 1.0 } else { 0.0 });
                    inv.set_column(j, &cholesky_solve(&l, &e)?);
                }
                Ok(inv)
            })
            .collect()
    }

    /// `Σ_M⁻¹ ⊗ ... ⊗ Σ_1⁻¹`.
    pub fn prior_precision(&self) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::identity(1, 1);
        for inv in self.mode_precisions()? {
            out = inv.kronecker(&out);
        }
        Ok(out)
    }
}

/// Values held fixed instead of sampled.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GaussianFixed {
    pub sigma2: Option<f64>,
    pub mu: Option<f64>,
}

pub fn run_gaussian_chain(
    data: &RegressionData,
    config: &GaussianPriorConfig,
    settings: &McmcSettings,
    seed: u64,
    fixed: GaussianFixed,
) -> Result<ChainOutput> {
    settings.validate()?;
    config.validate()?;
    if config.dims() != data.shape() {
        return Err(Error::Shape(format!(
            "prior covers shape {:?} but covariates have shape {:?}",
            config.dims(),
            data.shape()
        )));
    }
    let q = data.dim();
    let t = data.len();
    let prior = config.prior_precision()?;
    let (xtx, xt) = if t > 0 {
        let xt = DMatrix::from_column_slice(q, t, data.covariates());
        (&xt * xt.transpose(), xt)
    } else {
        (DMatrix::zeros(q, q), DMatrix::zeros(q, 0))
    };
    let y = data.y();
    let mut rng = rng_from_seed(seed);
    let mut mu = fixed.mu.unwrap_or_else(|| {
        if t > 0 {
            y.iter().sum::<f64>() / t as f64
        } else {
            0.0
        }
    });
    let mut sigma2 = fixed.sigma2.unwrap_or_else(|| {
        if t >= 2 {
            let m = y.iter().sum::<f64>() / t as f64;
            floor_positive(y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t - 1) as f64)
                .max(1e-6)
        } else {
            1.0
        }
    });
    let mut draws = Vec::with_capacity(settings.retained());
    for i in 0..settings.iterations {
        let centred = DVector::from_iterator(t, y.iter().map(|v| v - mu));
        let h = &xt * centred / sigma2;
        let precision = &xtx / sigma2 + &prior;
        let b = sample_mvn_from_precision(&h, &precision, &mut rng)
            .map_err(|e| sampler_error("B", i, e))?;
        let pred = data.linear_predictor(b.as_slice());
        if fixed.sigma2.is_none() {
            let (shape, scale) = sigma2_params(y, &pred, mu, config.a_sigma, config.b_sigma);
            sigma2 = sample_inverse_gamma(shape, scale, &mut rng)
                .map_err(|e| sampler_error("sigma2", i, e))?;
        }
        if fixed.mu.is_none() {
            let (mean, var) = mu_params(y, &pred, sigma2, config.sigma2_mu);
            let z: f64 = StandardNormal.sample(&mut rng);
            mu = mean + var.sqrt() * z;
        }
        if !sigma2.is_finite() || !(sigma2 > 0.0) || !mu.is_finite() {
            return Err(sampler_error(
                "mu",
                i,
                Error::Domain(format!(
                    "state left its support: mu = {mu}, sigma2 = {sigma2}"
                )),
            ));
        }
        if settings.keeps(i) {
            draws.push(Draw {
                coefficient: b.as_slice().to_vec(),
                mu,
                sigma2,
                margins: None,
                margin_variances: None,
            });
        }
    }
    Ok(ChainOutput {
        model: ModelKind::Gaussian,
        coefficient_shape: data.shape().to_vec(),
        rank: None,
        iterations: settings.iterations,
        burn_in: settings.burn_in,
        thin: settings.thin,
        seed,
        projection_id: None,
        draws,
    })
}
