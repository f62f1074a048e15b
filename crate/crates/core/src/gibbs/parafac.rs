//! Gibbs sampler under the hierarchical PARAFAC shrinkage prior.
//!
//! Prior, for `d = 1..D`, `m = 1..M`, `j = 1..q_m`:
//!
//! ```text
//! B = Σ_d γ_1^(d) ∘ ... ∘ γ_M^(d)
//! γ_m^(d) ~ N(0, τ ζ_d W_m^(d)),   W_m^(d) = diag(w_{m,j}^(d))
//! w_{m,j}^(d) ~ Exp((λ_m^(d))² / 2),   λ_m^(d) ~ Ga(a_λ, b_λ)
//! ζ ~ Dir(α, ..., α),   τ ~ Ga(a_τ, b_τ)
//! μ ~ N(0, σ²_μ),   σ² ~ IG(a_σ, b_σ)
//! ```
//!
//! All dimensions are those of the compressed covariates. One sweep updates
//! margins (component outer, mode inner), then `ζ`, `τ`, `λ`, `w`, `σ²`, `μ`.
//! `λ` is drawn with `w` integrated out, so the `(λ, w)` pair is an exact
//! block update.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::output::{ChainOutput, Draw, ModelKind};
use super::{sampler_error, McmcSettings, RegressionData};
use crate::distributions::{
    floor_positive, normalize_log_weights, sample_dirichlet, sample_gamma, sample_gig,
    sample_inverse_gamma, sample_mvn_from_precision, GigParams,
};
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, StreamRng};
use crate::tensor::{dot, MarginSet, PartialContractor};

/// How block 1 updates the Dirichlet weights `ζ` and the global scale `τ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleUpdate {
    /// Metropolis-within-Gibbs on `ψ_d = τ ζ_d` (which leaves the joint
    /// posterior invariant), followed by an exact draw of `τ` from its full
    /// conditional.
    #[default]
    Joint,
    /// Draw every `ζ_d` from its unconstrained GIG conditional and rescale
    /// the vector onto the simplex, then draw `τ`. This does not leave the
    /// posterior exactly invariant.
    Renormalize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParafacPriorConfig {
    pub rank: usize,
    /// Dirichlet concentration; `1/D²` when absent.
    pub alpha: Option<f64>,
    pub a_tau: f64,
    pub b_tau: f64,
    pub a_lambda: f64,
    pub b_lambda: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub sigma2_mu: f64,
}

impl Default for ParafacPriorConfig {
    fn default() -> Self {
        Self::with_rank(5)
    }
}

impl ParafacPriorConfig {
    pub fn with_rank(rank: usize) -> Self {
        Self {
            rank,
            alpha: None,
            a_tau: 3.0,
            b_tau: 100.0,
            a_lambda: 20.0,
            b_lambda: 2.0,
            a_sigma: 3.0,
            b_sigma: 1.0,
            sigma2_mu: 1.0,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
            .unwrap_or(1.0 / (self.rank * self.rank).max(1) as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Parameter("PARAFAC rank D must be >= 1".into()));
        }
        let named = [
            ("alpha", self.alpha()),
            ("a_tau", self.a_tau),
            ("b_tau", self.b_tau),
            ("a_lambda", self.a_lambda),
            ("b_lambda", self.b_lambda),
            ("a_sigma", self.a_sigma),
            ("b_sigma", self.b_sigma),
            ("sigma2_mu", self.sigma2_mu),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParafacState {
    pub margins: MarginSet,
    pub zeta: Vec<f64>,
    pub tau: f64,
    /// `lambda[d][m]`.
    pub lambda: Vec<Vec<f64>>,
    /// `w[d][m][j]`.
    pub w: Vec<Vec<Vec<f64>>>,
    pub mu: f64,
    pub sigma2: f64,
}

impl ParafacState {
    /// Deterministic-scale starting point with small random margins.
    pub fn initial(
        dims: &[usize],
        config: &ParafacPriorConfig,
        data: &RegressionData,
        rng: &mut StreamRng,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.rank;
        let margins = MarginSet::new(
            (0..d)
                .map(|_| {
                    dims.iter()
                        .map(|&q| {
                            (0..q)
                                .map(|_| {
                                    let z: f64 = StandardNormal.sample(rng);
                                    0.1 * z
                                })
                                .collect()
                        })
                        .collect()
                })
                .collect(),
        )?;
        let lambda0 = config.a_lambda / config.b_lambda;
        let y = data.y();
        let n = y.len() as f64;
        let (mu, sigma2) = if y.len() >= 2 {
            let mean = y.iter().sum::<f64>() / n;
            let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, floor_positive(var).max(1e-6))
        } else {
            (y.first().copied().unwrap_or(0.0), 1.0)
        };
        Ok(Self {
            margins,
            zeta: vec![1.0 / d as f64; d],
            tau: config.a_tau / config.b_tau,
            lambda: vec![vec![lambda0; dims.len()]; d],
            w: (0..d)
                .map(|_| {
                    dims.iter()
                        .map(|&q| vec![2.0 / (lambda0 * lambda0); q])
                        .collect()
                })
                .collect(),
            mu,
            sigma2,
        })
    }

    pub fn rank(&self) -> usize {
        self.margins.rank()
    }

    /// `Σ_m γ_m^(d)ᵀ (W_m^(d))⁻¹ γ_m^(d)`.
    pub fn quad_form(&self, d: usize) -> f64 {
        (0..self.margins.order())
            .map(|m| {
                self.margins
                    .margin(d, m)
                    .iter()
                    .zip(&self.w[d][m])
                    .map(|(g, w)| g * g / w)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn coefficient(&self) -> Vec<f64> {
        self.margins.compose().into_data()
    }

    /// Prior variances `τ ζ_d w_{m,j}` flattened like the margins.
    pub fn margin_variances(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (d, comp) in self.w.iter().enumerate() {
            for wm in comp {
                out.extend(
                    wm.iter()
                        .map(|w| floor_positive(self.tau * self.zeta[d] * w)),
                );
            }
        }
        out
    }

    /// Positivity and simplex invariants.
    pub fn check(&self) -> Result<()> {
        let bad =
            |what: &str, v: f64| Error::Domain(format!("{what} = {v} violates its constraint"));
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(bad("tau", self.tau));
        }
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(bad("sigma2", self.sigma2));
        }
        if !self.mu.is_finite() {
            return Err(bad("mu", self.mu));
        }
        if let Some(&z) = self.zeta.iter().find(|&&z| !(z > 0.0)) {
            return Err(bad("zeta", z));
        }
        let s: f64 = self.zeta.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(bad("sum of zeta", s));
        }
        for (d, comp) in self.w.iter().enumerate() {
            for (m, wm) in comp.iter().enumerate() {
                let l = self.lambda[d][m];
                if !(l > 0.0) || !l.is_finite() {
                    return Err(bad("lambda", l));
                }
                if let Some(&w) = wm.iter().find(|&&w| !(w > 0.0) || !w.is_finite()) {
                    return Err(bad("w", w));
                }
                if let Some(&g) = self.margins.margin(d, m).iter().find(|g| !g.is_finite()) {
                    return Err(bad("gamma", g));
                }
            }
        }
        Ok(())
    }
}

/// `ζ_d | γ, τ, w ~ GIG(α − Σ q_m/2, 0, Σ_m γᵀW⁻¹γ / τ)`, scale floored.
pub fn fc_zeta(d: usize, state: &ParafacState, config: &ParafacPriorConfig) -> Result<GigParams> {
    let q: usize = state.margins.dims().iter().sum();
    GigParams::new(
        config.alpha() - q as f64 / 2.0,
        0.0,
        floor_positive(state.quad_form(d) / state.tau),
    )
}

/// `τ | γ, ζ, w ~ GIG(a_τ − D Σ q_m/2, 2 b_τ, Σ_d Σ_m γᵀW⁻¹γ / ζ_d)`.
pub fn fc_tau(state: &ParafacState, config: &ParafacPriorConfig) -> Result<GigParams> {
    let q: usize = state.margins.dims().iter().sum();
    let d = state.rank();
    let b: f64 = (0..d).map(|k| state.quad_form(k) / state.zeta[k]).sum();
    GigParams::new(
        config.a_tau - (d * q) as f64 / 2.0,
        2.0 * config.b_tau,
        floor_positive(b),
    )
}

/// `λ_m^(d) | γ, τ, ζ ~ Ga(a_λ + q_m, Σ_j |γ_{m,j}^(d)| / √(τ ζ_d) + b_λ)`
/// as `(shape, rate)`.
pub fn fc_lambda(
    d: usize,
    m: usize,
    state: &ParafacState,
    config: &ParafacPriorConfig,
) -> (f64, f64) {
    let g = state.margins.margin(d, m);
    let l1: f64 = g.iter().map(|v| v.abs()).sum();
    (
        config.a_lambda + g.len() as f64,
        l1 / (state.tau * state.zeta[d]).sqrt() + config.b_lambda,
    )
}

/// `w_{m,j}^(d) | γ, λ, τ, ζ ~ GIG(1/2, λ², γ² / (τ ζ_d))`.
pub fn fc_w(d: usize, m: usize, j: usize, state: &ParafacState) -> Result<GigParams> {
    let g = state.margins.margin(d, m)[j];
    let l = state.lambda[d][m];
    GigParams::new(0.5, l * l, g * g / (state.tau * state.zeta[d]))
}

/// Precision `P` and mean term `h` of `γ_m^(d) | rest ~ N(P⁻¹h, P⁻¹)`.
pub fn fc_margin(
    d: usize,
    m: usize,
    state: &ParafacState,
    data: &RegressionData,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    check_dims(state, data)?;
    if d >= state.rank() || m >= state.margins.order() {
        return Err(Error::Shape(format!("margin ({d}, {m}) out of range")));
    }
    let comp = component_predictions(state, data);
    let q = state.margins.dims()[m];
    let mut psi = vec![0.0; data.len() * q];
    let contractor = PartialContractor::new(state.margins.component(d), m);
    for t in 0..data.len() {
        contractor.apply(data.covariate(t), &mut psi[t * q..(t + 1) * q]);
    }
    Ok(accumulate_margin(d, m, state, data, &comp, &psi))
}

/// `(a_σ + T/2, b_σ + RSS/2)`, the shape and scale of `σ² | rest`.
pub fn fc_sigma2(
    state: &ParafacState,
    data: &RegressionData,
    config: &ParafacPriorConfig,
) -> (f64, f64) {
    let pred = data.linear_predictor(&state.coefficient());
    sigma2_params(data.y(), &pred, state.mu, config.a_sigma, config.b_sigma)
}

/// `(μ*, σ*²)` of `μ | rest`.
pub fn fc_mu(
    state: &ParafacState,
    data: &RegressionData,
    config: &ParafacPriorConfig,
) -> (f64, f64) {
    let pred = data.linear_predictor(&state.coefficient());
    mu_params(data.y(), &pred, state.sigma2, config.sigma2_mu)
}

pub(crate) fn sigma2_params(y: &[f64], pred: &[f64], mu: f64, a: f64, b: f64) -> (f64, f64) {
    let rss: f64 = y.iter().zip(pred).map(|(y, p)| (y - mu - p).powi(2)).sum();
    (a + y.len() as f64 / 2.0, b + rss / 2.0)
}

pub(crate) fn mu_params(y: &[f64], pred: &[f64], sigma2: f64, sigma2_mu: f64) -> (f64, f64) {
    let var = 1.0 / (y.len() as f64 / sigma2 + 1.0 / sigma2_mu);
    let s: f64 = y.iter().zip(pred).map(|(y, p)| y - p).sum();
    (var * s / sigma2, var)
}

fn check_dims(state: &ParafacState, data: &RegressionData) -> Result<()> {
    if state.margins.dims() != data.shape() {
        return Err(Error::Shape(format!(
            "margin lengths {:?} do not match covariate shape {:?}",
            state.margins.dims(),
            data.shape()
        )));
    }
    Ok(())
}

/// `comp[d][t] = ⟨B^(d), X_t⟩`.
fn component_predictions(state: &ParafacState, data: &RegressionData) -> Vec<Vec<f64>> {
    (0..state.rank())
        .map(|d| {
            let c = PartialContractor::new(state.margins.component(d), 0);
            let g = state.margins.margin(d, 0);
            let mut psi = vec![0.0; g.len()];
            (0..data.len())
                .map(|t| {
                    c.apply(data.covariate(t), &mut psi);
                    dot(g, &psi)
                })
                .collect()
        })
        .collect()
}

fn prior_precision_diag(d: usize, m: usize, state: &ParafacState) -> Vec<f64> {
    state.w[d][m]
        .iter()
        .map(|w| 1.0 / floor_positive(state.tau * state.zeta[d] * w))
        .collect()
}

fn partial_residuals(
    d: usize,
    state: &ParafacState,
    data: &RegressionData,
    comp: &[Vec<f64>],
) -> Vec<f64> {
    (0..data.len())
        .map(|t| {
            let others: f64 = comp
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != d)
                .map(|(_, c)| c[t])
                .sum();
            data.y()[t] - state.mu - others
        })
        .collect()
}

fn accumulate_margin(
    d: usize,
    m: usize,
    state: &ParafacState,
    data: &RegressionData,
    comp: &[Vec<f64>],
    psi: &[f64],
) -> (DMatrix<f64>, DVector<f64>) {
    let q = state.margins.dims()[m];
    let ytilde = partial_residuals(d, state, data, comp);
    let inv_s2 = 1.0 / state.sigma2;
    let mut p = DMatrix::zeros(q, q);
    let mut h = DVector::zeros(q);
    for (t, yt) in ytilde.iter().enumerate() {
        let v = &psi[t * q..(t + 1) * q];
        for j in 0..q {
            let vj = v[j] * inv_s2;
            if vj == 0.0 {
                continue;
            }
            h[j] += yt * vj;
            for i in j..q {
                p[(i, j)] += v[i] * vj;
            }
        }
    }
    p.fill_upper_triangle_with_lower_triangle();
    for (j, prec) in prior_precision_diag(d, m, state).into_iter().enumerate() {
        p[(j, j)] += prec;
    }
    (p, h)
}

/// One PARAFAC Gibbs kernel bound to a data set.
pub struct ParafacSampler<'a> {
    data: &'a RegressionData,
    config: ParafacPriorConfig,
    update: ScaleUpdate,
    dims: Vec<usize>,
    /// `Σ_t X_t X_tᵀ` when the covariates have a single mode.
    gram: Option<DMatrix<f64>>,
    comp: Vec<Vec<f64>>,
    psi: Vec<f64>,
    proposals: usize,
    acceptances: usize,
}

impl<'a> ParafacSampler<'a> {
    pub fn new(
        data: &'a RegressionData,
        config: &ParafacPriorConfig,
        update: ScaleUpdate,
        state: &ParafacState,
    ) -> Result<Self> {
        config.validate()?;
        check_dims(state, data)?;
        if state.rank() != config.rank {
            return Err(Error::Shape(format!(
                "state has rank {} but the prior has rank {}",
                state.rank(),
                config.rank
            )));
        }
        let dims = data.shape().to_vec();
        let gram = (dims.len() == 1 && !data.is_empty()).then(|| {
            let xt = DMatrix::from_column_slice(dims[0], data.len(), data.covariates());
            &xt * xt.transpose()
        });
        let qmax = *dims.iter().max().unwrap_or(&1);
        Ok(Self {
            data,
            config: config.clone(),
            update,
            comp: component_predictions(state, data),
            psi: vec![0.0; data.len() * qmax],
            dims,
            gram,
            proposals: 0,
            acceptances: 0,
        })
    }

    /// Acceptance rate of the `ψ` proposals in [`ScaleUpdate::Joint`].
    pub fn acceptance_rate(&self) -> f64 {
        self.acceptances as f64 / self.proposals.max(1) as f64
    }

    pub fn sweep(
        &mut self,
        state: &mut ParafacState,
        rng: &mut StreamRng,
        iteration: usize,
    ) -> Result<()> {
        let step = |r: Result<()>, block| r.map_err(|e| sampler_error(block, iteration, e));
        for d in 0..state.rank() {
            for m in 0..self.dims.len() {
                step(self.update_margin(d, m, state, rng), "gamma")?;
            }
        }
        step(self.update_zeta(state, rng), "zeta")?;
        step(self.update_tau(state, rng), "tau")?;
        step(self.update_lambda_w(state, rng), "lambda/w")?;
        step(self.update_sigma2(state, rng), "sigma2")?;
        step(self.update_mu(state, rng), "mu")?;
        Ok(())
    }

    /// The `(P, h)` pair the sweep would use for `γ_m^(d)` right now.
    pub fn margin_conditional(
        &mut self,
        d: usize,
        m: usize,
        state: &ParafacState,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let q = self.dims[m];
        if let Some(gram) = &self.gram {
            let ytilde = partial_residuals(d, state, self.data, &self.comp);
            let inv_s2 = 1.0 / state.sigma2;
            let mut p = gram * inv_s2;
            for (j, prec) in prior_precision_diag(d, m, state).into_iter().enumerate() {
                p[(j, j)] += prec;
            }
            let mut h = DVector::zeros(q);
            for (t, yt) in ytilde.iter().enumerate() {
                for (hj, x) in h.iter_mut().zip(self.data.covariate(t)) {
                    *hj += yt * x * inv_s2;
                }
            }
            (p, h)
        } else {
            let c = PartialContractor::new(state.margins.component(d), m);
            for t in 0..self.data.len() {
                c.apply(self.data.covariate(t), &mut self.psi[t * q..(t + 1) * q]);
            }
            accumulate_margin(
                d,
                m,
                state,
                self.data,
                &self.comp,
                &self.psi[..self.data.len() * q],
            )
        }
    }

    fn update_margin(
        &mut self,
        d: usize,
        m: usize,
        state: &mut ParafacState,
        rng: &mut StreamRng,
    ) -> Result<()> {
        let (p, h) = self.margin_conditional(d, m, state);
        let g = sample_mvn_from_precision(&h, &p, rng)?;
        state.margins.margin_mut(d, m).copy_from_slice(g.as_slice());
        let q = self.dims[m];
        for t in 0..self.data.len() {
            let v = if self.gram.is_some() {
                self.data.covariate(t)
            } else {
                &self.psi[t * q..(t + 1) * q]
            };
            self.comp[d][t] = dot(g.as_slice(), v);
        }
        state.check()
    }

    fn update_zeta(&mut self, state: &mut ParafacState, rng: &mut StreamRng) -> Result<()> {
        let dn = state.rank();
        if dn == 1 {
            state.zeta = vec![1.0];
            return Ok(());
        }
        match self.update {
            ScaleUpdate::Renormalize => {
                let logs = (0..dn)
                    .map(|d| Ok(sample_gig(fc_zeta(d, state, &self.config)?, rng)?.ln()))
                    .collect::<Result<Vec<_>>>()?;
                state.zeta = floored_simplex(&logs);
            }
            ScaleUpdate::Joint => {
                let q: usize = self.dims.iter().sum();
                let alpha = self.config.alpha();
                let power = self.config.a_tau - dn as f64 * alpha;
                let mut psi: Vec<f64> = state
                    .zeta
                    .iter()
                    .map(|z| floor_positive(state.tau * z))
                    .collect();
                for d in 0..dn {
                    let rest: f64 = psi
                        .iter()
                        .enumerate()
                        .filter(|&(k, _)| k != d)
                        .map(|(_, v)| v)
                        .sum();
                    let prop = GigParams::new(
                        alpha - q as f64 / 2.0,
                        2.0 * self.config.b_tau,
                        floor_positive(state.quad_form(d)),
                    )?;
                    let cand = sample_gig(prop, rng)?;
                    let log_ratio = power * ((cand + rest).ln() - (psi[d] + rest).ln());
                    self.proposals += 1;
                    if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                        psi[d] = cand;
                        self.acceptances += 1;
                    }
                }
                state.tau = floor_positive(psi.iter().sum());
                let logs: Vec<f64> = psi.iter().map(|v| v.ln()).collect();
                state.zeta = floored_simplex(&logs);
            }
        }
        state.check()
    }

    fn update_tau(&mut self, state: &mut ParafacState, rng: &mut StreamRng) -> Result<()> {
        state.tau = sample_gig(fc_tau(state, &self.config)?, rng)?;
        state.check()
    }

    fn update_lambda_w(&mut self, state: &mut ParafacState, rng: &mut StreamRng) -> Result<()> {
        for d in 0..state.rank() {
            for m in 0..self.dims.len() {
                let (shape, rate) = fc_lambda(d, m, state, &self.config);
                state.lambda[d][m] = sample_gamma(shape, rate, rng)?;
                for j in 0..self.dims[m] {
                    state.w[d][m][j] = sample_gig(fc_w(d, m, j, state)?, rng)?;
                }
            }
        }
        state.check()
    }

    fn predictions(&self) -> Vec<f64> {
        (0..self.data.len())
            .map(|t| self.comp.iter().map(|c| c[t]).sum())
            .collect()
    }

    fn update_sigma2(&mut self, state: &mut ParafacState, rng: &mut StreamRng) -> Result<()> {
        let (shape, scale) = sigma2_params(
            self.data.y(),
            &self.predictions(),
            state.mu,
            self.config.a_sigma,
            self.config.b_sigma,
        );
        state.sigma2 = sample_inverse_gamma(shape, scale, rng)?;
        state.check()
    }

    fn update_mu(&mut self, state: &mut ParafacState, rng: &mut StreamRng) -> Result<()> {
        let (mean, var) = mu_params(
            self.data.y(),
            &self.predictions(),
            state.sigma2,
            self.config.sigma2_mu,
        );
        let z: f64 = StandardNormal.sample(rng);
        state.mu = mean + var.sqrt() * z;
        state.check()
    }
}

fn floored_simplex(logs: &[f64]) -> Vec<f64> {
    // Entries that underflow are raised to the floor; at 1e-300 this cannot
    // change the floating-point sum.
    normalize_log_weights(logs)
        .into_iter()
        .map(floor_positive)
        .collect()
}

/// Draws every parameter from the prior.
pub fn sample_prior(
    dims: &[usize],
    config: &ParafacPriorConfig,
    rng: &mut StreamRng,
) -> Result<ParafacState> {
    config.validate()?;
    let dn = config.rank;
    let tau = sample_gamma(config.a_tau, config.b_tau, rng)?;
    let zeta = if dn == 1 {
        vec![1.0]
    } else {
        sample_dirichlet(&vec![config.alpha(); dn], rng)?
            .into_iter()
            .map(floor_positive)
            .collect()
    };
    let mut lambda = vec![vec![0.0; dims.len()]; dn];
    let mut w = vec![vec![vec![]; dims.len()]; dn];
    let mut margins = Vec::with_capacity(dn);
    for d in 0..dn {
        let mut comp = Vec::with_capacity(dims.len());
        for (m, &q) in dims.iter().enumerate() {
            let l = sample_gamma(config.a_lambda, config.b_lambda, rng)?;
            lambda[d][m] = l;
            let wm = (0..q)
                .map(|_| sample_gamma(1.0, l * l / 2.0, rng))
                .collect::<Result<Vec<_>>>()?;
            let g = wm
                .iter()
                .map(|wj| {
                    let z: f64 = StandardNormal.sample(rng);
                    (tau * zeta[d] * wj).sqrt() * z
                })
                .collect();
            w[d][m] = wm;
            comp.push(g);
        }
        margins.push(comp);
    }
    let z: f64 = StandardNormal.sample(rng);
    Ok(ParafacState {
        margins: MarginSet::new(margins)?,
        zeta,
        tau,
        lambda,
        w,
        mu: config.sigma2_mu.sqrt() * z,
        sigma2: sample_inverse_gamma(config.a_sigma, config.b_sigma, rng)?,
    })
}

/// `y_t ~ N(μ + ⟨B, X_t⟩, σ²)` for the covariates of `data`.
pub fn simulate_responses(
    state: &ParafacState,
    data: &RegressionData,
    rng: &mut StreamRng,
) -> Vec<f64> {
    let sd = state.sigma2.sqrt();
    data.linear_predictor(&state.coefficient())
        .into_iter()
        .map(|p| {
            let z: f64 = StandardNormal.sample(rng);
            state.mu + p + sd * z
        })
        .collect()
}

pub fn run_parafac_chain(
    data: &RegressionData,
    config: &ParafacPriorConfig,
    settings: &McmcSettings,
    seed: u64,
) -> Result<ChainOutput> {
    settings.validate()?;
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut state = ParafacState::initial(data.shape(), config, data, &mut rng)?;
    let mut sampler = ParafacSampler::new(data, config, settings.scale_update, &state)?;
    let mut draws = Vec::with_capacity(settings.retained());
    for i in 0..settings.iterations {
        sampler.sweep(&mut state, &mut rng, i)?;
        if settings.keeps(i) {
            draws.push(Draw {
                coefficient: state.coefficient(),
                mu: state.mu,
                sigma2: state.sigma2,
                margins: Some(state.margins.flatten()),
                margin_variances: Some(state.margin_variances()),
            });
        }
    }
    Ok(ChainOutput {
        model: ModelKind::Parafac,
        coefficient_shape: data.shape().to_vec(),
        rank: Some(config.rank),
        iterations: settings.iterations,
        burn_in: settings.burn_in,
        thin: settings.thin,
        seed,
        projection_id: None,
        draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use crate::tensor::DenseTensor;

    fn toy_data(dims: &[usize], t: usize, seed: u64) -> RegressionData {
        let mut rng = rng_from_seed(seed);
        let xs: Vec<DenseTensor> = (0..t)
            .map(|_| DenseTensor::from_fn(dims, |_| StandardNormal.sample(&mut rng)).unwrap())
            .collect();
        let y = (0..t).map(|_| StandardNormal.sample(&mut rng)).collect();
        RegressionData::new(&xs, y).unwrap()
    }

    fn ones_state(rank: usize, dims: &[usize]) -> ParafacState {
        ParafacState {
            margins: MarginSet::new(vec![dims.iter().map(|&q| vec![1.0; q]).collect(); rank])
                .unwrap(),
            zeta: vec![1.0 / rank as f64; rank],
            tau: 1.0,
            lambda: vec![vec![1.0; dims.len()]; rank],
            w: vec![dims.iter().map(|&q| vec![1.0; q]).collect(); rank],
            mu: 0.0,
            sigma2: 1.0,
        }
    }

    #[test]
    fn fc_zeta_examples() {
        let mut cfg = ParafacPriorConfig::with_rank(1);
        cfg.alpha = Some(1.0);
        let s = ones_state(1, &[2, 2]);
        assert_eq!(
            fc_zeta(0, &s, &cfg).unwrap(),
            GigParams {
                p: -1.0,
                a: 0.0,
                b: 4.0
            }
        );
        let mut s2 = s.clone();
        s2.tau = 2.0;
        assert_eq!(fc_zeta(0, &s2, &cfg).unwrap().b, 2.0);
        let mut z = s.clone();
        z.margins = MarginSet::zeros(1, &[2, 2]).unwrap();
        assert_eq!(
            fc_zeta(0, &z, &cfg).unwrap().b,
            crate::distributions::VARIANCE_FLOOR
        );
    }

    #[test]
    fn fc_tau_examples() {
        let cfg = ParafacPriorConfig::default();
        let mut s = ones_state(5, &[2, 2]);
        s.margins = MarginSet::zeros(5, &[2, 2]).unwrap();
        let g = fc_tau(&s, &cfg).unwrap();
        assert_eq!(g.p, -7.0);
        assert_eq!(g.a, 200.0);
        assert_eq!(g.b, crate::distributions::VARIANCE_FLOOR);
        // Permuting components with equal ζ leaves b unchanged.
        let mut s = ones_state(2, &[2, 3]);
        s.margins.margin_mut(0, 1)[2] = 3.0;
        let cfg2 = ParafacPriorConfig::with_rank(2);
        let b1 = fc_tau(&s, &cfg2).unwrap().b;
        let mut swapped = s.clone();
        swapped.margins = MarginSet::new(vec![
            s.margins.component(1).to_vec(),
            s.margins.component(0).to_vec(),
        ])
        .unwrap();
        assert_eq!(fc_tau(&swapped, &cfg2).unwrap().b, b1);
    }

    #[test]
    fn fc_lambda_and_w_examples() {
        let cfg = ParafacPriorConfig::default();
        let mut s = ones_state(1, &[12, 3]);
        s.margins.margin_mut(0, 0).iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(fc_lambda(0, 0, &s, &cfg), (32.0, 2.0));
        let (_, r1) = fc_lambda(0, 1, &s, &cfg);
        s.tau = 4.0;
        let (_, r2) = fc_lambda(0, 1, &s, &cfg);
        assert!(r2 < r1);

        let mut s = ones_state(1, &[2]);
        s.lambda[0][0] = 2.0;
        assert_eq!(
            fc_w(0, 0, 0, &s).unwrap(),
            GigParams {
                p: 0.5,
                a: 4.0,
                b: 1.0
            }
        );
        s.margins.margin_mut(0, 0)[0] = 0.0;
        assert_eq!(fc_w(0, 0, 0, &s).unwrap().b, 0.0);
        s.margins.margin_mut(0, 0)[0] = 3.0;
        assert_eq!(fc_w(0, 0, 0, &s).unwrap().b, 9.0);
    }

    #[test]
    fn fc_margin_examples() {
        let s = ones_state(1, &[2, 2]);
        let empty = RegressionData::empty(&[2, 2]).unwrap();
        let (p, h) = fc_margin(0, 0, &s, &empty).unwrap();
        assert_eq!(p, DMatrix::identity(2, 2));
        assert_eq!(h, DVector::zeros(2));

        // Single observation with all-ones margins: ψ = X 1, ỹ = y − μ.
        let x = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let data = RegressionData::new(&[x], vec![10.0]).unwrap();
        let (p, h) = fc_margin(0, 0, &s, &data).unwrap();
        // ψ_j = Σ_k X[j, k] = (1 + 3, 2 + 4).
        let psi = [4.0, 6.0];
        for i in 0..2 {
            assert_eq!(h[i], 10.0 * psi[i]);
            for j in 0..2 {
                let prior = if i == j { 1.0 } else { 0.0 };
                assert_eq!(p[(i, j)], psi[i] * psi[j] + prior);
            }
        }
    }

    #[test]
    fn fc_sigma2_and_mu_examples() {
        let cfg = ParafacPriorConfig::default();
        let mut s = ones_state(1, &[1]);
        s.margins = MarginSet::zeros(1, &[1]).unwrap();
        let xs: Vec<DenseTensor> = (0..10).map(|_| DenseTensor::zeros(&[1]).unwrap()).collect();
        let data = RegressionData::new(&xs, vec![0.0; 10]).unwrap();
        assert_eq!(fc_sigma2(&s, &data, &cfg), (8.0, 1.0));

        let xs: Vec<DenseTensor> = (0..4).map(|_| DenseTensor::zeros(&[1]).unwrap()).collect();
        let data = RegressionData::new(&xs, vec![1.0; 4]).unwrap();
        let (m, v) = fc_mu(&s, &data, &cfg);
        assert!((m - 0.8).abs() < 1e-15 && (v - 0.2).abs() < 1e-15);
        let empty = RegressionData::empty(&[1]).unwrap();
        assert_eq!(fc_mu(&s, &empty, &cfg), (0.0, 1.0));
        s.sigma2 = 1e300;
        let (m, v) = fc_mu(&s, &data, &cfg);
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampler_conditional_matches_public_one() {
        for dims in [vec![5usize], vec![3, 4], vec![2, 3, 2]] {
            let data = toy_data(&dims, 9, 3);
            let cfg = ParafacPriorConfig::with_rank(2);
            let mut rng = stream_rng(1, Stream::Fixture(0));
            let s = sample_prior(&dims, &cfg, &mut rng).unwrap();
            let mut sampler = ParafacSampler::new(&data, &cfg, ScaleUpdate::Joint, &s).unwrap();
            for d in 0..2 {
                for m in 0..dims.len() {
                    let (p1, h1) = sampler.margin_conditional(d, m, &s);
                    let (p2, h2) = fc_margin(d, m, &s, &data).unwrap();
                    assert!((&p1 - &p2).abs().max() <= 1e-10 * p2.abs().max());
                    assert!((&h1 - &h2).abs().max() <= 1e-10 * (1.0 + h2.abs().max()));
                }
            }
        }
    }

    #[test]
    fn cached_predictions_stay_consistent() {
        let dims = [3, 3];
        let data = toy_data(&dims, 20, 5);
        let cfg = ParafacPriorConfig::with_rank(3);
        let mut rng = rng_from_seed(8);
        let mut s = ParafacState::initial(&dims, &cfg, &data, &mut rng).unwrap();
        let mut sampler = ParafacSampler::new(&data, &cfg, ScaleUpdate::Joint, &s).unwrap();
        for i in 0..20 {
            sampler.sweep(&mut s, &mut rng, i).unwrap();
        }
        let fresh = component_predictions(&s, &data);
        for (a, b) in sampler.comp.iter().flatten().zip(fresh.iter().flatten()) {
            assert!((a - b).abs() < 1e-10 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn chain_is_deterministic_and_sized() {
        let data = toy_data(&[3, 2], 15, 1);
        let cfg = ParafacPriorConfig::with_rank(2);
        let settings = McmcSettings::new(30, 10, 2);
        let a = run_parafac_chain(&data, &cfg, &settings, 77).unwrap();
        let b = run_parafac_chain(&data, &cfg, &settings, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let c = run_parafac_chain(&data, &cfg, &settings, 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn constant_response_pins_intercept() {
        let dims = [2, 2];
        let mut data = toy_data(&dims, 60, 4);
        data = data.with_responses(vec![2.5; 60]).unwrap();
        let mut cfg = ParafacPriorConfig::with_rank(2);
        cfg.sigma2_mu = 100.0;
        let out = run_parafac_chain(&data, &cfg, &McmcSettings::new(1500, 500, 1), 3).unwrap();
        let mus: Vec<f64> = out.draws.iter().map(|d| d.mu).collect();
        let mean = mus.iter().sum::<f64>() / mus.len() as f64;
        let sd = (mus.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / mus.len() as f64).sqrt();
        assert!(
            (mean - 2.5).abs() < 3.0 * sd.max(1e-3),
            "mean {mean}, sd {sd}"
        );
    }

    #[test]
    fn renormalize_variant_runs() {
        let data = toy_data(&[3, 2], 15, 1);
        let cfg = ParafacPriorConfig::with_rank(3);
        let settings = McmcSettings {
            scale_update: ScaleUpdate::Renormalize,
            ..McmcSettings::new(40, 10, 1)
        };
        let out = run_parafac_chain(&data, &cfg, &settings, 2).unwrap();
        assert_eq!(out.len(), 30);
    }

    #[test]
    fn prior_draws_satisfy_invariants() {
        let mut rng = rng_from_seed(10);
        for _ in 0..200 {
            let s = sample_prior(&[2, 3], &ParafacPriorConfig::with_rank(4), &mut rng).unwrap();
            s.check().unwrap();
        }
    }

    #[test]
    fn config_validation() {
        let mut c = ParafacPriorConfig::default();
        assert!((c.alpha() - 0.04).abs() < 1e-15);
        c.rank = 0;
        assert!(c.validate().is_err());
        let c = ParafacPriorConfig {
            b_tau: -1.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let parsed: ParafacPriorConfig = serde_json::from_str(r#"{"rank": 2}"#).unwrap();
        assert_eq!(parsed.alpha(), 0.25);
        assert!(serde_json::from_str::<ParafacPriorConfig>(r#"{"rnk": 2}"#).is_err());
    }
}
