//! Bayesian model averaging over independently projected fits.
//!
//! Member `ℓ` is a projection together with a posterior chain fitted on the
//! data compressed by it. Posterior model probabilities are proportional to
//! the normalizing constants `c_ℓ`, estimated by reverse logistic regression
//! on the pooled draws: with `h_k` the log unnormalized posterior of member
//! `k`, the offsets `η` maximize
//!
//! ```text
//! Σ_ℓ Σ_s log[ exp(h_ℓ(θ_s^ℓ) + η_ℓ) / Σ_k exp(h_k(θ_s^ℓ) + η_k) ]
//! ```
//!
//! subject to `η_1 = 0`, and then `c_ℓ ∝ exp(−η_ℓ)`.
//!
//! Every member must share the projection design and the prior, so that one
//! member's draws can be evaluated under another member's density.

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::distributions::{
    ln_inverse_gamma_pdf_unnormalized, ln_normal_pdf, normalize_log_weights,
};
use crate::error::{Error, Result};
use crate::gibbs::{
    ChainOutput, Draw, GaussianPriorConfig, McmcSettings, ParafacPriorConfig, PriorSpec,
    RegressionData,
};
use crate::projection::{GtrpSpec, ProjectionDesign};
use crate::rng::{derive_seed, Stream, StreamRng};
use crate::tensor::{dot, DenseTensor};
use crate::timing::measure_cpu;

pub const RLR_TOLERANCE: f64 = 1e-8;
pub const RLR_MAX_ITERATIONS: usize = 500;

#[derive(Clone, Debug, PartialEq)]
pub enum PriorFamily {
    Parafac(ParafacPriorConfig),
    Gaussian(GaussianPriorConfig),
}

impl PriorFamily {
    fn sigma_mu(&self) -> (f64, f64, f64) {
        match self {
            PriorFamily::Parafac(c) => (c.a_sigma, c.b_sigma, c.sigma2_mu),
            PriorFamily::Gaussian(c) => (c.a_sigma, c.b_sigma, c.sigma2_mu),
        }
    }
}

/// Log prior density of one draw, up to a constant shared by all members.
///
/// For the PARAFAC prior the margins are scored as independent normals with
/// the variances `τ ζ_d w_{m,j}` stored with the draw, that is, conditionally
/// on the sampled scales rather than with the scales integrated out.
pub fn log_prior(prior: &PriorFamily, draw: &Draw, shape: &[usize]) -> Result<f64> {
    let (a, b, s2mu) = prior.sigma_mu();
    let mut lp =
        ln_normal_pdf(draw.mu, 0.0, s2mu) + ln_inverse_gamma_pdf_unnormalized(draw.sigma2, a, b);
    match prior {
        PriorFamily::Parafac(_) => {
            let (g, v) = match (&draw.margins, &draw.margin_variances) {
                (Some(g), Some(v)) if g.len() == v.len() => (g, v),
                _ => {
                    return Err(Error::Parameter(
                        "PARAFAC draws need margins and margin variances".into(),
                    ))
                }
            };
            lp += g
                .iter()
                .zip(v)
                .map(|(g, v)| ln_normal_pdf(*g, 0.0, *v))
                .sum::<f64>();
        }
        PriorFamily::Gaussian(c) => {
            let b = DenseTensor::new(shape.to_vec(), draw.coefficient.clone())?;
            let mut lb = b.clone();
            for (m, inv) in c.mode_precisions()?.iter().enumerate() {
                lb = lb.mode_product(inv, m)?;
            }
            lp -= 0.5 * dot(b.data(), lb.data());
        }
    }
    Ok(lp)
}

/// `log[ p(y | X, θ) p(θ) ]` for member data `data` (compressed covariates).
pub fn log_unnormalized_posterior(
    prior: &PriorFamily,
    draw: &Draw,
    data: &RegressionData,
) -> Result<f64> {
    let ll = log_likelihood(draw, &data.linear_predictor(&draw.coefficient), data.y())?;
    Ok(ll + log_prior(prior, draw, data.shape())?)
}

fn log_likelihood(draw: &Draw, pred: &[f64], y: &[f64]) -> Result<f64> {
    if !(draw.sigma2 > 0.0) {
        return Err(Error::Domain(format!(
            "sigma2 must be positive, got {}",
            draw.sigma2
        )));
    }
    let rss: f64 = y
        .iter()
        .zip(pred)
        .map(|(y, p)| (y - draw.mu - p).powi(2))
        .sum();
    Ok(
        -0.5 * y.len() as f64 * (2.0 * std::f64::consts::PI * draw.sigma2).ln()
            - rss / (2.0 * draw.sigma2),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct RlrFit {
    pub weights: Vec<f64>,
    pub etas: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Reverse logistic regression weights from `h[ℓ][s][k] = h_k(θ_s^ℓ)`.
///
/// Uses damped Newton steps with a backtracking line search. Members with
/// more draws than the smallest one are truncated to it.
pub fn rlr_weights(h: &[Vec<Vec<f64>>]) -> Result<RlrFit> {
    let l = h.len();
    if l == 0 {
        return Err(Error::Empty("no ensemble members".into()));
    }
    let s = h.iter().map(Vec::len).min().unwrap_or(0);
    if s == 0 {
        return Err(Error::Empty("a member has no draws".into()));
    }
    for (i, rows) in h.iter().enumerate() {
        for row in &rows[..s] {
            if row.len() != l {
                return Err(Error::Shape(format!(
                    "member {i} has a row of length {} for L = {l}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite log density in member {i}"
                )));
            }
        }
    }
    if l == 1 {
        return Ok(RlrFit {
            weights: vec![1.0],
            etas: vec![0.0],
            iterations: 0,
            gradient_norm: 0.0,
        });
    }
    let rows: Vec<(usize, &[f64])> = h
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r[..s].iter().map(move |row| (i, row.as_slice())))
        .collect();

    // Objective, gradient and Hessian over the free offsets η_2..η_L.
    let evaluate = |eta: &[f64], second: bool| {
        let mut f = 0.0;
        let mut g = vec![0.0; l];
        let mut hess = DMatrix::<f64>::zeros(l, l);
        let mut p = vec![0.0; l];
        for &(owner, row) in &rows {
            let mut max = f64::NEG_INFINITY;
            for k in 0..l {
                p[k] = row[k] + eta[k];
                max = max.max(p[k]);
            }
            let mut z = 0.0;
            for pk in p.iter_mut() {
                *pk = (*pk - max).exp();
                z += *pk;
            }
            f += row[owner] + eta[owner] - max - z.ln();
            for pk in p.iter_mut() {
                *pk /= z;
            }
            g[owner] += 1.0;
            for k in 0..l {
                g[k] -= p[k];
            }
            if second {
                for k in 1..l {
                    hess[(k, k)] += p[k];
                    for j in 1..l {
                        hess[(k, j)] -= p[k] * p[j];
                    }
                }
            }
        }
        (f, g, hess)
    };

    let mut eta = vec![0.0; l];
    let mut iterations = 0;
    loop {
        let (f, g, neg_hess) = evaluate(&eta, true);
        let gnorm = g[1..].iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if gnorm < RLR_TOLERANCE {
            return Ok(RlrFit {
                weights: weights_from_etas(&eta),
                etas: eta,
                iterations,
                gradient_norm: gnorm,
            });
        }
        if iterations == RLR_MAX_ITERATIONS {
            return Err(Error::Convergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        iterations += 1;
        let free = l - 1;
        let mut a = neg_hess.view((1, 1), (free, free)).into_owned();
        let ridge = 1e-12 * (1.0 + a.diagonal().amax());
        for k in 0..free {
            a[(k, k)] += ridge;
        }
        let rhs = DVector::from_column_slice(&g[1..]);
        let step = match a.clone().cholesky() {
            Some(c) => c.solve(&rhs),
            None => rhs.clone(),
        };
        let slope = rhs.dot(&step);
        let mut t = 1.0;
        // Below this the predicted gain is lost in the rounding of `f`, so the
        // line search cannot discriminate and the full Newton step is taken.
        let flat = slope < 1e-11 * (1.0 + f.abs());
        let mut moved = false;
        if flat {
            eta = std::iter::once(0.0)
                .chain((0..free).map(|k| eta[k + 1] + step[k]))
                .collect();
            moved = true;
        }
        for _ in 0..if flat { 0 } else { 60 } {
            let trial: Vec<f64> = std::iter::once(0.0)
                .chain((0..free).map(|k| eta[k + 1] + t * step[k]))
                .collect();
            let (ft, _, _) = evaluate(&trial, false);
            if ft >= f + 1e-4 * t * slope {
                eta = trial;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved {
            return Err(Error::Convergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
    }
}

/// `w_ℓ ∝ exp(−η_ℓ)`.
pub fn weights_from_etas(eta: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = eta.iter().map(|e| -e).collect();
    normalize_log_weights(&neg)
}

/// `Σ_ℓ w_ℓ m_ℓ`.
pub fn pool_means(weights: &[f64], means: &[f64]) -> Result<f64> {
    if weights.len() != means.len() || weights.is_empty() {
        return Err(Error::Shape(format!(
            "{} weights for {} member means",
            weights.len(),
            means.len()
        )));
    }
    Ok(weights.iter().zip(means).map(|(w, m)| w * m).sum())
}

/// Quantiles of the mixture that gives each draw of member `ℓ` the mass
/// `w_ℓ / S_ℓ`.
///
/// The quantile at `p` is the smallest draw `x` whose mixture CDF `F(x)`
/// reaches `p` (left-continuous inversion), with a `1e-12` allowance for
/// rounding in the cumulative sums.
pub fn mixture_quantiles(samples: &[Vec<f64>], weights: &[f64], probs: &[f64]) -> Result<Vec<f64>> {
    if samples.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} samples for {} weights",
            samples.len(),
            weights.len()
        )));
    }
    if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Parameter(format!(
            "quantile level {p} is outside (0, 1)"
        )));
    }
    let mut atoms: Vec<(f64, f64)> = Vec::new();
    for (xs, &w) in samples.iter().zip(weights) {
        if w > 0.0 && xs.is_empty() {
            return Err(Error::Empty(
                "a member with positive weight has no draws".into(),
            ));
        }
        let mass = w / xs.len().max(1) as f64;
        atoms.extend(xs.iter().map(|&x| (x, mass)));
    }
    atoms.retain(|a| a.1 > 0.0);
    if atoms.is_empty() {
        return Err(Error::Empty("no predictive draws".into()));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cdf = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in &atoms {
        acc += a.1;
        cdf.push(acc);
    }
    let total = acc;
    Ok(probs
        .iter()
        .map(|&p| {
            let target = p * total - 1e-12;
            let i = cdf.partition_point(|&c| c < target).min(atoms.len() - 1);
            atoms[i].0
        })
        .collect())
}

/// Mixture CDF at `x` for the same weighting as [`mixture_quantiles`].
pub fn mixture_cdf(samples: &[Vec<f64>], weights: &[f64], x: f64) -> f64 {
    let total: f64 = weights.iter().sum();
    samples
        .iter()
        .zip(weights)
        .map(|(xs, w)| w * xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len().max(1) as f64)
        .sum::<f64>()
        / total
}

#[derive(Clone, Debug)]
pub struct EnsembleMember {
    pub spec: GtrpSpec,
    pub chain: ChainOutput,
    /// The training data after compression by `spec`.
    pub train: RegressionData,
}

impl EnsembleMember {
    /// `μ_s + ⟨B_s, z⟩` for each draw, where `z` is the compressed `x`.
    pub fn conditional_means(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        let z = self.spec.apply(x)?;
        Ok(self
            .chain
            .draws
            .iter()
            .map(|d| d.mu + dot(&d.coefficient, z.data()))
            .collect())
    }

    /// One predictive draw per posterior draw.
    pub fn predictive_draws(&self, x: &DenseTensor, rng: &mut StreamRng) -> Result<Vec<f64>> {
        let means = self.conditional_means(x)?;
        Ok(means
            .into_iter()
            .zip(&self.chain.draws)
            .map(|(m, d)| {
                let z: f64 = StandardNormal.sample(rng);
                m + d.sigma2.sqrt() * z
            })
            .collect())
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleModel {
    pub members: Vec<EnsembleMember>,
    pub prior: PriorFamily,
    pub weights: Vec<f64>,
    pub rlr_etas: Vec<f64>,
}

impl EnsembleModel {
    /// Validates the members and fits the RLR weights.
    pub fn new(members: Vec<EnsembleMember>, prior: PriorFamily) -> Result<Self> {
        check_members(&members)?;
        let h = cross_evaluations(&members, &prior)?;
        let fit = rlr_weights(&h)?;
        Ok(Self {
            members,
            prior,
            weights: fit.weights,
            rlr_etas: fit.etas,
        })
    }

    /// Uses the given weights instead of estimating them.
    pub fn with_weights(
        members: Vec<EnsembleMember>,
        prior: PriorFamily,
        weights: Vec<f64>,
    ) -> Result<Self> {
        check_members(&members)?;
        if weights.len() != members.len() || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Parameter(format!("invalid weights {weights:?}")));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter(format!("weights sum to {s}")));
        }
        Ok(Self {
            rlr_etas: vec![0.0; members.len()],
            members,
            prior,
            weights,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Posterior predictive mean of every member at `x`.
    ///
    /// Each member mean averages the conditional means `μ_s + ⟨B_s, z⟩`
    /// instead of sampled predictive values; both have the same expectation.
    pub fn member_means(&self, x: &DenseTensor) -> Result<Vec<f64>> {
        self.members
            .iter()
            .map(|m| {
                let c = m.conditional_means(x)?;
                Ok(c.iter().sum::<f64>() / c.len().max(1) as f64)
            })
            .collect()
    }

    pub fn pooled_point_forecast(&self, x: &DenseTensor) -> Result<f64> {
        pool_means(&self.weights, &self.member_means(x)?)
    }

    pub fn predictive_draws(
        &self,
        member: usize,
        x: &DenseTensor,
        rng: &mut StreamRng,
    ) -> Result<Vec<f64>> {
        self.members
            .get(member)
            .ok_or_else(|| Error::Parameter(format!("no member {member}")))?
            .predictive_draws(x, rng)
    }

    pub fn pooled_quantile(
        &self,
        x: &DenseTensor,
        probs: &[f64],
        rng: &mut StreamRng,
    ) -> Result<Vec<f64>> {
        let samples = self
            .members
            .iter()
            .map(|m| m.predictive_draws(x, rng))
            .collect::<Result<Vec<_>>>()?;
        mixture_quantiles(&samples, &self.weights, probs)
    }
}

fn check_members(members: &[EnsembleMember]) -> Result<()> {
    let first = members
        .first()
        .ok_or_else(|| Error::Empty("no ensemble members".into()))?;
    for (i, m) in members.iter().enumerate() {
        if m.spec.input_shape() != first.spec.input_shape()
            || m.spec.output_shape() != first.spec.output_shape()
        {
            return Err(Error::Shape(format!(
                "member {i} maps {:?} -> {:?}, member 0 maps {:?} -> {:?}",
                m.spec.input_shape(),
                m.spec.output_shape(),
                first.spec.input_shape(),
                first.spec.output_shape()
            )));
        }
        if m.chain.coefficient_shape != m.spec.output_shape()
            || m.train.shape() != m.spec.output_shape()
        {
            return Err(Error::Shape(format!(
                "member {i} chain or data does not match its projection"
            )));
        }
        if m.chain.is_empty() {
            return Err(Error::Empty(format!("member {i} has no draws")));
        }
        if m.train.y() != first.train.y() {
            return Err(Error::Parameter(format!(
                "member {i} was fitted to different responses"
            )));
        }
    }
    Ok(())
}

/// `h[ℓ][s][k] = h_k(θ_s^ℓ)` with every member thinned evenly to the
/// smallest draw count.
pub fn cross_evaluations(
    members: &[EnsembleMember],
    prior: &PriorFamily,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let s = members.iter().map(|m| m.chain.len()).min().unwrap_or(0);
    let picked: Vec<Vec<&Draw>> = members
        .iter()
        .map(|m| {
            let n = m.chain.len();
            (0..s).map(|i| &m.chain.draws[i * n / s]).collect()
        })
        .collect();
    let priors: Vec<Vec<f64>> = picked
        .iter()
        .zip(members)
        .map(|(ds, m)| {
            ds.iter()
                .map(|d| log_prior(prior, d, m.train.shape()))
                .collect()
        })
        .collect::<Result<_>>()?;
    let q: usize = members[0].train.dim();
    let t = members[0].train.len();
    // lik[k][ℓ][s]
    let lik: Vec<Vec<Vec<f64>>> = members
        .par_iter()
        .map(|mk| {
            let x = DMatrix::from_row_slice(t, q, mk.train.covariates());
            picked
                .iter()
                .map(|ds| {
                    let b = DMatrix::from_fn(q, ds.len(), |i, j| ds[j].coefficient[i]);
                    let pred = &x * b;
                    ds.iter()
                        .enumerate()
                        .map(|(j, d)| log_likelihood(d, pred.column(j).as_slice(), mk.train.y()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..members.len())
        .map(|l| {
            (0..s)
                .map(|si| {
                    (0..members.len())
                        .map(|k| lik[k][l][si] + priors[l][si])
                        .collect()
                })
                .collect()
        })
        .collect())
}

/// Settings for fitting `members` independently projected chains.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleFit {
    pub design: ProjectionDesign,
    pub prior: PriorSpec,
    pub settings: McmcSettings,
    pub members: usize,
    pub seed: u64,
    /// Apply the isometric scale to compressed covariates.
    pub scaled: bool,
}

impl EnsembleFit {
    /// Member `ℓ` uses projection seed `Stream::Projection(ℓ)` and chain seed
    /// `Stream::Chain(ℓ)` of the master seed, so results do not depend on
    /// scheduling. Returns the model and the CPU time summed over members.
    pub fn fit(&self, xs: &[DenseTensor], y: &[f64]) -> Result<(EnsembleModel, Duration)> {
        if self.members == 0 {
            return Err(Error::Parameter(
                "an ensemble needs at least one member".into(),
            ));
        }
        let input = xs
            .first()
            .ok_or_else(|| Error::Empty("no training covariates".into()))?
            .shape()
            .to_vec();
        let fitted = (0..self.members)
            .into_par_iter()
            .map(|l| {
                let (member, cpu) = measure_cpu(|| self.fit_member(l as u64, &input, xs, y));
                member
                    .map(|m| (m, cpu))
                    .map_err(|e| e.context(format!("member {l}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let cpu = fitted.iter().map(|f| f.1).sum();
        let members = fitted.into_iter().map(|f| f.0).collect();
        let prior = self.prior.family(&self.design.output_shape);
        Ok((EnsembleModel::new(members, prior)?, cpu))
    }

    fn fit_member(
        &self,
        l: u64,
        input: &[usize],
        xs: &[DenseTensor],
        y: &[f64],
    ) -> Result<EnsembleMember> {
        let spec = self
            .design
            .build(input, derive_seed(self.seed, Stream::Projection(l)))?
            .with_scaling(self.scaled);
        let train = RegressionData::new(&spec.apply_all(xs)?, y.to_vec())?;
        let chain = self
            .prior
            .fit(
                &train,
                &self.settings,
                derive_seed(self.seed, Stream::Chain(l)),
            )?
            .with_projection_id(spec.content_hash());
        Ok(EnsembleMember { spec, chain, train })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::ModelKind;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_h(l: usize, s: usize, seed: u64) -> Vec<Vec<Vec<f64>>> {
        let mut rng = rng_from_seed(seed);
        (0..l)
            .map(|owner| {
                (0..s)
                    .map(|_| {
                        (0..l)
                            .map(|k| {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                z + if k == owner { 0.5 } else { 0.0 } + k as f64 * 0.3
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn identical_members_get_equal_weights() {
        let mut rng = rng_from_seed(1);
        let rows: Vec<Vec<f64>> = (0..200)
            .map(|_| vec![rng.random::<f64>() * 5.0; 4])
            .collect();
        let h = vec![rows; 4];
        let fit = rlr_weights(&h).unwrap();
        for w in fit.weights {
            assert!((w - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn log_ratio_fixture_gives_one_to_nine() {
        let mut rng = rng_from_seed(2);
        let h: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| {
                (0..300)
                    .map(|_| {
                        let base: f64 = StandardNormal.sample(&mut rng);
                        vec![base, base + 9f64.ln()]
                    })
                    .collect()
            })
            .collect();
        let fit = rlr_weights(&h).unwrap();
        assert!((fit.weights[0] - 0.1).abs() < 1e-6, "{:?}", fit.weights);
        assert!((fit.weights[1] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn common_shift_leaves_weights_unchanged() {
        let h = random_h(3, 150, 4);
        let shifted: Vec<Vec<Vec<f64>>> = h
            .iter()
            .map(|r| {
                r.iter()
                    .map(|row| row.iter().map(|v| v + 123.0).collect())
                    .collect()
            })
            .collect();
        let a = rlr_weights(&h).unwrap().weights;
        let b = rlr_weights(&shifted).unwrap().weights;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn weights_on_simplex_and_permutation_equivariant(seed in 0u64..10_000, l in 2usize..5) {
            let h = random_h(l, 60, seed);
            let fit = rlr_weights(&h).unwrap();
            let total: f64 = fit.weights.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(fit.weights.iter().all(|&w| w >= 0.0));
            // Reverse the member labels.
            let perm: Vec<usize> = (0..l).rev().collect();
            let hp: Vec<Vec<Vec<f64>>> = perm
                .iter()
                .map(|&o| h[o].iter().map(|row| perm.iter().map(|&k| row[k]).collect()).collect())
                .collect();
            let wp = rlr_weights(&hp).unwrap().weights;
            for (i, &o) in perm.iter().enumerate() {
                prop_assert!((wp[i] - fit.weights[o]).abs() < 1e-8);
            }
        }

        #[test]
        fn quantiles_invert_the_mixture_cdf(seed in 0u64..10_000) {
            let mut rng = rng_from_seed(seed);
            let samples: Vec<Vec<f64>> = (0..3)
                .map(|_| (0..rng.random_range(1..20)).map(|_| StandardNormal.sample(&mut rng)).collect())
                .collect();
            let weights = normalize_log_weights(&[rng.random(), rng.random(), rng.random()]);
            let probs: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
            let q = mixture_quantiles(&samples, &weights, &probs).unwrap();
            for (p, x) in probs.iter().zip(&q) {
                prop_assert!(mixture_cdf(&samples, &weights, *x) >= p - 1e-9);
                prop_assert!(mixture_cdf(&samples, &weights, x.next_down()) < p + 1e-9);
            }
            prop_assert!(q.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn quantile_examples() {
        let q =
            mixture_quantiles(&[vec![0.0], vec![1.0]], &[0.5, 0.5], &[0.25, 0.5, 0.75]).unwrap();
        assert_eq!(q, vec![0.0, 0.0, 1.0]);
        let xs: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(
            mixture_quantiles(&[xs], &[1.0], &[0.3, 0.95]).unwrap(),
            vec![3.0, 10.0]
        );
        assert!(mixture_quantiles(&[vec![]], &[1.0], &[0.5]).is_err());
        assert!(mixture_quantiles(&[vec![1.0]], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn pooling_examples() {
        assert_eq!(pool_means(&[0.5, 0.5], &[1.0, 3.0]).unwrap(), 2.0);
        assert!((pool_means(&[0.1, 0.9], &[0.0, 10.0]).unwrap() - 9.0).abs() < 1e-12);
        assert_eq!(pool_means(&[1.0], &[4.5]).unwrap(), 4.5);
    }

    fn fixture_member(draws: Vec<Draw>, t: usize) -> EnsembleMember {
        let spec = ProjectionDesign::identity(&[2]).build(&[2], 0).unwrap();
        let xs: Vec<DenseTensor> = (0..t)
            .map(|i| DenseTensor::new(vec![2], vec![i as f64, 1.0]).unwrap())
            .collect();
        EnsembleMember {
            spec,
            chain: ChainOutput {
                model: ModelKind::Gaussian,
                coefficient_shape: vec![2],
                rank: None,
                iterations: draws.len(),
                burn_in: 0,
                thin: 1,
                seed: 0,
                projection_id: None,
                draws,
            },
            train: RegressionData::new(&xs, vec![0.5; t]).unwrap(),
        }
    }

    fn draw(b: [f64; 2], mu: f64, sigma2: f64) -> Draw {
        Draw {
            coefficient: b.to_vec(),
            mu,
            sigma2,
            margins: None,
            margin_variances: None,
        }
    }

    #[test]
    fn single_point_log_density() {
        let prior = PriorFamily::Gaussian(GaussianPriorConfig::isotropic(&[2], 1.0));
        let m = fixture_member(vec![], 1);
        // x = (0, 1), y = 0.5, B = (3, 0.25), μ = 0.1, σ² = 2.
        let d = draw([3.0, 0.25], 0.1, 2.0);
        let got = log_unnormalized_posterior(&prior, &d, &m.train).unwrap();
        let r: f64 = 0.5 - 0.1 - 0.25;
        let ll = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln() - r * r / 4.0;
        let lp = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.01 / 2.0 // μ
            + (-4.0 * 2f64.ln() - 0.5) // σ² under IG(3, 1), unnormalized
            - 0.5 * (9.0 + 0.0625); // B under N(0, I), unnormalized
        assert!((got - (ll + lp)).abs() < 1e-12, "{got} vs {}", ll + lp);
        let worse = draw([3.0, 1.25], 0.1, 2.0);
        let b = draw([3.0, 0.25], 0.1, -1.0);
        assert!(log_unnormalized_posterior(&prior, &b, &m.train).is_err());
        // Larger residual lowers the likelihood at fixed σ².
        let ll_worse = log_likelihood(&worse, &[1.25], &[0.5]).unwrap();
        let ll_better = log_likelihood(&d, &[0.25], &[0.5]).unwrap();
        assert!(ll_worse < ll_better);
    }

    #[test]
    fn predictive_draws_fixtures() {
        let x = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let m = fixture_member(
            vec![draw([1.0, 1.0], 0.5, 0.0), draw([0.0, 1.0], 0.0, 0.0)],
            3,
        );
        let d = m.predictive_draws(&x, &mut rng_from_seed(1)).unwrap();
        assert_eq!(d, vec![3.5, 2.0]);

        let draws = (0..3000).map(|_| draw([0.0, 0.0], 1.5, 4.0)).collect();
        let m = fixture_member(draws, 3);
        let mut xs = m.predictive_draws(&x, &mut rng_from_seed(2)).unwrap();
        let again = m.predictive_draws(&x, &mut rng_from_seed(2)).unwrap();
        assert_eq!(xs, again);
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let normal = statrs::distribution::Normal::new(1.5, 2.0).unwrap();
        use statrs::distribution::ContinuousCDF;
        let ks = xs
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = normal.cdf(v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // Asymptotic KS critical value at level 0.001.
        assert!(ks < 1.95 / n.sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn ensemble_of_identical_members_is_uniform() {
        let mut rng = rng_from_seed(5);
        let draws: Vec<Draw> = (0..100)
            .map(|_| {
                draw(
                    [rng.random(), rng.random()],
                    rng.random(),
                    1.0 + rng.random::<f64>(),
                )
            })
            .collect();
        let members = vec![fixture_member(draws.clone(), 6), fixture_member(draws, 6)];
        let prior = PriorFamily::Gaussian(GaussianPriorConfig::isotropic(&[2], 1.0));
        let model = EnsembleModel::new(members, prior).unwrap();
        assert!((model.weights[0] - 0.5).abs() < 1e-6);
        let x = DenseTensor::new(vec![2], vec![1.0, 0.0]).unwrap();
        let means = model.member_means(&x).unwrap();
        assert!((model.pooled_point_forecast(&x).unwrap() - means[0]).abs() < 1e-12);
        let q = model
            .pooled_quantile(&x, &[0.1, 0.9], &mut rng_from_seed(3))
            .unwrap();
        assert!(q[0] < q[1]);
    }

    #[test]
    fn cross_evaluation_matches_direct_density() {
        let mut rng = rng_from_seed(6);
        let mk = |rng: &mut StreamRng| -> Vec<Draw> {
            (0..7)
                .map(|_| {
                    draw(
                        [rng.random(), rng.random()],
                        rng.random(),
                        0.5 + rng.random::<f64>(),
                    )
                })
                .collect()
        };
        let members = vec![
            fixture_member(mk(&mut rng), 5),
            fixture_member(mk(&mut rng), 5),
        ];
        let prior = PriorFamily::Gaussian(GaussianPriorConfig::isotropic(&[2], 2.0));
        let h = cross_evaluations(&members, &prior).unwrap();
        for l in 0..2 {
            for s in 0..7 {
                for k in 0..2 {
                    let direct = log_unnormalized_posterior(
                        &prior,
                        &members[l].chain.draws[s],
                        &members[k].train,
                    )
                    .unwrap();
                    assert!((h[l][s][k] - direct).abs() < 1e-10 * direct.abs().max(1.0));
                }
            }
        }
    }
}
