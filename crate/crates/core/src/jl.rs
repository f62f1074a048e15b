//! Embedding-dimension bounds and an empirical distortion harness.
//!
//! All logarithms are natural. Bounds are returned as reals; callers ceil
//! them to get an integer dimension.
//!
//! Substituting `N = 1` into the mode-wise bound gives a cubic coefficient of
//! `7/24` rather than the tensor-wise `1/3`, so the two formulas do not
//! coincide at order one. Both are implemented exactly as stated.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::ProjectionDesign;
use crate::rng::{derive_seed, Stream};
use crate::tensor::DenseTensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundVariant {
    Tensorwise,
    Modewise,
    Hypercontractive,
    Cp,
    Tt,
}

impl BoundVariant {
    pub fn name(self) -> &'static str {
        match self {
            BoundVariant::Tensorwise => "tensorwise",
            BoundVariant::Modewise => "modewise",
            BoundVariant::Hypercontractive => "hypercontractive",
            BoundVariant::Cp => "cp",
            BoundVariant::Tt => "tt",
        }
    }
}

impl std::str::FromStr for BoundVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "tensorwise" => BoundVariant::Tensorwise,
            "modewise" => BoundVariant::Modewise,
            "hypercontractive" => BoundVariant::Hypercontractive,
            "cp" => BoundVariant::Cp,
            "tt" => BoundVariant::Tt,
            other => return Err(Error::Parameter(format!("unknown bound variant {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub epsilon: f64,
    pub beta: f64,
    pub n: f64,
    pub order: u32,
    pub variant: BoundVariant,
    /// Projection rank, used by `cp` and `tt`.
    pub rank: u32,
    /// Absolute constant, used by `hypercontractive`, `cp` and `tt`.
    pub constant: f64,
}

impl BoundQuery {
    pub fn new(variant: BoundVariant, epsilon: f64, beta: f64, n: f64, order: u32) -> Self {
        Self {
            epsilon,
            beta,
            n,
            order,
            variant,
            rank: 1,
            constant: 1.0,
        }
    }

    pub fn evaluate(&self) -> Result<f64> {
        match self.variant {
            BoundVariant::Tensorwise => q0_tensorwise(self.epsilon, self.beta, self.n),
            BoundVariant::Modewise => q0_modewise(self.epsilon, self.beta, self.n, self.order),
            BoundVariant::Hypercontractive => {
                q0_hypercontractive(self.epsilon, self.beta, self.n, self.order, self.constant)
            }
            BoundVariant::Cp => q0_cp(
                self.epsilon,
                self.beta,
                self.n,
                self.order,
                self.rank,
                self.constant,
            ),
            BoundVariant::Tt => q0_tt(
                self.epsilon,
                self.beta,
                self.n,
                self.order,
                self.rank,
                self.constant,
            ),
        }
    }
}

fn check_common(eps: f64, beta: f64, n: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon must lie in (0, 1), got {eps}"
        )));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    if !(n >= 2.0) || !n.is_finite() {
        return Err(Error::Domain(format!("n must be at least 2, got {n}")));
    }
    Ok(())
}

fn check_order(order: u32) -> Result<()> {
    if order == 0 {
        return Err(Error::Domain("tensor order must be >= 1".into()));
    }
    Ok(())
}

fn check_constant(c: f64) -> Result<()> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("constant must be positive, got {c}")));
    }
    Ok(())
}

/// `(4 + 2β) / (ε²/2 − ε³/3) · ln n`.
pub fn q0_tensorwise(eps: f64, beta: f64, n: f64) -> Result<f64> {
    check_common(eps, beta, n)?;
    let den = eps * eps / 2.0 - eps.powi(3) / 3.0;
    if den <= 0.0 {
        return Err(Error::Domain(format!(
            "nonpositive denominator at epsilon {eps}"
        )));
    }
    Ok((4.0 + 2.0 * beta) / den * n.ln())
}

/// `(4 + 2β) / (ε²/(3^N − 1) − (3^{N+1} − 2) ε³ / (3 (3^N − 1)³)) · ln n`.
pub fn q0_modewise(eps: f64, beta: f64, n: f64, order: u32) -> Result<f64> {
    check_common(eps, beta, n)?;
    check_order(order)?;
    let t = 3f64.powi(order as i32) - 1.0;
    let den = eps * eps / t - (3f64.powi(order as i32 + 1) - 2.0) * eps.powi(3) / (3.0 * t.powi(3));
    if den <= 0.0 {
        return Err(Error::Domain(format!(
            "nonpositive denominator at epsilon {eps}, order {order}"
        )));
    }
    Ok((4.0 + 2.0 * beta) / den * n.ln())
}

/// `C ε⁻² 3^N (2 + β)^{2N} ln^{2N} n`.
pub fn q0_hypercontractive(eps: f64, beta: f64, n: f64, order: u32, c: f64) -> Result<f64> {
    check_common(eps, beta, n)?;
    check_order(order)?;
    check_constant(c)?;
    let k = order as i32;
    Ok(c / (eps * eps) * 3f64.powi(k) * (2.0 + beta).powi(2 * k) * n.ln().powi(2 * k))
}

/// `C ε⁻² 3^{N−1} (1 + 2/R)^N ln^{2N}(n^{2+β}/2)`.
pub fn q0_cp(eps: f64, beta: f64, n: f64, order: u32, rank: u32, c: f64) -> Result<f64> {
    Ok(3f64.powi(order as i32 - 1) * q0_tt(eps, beta, n, order, rank, c)?)
}

/// `C ε⁻² (1 + 2/R)^N ln^{2N}(n^{2+β}/2)`.
pub fn q0_tt(eps: f64, beta: f64, n: f64, order: u32, rank: u32, c: f64) -> Result<f64> {
    check_common(eps, beta, n)?;
    check_order(order)?;
    check_constant(c)?;
    if rank == 0 {
        return Err(Error::Domain("rank must be >= 1".into()));
    }
    let k = order as i32;
    let log_term = (2.0 + beta) * n.ln() - std::f64::consts::LN_2;
    Ok(c / (eps * eps) * (1.0 + 2.0 / rank as f64).powi(k) * log_term.powi(2 * k))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub epsilon: f64,
    pub tensorwise: f64,
    pub modewise: f64,
}

/// Tensor-wise and mode-wise bounds over a grid of tolerances.
pub fn bound_curve(grid: &[f64], beta: f64, n: f64, order: u32) -> Result<Vec<BoundRow>> {
    grid.iter()
        .map(|&eps| {
            Ok(BoundRow {
                epsilon: eps,
                tensorwise: q0_tensorwise(eps, beta, n)?,
                modewise: q0_modewise(eps, beta, n, order)?,
            })
        })
        .collect()
}

/// A single bound variant over a grid of tolerances.
pub fn variant_curve(template: &BoundQuery, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter()
        .map(|&eps| {
            let q = BoundQuery {
                epsilon: eps,
                ..template.clone()
            };
            Ok((eps, q.evaluate()?))
        })
        .collect()
}

/// `count` evenly spaced points from `lo` to `hi`, endpoints included.
pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count)
            .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub preserved_pairs: usize,
    pub total_pairs: usize,
    /// Largest `|‖f(U)−f(V)‖²/‖U−V‖² − 1|` over the pairs.
    pub max_distortion: f64,
}

impl TrialOutcome {
    pub fn all_preserved(&self) -> bool {
        self.preserved_pairs == self.total_pairs
    }

    pub fn fraction(&self) -> f64 {
        self.preserved_pairs as f64 / self.total_pairs as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionReport {
    pub epsilon: f64,
    pub trials: Vec<TrialOutcome>,
}

impl DistortionReport {
    /// Trials in which every pair stayed within `(1 ± ε)`.
    pub fn successes(&self) -> usize {
        self.trials.iter().filter(|t| t.all_preserved()).count()
    }

    pub fn success_rate(&self) -> f64 {
        self.successes() as f64 / self.trials.len().max(1) as f64
    }

    pub fn mean_fraction(&self) -> f64 {
        self.trials.iter().map(TrialOutcome::fraction).sum::<f64>()
            / self.trials.len().max(1) as f64
    }
}

/// Projects `points` with `trials` independent scaled projections and counts
/// pairwise squared distances preserved within `(1 ± ε)`.
pub fn distortion_experiment(
    points: &[DenseTensor],
    design: &ProjectionDesign,
    eps: f64,
    trials: usize,
    master_seed: u64,
) -> Result<DistortionReport> {
    if points.len() < 2 {
        return Err(Error::Parameter("need at least two points".into()));
    }
    let shape = points[0].shape().to_vec();
    if points.iter().any(|p| p.shape() != shape.as_slice()) {
        return Err(Error::Shape("all points must share one shape".into()));
    }
    let originals = pairwise_sq_distances(points);
    let trials = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(master_seed, Stream::Trial(t as u64));
            let spec = design.build(&shape, seed)?.with_scaling(true);
            let projected = spec.apply_all(points)?;
            let dists = pairwise_sq_distances(&projected);
            let mut preserved = 0;
            let mut worst: f64 = 0.0;
            for (&d0, &d1) in originals.iter().zip(&dists) {
                let ok = if d0 == 0.0 {
                    d1 == 0.0
                } else {
                    let ratio = d1 / d0;
                    worst = worst.max((ratio - 1.0).abs());
                    (1.0 - eps) * d0 <= d1 && d1 <= (1.0 + eps) * d0
                };
                preserved += ok as usize;
            }
            Ok(TrialOutcome {
                trial: t,
                preserved_pairs: preserved,
                total_pairs: originals.len(),
                max_distortion: worst,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DistortionReport {
        epsilon: eps,
        trials,
    })
}

fn pairwise_sq_distances(points: &[DenseTensor]) -> Vec<f64> {
    let mut out = Vec::with_capacity(points.len() * (points.len() - 1) / 2);
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let d: f64 = points[i]
                .data()
                .iter()
                .zip(points[j].data())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            out.push(d);
        }
    }
    out
}

/// Mean of `‖f(A)‖²/‖A‖²` over `draws` independent scaled projections.
pub fn expected_isometry(
    a: &DenseTensor,
    design: &ProjectionDesign,
    draws: usize,
    master_seed: u64,
) -> Result<f64> {
    let norm2 = a.frobenius_norm().powi(2);
    if norm2 == 0.0 {
        return Err(Error::Domain(
            "isometry ratio undefined for the zero tensor".into(),
        ));
    }
    let ratios = (0..draws)
        .into_par_iter()
        .map(|k| {
            let seed = derive_seed(master_seed, Stream::Projection(k as u64));
            let spec = design.build(a.shape(), seed)?.with_scaling(true);
            Ok(spec.apply(a)?.frobenius_norm().powi(2) / norm2)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ratios.iter().sum::<f64>() / draws as f64)
}
