//! Samplers and unnormalized log densities for the Gibbs full conditionals.
//!
//! Conventions: `Gamma(shape, rate)`, `InvGamma(shape, scale)` with mean
//! `scale/(shape − 1)`, and `GIG(p, a, b)` with density proportional to
//! `x^{p−1} exp(−(a x + b/x)/2)`.
//!
//! GIG draws use the Hörmann–Leydold (2014) rejection schemes: ratio of
//! uniforms with and without mode shift, and the non-universal envelope for
//! small `p` and `√(ab)`. The limits `b = 0` and `a = 0` dispatch to exact
//! gamma and inverse-gamma draws.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, cholesky_solve};

/// Smallest value any scale-like parameter is allowed to take.
pub const VARIANCE_FLOOR: f64 = 1e-300;

pub fn floor_positive(x: f64) -> f64 {
    if x.is_nan() {
        VARIANCE_FLOOR
    } else {
        x.max(VARIANCE_FLOOR)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GigParams {
    pub p: f64,
    pub a: f64,
    pub b: f64,
}

impl GigParams {
    pub fn new(p: f64, a: f64, b: f64) -> Result<Self> {
        let g = Self { p, a, b };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { p, a, b } = *self;
        if !p.is_finite() || !a.is_finite() || !b.is_finite() || a < 0.0 || b < 0.0 {
            return Err(Error::Parameter(format!("invalid GIG parameters {self:?}")));
        }
        if a == 0.0 && b == 0.0 {
            return Err(Error::Parameter("GIG needs a > 0 or b > 0".into()));
        }
        if a == 0.0 && p >= 0.0 {
            return Err(Error::Parameter(format!(
                "GIG with a = 0 is an inverse gamma and needs p < 0, got p = {p}"
            )));
        }
        if b == 0.0 && p <= 0.0 {
            return Err(Error::Parameter(format!(
                "GIG with b = 0 is a gamma and needs p > 0, got p = {p}"
            )));
        }
        Ok(())
    }

    pub fn ln_pdf_unnormalized(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (self.p - 1.0) * x.ln() - 0.5 * (self.a * x + self.b / x)
    }
}

pub fn sample_gig<R: Rng + ?Sized>(g: GigParams, rng: &mut R) -> Result<f64> {
    g.validate()?;
    let GigParams { p, a, b } = g;
    if b == 0.0 {
        return sample_gamma(p, a / 2.0, rng);
    }
    if a == 0.0 {
        return sample_inverse_gamma(-p, b / 2.0, rng);
    }
    let lambda = p.abs();
    let omega = (a * b).sqrt();
    let alpha = b.sqrt() / a.sqrt();
    if lambda > 2.0 && omega < 1e-6 {
        // Limit law; the neglected tail has mass of order omega^(2 lambda).
        return if p > 0.0 {
            sample_gamma(p, a / 2.0, rng)
        } else {
            sample_inverse_gamma(-p, b / 2.0, rng)
        };
    }
    let y = if lambda > 2.0 || omega > 3.0 {
        rou_shift(lambda, omega, rng)
    } else if lambda >= 1.0 - 2.25 * omega * omega || omega > 0.2 {
        rou_noshift(lambda, omega, rng)
    } else {
        concave_envelope(lambda, omega, rng)
    };
    let x = if p < 0.0 { alpha / y } else { alpha * y };
    Ok(floor_positive(x))
}

/// Mode of `x^{λ−1} exp(−ω(x + 1/x)/2)`.
fn gig_mode(lambda: f64, omega: f64) -> f64 {
    if lambda >= 1.0 {
        (((lambda - 1.0).powi(2) + omega * omega).sqrt() + (lambda - 1.0)) / omega
    } else {
        omega / (((1.0 - lambda).powi(2) + omega * omega).sqrt() + (1.0 - lambda))
    }
}

fn rou_shift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    // Roots of the cubic that bound the shifted region (Cardano).
    let ca = -(2.0 * (lambda + 1.0) / omega + xm);
    let cb = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
    let cc = xm;
    let pp = cb - ca * ca / 3.0;
    let qq = 2.0 * ca.powi(3) / 27.0 - ca * cb / 3.0 + cc;
    let fi = (-qq / (2.0 * (-pp.powi(3) / 27.0).sqrt()))
        .clamp(-1.0, 1.0)
        .acos();
    let fak = 2.0 * (-pp / 3.0).sqrt();
    let y1 = fak * (fi / 3.0).cos() - ca / 3.0;
    let y2 = fak * (fi / 3.0 + 4.0 / 3.0 * std::f64::consts::PI).cos() - ca / 3.0;
    let uplus = (y1 - xm) * (t * y1.ln() - s * (y1 + 1.0 / y1) - nc).exp();
    let uminus = (y2 - xm) * (t * y2.ln() - s * (y2 + 1.0 / y2) - nc).exp();
    loop {
        let u = uminus + rng.random::<f64>() * (uplus - uminus);
        let v: f64 = rng.random();
        let x = u / v + xm;
        if x <= 0.0 {
            continue;
        }
        if v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

fn rou_noshift<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let t = 0.5 * (lambda - 1.0);
    let s = 0.25 * omega;
    let xm = gig_mode(lambda, omega);
    let nc = t * xm.ln() - s * (xm + 1.0 / xm);
    let ym = ((lambda + 1.0) + ((lambda + 1.0).powi(2) + omega * omega).sqrt()) / omega;
    let um = (0.5 * (lambda + 1.0) * ym.ln() - s * (ym + 1.0 / ym) - nc).exp();
    loop {
        let u = um * rng.random::<f64>();
        let v: f64 = rng.random();
        let x = u / v;
        if x > 0.0 && v.ln() <= t * x.ln() - s * (x + 1.0 / x) - nc {
            return x;
        }
    }
}

/// Three-piece envelope for `0 ≤ λ < 1`, `0 < ω ≤ 1`.
fn concave_envelope<R: Rng + ?Sized>(lambda: f64, omega: f64, rng: &mut R) -> f64 {
    let xm = gig_mode(lambda, omega);
    let x0 = omega / (1.0 - lambda);
    let k0 = ((lambda - 1.0) * xm.ln() - 0.5 * omega * (xm + 1.0 / xm)).exp();
    let a0 = k0 * x0;
    let (k1, a1, k2, a2);
    if x0 >= 2.0 / omega {
        k1 = 0.0;
        a1 = 0.0;
        k2 = x0.powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-omega * x0 / 2.0).exp() / omega;
    } else {
        k1 = (-omega).exp();
        a1 = if lambda == 0.0 {
            k1 * (2.0 / (omega * omega)).ln()
        } else {
            k1 / lambda * ((2.0 / omega).powf(lambda) - x0.powf(lambda))
        };
        k2 = (2.0 / omega).powf(lambda - 1.0);
        a2 = k2 * 2.0 * (-1.0f64).exp() / omega;
    }
    let total = a0 + a1 + a2;
    loop {
        let mut v = total * rng.random::<f64>();
        let (x, hx);
        if v <= a0 {
            x = x0 * v / a0;
            hx = k0;
        } else {
            v -= a0;
            if v <= a1 {
                if lambda == 0.0 {
                    x = omega * (omega.exp() * v).exp();
                    hx = k1 / x;
                } else {
                    x = (x0.powf(lambda) + lambda / k1 * v).powf(1.0 / lambda);
                    hx = k1 * x.powf(lambda - 1.0);
                }
            } else {
                v -= a1;
                let edge = x0.max(2.0 / omega);
                x = -2.0 / omega * ((-omega / 2.0 * edge).exp() - omega / (2.0 * k2) * v).ln();
                hx = k2 * (-omega / 2.0 * x).exp();
            }
        }
        if !(x > 0.0) || !x.is_finite() {
            continue;
        }
        let u = rng.random::<f64>() * hx;
        if u.ln() <= (lambda - 1.0) * x.ln() - omega / 2.0 * (x + 1.0 / x) {
            return x;
        }
    }
}

fn check_shape_rate(shape: f64, rate: f64, what: &str) -> Result<()> {
    if !(shape > 0.0) || !(rate > 0.0) || !shape.is_finite() || !rate.is_finite() {
        return Err(Error::Parameter(format!(
            "{what} needs positive finite parameters, got ({shape}, {rate})"
        )));
    }
    Ok(())
}

/// `Gamma(shape, rate)`.
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    check_shape_rate(shape, rate, "gamma")?;
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(floor_positive(g.sample(rng)))
}

/// `InvGamma(shape, scale)`: `scale / Gamma(shape, 1)`.
pub fn sample_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    check_shape_rate(shape, scale, "inverse gamma")?;
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(floor_positive(scale / floor_positive(g.sample(rng))))
}

/// `ln Gamma(shape, 1)` draw, accurate for very small shapes.
fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
        Ok(floor_positive(g.sample(rng)).ln())
    } else {
        let g = Gamma::new(shape + 1.0, 1.0).map_err(|e| Error::Parameter(e.to_string()))?;
        let u: f64 = 1.0 - rng.random::<f64>();
        Ok(floor_positive(g.sample(rng)).ln() + u.ln() / shape)
    }
}

/// Dirichlet draw whose components sum to exactly `1.0` under left-to-right
/// summation.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    if alpha.is_empty() {
        return Err(Error::Parameter(
            "Dirichlet needs at least one component".into(),
        ));
    }
    if alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::Parameter(format!(
            "Dirichlet concentrations must be positive: {alpha:?}"
        )));
    }
    let logs = alpha
        .iter()
        .map(|&a| sample_ln_gamma(a, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(normalize_log_weights(&logs))
}

/// `exp(l_i − logsumexp(l))`, nudged so that the left-to-right sum is
/// exactly `1.0`.
pub fn normalize_log_weights(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    let mut out: Vec<f64> = logs.iter().map(|l| (l - max).exp() / total).collect();
    // The last entry is `1 − head`. When the head sum is at most one this makes
    // the left-to-right total exactly one (for head ≥ 1/2 the subtraction is
    // exact; below that the residue is under half an ulp of 1). A head that
    // rounded above one is walked down an ulp at a time first.
    let k = out.len();
    if k == 1 {
        return vec![1.0];
    }
    let big = (0..k - 1)
        .max_by(|&i, &j| out[i].total_cmp(&out[j]))
        .unwrap_or(0);
    let mut head: f64 = out[..k - 1].iter().sum();
    while head > 1.0 {
        out[big] = out[big].next_down();
        head = out[..k - 1].iter().sum();
    }
    out[k - 1] = 1.0 - head;
    out
}

/// Draw from `N(P⁻¹h, P⁻¹)` given the precision `P` and `h`.
pub fn sample_mvn_from_precision<R: Rng + ?Sized>(
    h: &DVector<f64>,
    precision: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = h.len();
    if precision.nrows() != n || precision.ncols() != n {
        return Err(Error::Shape(format!(
            "precision is {}x{} but h has length {n}",
            precision.nrows(),
            precision.ncols()
        )));
    }
    let l = cholesky_lower(precision.clone())?;
    let mean = cholesky_solve(&l, h)?;
    let z = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
    let offset = l
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Decomposition("singular Cholesky factor".into()))?;
    Ok(mean + offset)
}

pub fn ln_gamma_pdf_unnormalized(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (shape - 1.0) * x.ln() - rate * x
}

pub fn ln_inverse_gamma_pdf_unnormalized(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -(shape + 1.0) * x.ln() - scale / x
}

pub fn ln_dirichlet_pdf_unnormalized(x: &[f64], alpha: &[f64]) -> f64 {
    x.iter()
        .zip(alpha)
        .map(|(&xi, &a)| {
            if xi > 0.0 {
                (a - 1.0) * xi.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

/// Full Gaussian log density, including the normalizing constant.
pub fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}
