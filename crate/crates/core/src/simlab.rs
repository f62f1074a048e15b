//! Simulation scenarios: synthetic coefficients, data generation, ensemble
//! fits and forecast metrics.
//!
//! Coefficient patterns on a `p1 × p2` grid (mode 1 indexes rows):
//!
//! - `CI`: annulus around the centre, normalized radius in `[0.25, 0.4]`.
//! - `CR`: a centred horizontal band plus a centred vertical band.
//! - `L`: the centred horizontal band alone.
//! - `B`: the top-left quadrant.
//! - `unstructured(s)`: i.i.d. Bernoulli(`s`) entries, any shape.
//!
//! Band width along a mode of size `p` is `ceil(p/10)`, raised by one when
//! needed so that `p − width` is even and the band is exactly centred.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleFit;
use crate::error::{Error, Result};
use crate::gibbs::output::sha256_hex;
use crate::gibbs::{McmcSettings, PriorSpec};
use crate::projection::{ProjectionDesign, DEFAULT_PSI};
use crate::rng::{stream_rng, Stream, StreamRng};
use crate::tensor::{dot, DenseTensor};
use crate::timing::hours;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CoefficientPattern {
    #[serde(rename = "CI")]
    Circle,
    #[serde(rename = "CR")]
    Cross,
    #[serde(rename = "L")]
    Line,
    #[serde(rename = "B")]
    Block,
    /// Probability that an entry is one.
    #[serde(rename = "unstructured")]
    Unstructured(f64),
}

fn band(p: usize) -> std::ops::Range<usize> {
    let mut w = p.div_ceil(10);
    if (p - w) % 2 == 1 {
        w += 1;
    }
    let start = (p - w) / 2;
    start..start + w
}

pub fn make_coefficient(
    pattern: CoefficientPattern,
    shape: &[usize],
    rng: &mut StreamRng,
) -> Result<DenseTensor> {
    if let CoefficientPattern::Unstructured(s) = pattern {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Parameter(format!(
                "sparsity level {s} is outside [0, 1]"
            )));
        }
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|_| if rng.random::<f64>() < s { 1.0 } else { 0.0 })
            .collect();
        return DenseTensor::new(shape.to_vec(), data);
    }
    if shape.len() != 2 || shape.iter().any(|&p| p < 5) {
        return Err(Error::UnsupportedShape(format!(
            "structured patterns need a 2-mode shape of at least 5x5, got {shape:?}"
        )));
    }
    let (p1, p2) = (shape[0], shape[1]);
    let (rows, cols) = (band(p1), band(p2));
    DenseTensor::from_fn(shape, |idx| {
        let (i, j) = (idx[0], idx[1]);
        let on = match pattern {
            CoefficientPattern::Circle => {
                let di = (i as f64 + 0.5) / p1 as f64 - 0.5;
                let dj = (j as f64 + 0.5) / p2 as f64 - 0.5;
                let r = (di * di + dj * dj).sqrt();
                (0.25..=0.4).contains(&r)
            }
            CoefficientPattern::Cross => rows.contains(&i) || cols.contains(&j),
            CoefficientPattern::Line => rows.contains(&i),
            CoefficientPattern::Block => i < p1 / 2 && j < p2 / 2,
            CoefficientPattern::Unstructured(_) => unreachable!(),
        };
        if on {
            1.0
        } else {
            0.0
        }
    })
}

/// `y_j = μ0 + ⟨B0, X_j⟩ + σ ε_j` with standard normal covariates and noise.
pub fn generate_dataset(
    b0: &DenseTensor,
    n: usize,
    sigma: f64,
    mu0: f64,
    rng: &mut StreamRng,
) -> Result<(Vec<DenseTensor>, Vec<f64>)> {
    if !(sigma >= 0.0) {
        return Err(Error::Parameter(format!(
            "noise SD must be non-negative, got {sigma}"
        )));
    }
    let mut xs = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let x = DenseTensor::from_fn(b0.shape(), |_| StandardNormal.sample(rng))?;
        let e: f64 = StandardNormal.sample(rng);
        y.push(mu0 + dot(b0.data(), x.data()) + sigma * e);
        xs.push(x);
    }
    Ok((xs, y))
}

/// `d_j = (y_j − ȳ)²`.
pub fn distance_to_mean(y: &[f64]) -> Vec<f64> {
    let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    y.iter().map(|v| (v - mean).powi(2)).collect()
}

/// `RMSE_j = √((1/L) Σ_ℓ (y_j − ŷ_j^ℓ)²)`, with `predictions[ℓ][j]`.
pub fn rmse_per_point(y: &[f64], predictions: &[Vec<f64>]) -> Result<Vec<f64>> {
    if predictions.is_empty() {
        return Err(Error::Empty("no projections".into()));
    }
    if let Some(p) = predictions.iter().find(|p| p.len() != y.len()) {
        return Err(Error::Shape(format!(
            "{} predictions for {} points",
            p.len(),
            y.len()
        )));
    }
    let l = predictions.len() as f64;
    Ok((0..y.len())
        .map(|j| {
            (predictions
                .iter()
                .map(|p| (y[j] - p[j]).powi(2))
                .sum::<f64>()
                / l)
                .sqrt()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub mse: f64,
    pub variance: f64,
    pub bias2: f64,
    pub variance_share: f64,
    pub bias_share: f64,
}

/// Splits `(1/L) Σ_ℓ (y − ŷ_ℓ)²` into the spread of the predictions around
/// their mean and the squared bias of that mean. A zero MSE is reported with
/// variance share 0 and bias share 1.
pub fn bias_variance_decomposition(y: f64, predictions: &[f64]) -> Result<Decomposition> {
    if predictions.len() < 2 {
        return Err(Error::Parameter(format!(
            "decomposition needs at least 2 projections, got {}",
            predictions.len()
        )));
    }
    let l = predictions.len() as f64;
    let mean = predictions.iter().sum::<f64>() / l;
    let variance = predictions.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / l;
    let bias2 = (y - mean).powi(2);
    let mse = variance + bias2;
    let variance_share = if mse > 0.0 { variance / mse } else { 0.0 };
    Ok(Decomposition {
        mse,
        variance,
        bias2,
        variance_share,
        bias_share: 1.0 - variance_share,
    })
}

/// Performance per cost, `1 / (RMSE · cost)`.
pub fn efficiency_score(rmse: f64, cost_hours: f64) -> Result<f64> {
    if !(rmse > 0.0) || !(cost_hours > 0.0) {
        return Err(Error::Parameter(format!(
            "efficiency needs positive RMSE and cost, got {rmse} and {cost_hours}"
        )));
    }
    Ok(1.0 / (rmse * cost_hours))
}

/// Projection family of a scenario.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProjectionKind {
    /// Tensor-wise to a vector.
    Tensorwise,
    /// Mode-wise on every mode, leaving the listed (0-based) modes intact.
    Modewise(Vec<usize>),
    /// No compression.
    Identity,
}

impl fmt::Display for ProjectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionKind::Tensorwise => write!(f, "TW"),
            ProjectionKind::Identity => write!(f, "identity"),
            ProjectionKind::Modewise(p) if p.is_empty() => write!(f, "MW"),
            ProjectionKind::Modewise(p) => {
                let modes: Vec<String> = p.iter().map(|m| (m + 1).to_string()).collect();
                write!(f, "MW({})", modes.join(","))
            }
        }
    }
}

impl FromStr for ProjectionKind {
    type Err = Error;

    /// `TW`, `MW`, `MW(1)`, `MW(1,2)`, ... (1-based modes) or `identity`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_uppercase().as_str() {
            "TW" => return Ok(ProjectionKind::Tensorwise),
            "MW" => return Ok(ProjectionKind::Modewise(vec![])),
            "IDENTITY" | "NONE" => return Ok(ProjectionKind::Identity),
            _ => {}
        }
        let inner = t
            .strip_prefix("MW(")
            .or_else(|| t.strip_prefix("mw("))
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parameter(format!("unknown projection type {s:?}")))?;
        let mut modes = inner
            .split(',')
            .map(|m| match m.trim().parse::<usize>() {
                Ok(k) if k >= 1 => Ok(k - 1),
                _ => Err(Error::Parameter(format!(
                    "bad preserved mode {m:?} in {s:?}"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        modes.sort_unstable();
        modes.dedup();
        Ok(ProjectionKind::Modewise(modes))
    }
}

impl Serialize for ProjectionKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ProjectionKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Maps a compression rate to a design: mode-wise `q_m = round(p_m r^{1/K})`
/// over the `K` compressed modes, tensor-wise `q = round(r Π p_m)`.
pub fn design_for_rate(
    kind: &ProjectionKind,
    shape: &[usize],
    r: f64,
    psi: f64,
) -> Result<ProjectionDesign> {
    if !(r > 0.0 && r <= 1.0) {
        return Err(Error::Parameter(format!(
            "compression rate {r} is outside (0, 1]"
        )));
    }
    let clamp = |q: f64, p: usize| (q.round() as usize).clamp(1, p);
    match kind {
        ProjectionKind::Identity => Ok(ProjectionDesign::identity(shape)),
        ProjectionKind::Tensorwise => {
            let p: usize = shape.iter().product();
            Ok(ProjectionDesign::tensorwise(clamp(r * p as f64, p), psi))
        }
        ProjectionKind::Modewise(preserve) => {
            if let Some(&m) = preserve.iter().find(|&&m| m >= shape.len()) {
                return Err(Error::Parameter(format!(
                    "mode {} does not exist in {shape:?}",
                    m + 1
                )));
            }
            let k = shape.len() - preserve.len();
            let per_mode = if k > 0 { r.powf(1.0 / k as f64) } else { 1.0 };
            let q: Vec<usize> = shape
                .iter()
                .enumerate()
                .map(|(m, &p)| {
                    if preserve.contains(&m) {
                        p
                    } else {
                        clamp(p as f64 * per_mode, p)
                    }
                })
                .collect();
            let mut d = ProjectionDesign::modewise(&q, psi);
            d.preserve_modes = preserve.clone();
            Ok(d)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub coefficient: CoefficientPattern,
    pub shape: Vec<usize>,
    pub n_train: usize,
    pub n_test: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub mu0: f64,
    pub r: f64,
    #[serde(default = "default_psi")]
    pub psi: f64,
    pub projection: ProjectionKind,
    /// Ensemble size `L`.
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub mcmc: McmcSettings,
    /// Apply the isometric scale to compressed covariates.
    #[serde(default)]
    pub scaled: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_sigma() -> f64 {
    1.0
}

fn default_psi() -> f64 {
    DEFAULT_PSI
}

fn default_members() -> usize {
    10
}

impl ScenarioConfig {
    /// A scenario with the defaults used throughout the experiments.
    pub fn new(
        coefficient: CoefficientPattern,
        shape: &[usize],
        projection: ProjectionKind,
        r: f64,
    ) -> Self {
        Self {
            coefficient,
            shape: shape.to_vec(),
            n_train: 1000,
            n_test: 500,
            sigma: default_sigma(),
            mu0: 0.0,
            r,
            psi: default_psi(),
            projection,
            members: default_members(),
            prior: PriorSpec::default(),
            mcmc: McmcSettings::default(),
            scaled: false,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::Parameter(
                "n_train and n_test must be at least 1".into(),
            ));
        }
        if self.members == 0 {
            return Err(Error::Parameter(
                "the ensemble needs at least one member".into(),
            ));
        }
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::Parameter(format!(
                "compression rate {} is outside (0, 1]",
                self.r
            )));
        }
        self.mcmc.validate()
    }

    pub fn design(&self) -> Result<ProjectionDesign> {
        design_for_rate(&self.projection, &self.shape, self.r, self.psi)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).unwrap_or_default().as_bytes())
    }
}

/// Coefficient plus training and test samples of a scenario.
#[derive(Clone, Debug)]
pub struct SimulatedData {
    pub coefficient: DenseTensor,
    pub train_x: Vec<DenseTensor>,
    pub train_y: Vec<f64>,
    pub test_x: Vec<DenseTensor>,
    pub test_y: Vec<f64>,
}

/// Draws the coefficient, training set and test set from separate streams of
/// the scenario seed.
pub fn simulate(config: &ScenarioConfig) -> Result<SimulatedData> {
    let coefficient = make_coefficient(
        config.coefficient,
        &config.shape,
        &mut stream_rng(config.seed, Stream::Coefficient),
    )?;
    let mut train = stream_rng(config.seed, Stream::TrainData);
    let (train_x, train_y) = generate_dataset(
        &coefficient,
        config.n_train,
        config.sigma,
        config.mu0,
        &mut train,
    )?;
    let mut test = stream_rng(config.seed, Stream::TestData);
    let (test_x, test_y) = generate_dataset(
        &coefficient,
        config.n_test,
        config.sigma,
        config.mu0,
        &mut test,
    )?;
    Ok(SimulatedData {
        coefficient,
        train_x,
        train_y,
        test_x,
        test_y,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointReport {
    pub y: f64,
    pub pooled: f64,
    pub distance: f64,
    pub rmse: f64,
    pub variance_share: Option<f64>,
    pub bias_share: Option<f64>,
    pub member_predictions: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub config_hash: String,
    pub output_shape: Vec<usize>,
    pub weights: Vec<f64>,
    /// Mean over test points of the per-point RMSE across projections.
    pub mean_rmse: f64,
    /// RMSE of the model-averaged forecast.
    pub pooled_rmse: f64,
    pub mean_distance: f64,
    pub cpu_seconds: f64,
    pub cost_hours: f64,
    pub efficiency_score: f64,
    pub points: Vec<PointReport>,
}

/// Fits and evaluates `config` on already simulated data, optionally with a
/// different projection design.
pub fn evaluate(
    config: &ScenarioConfig,
    data: &SimulatedData,
    design: ProjectionDesign,
) -> Result<ScenarioReport> {
    config.validate()?;
    let fit = EnsembleFit {
        design: design.clone(),
        prior: config.prior.clone(),
        settings: config.mcmc,
        members: config.members,
        seed: config.seed,
        scaled: config.scaled,
    };
    let (model, cpu) = fit.fit(&data.train_x, &data.train_y)?;
    let per_point: Vec<Vec<f64>> = data
        .test_x
        .iter()
        .map(|x| model.member_means(x))
        .collect::<Result<_>>()?;
    let predictions: Vec<Vec<f64>> = (0..model.len())
        .map(|l| per_point.iter().map(|p| p[l]).collect())
        .collect();
    let rmse = rmse_per_point(&data.test_y, &predictions)?;
    let distance = distance_to_mean(&data.test_y);
    let mut points = Vec::with_capacity(data.test_y.len());
    let mut sq = 0.0;
    for (j, member_predictions) in per_point.into_iter().enumerate() {
        let pooled = crate::ensemble::pool_means(&model.weights, &member_predictions)?;
        sq += (data.test_y[j] - pooled).powi(2);
        let dec = if model.len() >= 2 {
            Some(bias_variance_decomposition(
                data.test_y[j],
                &member_predictions,
            )?)
        } else {
            None
        };
        points.push(PointReport {
            y: data.test_y[j],
            pooled,
            distance: distance[j],
            rmse: rmse[j],
            variance_share: dec.map(|d| d.variance_share),
            bias_share: dec.map(|d| d.bias_share),
            member_predictions,
        });
    }
    let n = data.test_y.len() as f64;
    let pooled_rmse = (sq / n).sqrt();
    let cost_hours = hours(cpu);
    Ok(ScenarioReport {
        config: config.clone(),
        config_hash: config.content_hash(),
        output_shape: design.output_shape,
        weights: model.weights,
        mean_rmse: rmse.iter().sum::<f64>() / n,
        pooled_rmse,
        mean_distance: distance.iter().sum::<f64>() / n,
        cpu_seconds: cpu.as_secs_f64(),
        cost_hours,
        efficiency_score: efficiency_score(pooled_rmse, cost_hours).unwrap_or(f64::INFINITY),
        points,
    })
}

/// Simulates the data, fits the ensemble and scores the test forecasts.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    let ctx = |e: Error| {
        e.context(format!(
            "scenario {} {}",
            config.projection,
            config.content_hash()
        ))
    };
    let data = simulate(config).map_err(ctx)?;
    evaluate(config, &data, config.design().map_err(ctx)?).map_err(ctx)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub r: f64,
    pub output_shape: Vec<usize>,
    pub cpu_hours: f64,
    pub rmse: f64,
    pub efficiency_score: f64,
}

/// Compares the compressed fit of `config` with the uncompressed fit (same
/// prior, data and iteration count).
///
/// Identity-projection members would differ only in their chain seed, so BTR
/// is a single chain while the CBTR cost sums over all members.
pub fn run_bench(config: &ScenarioConfig) -> Result<Vec<BenchRow>> {
    let data = simulate(config)?;
    let btr = ScenarioConfig {
        members: 1,
        ..config.clone()
    };
    let mut rows = Vec::with_capacity(2);
    for (name, cfg, design, r) in [
        ("CBTR", config, config.design()?, config.r),
        ("BTR", &btr, ProjectionDesign::identity(&config.shape), 1.0),
    ] {
        let rep = evaluate(cfg, &data, design).map_err(|e| e.context(format!("{name} fit")))?;
        rows.push(BenchRow {
            model: name.to_string(),
            r,
            output_shape: rep.output_shape,
            cpu_hours: rep.cost_hours,
            rmse: rep.pooled_rmse,
            efficiency_score: rep.efficiency_score,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;

    fn ones(t: &DenseTensor) -> usize {
        t.data().iter().filter(|&&v| v == 1.0).count()
    }

    #[test]
    fn block_is_one_rectangle() {
        let b =
            make_coefficient(CoefficientPattern::Block, &[20, 20], &mut rng_from_seed(0)).unwrap();
        let cells: Vec<(usize, usize)> = (0..20)
            .flat_map(|i| (0..20).map(move |j| (i, j)))
            .filter(|&(i, j)| b.get(&[i, j]) == 1.0)
            .collect();
        let (i0, i1) = (
            cells.iter().map(|c| c.0).min().unwrap(),
            cells.iter().map(|c| c.0).max().unwrap(),
        );
        let (j0, j1) = (
            cells.iter().map(|c| c.1).min().unwrap(),
            cells.iter().map(|c| c.1).max().unwrap(),
        );
        // Every cell of the bounding box is set, so the ones form one rectangle.
        assert_eq!(cells.len(), (i1 - i0 + 1) * (j1 - j0 + 1));
        assert_eq!(cells.len(), 100);
    }

    #[test]
    fn cross_is_rotation_symmetric() {
        for p in [5usize, 10, 15, 20, 33] {
            let c = make_coefficient(CoefficientPattern::Cross, &[p, p], &mut rng_from_seed(0))
                .unwrap();
            for i in 0..p {
                for j in 0..p {
                    assert_eq!(c.get(&[i, j]), c.get(&[j, p - 1 - i]), "p = {p}");
                }
            }
        }
        let c =
            make_coefficient(CoefficientPattern::Cross, &[20, 20], &mut rng_from_seed(0)).unwrap();
        assert_eq!(ones(&c), 76);
    }

    #[test]
    fn circle_and_line_shapes() {
        let c =
            make_coefficient(CoefficientPattern::Circle, &[20, 20], &mut rng_from_seed(0)).unwrap();
        assert_eq!(c.get(&[10, 10]), 0.0);
        assert_eq!(c.get(&[0, 0]), 0.0);
        assert_eq!(c.get(&[10, 3]), 1.0);
        let l =
            make_coefficient(CoefficientPattern::Line, &[20, 20], &mut rng_from_seed(0)).unwrap();
        assert_eq!(ones(&l), 40);
        assert!(
            make_coefficient(CoefficientPattern::Line, &[4, 20], &mut rng_from_seed(0)).is_err()
        );
        assert!(
            make_coefficient(CoefficientPattern::Line, &[4, 5, 5], &mut rng_from_seed(0)).is_err()
        );
    }

    #[test]
    fn unstructured_fraction() {
        for s in [0.25, 0.5, 0.75] {
            let u = make_coefficient(
                CoefficientPattern::Unstructured(s),
                &[50, 50],
                &mut rng_from_seed(3),
            )
            .unwrap();
            let n = 2500.0;
            let frac = ones(&u) as f64 / n;
            assert!(
                (frac - s).abs() < 3.0 * (s * (1.0 - s) / n).sqrt(),
                "{frac} vs {s}"
            );
        }
    }

    #[test]
    fn dataset_properties() {
        let b0 =
            make_coefficient(CoefficientPattern::Cross, &[10, 10], &mut rng_from_seed(0)).unwrap();
        let (xs, y) = generate_dataset(&b0, 50, 0.0, 2.0, &mut rng_from_seed(1)).unwrap();
        for (x, y) in xs.iter().zip(&y) {
            assert_eq!(y - (2.0 + dot(b0.data(), x.data())), 0.0);
        }
        let n = 10_000;
        let (_, y) = generate_dataset(&b0, n, 0.5, 0.0, &mut rng_from_seed(2)).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let expected = b0.frobenius_norm().powi(2) + 0.25;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");

        let zero = DenseTensor::zeros(&[3, 3]).unwrap();
        let (xs, y) = generate_dataset(&zero, n, 1.0, 0.0, &mut rng_from_seed(4)).unwrap();
        let x0: Vec<f64> = xs.iter().map(|x| x.data()[0] - 2.0 * x.data()[4]).collect();
        let corr = pearson(&x0, &y);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "{corr}");
    }

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn metric_examples() {
        assert_eq!(distance_to_mean(&[3.0; 4]), vec![0.0; 4]);
        assert_eq!(
            rmse_per_point(&[1.0, 2.0], &[vec![1.0, 2.0]]).unwrap(),
            vec![0.0, 0.0]
        );
        let r = rmse_per_point(&[0.0], &[vec![3.0], vec![4.0]]).unwrap();
        assert!((r[0] - 12.5f64.sqrt()).abs() < 1e-15);
        let d = bias_variance_decomposition(0.0, &[-1.0, 1.0]).unwrap();
        assert_eq!((d.variance, d.bias2), (1.0, 0.0));
        let d = bias_variance_decomposition(2.0, &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(d.variance_share, 0.0);
        assert!(bias_variance_decomposition(0.0, &[1.0]).is_err());
        assert!((efficiency_score(0.05, 2.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((efficiency_score(0.05, 4.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(efficiency_score(0.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn decomposition_is_exact(y in -10.0f64..10.0, preds in prop::collection::vec(-10.0f64..10.0, 2..12)) {
            let d = bias_variance_decomposition(y, &preds).unwrap();
            let mse = preds.iter().map(|p| (y - p).powi(2)).sum::<f64>() / preds.len() as f64;
            prop_assert!((d.mse - mse).abs() <= 1e-12 * (1.0 + mse));
            prop_assert!((0.0..=1.0).contains(&d.variance_share));
            prop_assert!((0.0..=1.0).contains(&d.bias_share));
            prop_assert!((d.variance_share + d.bias_share - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn rate_mapping() {
        let d = design_for_rate(&ProjectionKind::Modewise(vec![]), &[20, 20], 0.36, 3.0).unwrap();
        assert_eq!(d.output_shape, vec![12, 12]);
        let d = design_for_rate(&ProjectionKind::Tensorwise, &[20, 20], 0.36, 3.0).unwrap();
        assert_eq!(d.output_shape, vec![144]);
        let d = design_for_rate(&ProjectionKind::Modewise(vec![0]), &[20, 20], 0.5, 3.0).unwrap();
        assert_eq!(d.output_shape, vec![20, 10]);
        assert!(design_for_rate(&ProjectionKind::Tensorwise, &[20, 20], 1.5, 3.0).is_err());
        for s in ["TW", "MW", "MW(1)", "MW(1,2)", "identity"] {
            let k: ProjectionKind = s.parse().unwrap();
            assert_eq!(k.to_string(), s);
        }
        assert!("MW(0)".parse::<ProjectionKind>().is_err());
    }

    #[test]
    fn null_scenario_forecasts_the_intercept() {
        let mut cfg = ScenarioConfig::new(
            CoefficientPattern::Unstructured(0.0),
            &[4, 4],
            ProjectionKind::Modewise(vec![]),
            0.5,
        );
        cfg.n_train = 80;
        cfg.n_test = 20;
        cfg.sigma = 0.1;
        cfg.mu0 = 3.0;
        cfg.members = 2;
        cfg.mcmc = McmcSettings::new(300, 100, 1);
        cfg.prior = PriorSpec::Parafac(crate::gibbs::ParafacPriorConfig::with_rank(2));
        cfg.seed = 9;
        let rep = run_scenario(&cfg).unwrap();
        for p in &rep.points {
            assert!((p.pooled - 3.0).abs() < 3.0 * 0.1, "{}", p.pooled);
        }
        let again = run_scenario(&cfg).unwrap();
        assert_eq!(rep.points, again.points);
        assert_eq!(rep.weights, again.weights);
        let total: f64 = rep.weights.iter().sum();
        assert!((total - 1.0).abs() <= 1e-12);
    }
}
