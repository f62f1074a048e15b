//! The six subcommands. Each writes its result files and a manifest into one
//! output directory and never touches its inputs.

use std::path::{Path, PathBuf};

use ctrp_core::ensemble::{pool_means, EnsembleFit, EnsembleMember, EnsembleModel};
use ctrp_core::gibbs::output::ChainManifest;
use ctrp_core::gibbs::{ChainOutput, PriorSpec, RegressionData};
use ctrp_core::jl::{linear_grid, BoundQuery, BoundVariant};
use ctrp_core::projection::SpecManifest;
use ctrp_core::rng::{derive_seed, stream_rng, Stream};
use ctrp_core::simlab::{evaluate, run_bench, simulate, ScenarioConfig};
use ctrp_core::timing::hours;
use ctrp_core::GtrpSpec;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{load_json, RunConfig, Split};
use crate::data::dataset_csv;
use crate::error::{CliError, CliResult};
use crate::output::{num, OutputDir};

/// Model description written by `fit` and read by `predict`.
pub const MODEL_FILE: &str = "model.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedModel {
    pub input_shape: Vec<usize>,
    pub prior: PriorSpec,
    pub members: Vec<FittedMember>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedMember {
    pub projection: SpecManifest,
    pub chain: ChainManifest,
    pub chain_file: String,
    pub weight: f64,
    pub eta: f64,
}

fn member_specs(cfg: &RunConfig) -> CliResult<Vec<GtrpSpec>> {
    let design = cfg.design()?;
    let shape = cfg.input_shape();
    let p = &cfg.projection;
    (0..p.members as u64)
        .map(|l| {
            Ok(design
                .build(&shape, derive_seed(p.seed, Stream::Projection(l)))?
                .with_scaling(p.scaled))
        })
        .collect()
}

fn seeds_json(seed: u64, members: usize) -> Value {
    json!({
        "master": seed,
        "projection": (0..members as u64).map(|l| derive_seed(seed, Stream::Projection(l))).collect::<Vec<_>>(),
        "chain": (0..members as u64).map(|l| derive_seed(seed, Stream::Chain(l))).collect::<Vec<_>>(),
    })
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn run_config(path: &Path, seed_override: Option<u64>) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed_override {
        cfg.projection.seed = s;
    }
    Ok(cfg)
}

fn scenario_config(path: &Path, seed_override: Option<u64>) -> CliResult<ScenarioConfig> {
    let mut cfg: ScenarioConfig = load_json(path)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
    }
    cfg.validate()?;
    cfg.design()?;
    Ok(cfg)
}

// ---------------------------------------------------------------- bounds

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default)]
    pub variants: Option<Vec<BoundVariant>>,
    /// `lo:hi:count` or a comma-separated list.
    #[serde(default)]
    pub eps_grid: Option<String>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub n: Option<f64>,
    #[serde(default)]
    pub order: Option<u32>,
    #[serde(default)]
    pub rank: Option<u32>,
    #[serde(default)]
    pub constant: Option<f64>,
}

impl BoundsConfig {
    /// Fields set in `other` replace those in `self`.
    pub fn merge(self, other: BoundsConfig) -> Self {
        Self {
            variants: other.variants.or(self.variants),
            eps_grid: other.eps_grid.or(self.eps_grid),
            beta: other.beta.or(self.beta),
            n: other.n.or(self.n),
            order: other.order.or(self.order),
            rank: other.rank.or(self.rank),
            constant: other.constant.or(self.constant),
        }
    }
}

pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || {
        CliError::config(format!(
            "invalid epsilon grid {s:?}: use lo:hi:count or a comma list"
        ))
    };
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts.as_slice() else {
            return Err(bad());
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        linear_grid(lo, hi, count)
    } else {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<CliResult<Vec<_>>>()?
    };
    if grid.is_empty() {
        return Err(bad());
    }
    Ok(grid)
}

pub fn bounds(config: Option<&Path>, flags: BoundsConfig, out: &Path) -> CliResult<()> {
    let base = match config {
        Some(p) => load_json::<BoundsConfig>(p)?,
        None => BoundsConfig::default(),
    };
    let cfg = base.merge(flags);
    let variants = cfg
        .variants
        .clone()
        .unwrap_or_else(|| vec![BoundVariant::Tensorwise, BoundVariant::Modewise]);
    if variants.is_empty() {
        return Err(CliError::config("no bound variants requested"));
    }
    let grid_text = cfg
        .eps_grid
        .clone()
        .unwrap_or_else(|| "0.05:0.95:91".into());
    let grid = parse_grid(&grid_text)?;
    let mut template = BoundQuery::new(
        variants[0],
        grid[0],
        cfg.beta.unwrap_or(0.2),
        cfg.n.unwrap_or(1e4),
        cfg.order.unwrap_or(3),
    );
    template.rank = cfg.rank.unwrap_or(1);
    template.constant = cfg.constant.unwrap_or(1.0);

    let mut rows = Vec::with_capacity(grid.len());
    for &eps in &grid {
        let mut row = vec![num(eps)];
        for &v in &variants {
            let q = BoundQuery {
                variant: v,
                epsilon: eps,
                ..template.clone()
            };
            row.push(num(q
                .evaluate()
                .map_err(|e| CliError::from(e).context(v.name()))?));
        }
        rows.push(row);
    }
    let mut header = vec!["epsilon".to_string()];
    header.extend(variants.iter().map(|v| v.name().to_string()));

    let mut dir = OutputDir::create(out)?;
    dir.write_csv("bounds.csv", &header, rows)?;
    let resolved = json!({
        "variants": variants,
        "eps_grid": grid_text,
        "beta": template.beta,
        "n": template.n,
        "order": template.order,
        "rank": template.rank,
        "constant": template.constant,
    });
    dir.finish(
        "bounds",
        resolved,
        Value::Null,
        json!({ "rows": grid.len() }),
        Value::Null,
    )
}

// ---------------------------------------------------------------- project

pub fn project(config: &Path, out: Option<&Path>, seed_override: Option<u64>) -> CliResult<()> {
    let cfg = run_config(config, seed_override)?;
    let specs = member_specs(&cfg)?;
    let mut dir = OutputDir::create(&cfg.out_dir(out)?)?;
    let manifests: Vec<SpecManifest> = specs.iter().map(GtrpSpec::manifest).collect();
    dir.write(
        "projections.json",
        (serde_json::to_string_pretty(&manifests).expect("serializable") + "\n").as_bytes(),
    )?;
    for (split, name) in [(Split::Train, "train"), (Split::Test, "test")] {
        if !cfg.has_split(split) {
            continue;
        }
        let data = cfg.dataset(split)?;
        for (l, spec) in specs.iter().enumerate() {
            let z = spec.apply_all(&data.xs)?;
            dir.write(
                &format!("{name}_projected_{l}.csv"),
                &dataset_csv(&z, data.y.as_deref()),
            )?;
        }
    }
    let results = json!({
        "output_shape": manifests[0].output_shape,
        "compression_rate": manifests[0].compression_rate,
        "content_hashes": manifests.iter().map(|m| m.content_hash.clone()).collect::<Vec<_>>(),
    });
    dir.finish(
        "project",
        to_value(&cfg),
        seeds_json(cfg.projection.seed, cfg.projection.members),
        results,
        Value::Null,
    )
}

// ---------------------------------------------------------------- fit

pub fn fit(config: &Path, out: Option<&Path>, seed_override: Option<u64>) -> CliResult<()> {
    let cfg = run_config(config, seed_override)?;
    let train = cfg.dataset(Split::Train)?;
    let y = train.responses()?.to_vec();
    let p = &cfg.projection;
    let job = EnsembleFit {
        design: cfg.design()?,
        prior: cfg.model.clone(),
        settings: cfg.mcmc,
        members: p.members,
        seed: p.seed,
        scaled: p.scaled,
    };
    let (model, cpu) = job.fit(&train.xs, &y)?;

    let mut dir = OutputDir::create(&cfg.out_dir(out)?)?;
    let prior_json = to_value(&cfg.model);
    let mut members = Vec::with_capacity(model.len());
    for (l, m) in model.members.iter().enumerate() {
        let chain_file = format!("chain_{l}.csv");
        dir.write(&chain_file, m.chain.to_csv().as_bytes())?;
        members.push(FittedMember {
            projection: m.spec.manifest(),
            chain: m.chain.manifest(prior_json.clone()),
            chain_file,
            weight: model.weights[l],
            eta: model.rlr_etas[l],
        });
    }
    dir.write_csv(
        "weights.csv",
        &["member", "weight", "eta", "projection_id"].map(String::from),
        members.iter().enumerate().map(|(l, m)| {
            vec![
                l.to_string(),
                num(m.weight),
                num(m.eta),
                m.projection.content_hash.clone(),
            ]
        }),
    )?;
    let fitted = FittedModel {
        input_shape: cfg.input_shape(),
        prior: cfg.model.clone(),
        members,
    };
    dir.write(
        MODEL_FILE,
        (serde_json::to_string_pretty(&fitted).expect("serializable") + "\n").as_bytes(),
    )?;

    // In-sample fit of the pooled posterior mean.
    let mut sq = 0.0;
    for (x, yt) in train.xs.iter().zip(&y) {
        sq += (yt - model.pooled_point_forecast(x)?).powi(2);
    }
    let results = json!({
        "weights": model.weights,
        "train_rmse": (sq / y.len() as f64).sqrt(),
        "n_train": y.len(),
        "draws_per_member": model.members[0].chain.len(),
    });
    dir.finish(
        "fit",
        to_value(&cfg),
        seeds_json(p.seed, p.members),
        results,
        json!({ "cpu_seconds": cpu.as_secs_f64(), "cpu_hours": hours(cpu) }),
    )
}

/// Rebuilds the ensemble written by `fit`, checking every projection and
/// chain file against its recorded hash.
pub fn load_model(dir: &Path) -> CliResult<(FittedModel, EnsembleModel)> {
    let fitted: FittedModel = load_json(&dir.join(MODEL_FILE))?;
    let mut members = Vec::with_capacity(fitted.members.len());
    for (l, m) in fitted.members.iter().enumerate() {
        let ctx = |e: CliError| e.context(format!("member {l}"));
        let spec = m.projection.regenerate().map_err(|e| ctx(e.into()))?;
        let path = dir.join(&m.chain_file);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
        let hash = ctrp_core::gibbs::output::sha256_hex(text.as_bytes());
        if hash != m.chain.draws_sha256 {
            return Err(CliError::ingestion(format!(
                "{}: hash {hash} does not match the recorded {}",
                path.display(),
                m.chain.draws_sha256
            )));
        }
        let q: usize = m.chain.coefficient_shape.iter().product();
        let draws = ChainOutput::draws_from_csv(&text, q).map_err(|e| ctx(e.into()))?;
        let c = &m.chain;
        let chain = ChainOutput {
            model: c.model,
            coefficient_shape: c.coefficient_shape.clone(),
            rank: c.rank,
            iterations: c.iterations,
            burn_in: c.burn_in,
            thin: c.thin,
            seed: c.seed,
            projection_id: c.projection_id.clone(),
            draws,
        };
        let train = RegressionData::empty(spec.output_shape())?;
        members.push(EnsembleMember { spec, chain, train });
    }
    let output_shape = fitted
        .members
        .first()
        .ok_or_else(|| CliError::ingestion("the model has no members"))?
        .projection
        .output_shape
        .clone();
    let weights = fitted.members.iter().map(|m| m.weight).collect();
    let mut model =
        EnsembleModel::with_weights(members, fitted.prior.family(&output_shape), weights)?;
    model.rlr_etas = fitted.members.iter().map(|m| m.eta).collect();
    Ok((fitted, model))
}

// ---------------------------------------------------------------- predict

pub fn predict(config: &Path, model_dir: &Path, out: Option<&Path>, split: Split) -> CliResult<()> {
    let cfg = RunConfig::load(config)?;
    let (fitted, model) = load_model(model_dir)?;
    if fitted.input_shape != cfg.input_shape() {
        return Err(CliError::new(
            crate::error::Category::Shape,
            format!(
                "the model expects inputs of shape {:?}, the data has {:?}",
                fitted.input_shape,
                cfg.input_shape()
            ),
        ));
    }
    let data = cfg.dataset(split)?;
    let probs = &cfg.outputs.quantiles;
    let seed = cfg.projection.seed;

    let mut header = vec!["index".to_string()];
    if data.y.is_some() {
        header.push("y".into());
    }
    header.push("mean".into());
    header.extend((0..model.len()).map(|l| format!("member_{l}")));
    header.extend(probs.iter().map(|p| format!("q_{p}")));

    let mut rows = Vec::with_capacity(data.len());
    let mut sq = 0.0;
    for (j, x) in data.xs.iter().enumerate() {
        let means = model.member_means(x)?;
        let pooled = pool_means(&model.weights, &means)?;
        let mut rng = stream_rng(seed, Stream::Predictive(j as u64));
        let qs = model.pooled_quantile(x, probs, &mut rng)?;
        let mut row = vec![j.to_string()];
        if let Some(y) = &data.y {
            row.push(num(y[j]));
            sq += (y[j] - pooled).powi(2);
        }
        row.push(num(pooled));
        row.extend(means.iter().copied().map(num));
        row.extend(qs.into_iter().map(num));
        rows.push(row);
    }

    let mut dir = OutputDir::create(&cfg.out_dir(out)?)?;
    dir.write_csv("predictions.csv", &header, rows)?;
    let results = json!({
        "n": data.len(),
        "rmse": data.y.as_ref().map(|_| (sq / data.len() as f64).sqrt()),
        "weights": model.weights,
    });
    let seeds = json!({
        "master": seed,
        "predictive": (0..data.len() as u64).map(|j| derive_seed(seed, Stream::Predictive(j))).collect::<Vec<_>>(),
    });
    let config_echo = json!({
        "config": to_value(&cfg),
        "model_dir": model_dir,
        "split": match split { Split::Train => "train", Split::Test => "test" },
    });
    dir.finish("predict", config_echo, seeds, results, Value::Null)
}

// ---------------------------------------------------------------- simulate

pub fn simulate_cmd(
    config: &Path,
    out: &Path,
    seed_override: Option<u64>,
    emit_data: bool,
) -> CliResult<()> {
    let cfg = scenario_config(config, seed_override)?;
    let data = simulate(&cfg)?;
    let report = evaluate(&cfg, &data, cfg.design()?)?;

    let mut dir = OutputDir::create(out)?;
    if emit_data {
        dir.write(
            "train.csv",
            &dataset_csv(&data.train_x, Some(&data.train_y)),
        )?;
        dir.write("test.csv", &dataset_csv(&data.test_x, Some(&data.test_y)))?;
        dir.write(
            "coefficient.csv",
            &dataset_csv(std::slice::from_ref(&data.coefficient), None),
        )?;
    }
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    dir.write_csv(
        "points.csv",
        &[
            "index",
            "y",
            "pooled",
            "distance",
            "rmse",
            "variance_share",
            "bias_share",
        ]
        .map(String::from),
        report.points.iter().enumerate().map(|(j, p)| {
            vec![
                j.to_string(),
                num(p.y),
                num(p.pooled),
                num(p.distance),
                num(p.rmse),
                opt(p.variance_share),
                opt(p.bias_share),
            ]
        }),
    )?;
    let mut header = vec!["index".to_string()];
    header.extend((0..cfg.members).map(|l| format!("member_{l}")));
    dir.write_csv(
        "member_predictions.csv",
        &header,
        report.points.iter().enumerate().map(|(j, p)| {
            std::iter::once(j.to_string())
                .chain(p.member_predictions.iter().copied().map(num))
                .collect::<Vec<_>>()
        }),
    )?;
    let results = json!({
        "config_hash": report.config_hash,
        "output_shape": report.output_shape,
        "weights": report.weights,
        "mean_rmse": report.mean_rmse,
        "pooled_rmse": report.pooled_rmse,
        "mean_distance": report.mean_distance,
    });
    let timing = json!({
        "cpu_seconds": report.cpu_seconds,
        "cost_hours": report.cost_hours,
        "efficiency_score": report.efficiency_score,
    });
    dir.finish(
        "simulate",
        to_value(&cfg),
        seeds_json(cfg.seed, cfg.members),
        results,
        timing,
    )
}

// ---------------------------------------------------------------- bench

pub fn bench(config: &Path, out: &Path, seed_override: Option<u64>) -> CliResult<()> {
    let cfg = scenario_config(config, seed_override)?;
    let rows = run_bench(&cfg)?;
    let mut dir = OutputDir::create(out)?;
    let shape = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join("x");
    dir.write_csv(
        "bench.csv",
        &[
            "model",
            "r",
            "output_shape",
            "cpu_hours",
            "rmse",
            "efficiency_score",
        ]
        .map(String::from),
        rows.iter().map(|r| {
            vec![
                r.model.clone(),
                num(r.r),
                shape(&r.output_shape),
                num(r.cpu_hours),
                num(r.rmse),
                num(r.efficiency_score),
            ]
        }),
    )?;
    let results = json!({
        "rmse": rows.iter().map(|r| (r.model.clone(), r.rmse)).collect::<std::collections::BTreeMap<_, _>>(),
    });
    let timing = json!({
        "cpu_hours": rows.iter().map(|r| (r.model.clone(), r.cpu_hours)).collect::<std::collections::BTreeMap<_, _>>(),
        "speedup": rows[1].cpu_hours / rows[0].cpu_hours,
    });
    dir.finish(
        "bench",
        to_value(&cfg),
        seeds_json(cfg.seed, cfg.members),
        results,
        timing,
    )
}

/// Output directory for commands whose config has no `outputs` section.
pub fn required_out(out: Option<PathBuf>) -> CliResult<PathBuf> {
    out.ok_or_else(|| CliError::config("--out is required for this command"))
}
