//! Run configuration shared by `project`, `fit` and `predict`.
//!
//! Unknown keys are rejected. Relative paths are resolved against the
//! directory of the configuration file.

use std::path::{Path, PathBuf};

use ctrp_core::gibbs::{McmcSettings, PriorSpec};
use ctrp_core::projection::DEFAULT_PSI;
use ctrp_core::simlab::{design_for_rate, ProjectionKind};
use ctrp_core::ProjectionDesign;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, MixedFrequencyFrame, MIXED_SHAPE};
use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: PriorSpec,
    pub projection: ProjectionConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub mcmc: McmcSettings,
    #[serde(default)]
    pub outputs: OutputsConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    /// `TW`, `MW`, `MW(1)`, `MW(1,2)`, ... or `identity`.
    #[serde(rename = "type")]
    pub kind: ProjectionKind,
    /// Compression rate; give this or `q`.
    #[serde(default)]
    pub r: Option<f64>,
    /// Explicit output shape.
    #[serde(default)]
    pub q: Option<Vec<usize>>,
    #[serde(default = "default_psi")]
    pub psi: f64,
    /// Ensemble size `L`.
    #[serde(default = "default_members")]
    pub members: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scaled: bool,
}

fn default_psi() -> f64 {
    DEFAULT_PSI
}

fn default_members() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Dataset CSVs of covariate tensors with the given shape.
    Tensor {
        shape: Vec<usize>,
        #[serde(default)]
        train: Option<PathBuf>,
        #[serde(default)]
        test: Option<PathBuf>,
    },
    /// Monthly responses with daily covariates, split by month index ranges
    /// `[start, end)`.
    MixedFrequency {
        monthly: PathBuf,
        daily: PathBuf,
        train: [usize; 2],
        test: [usize; 2],
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsConfig {
    /// Used when `--out` is not given.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Probabilities of the pooled predictive quantiles.
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
}

impl Default for OutputsConfig {
    fn default() -> Self {
        Self {
            dir: None,
            quantiles: default_quantiles(),
        }
    }
}

fn default_quantiles() -> Vec<f64> {
    vec![0.05, 0.5, 0.95]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Parses a JSON document, reporting unknown keys and type errors as
/// configuration errors.
pub fn load_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig = load_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        match &mut self.data {
            DataConfig::Tensor { train, test, .. } => {
                for p in [train, test].into_iter().flatten() {
                    *p = resolve(base, p);
                }
            }
            DataConfig::MixedFrequency { monthly, daily, .. } => {
                *monthly = resolve(base, monthly);
                *daily = resolve(base, daily);
            }
        }
        if let Some(d) = &mut self.outputs.dir {
            *d = resolve(base, d);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let p = &self.projection;
        if p.r.is_some() == p.q.is_some() && p.kind != ProjectionKind::Identity {
            return Err(CliError::config("projection needs exactly one of r and q"));
        }
        if p.members == 0 {
            return Err(CliError::config("projection.members must be at least 1"));
        }
        if !(p.psi >= 1.0) {
            return Err(CliError::config(format!(
                "projection.psi must be >= 1, got {}",
                p.psi
            )));
        }
        if let Some(bad) = self
            .outputs
            .quantiles
            .iter()
            .find(|q| !(**q > 0.0 && **q < 1.0))
        {
            return Err(CliError::config(format!(
                "quantile probability {bad} is outside (0, 1)"
            )));
        }
        if let DataConfig::Tensor { shape, .. } = &self.data {
            if shape.is_empty() || shape.contains(&0) {
                return Err(CliError::config(format!("invalid data shape {shape:?}")));
            }
        }
        self.mcmc.validate()?;
        self.design()?;
        Ok(())
    }

    pub fn input_shape(&self) -> Vec<usize> {
        match &self.data {
            DataConfig::Tensor { shape, .. } => shape.clone(),
            DataConfig::MixedFrequency { .. } => MIXED_SHAPE.to_vec(),
        }
    }

    pub fn design(&self) -> CliResult<ProjectionDesign> {
        let p = &self.projection;
        let shape = self.input_shape();
        let design = match (&p.kind, p.r, &p.q) {
            (ProjectionKind::Identity, _, _) => ProjectionDesign::identity(&shape),
            (kind, Some(r), _) => design_for_rate(kind, &shape, r, p.psi)?,
            (ProjectionKind::Tensorwise, None, Some(q)) => match q.as_slice() {
                [n] => ProjectionDesign::tensorwise(*n, p.psi),
                _ => {
                    return Err(CliError::config(format!(
                        "a tensor-wise projection takes one q, got {q:?}"
                    )))
                }
            },
            (ProjectionKind::Modewise(keep), None, Some(q)) => {
                if q.len() != shape.len() {
                    return Err(CliError::config(format!(
                        "q = {q:?} does not match the data order {}",
                        shape.len()
                    )));
                }
                if let Some(&m) = keep.iter().find(|&&m| m >= shape.len() || q[m] != shape[m]) {
                    return Err(CliError::config(format!(
                        "preserved mode {} needs q = {}",
                        m + 1,
                        shape.get(m).copied().unwrap_or(0)
                    )));
                }
                let mut d = ProjectionDesign::modewise(q, p.psi);
                d.preserve_modes = keep.clone();
                d
            }
            _ => return Err(CliError::config("projection needs r or q")),
        };
        Ok(design)
    }

    /// Loads one split of the data. Fails if the split is not configured.
    pub fn dataset(&self, split: Split) -> CliResult<Dataset> {
        match &self.data {
            DataConfig::Tensor { shape, train, test } => {
                let (name, path) = match split {
                    Split::Train => ("train", train),
                    Split::Test => ("test", test),
                };
                let path = path.as_ref().ok_or_else(|| {
                    CliError::config(format!("data.tensor.{name} is required by this command"))
                })?;
                crate::data::read_dataset(path, shape)
            }
            DataConfig::MixedFrequency {
                monthly,
                daily,
                train,
                test,
            } => {
                let frame = MixedFrequencyFrame::read(monthly, daily)?;
                let [a, b] = match split {
                    Split::Train => *train,
                    Split::Test => *test,
                };
                frame.dataset(a, b)
            }
        }
    }

    /// Whether a split is configured, without reading it.
    pub fn has_split(&self, split: Split) -> bool {
        match &self.data {
            DataConfig::Tensor { train, test, .. } => match split {
                Split::Train => train.is_some(),
                Split::Test => test.is_some(),
            },
            DataConfig::MixedFrequency { .. } => true,
        }
    }

    /// `--out` if given, otherwise `outputs.dir`.
    pub fn out_dir(&self, flag: Option<&Path>) -> CliResult<PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.outputs.dir.clone())
            .ok_or_else(|| CliError::config("no output directory: pass --out or set outputs.dir"))
    }
}
