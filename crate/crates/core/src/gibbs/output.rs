use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Parafac,
    Gaussian,
}

/// One retained posterior draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    /// `vec(B)` in the canonical layout.
    pub coefficient: Vec<f64>,
    pub mu: f64,
    pub sigma2: f64,
    /// PARAFAC margins flattened in (d, m, j) order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margins: Option<Vec<f64>>,
    /// Prior variances `τ ζ_d w_{m,j}` of the margins, same layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_variances: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub model: ModelKind,
    pub coefficient_shape: Vec<usize>,
    /// PARAFAC rank `D`, absent for the Gaussian prior.
    pub rank: Option<usize>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub projection_id: Option<String>,
    pub draws: Vec<Draw>,
}

impl ChainOutput {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn with_projection_id(mut self, id: impl Into<String>) -> Self {
        self.projection_id = Some(id.into());
        self
    }

    pub fn posterior_mean_coefficient(&self) -> Vec<f64> {
        let q = self.coefficient_shape.iter().product();
        let mut acc = vec![0.0; q];
        for d in &self.draws {
            for (a, b) in acc.iter_mut().zip(&d.coefficient) {
                *a += b;
            }
        }
        let n = self.draws.len().max(1) as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    pub fn mean_of(&self, f: impl Fn(&Draw) -> f64) -> f64 {
        self.draws.iter().map(f).sum::<f64>() / self.draws.len().max(1) as f64
    }

    /// Keeps only the first `n` draws.
    pub fn truncated(&self, n: usize) -> Self {
        let mut out = self.clone();
        out.draws.truncate(n);
        out
    }

    /// Columnar CSV: `b_1, ..., b_Q, mu, sigma2`, one row per draw.
    pub fn to_csv(&self) -> String {
        let q: usize = self.coefficient_shape.iter().product();
        let mut s = String::new();
        for k in 1..=q {
            let _ = write!(s, "b_{k},");
        }
        s.push_str("mu,sigma2\n");
        for d in &self.draws {
            for v in &d.coefficient {
                let _ = write!(s, "{v:e},");
            }
            let _ = writeln!(s, "{:e},{:e}", d.mu, d.sigma2);
        }
        s
    }

    /// Parses the CSV written by [`ChainOutput::to_csv`] into draws.
    pub fn draws_from_csv(text: &str, coefficient_len: usize) -> Result<Vec<Draw>> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Empty("chain CSV has no header".into()))?;
        if header.split(',').count() != coefficient_len + 2 {
            return Err(Error::Shape(format!(
                "chain CSV has {} columns, expected {}",
                header.split(',').count(),
                coefficient_len + 2
            )));
        }
        lines
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, line)| {
                let vals = line
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parameter(format!("chain CSV row {}: {e}", i + 1)))?;
                if vals.len() != coefficient_len + 2 {
                    return Err(Error::Shape(format!(
                        "chain CSV row {} has {} fields",
                        i + 1,
                        vals.len()
                    )));
                }
                Ok(Draw {
                    coefficient: vals[..coefficient_len].to_vec(),
                    mu: vals[coefficient_len],
                    sigma2: vals[coefficient_len + 1],
                    margins: None,
                    margin_variances: None,
                })
            })
            .collect()
    }

    pub fn manifest(&self, config: serde_json::Value) -> ChainManifest {
        ChainManifest {
            model: self.model,
            coefficient_shape: self.coefficient_shape.clone(),
            rank: self.rank,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.seed,
            projection_id: self.projection_id.clone(),
            draws: self.draws.len(),
            draws_sha256: sha256_hex(self.to_csv().as_bytes()),
            config,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainManifest {
    pub model: ModelKind,
    pub coefficient_shape: Vec<usize>,
    pub rank: Option<usize>,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub projection_id: Option<String>,
    pub draws: usize,
    pub draws_sha256: String,
    pub config: serde_json::Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
