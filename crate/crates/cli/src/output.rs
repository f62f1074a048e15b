//! Output directory with hashed files and a run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ctrp_core::gibbs::output::sha256_hex;
use serde::Serialize;
use serde_json::Value;

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

pub struct OutputDir {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    started: Instant,
    started_at: String,
}

impl OutputDir {
    pub fn create(dir: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: BTreeMap::new(),
            started: Instant::now(),
            started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes an RFC 4180 CSV with a header row.
    pub fn write_csv<R, I>(&mut self, name: &str, header: &[String], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| CliError::io(&path, e))?;
        for row in rows {
            w.write_record(row).map_err(|e| CliError::io(&path, e))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(&path, e.error()))?;
        self.write(name, &bytes)
    }

    /// Writes `manifest.json`. Everything that varies between identical runs
    /// sits under `timing`.
    pub fn finish(
        self,
        command: &str,
        config: Value,
        seeds: Value,
        results: Value,
        timing: Value,
    ) -> CliResult<()> {
        let mut timing = match timing {
            Value::Object(m) => m,
            Value::Null => serde_json::Map::new(),
            other => {
                let mut m = serde_json::Map::new();
                m.insert("detail".into(), other);
                m
            }
        };
        timing.insert("started_at".into(), Value::String(self.started_at.clone()));
        timing.insert(
            "wall_seconds".into(),
            self.started.elapsed().as_secs_f64().into(),
        );
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            seeds,
            outputs: &self.files,
            results,
            timing: Value::Object(timing),
        };
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        let path = self.dir.join(MANIFEST);
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config: Value,
    seeds: Value,
    /// SHA-256 of every file written, by file name.
    outputs: &'a BTreeMap<String, String>,
    results: Value,
    timing: Value,
}

/// Shortest round-trip decimal form of a float.
pub fn num(v: f64) -> String {
    v.to_string()
}
