//! One directory per run: `manifest.json`, `coverage.csv`, `observables.csv`
//! and `fields/step_*.csv`. CSV files are comma separated with a header row.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::fracpde::{CoverageCurve, Field2D};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    /// Effective configuration after command-line overrides.
    pub config: ExperimentConfig,
    pub results: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig, results: serde_json::Value) -> Result<Self> {
        Ok(Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_hash: config.content_hash()?,
            config: config.clone(),
            results,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root.join("fields"))?;
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write_manifest(&self, m: &Manifest) -> Result<()> {
        self.write_json("manifest.json", m)
    }

    pub fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(rel), text)?;
        Ok(())
    }

    /// Write rows of displayable values under `header`.
    pub fn write_csv<R, V>(&self, rel: &str, header: &[&str], rows: R) -> Result<()>
    where
        R: IntoIterator<Item = Vec<V>>,
        V: ToString,
    {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(&path).map_err(csv_error)?;
        w.write_record(header).map_err(csv_error)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_error)?;
        }
        w.flush()?;
        Ok(())
    }

    /// `fields/step_<step>.csv` with columns `x,y,u` at cell centres.
    pub fn write_field(&self, step: usize, u: &Field2D) -> Result<()> {
        let g = u.grid;
        let rows = (0..g.ny).flat_map(|j| {
            (0..g.nx).map(move |i| {
                let c = g.center(i, j);
                vec![c[0], c[1], u.at(i, j)]
            })
        });
        self.write_csv(&format!("fields/step_{step:06}.csv"), &["x", "y", "u"], rows)
    }

    pub fn write_coverage(&self, rel: &str, curve: &CoverageCurve) -> Result<()> {
        let rows = (0..curve.times.len()).map(|k| vec![curve.times[k], curve.instantaneous[k], curve.time_averaged[k]]);
        self.write_csv(rel, &["t", "instantaneous", "time_averaged"], rows)
    }
}
