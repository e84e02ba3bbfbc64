//! Artifact files: `manifest.json`, `result.json`, `curve.csv`, `paths.bin`.

use std::fs;
use std::path::{Path, PathBuf};

use ajsim_core::ModelParams;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format, Task};
use crate::error::Result;
use crate::tasks::TaskOutput;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESULT_FILE: &str = "result.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const BINARY_FILE: &str = "paths.bin";

/// Hex SHA-256 of the model parameters in their JSON form.
pub fn params_hash(params: &ModelParams) -> String {
    let bytes = serde_json::to_vec(params).expect("params serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Serialize)]
pub struct GridEcho {
    pub horizon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

/// Everything in `result.json`. Holds no clock or thread data, so equal
/// configs give equal bytes.
#[derive(Debug, Serialize)]
pub struct ResultRecord<'a> {
    pub estimator: &'a str,
    pub task: Task,
    pub params_hash: String,
    pub params: ModelParams,
    pub seed: u64,
    pub grid: GridEcho,
    pub n_paths: usize,
    pub result: &'a Value,
}

impl<'a> ResultRecord<'a> {
    pub fn new(cfg: &ExperimentConfig, task: Task, out: &'a TaskOutput) -> Self {
        let grid = match cfg.sim_grid() {
            Ok(g) => GridEcho {
                horizon: g.horizon(),
                n_steps: Some(g.n_steps()),
                dt: Some(g.dt()),
            },
            Err(_) => GridEcho {
                horizon: cfg.grid.horizon,
                n_steps: None,
                dt: None,
            },
        };
        Self {
            estimator: out.estimator,
            task,
            params_hash: params_hash(&cfg.model),
            params: cfg.model,
            seed: cfg.ensemble.seed,
            grid,
            n_paths: cfg.ensemble.n_paths,
            result: &out.result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub task: Task,
    pub seed: u64,
    pub threads: Option<usize>,
    pub started_at: String,
    pub finished_at: String,
    pub files: Vec<String>,
    pub config: &'a ExperimentConfig,
}

/// Writes the run artifacts under `dir` and returns the paths written.
pub fn write_artifacts(
    dir: &Path,
    cfg: &ExperimentConfig,
    task: Task,
    out: &TaskOutput,
    threads: Option<usize>,
    started_at: String,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if cfg.output.wants(Format::Json) {
        let path = dir.join(RESULT_FILE);
        fs::write(&path, ResultRecord::new(cfg, task, out).to_json())?;
        written.push(path);
    }
    if cfg.output.wants(Format::Csv) {
        if let Some(csv) = &out.csv {
            let path = dir.join(CURVE_FILE);
            fs::write(&path, csv)?;
            written.push(path);
        }
    }
    if let Some(bin) = &out.binary {
        let path = dir.join(BINARY_FILE);
        fs::write(&path, bin)?;
        written.push(path);
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        task,
        seed: cfg.ensemble.seed,
        threads,
        started_at,
        finished_at: now(),
        files: written
            .iter()
            .map(|p| {
                p.file_name()
                    .expect("file path")
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
        config: cfg,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text)?;
    written.push(path);
    Ok(written)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let p = ModelParams {
            a_neg1: 0.1,
            a0: 0.2,
            a1: 0.3,
            a2: 0.4,
            gamma: 1.5,
            sigma: 0.5,
            rho: 1.2,
            delta: 0.1,
            lambda: 1.0,
            y0: 1.0,
        };
        let h = params_hash(&p);
        assert_eq!(h.len(), 64);
        assert_eq!(h, params_hash(&p));
        assert_ne!(h, params_hash(&ModelParams { y0: 1.5, ..p }));
    }
}
