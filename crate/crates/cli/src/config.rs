//! Experiment configuration: TOML file, dotted `--set` overrides and range checks.
//!
//! ```toml
//! task = "bond"
//!
//! [model]
//! a_neg1 = 0.0
//! a0 = 0.0
//! a1 = 0.0
//! a2 = 0.0
//! gamma = 1.5
//! sigma = 0.0
//! rho = 1.2
//! delta = 0.0
//! lambda = 0.0
//! y0 = 0.05
//!
//! [grid]
//! horizon = 1.0
//! n_steps = 100
//!
//! [ensemble]
//! n_paths = 10
//! seed = 1
//! ```

use std::path::{Path, PathBuf};

use ajsim_core::{ModelParams, SimGrid};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Simulate,
    Moments,
    Occupancy,
    Asymptotics,
    Lemma22,
    Converge,
    Bond,
    Barrier,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Simulate => "simulate",
            Task::Moments => "moments",
            Task::Occupancy => "occupancy",
            Task::Asymptotics => "asymptotics",
            Task::Lemma22 => "lemma22",
            Task::Converge => "converge",
            Task::Bond => "bond",
            Task::Barrier => "barrier",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    pub model: ModelParams,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub occupancy: Option<OccupancyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lemma22: Option<Lemma22Config>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converge: Option<ConvergeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bond: Option<BondConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barrier: Option<BarrierConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Time grid: `horizon` plus exactly one of `n_steps` or `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Paths written to `curve.csv`; all of them when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export_paths: Option<usize>,
    /// Also write `paths.bin` (noise plus values).
    #[serde(default)]
    pub binary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentsConfig {
    pub p: f64,
    /// Exponents whose summed time-averaged moment is also reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_average: Option<Vec<f64>>,
    /// Adds the time-averaged moment of order θ + 2ρ − 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_doublings")]
    pub max_doublings: u32,
}

impl Default for OccupancyConfig {
    fn default() -> Self {
        Self {
            n1: None,
            epsilon: default_epsilon(),
            max_doublings: default_max_doublings(),
        }
    }
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_max_doublings() -> u32 {
    20
}

/// Intensities and horizons for the Poisson integral check; the model's λ
/// and the grid horizon when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lemma22Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub xi: f64,
    /// Step sizes, strictly descending.
    pub dt_levels: Vec<f64>,
    #[serde(default = "default_ref_refine")]
    pub ref_refine_log2: u32,
}

fn default_ref_refine() -> u32 {
    ajsim_core::analysis::REFERENCE_REFINE_LOG2
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BondConfig {
    /// Step sizes for the price-vs-Δ ladder.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierConfig {
    pub strike: f64,
    pub barrier: f64,
    /// Strikes for the price-vs-strike ladder on the main ensemble.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strikes: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Json, Format::Csv]
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

impl ExperimentConfig {
    /// Reads `path` and applies `key=value` overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::config("config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text, overrides)
    }

    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text)
            .map_err(|e| CliError::config("config", format!("not valid TOML: {}", e.message())))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." {
                "config".to_string()
            } else {
                path
            };
            CliError::config(path, e.into_inner().to_string())
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn sim_grid(&self) -> Result<SimGrid> {
        self.grid.sim_grid()
    }

    /// Section for `task`, or its defaults when the section may be omitted.
    fn section<T: Clone>(&self, opt: &Option<T>, name: &str, default: Option<T>) -> Result<T> {
        opt.clone().or(default).ok_or_else(|| {
            CliError::config(name, format!("section [{name}] is required for this task"))
        })
    }

    pub fn simulate_cfg(&self) -> SimulateConfig {
        self.simulate.clone().unwrap_or_default()
    }

    pub fn moments_cfg(&self) -> Result<MomentsConfig> {
        self.section(&self.moments, "moments", None)
    }

    pub fn occupancy_cfg(&self) -> OccupancyConfig {
        self.occupancy.clone().unwrap_or_default()
    }

    pub fn lemma22_cfg(&self) -> Lemma22Config {
        self.lemma22.clone().unwrap_or_default()
    }

    pub fn converge_cfg(&self) -> Result<ConvergeConfig> {
        self.section(&self.converge, "converge", None)
    }

    pub fn bond_cfg(&self) -> BondConfig {
        self.bond.clone().unwrap_or_default()
    }

    pub fn barrier_cfg(&self) -> Result<BarrierConfig> {
        self.section(&self.barrier, "barrier", None)
    }

    /// Range-checks the model and every field `task` will read.
    pub fn validate(&self, task: Task) -> Result<()> {
        self.model
            .validate()
            .map_err(|e| CliError::from_sim("model", e))?;
        if !(self.grid.horizon.is_finite() && self.grid.horizon > 0.0) {
            return Err(CliError::config(
                "grid.horizon",
                format!("must be > 0, got {}", self.grid.horizon),
            ));
        }
        if self.ensemble.n_paths == 0 {
            return Err(CliError::config(
                "ensemble.n_paths",
                "must be a positive integer",
            ));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::config(
                "output.formats",
                "list at least one of \"json\", \"csv\"",
            ));
        }
        match task {
            Task::Simulate => {
                self.sim_grid()?;
            }
            Task::Moments => {
                self.sim_grid()?;
                let m = self.moments_cfg()?;
                finite_nonzero("moments.p", m.p)?;
                if self.ensemble.n_paths < 1000 {
                    return Err(CliError::config(
                        "ensemble.n_paths",
                        format!(
                            "moment curves need at least 1000 paths, got {}",
                            self.ensemble.n_paths
                        ),
                    ));
                }
                if let Some(ex) = &m.time_average {
                    if ex.is_empty() {
                        return Err(CliError::config(
                            "moments.time_average",
                            "list at least one exponent",
                        ));
                    }
                    for (i, &e) in ex.iter().enumerate() {
                        finite(&format!("moments.time_average[{i}]"), e)?;
                    }
                }
                if let Some(theta) = m.theta {
                    if !(theta > 0.0 && theta < 1.0) {
                        return Err(CliError::config(
                            "moments.theta",
                            format!("must lie in (0,1), got {theta}"),
                        ));
                    }
                }
            }
            Task::Occupancy => {
                self.sim_grid()?;
                let o = self.occupancy_cfg();
                if let Some(n1) = o.n1 {
                    if !(n1 > 1.0 && n1.is_finite()) {
                        return Err(CliError::config(
                            "occupancy.n1",
                            format!("must exceed 1, got {n1}"),
                        ));
                    }
                }
                if !(o.epsilon > 0.0 && o.epsilon < 1.0) {
                    return Err(CliError::config(
                        "occupancy.epsilon",
                        format!("must lie in (0,1), got {}", o.epsilon),
                    ));
                }
                if o.max_doublings > 60 {
                    return Err(CliError::config("occupancy.max_doublings", "at most 60"));
                }
            }
            Task::Asymptotics => {
                self.sim_grid()?;
                if self.grid.horizon < 50.0 {
                    return Err(CliError::config(
                        "grid.horizon",
                        format!(
                            "log-ratio sampling needs a horizon of at least 50, got {}",
                            self.grid.horizon
                        ),
                    ));
                }
            }
            Task::Lemma22 => {
                let l = self.lemma22_cfg();
                for (i, &lam) in l.lambdas.iter().flatten().enumerate() {
                    if !(lam >= 0.0 && lam.is_finite()) {
                        return Err(CliError::config(
                            format!("lemma22.lambdas[{i}]"),
                            format!("must be >= 0, got {lam}"),
                        ));
                    }
                }
                for (i, &t) in l.horizons.iter().flatten().enumerate() {
                    if !(t > 0.0 && t.is_finite()) {
                        return Err(CliError::config(
                            format!("lemma22.horizons[{i}]"),
                            format!("must be > 0, got {t}"),
                        ));
                    }
                }
            }
            Task::Converge => {
                self.level_steps()?;
            }
            Task::Bond => {
                self.sim_grid()?;
                self.ladder_grids(self.bond_cfg().dt_ladder.as_deref(), "bond.dt_ladder")?;
            }
            Task::Barrier => {
                self.sim_grid()?;
                let b = self.barrier_cfg()?;
                positive("barrier.strike", b.strike)?;
                if !(b.barrier > 0.0) {
                    return Err(CliError::config(
                        "barrier.barrier",
                        format!("must be > 0, got {}", b.barrier),
                    ));
                }
                for (i, &k) in b.strikes.iter().flatten().enumerate() {
                    positive(&format!("barrier.strikes[{i}]"), k)?;
                }
                self.ladder_grids(b.dt_ladder.as_deref(), "barrier.dt_ladder")?;
            }
        }
        Ok(())
    }

    /// Step counts of the convergence levels, ascending.
    pub fn level_steps(&self) -> Result<Vec<usize>> {
        let c = self.converge_cfg()?;
        if !(c.xi > 0.0 && c.xi < 1.0) {
            return Err(CliError::config(
                "converge.xi",
                format!("must lie in (0,1), got {}", c.xi),
            ));
        }
        if c.dt_levels.is_empty() {
            return Err(CliError::config(
                "converge.dt_levels",
                "list at least one step size",
            ));
        }
        if c.dt_levels.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::config(
                "converge.dt_levels",
                "step sizes must be strictly descending",
            ));
        }
        if c.ref_refine_log2 > 20 {
            return Err(CliError::config("converge.ref_refine_log2", "at most 20"));
        }
        let mut steps = Vec::with_capacity(c.dt_levels.len());
        for (i, &dt) in c.dt_levels.iter().enumerate() {
            let g = SimGrid::with_step(self.grid.horizon, dt)
                .map_err(|e| CliError::from_sim(&format!("converge.dt_levels[{i}]"), e))?;
            steps.push(g.n_steps());
        }
        let finest = *steps.last().expect("non-empty");
        let n_ref = finest << c.ref_refine_log2;
        if let Some((i, n)) = steps.iter().enumerate().find(|(_, &n)| n_ref % n != 0) {
            return Err(CliError::config(
                format!("converge.dt_levels[{i}]"),
                format!("level with {n} steps does not nest in the {n_ref}-step reference grid"),
            ));
        }
        Ok(steps)
    }

    pub fn ladder_grids(&self, ladder: Option<&[f64]>, path: &str) -> Result<Vec<SimGrid>> {
        ladder
            .unwrap_or_default()
            .iter()
            .enumerate()
            .map(|(i, &dt)| {
                SimGrid::with_step(self.grid.horizon, dt)
                    .map_err(|e| CliError::from_sim(&format!("{path}[{i}]"), e))
            })
            .collect()
    }
}

impl GridConfig {
    pub fn sim_grid(&self) -> Result<SimGrid> {
        let g = match (self.n_steps, self.dt) {
            (Some(n), None) => SimGrid::new(self.horizon, n),
            (None, Some(dt)) => SimGrid::with_step(self.horizon, dt),
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "grid",
                    "give either n_steps or dt, not both",
                ))
            }
            (None, None) => {
                return Err(CliError::config("grid", "one of n_steps or dt is required"))
            }
        };
        g.map_err(|e| CliError::from_sim("grid", e))
    }
}

fn finite(path: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be finite, got {v}")))
    }
}

fn finite_nonzero(path: &str, v: f64) -> Result<()> {
    finite(path, v)?;
    if v == 0.0 {
        return Err(CliError::config(path, "must be nonzero"));
    }
    Ok(())
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(path, format!("must be > 0, got {v}")))
    }
}

/// Sets `a.b.c = value`, creating tables on the way. The value is read as a
/// TOML literal when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config("--set", format!("expected key=value, got `{spec}`")))?;
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::config("--set", format!("malformed key `{key}`")));
    }
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut cur = table;
    for (depth, p) in parents.iter().enumerate() {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            CliError::config(
                parts[..=depth].join("."),
                "is not a table and cannot take sub-keys",
            )
        })?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
