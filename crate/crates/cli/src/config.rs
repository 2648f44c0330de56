//! Experiment configuration, read from a TOML file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bernoulli_ledger::flow::InitialCondition;
use bernoulli_ledger::Grid;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub grid: GridConfig,
    pub flow: FlowConfig,
    pub time: TimeConfig,
    pub levels: LevelsConfig,
    pub converge: ConvergeConfig,
    pub output: OutputConfig,
    pub tolerances: Tolerances,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            grid: GridConfig { dim: 2, resolution: 64 },
            flow: FlowConfig {
                nu: 0.01,
                initial_condition: InitialCondition::TaylorGreen,
            },
            time: TimeConfig::default(),
            levels: LevelsConfig {
                quantiles: Some(deciles()),
                values: None,
            },
            converge: ConvergeConfig::default(),
            output: OutputConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub resolution: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub nu: f64,
    pub initial_condition: InitialCondition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub dt: f64,
    pub n_steps: usize,
    /// Times at which snapshots are written, rounded to the nearest step.
    /// Empty means the final state only.
    pub snapshot_times: Vec<f64>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            n_steps: 0,
            snapshot_times: Vec::new(),
        }
    }
}

/// Levels are quantiles of `Q` unless absolute `values` are given. With
/// neither, the deciles 0.1 to 0.9 are used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelsConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantiles: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub resolutions: Vec<usize>,
    /// Strips as pairs of `Q` quantiles.
    pub strips: Vec<[f64; 2]>,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![64, 128, 256],
            strips: vec![[0.3, 0.7]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Dump the extracted level sets next to sweep and verify reports.
    pub meshes: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            meshes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Local identity residual relative to its largest term.
    pub identity: f64,
    /// Global energy balance relative to the dissipation.
    pub global_energy: f64,
    pub strip: f64,
    /// Wrong-sign excess relative to the level's flux.
    pub sign: f64,
    /// `|∮ v·n̂| / ∮ |v|`.
    pub zero_flux: f64,
    /// Smallest acceptable fitted convergence order.
    pub min_order: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: 1e-7,
            global_energy: 1e-8,
            strip: 0.05,
            sign: 0.02,
            zero_flux: 1e-3,
            min_order: 1.5,
        }
    }
}

pub enum Levels<'a> {
    Quantiles(&'a [f64]),
    Values(&'a [f64]),
}

fn deciles() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let config: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        config.validate()?;
        Ok(config.resolved())
    }

    /// Fills in the default levels so reports show what was actually used.
    pub fn resolved(mut self) -> Self {
        if self.levels.quantiles.is_none() && self.levels.values.is_none() {
            self.levels.quantiles = Some(deciles());
        }
        self
    }

    pub fn grid(&self) -> Result<Grid> {
        Ok(Grid::new(self.grid.dim, self.grid.resolution)?)
    }

    pub fn levels(&self) -> Levels<'_> {
        match (&self.levels.values, &self.levels.quantiles) {
            (Some(v), _) => Levels::Values(v),
            (None, Some(q)) => Levels::Quantiles(q),
            (None, None) => Levels::Quantiles(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]),
        }
    }

    /// Step indices at which snapshots are taken, sorted and deduplicated.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        if self.time.snapshot_times.is_empty() {
            return vec![self.time.n_steps];
        }
        let mut steps: Vec<usize> = self
            .time
            .snapshot_times
            .iter()
            .map(|t| (t / self.time.dt).round() as usize)
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        let nu = self.flow.nu;
        if !nu.is_finite() || nu < 0.0 {
            bail!("flow.nu must be finite and non-negative, got {nu}");
        }
        if !self.time.dt.is_finite() || self.time.dt <= 0.0 {
            bail!("time.dt must be positive, got {}", self.time.dt);
        }
        let horizon = self.time.dt * self.time.n_steps as f64;
        for &t in &self.time.snapshot_times {
            if !(0.0..=horizon + 0.5 * self.time.dt).contains(&t) {
                bail!("snapshot time {t} outside [0, {horizon}]");
            }
        }
        if self.levels.values.is_some() && self.levels.quantiles.is_some() {
            bail!("give either levels.quantiles or levels.values, not both");
        }
        if let Some(q) = &self.levels.quantiles {
            check_sorted("levels.quantiles", q)?;
            if q.iter().any(|p| !(0.0..=1.0).contains(p)) {
                bail!("levels.quantiles must lie in [0, 1]");
            }
        }
        if let Some(v) = &self.levels.values {
            check_sorted("levels.values", v)?;
        }
        for s in &self.converge.strips {
            if !(0.0 <= s[0] && s[0] < s[1] && s[1] <= 1.0) {
                bail!("converge strip {s:?} must satisfy 0 <= lower < upper <= 1");
            }
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("identity", t.identity),
            ("global_energy", t.global_energy),
            ("strip", t.strip),
            ("sign", t.sign),
            ("zero_flux", t.zero_flux),
            ("min_order", t.min_order),
        ] {
            if !v.is_finite() || v <= 0.0 {
                bail!("tolerances.{name} must be positive, got {v}");
            }
        }
        Ok(())
    }
}

fn check_sorted(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
        bail!("{name} must be finite and strictly increasing");
    }
    Ok(())
}
