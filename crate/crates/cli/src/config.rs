//! Run configuration: strict JSON, one file per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use enrt_core::analysis::{
    EstimatorSet, PbaConfig, Prior, PriorSpec, SensitivityGrid, SensitivityPoint,
};
use enrt_core::outcome::OutcomeModelSpec;
use enrt_core::sample::SchemaOptions;
use enrt_core::sim::ScenarioConfig;
use enrt_core::EdgeModel;
use serde::{Deserialize, Serialize};

pub const DEFAULT_OUT: &str = "enrt-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Estimate,
    Gsa,
    Pba,
    Simulate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Estimate => "estimate",
            Command::Gsa => "gsa",
            Command::Pba => "pba",
            Command::Simulate => "simulate",
        }
    }
}

/// Everything one run needs. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    /// Units CSV (estimate, gsa, pba).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default)]
    pub schema: SchemaOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_z: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default)]
    pub estimators: EstimatorSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_model: Option<OutcomeModelSpec>,
    /// Sensitivity point for `estimate`; defaults to no contamination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<SensitivityPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pba: Option<PbaBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
}

/// Either explicit points or the Cartesian product of axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<SensitivityPoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<GridAxes>,
}

/// Model template plus value lists. The product runs over model
/// parameters in name order (outermost), then `kappa`, then `delta`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub model: EdgeModel,
    #[serde(default)]
    pub params: BTreeMap<String, Vec<f64>>,
    #[serde(default = "one_kappa")]
    pub kappa: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
}

fn one_kappa() -> Vec<f64> {
    vec![1.0]
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_percentiles() -> Vec<f64> {
    PbaConfig::default().percentiles
}

fn default_draws() -> usize {
    PbaConfig::default().draws
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PbaBlock {
    pub model: EdgeModel,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub priors: BTreeMap<String, Prior>,
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "yes")]
    pub uncertainty: bool,
    #[serde(default = "default_percentiles")]
    pub percentiles: Vec<f64>,
}

impl PbaBlock {
    pub fn prior_spec(&self) -> PriorSpec {
        PriorSpec {
            model: self.model.clone(),
            kappa: self.kappa,
            delta: self.delta,
            priors: self.priors.clone(),
        }
    }

    pub fn pba_config(&self, seed: u64) -> PbaConfig {
        PbaConfig {
            draws: self.draws,
            seed,
            uncertainty: self.uncertainty,
            percentiles: self.percentiles.clone(),
        }
    }
}

/// Scenarios as in `ScenarioConfig`, minus `seed` (taken from the run).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub scenarios: Vec<serde_json::Map<String, serde_json::Value>>,
}

impl SimulateBlock {
    pub fn scenarios(&self, seed: u64) -> Result<Vec<ScenarioConfig>> {
        if self.scenarios.is_empty() {
            bail!("simulate.scenarios is empty");
        }
        self.scenarios
            .iter()
            .enumerate()
            .map(|(i, obj)| {
                if obj.contains_key("seed") {
                    bail!("simulate.scenarios[{i}]: `seed` is set once per run (top-level `seed` or --seed)");
                }
                let mut obj = obj.clone();
                obj.insert("seed".into(), seed.into());
                let cfg: ScenarioConfig = serde_json::from_value(obj.into())
                    .with_context(|| format!("simulate.scenarios[{i}]"))?;
                if cfg.n_e < 2 || cfg.reps < 2 {
                    bail!("simulate.scenarios[{i}]: need n_e >= 2 and reps >= 2");
                }
                Ok(cfg)
            })
            .collect()
    }
}

impl GridConfig {
    pub fn expand(&self) -> Result<SensitivityGrid> {
        let points = match (&self.points, &self.axes) {
            (Some(p), None) => p.clone(),
            (None, Some(axes)) => axes.expand()?,
            _ => bail!("grid needs exactly one of `points` or `axes`"),
        };
        if points.is_empty() {
            bail!("grid has no points");
        }
        Ok(SensitivityGrid { points })
    }
}

impl GridAxes {
    fn expand(&self) -> Result<Vec<SensitivityPoint>> {
        let mut models = vec![self.model.clone()];
        for (name, values) in &self.params {
            if values.is_empty() {
                bail!("grid axis `{name}` is empty");
            }
            let mut next = Vec::with_capacity(models.len() * values.len());
            for m in &models {
                for &v in values {
                    let mut m = m.clone();
                    m.set_param(name, v)
                        .with_context(|| format!("grid axis `{name}`"))?;
                    next.push(m);
                }
            }
            models = next;
        }
        if self.kappa.is_empty() {
            bail!("grid axis `kappa` is empty");
        }
        let deltas: Vec<Option<f64>> = match &self.delta {
            Some(d) if d.is_empty() => bail!("grid axis `delta` is empty"),
            Some(d) => d.iter().copied().map(Some).collect(),
            None => vec![None],
        };
        let mut points = Vec::new();
        for model in &models {
            for &kappa in &self.kappa {
                for &delta in &deltas {
                    points.push(SensitivityPoint {
                        model: model.clone(),
                        kappa,
                        delta,
                    });
                }
            }
        }
        Ok(points)
    }
}

/// Reads a run config, or the `config` member of a previous run's
/// `manifest.json`.
pub fn load(path: &Path) -> Result<RunConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let value = match value {
        serde_json::Value::Object(mut obj)
            if obj.contains_key("software") && obj.contains_key("config") =>
        {
            obj.remove("config").unwrap_or_default()
        }
        other => other,
    };
    let mut cfg: RunConfig = serde_json::from_value(value)
        .with_context(|| format!("invalid config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    if let Some(input) = &cfg.input {
        cfg.input = Some(base.join(input));
    }
    if let Some(out) = &cfg.out {
        cfg.out = Some(base.join(out));
    }
    Ok(cfg)
}
