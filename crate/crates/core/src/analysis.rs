//! Grid sensitivity analysis (GSA) and probabilistic bias analysis (PBA).
//!
//! Both evaluate the same per-point routine: build edge probabilities from
//! a sensitivity model, derive exposure profiles, and compute the
//! bias-corrected (optionally augmented, three-level, relative-risk)
//! estimates. Outcome-model predictions and covariate distances are
//! computed once up front and shared by every point or draw.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{
    adjusted_de, adjusted_ie, adjusted_ie_rr, adjusted_ie_three_level, DeltaSpec, Estimand,
    KappaSpec, Method, DEFAULT_LEVEL,
};
use crate::outcome::{
    augmented_estimates_with, make_crossfit_plan, CrossFitError, CrossFitPredictions,
    OutcomeModelSpec,
};
use crate::rng::{stream, Purpose};
use crate::sensmodel::{
    build_edge_probabilities_with, pairwise_distances, DistanceMetric, EdgeProbabilityModel,
    ExposureProfile, PairDistances, SensError,
};
use crate::{EdgeModel, Estimate, Sample};

/// Which estimators each point or draw produces, beyond adjusted IE and DE.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSet {
    /// Cross-fitted augmented IE and DE (needs `outcome_model`).
    pub augmented: bool,
    /// Three-level IE (needs `delta`).
    pub three_level: bool,
    /// Relative-risk IE (binary outcomes).
    pub relative_risk: bool,
}

/// Settings shared by GSA and PBA.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub estimators: EstimatorSet,
    pub outcome_model: Option<OutcomeModelSpec>,
    pub crossfit_seed: u64,
    pub level: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            estimators: EstimatorSet::default(),
            outcome_model: None,
            crossfit_seed: 0,
            level: DEFAULT_LEVEL,
        }
    }
}

/// One full set of sensitivity parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityPoint {
    pub model: EdgeModel,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub delta: Option<f64>,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityGrid {
    pub points: Vec<SensitivityPoint>,
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("sensitivity grid is empty")]
    EmptyGrid,
    #[error("point {index}: {source}")]
    InvalidPoint { index: usize, source: SensError },
    #[error("augmented estimators need an outcome model")]
    MissingOutcomeModel,
    #[error("three-level estimates need delta (point {0})")]
    MissingDelta(usize),
    #[error(transparent)]
    CrossFit(#[from] CrossFitError),
    #[error(transparent)]
    Distances(#[from] SensError),
    #[error("invalid prior for `{name}`: {message}")]
    InvalidPrior { name: String, message: String },
    #[error("PBA needs at least one draw")]
    NoDraws,
    #[error("percentile {0} not in [0, 100]")]
    InvalidPercentile(f64),
}

/// Shared, parameter-independent inputs.
struct Prepared {
    predictions: Option<CrossFitPredictions<f64>>,
    distances: Vec<((DistanceMetric, bool), PairDistances<f64>)>,
    empty: PairDistances<f64>,
}

impl Prepared {
    fn new<'a>(
        s: &Sample,
        models: impl Iterator<Item = &'a EdgeModel>,
        opts: &AnalysisOptions,
    ) -> Result<Self, AnalysisError> {
        let predictions = if opts.estimators.augmented {
            let spec = opts
                .outcome_model
                .as_ref()
                .ok_or(AnalysisError::MissingOutcomeModel)?;
            let plan = make_crossfit_plan(s, opts.crossfit_seed)?;
            Some(CrossFitPredictions::fit(s, spec, &plan)?)
        } else {
            None
        };
        let mut distances: Vec<((DistanceMetric, bool), PairDistances<f64>)> = Vec::new();
        for key in models.filter_map(EdgeProbabilityModel::distance) {
            if !distances.iter().any(|(k, _)| *k == key) {
                distances.push((key, pairwise_distances(s, key.0, key.1)?));
            }
        }
        Ok(Self {
            predictions,
            distances,
            empty: PairDistances::empty(),
        })
    }

    fn distances_for(&self, model: &EdgeModel) -> &PairDistances<f64> {
        match model.distance() {
            Some(key) => {
                &self
                    .distances
                    .iter()
                    .find(|(k, _)| *k == key)
                    .expect("distances prepared for every model")
                    .1
            }
            None => &self.empty,
        }
    }
}

fn evaluate(
    s: &Sample,
    point: &SensitivityPoint,
    set: &EstimatorSet,
    prep: &Prepared,
    level: f64,
) -> Result<Vec<Estimate>, String> {
    let ep = build_edge_probabilities_with(&point.model, s, prep.distances_for(&point.model))
        .map_err(|e| e.to_string())?;
    let prof = ExposureProfile::from_edge_probabilities(&ep, s.p_z(), set.three_level);
    let kappa = KappaSpec::new(point.kappa);
    let mut out = vec![
        adjusted_ie(s, &prof).map_err(|e| e.to_string())?,
        adjusted_de(s, &prof, kappa).map_err(|e| e.to_string())?,
    ];
    if set.three_level {
        let delta = point.delta.ok_or("three-level estimate needs delta")?;
        out.push(
            adjusted_ie_three_level(s, &prof, DeltaSpec::new(delta)).map_err(|e| e.to_string())?,
        );
    }
    if set.relative_risk {
        out.push(adjusted_ie_rr(s, &prof).map_err(|e| e.to_string())?);
    }
    if let Some(preds) = &prep.predictions {
        let (ie, de) =
            augmented_estimates_with(s, &prof, kappa, preds).map_err(|e| e.to_string())?;
        out.push(ie);
        out.push(de);
    }
    let params = point_params(point);
    Ok(out
        .into_iter()
        .map(|mut est| {
            for (k, v) in &params {
                est.params.insert(k.clone(), *v);
            }
            est.warnings.extend(ep.warnings.iter().cloned());
            est.with_level(level)
        })
        .collect())
}

fn point_params(point: &SensitivityPoint) -> BTreeMap<String, f64> {
    let mut m: BTreeMap<String, f64> = point
        .model
        .params()
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
    m.insert("kappa".into(), point.kappa);
    if let Some(d) = point.delta {
        m.insert("delta".into(), d);
    }
    m
}

/// Result of one grid point: its estimates, or the reason it failed.
#[derive(Debug, Clone, PartialEq)]
pub struct GsaRow {
    pub index: usize,
    pub point: SensitivityPoint,
    pub result: Result<Vec<Estimate>, String>,
}

/// Evaluates every grid point, in parallel, preserving grid order.
pub fn run_gsa(
    s: &Sample,
    grid: &SensitivityGrid,
    opts: &AnalysisOptions,
) -> Result<Vec<GsaRow>, AnalysisError> {
    if grid.points.is_empty() {
        return Err(AnalysisError::EmptyGrid);
    }
    for (index, p) in grid.points.iter().enumerate() {
        p.model
            .validate(s.n_e(), s.n_a())
            .map_err(|source| AnalysisError::InvalidPoint { index, source })?;
        if opts.estimators.three_level && p.delta.is_none() {
            return Err(AnalysisError::MissingDelta(index));
        }
    }
    let prep = Prepared::new(s, grid.points.iter().map(|p| &p.model), opts)?;
    Ok(grid
        .points
        .par_iter()
        .enumerate()
        .map(|(index, point)| GsaRow {
            index,
            point: point.clone(),
            result: evaluate(s, point, &opts.estimators, &prep, opts.level),
        })
        .collect())
}

/// Distribution of one sensitivity parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Prior {
    /// Integers `lo..=hi`, equally likely.
    DiscreteUniform {
        lo: i64,
        hi: i64,
    },
    Poisson {
        mean: f64,
    },
    /// Mean `mean`, variance `mean + mean^2 / size`.
    NegBinomial {
        mean: f64,
        size: f64,
    },
    #[serde(alias = "continuous_uniform")]
    Uniform {
        lo: f64,
        hi: f64,
    },
    LogNormal {
        meanlog: f64,
        sdlog: f64,
    },
    PointMass {
        value: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
}

impl Prior {
    pub fn validate(&self) -> Result<(), String> {
        let ok = match *self {
            Prior::DiscreteUniform { lo, hi } => lo <= hi,
            Prior::Poisson { mean } => mean >= 0.0 && mean.is_finite(),
            Prior::NegBinomial { mean, size } => {
                mean >= 0.0 && mean.is_finite() && size > 0.0 && size.is_finite()
            }
            Prior::Uniform { lo, hi } => lo <= hi && lo.is_finite() && hi.is_finite(),
            Prior::LogNormal { meanlog, sdlog } => {
                meanlog.is_finite() && sdlog >= 0.0 && sdlog.is_finite()
            }
            Prior::PointMass { value } => value.is_finite(),
            Prior::Beta { a, b } => a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid parameters {self:?}"))
        }
    }
}

/// One draw from a (validated) prior.
pub fn sample_prior<R: Rng + ?Sized>(p: &Prior, rng: &mut R) -> f64 {
    match *p {
        Prior::DiscreteUniform { lo, hi } => rng.random_range(lo..=hi) as f64,
        Prior::Poisson { mean } => poisson(mean, rng),
        Prior::NegBinomial { mean, size } => {
            let lambda = if mean > 0.0 {
                Gamma::new(size, mean / size)
                    .expect("valid gamma")
                    .sample(rng)
            } else {
                0.0
            };
            poisson(lambda, rng)
        }
        Prior::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        Prior::LogNormal { meanlog, sdlog } => {
            let z: f64 = StandardNormal.sample(rng);
            (meanlog + sdlog * z).exp()
        }
        Prior::PointMass { value } => value,
        Prior::Beta { a, b } => Beta::new(a, b).expect("valid beta").sample(rng),
    }
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean > 0.0 {
        Poisson::new(mean).expect("valid poisson").sample(rng)
    } else {
        0.0
    }
}

/// Model template plus priors. Parameters without a prior keep the
/// template's value. Distance hyperparameters (`gamma_*`) cannot be given
/// priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub model: EdgeModel,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Keyed by `rho_e`, `rho_a`, `m_e`, `m_a`, `kappa` or `delta`.
    pub priors: BTreeMap<String, Prior>,
}

impl PriorSpec {
    fn validate(&self) -> Result<(), AnalysisError> {
        let allowed: Vec<&str> = self
            .model
            .params()
            .into_iter()
            .map(|(k, _)| k)
            .filter(|k| !k.starts_with("gamma"))
            .chain(["kappa", "delta"])
            .collect();
        for (name, prior) in &self.priors {
            if !allowed.contains(&name.as_str()) {
                return Err(AnalysisError::InvalidPrior {
                    name: name.clone(),
                    message: format!(
                        "not a sensitivity parameter of this model (allowed: {})",
                        allowed.join(", ")
                    ),
                });
            }
            prior
                .validate()
                .map_err(|message| AnalysisError::InvalidPrior {
                    name: name.clone(),
                    message,
                })?;
        }
        Ok(())
    }

    /// Draws one sensitivity point; priors are sampled in name order.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> SensitivityPoint {
        let mut point = SensitivityPoint {
            model: self.model.clone(),
            kappa: self.kappa,
            delta: self.delta,
        };
        for (name, prior) in &self.priors {
            let v = sample_prior(prior, rng);
            match name.as_str() {
                "kappa" => point.kappa = v,
                "delta" => point.delta = Some(v),
                other => point
                    .model
                    .set_param(other, v)
                    .expect("prior names are validated"),
            }
        }
        point
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PbaConfig {
    pub draws: usize,
    pub seed: u64,
    /// Add Normal(0, V) noise around each draw's point estimate.
    pub uncertainty: bool,
    /// Summary percentiles, in percent.
    pub percentiles: Vec<f64>,
}

impl Default for PbaConfig {
    fn default() -> Self {
        Self {
            draws: 1000,
            seed: 0,
            uncertainty: true,
            percentiles: vec![2.5, 50.0, 97.5],
        }
    }
}

/// One PBA draw: sampled parameters and, per estimator, the point
/// estimate and the value entering the summaries.
#[derive(Debug, Clone, PartialEq)]
pub struct PbaDraw {
    pub index: usize,
    pub point: SensitivityPoint,
    pub result: Result<Vec<DrawValue>, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrawValue {
    pub estimand: Estimand,
    pub method: Method,
    pub estimate: Estimate,
    /// Point estimate, or a Normal draw around it with uncertainty on.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PbaSummary {
    pub estimand: Estimand,
    pub method: Method,
    pub draws: usize,
    pub mean: f64,
    /// `(percent, value)` pairs.
    pub percentiles: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbaResult {
    pub draws: Vec<PbaDraw>,
    pub summaries: Vec<PbaSummary>,
    pub failed: usize,
}

/// Monte-Carlo bias analysis over the priors.
pub fn run_pba(
    s: &Sample,
    spec: &PriorSpec,
    cfg: &PbaConfig,
    opts: &AnalysisOptions,
) -> Result<PbaResult, AnalysisError> {
    if cfg.draws == 0 {
        return Err(AnalysisError::NoDraws);
    }
    if let Some(&p) = cfg.percentiles.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(AnalysisError::InvalidPercentile(p));
    }
    spec.validate()?;
    if opts.estimators.three_level && spec.delta.is_none() && !spec.priors.contains_key("delta") {
        return Err(AnalysisError::MissingDelta(0));
    }
    let prep = Prepared::new(s, std::iter::once(&spec.model), opts)?;
    let draws: Vec<PbaDraw> = (0..cfg.draws)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(cfg.seed, Purpose::PbaDraw, b as u64);
            let point = spec.draw(&mut rng);
            let result = evaluate(s, &point, &opts.estimators, &prep, opts.level).map(|ests| {
                ests.into_iter()
                    .map(|est| {
                        let value = match est.variance {
                            Some(v) if cfg.uncertainty => {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                est.point + v.sqrt() * z
                            }
                            _ => est.point,
                        };
                        DrawValue {
                            estimand: est.estimand,
                            method: est.method,
                            estimate: est,
                            value,
                        }
                    })
                    .collect()
            });
            PbaDraw {
                index: b,
                point,
                result,
            }
        })
        .collect();
    let failed = draws.iter().filter(|d| d.result.is_err()).count();
    Ok(PbaResult {
        summaries: summarize(&draws, &cfg.percentiles),
        draws,
        failed,
    })
}

fn summarize(draws: &[PbaDraw], percentiles: &[f64]) -> Vec<PbaSummary> {
    let Some(first) = draws.iter().find_map(|d| d.result.as_ref().ok()) else {
        return Vec::new();
    };
    first
        .iter()
        .enumerate()
        .map(|(k, dv)| {
            let mut xs: Vec<f64> = draws
                .iter()
                .filter_map(|d| d.result.as_ref().ok())
                .map(|vals| vals[k].value)
                .collect();
            xs.sort_by(f64::total_cmp);
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            PbaSummary {
                estimand: dv.estimand,
                method: dv.method,
                draws: xs.len(),
                mean,
                percentiles: percentiles
                    .iter()
                    .map(|&p| (p, percentile(&xs, p)))
                    .collect(),
            }
        })
        .collect()
}

/// Empirical percentile of sorted data, in percent.
///
/// With `h = p * n / 100`: when `h` is a whole number the mean of the
/// `h`-th and `(h+1)`-th order statistics, otherwise the `ceil(h)`-th
/// (order statistics counted from one, clamped to the data).
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0, "percentile of empty data");
    let h = p * n as f64 / 100.0;
    let at = |k: usize| sorted[k.clamp(1, n) - 1];
    let r = h.round();
    if (h - r).abs() <= 1e-9 * n as f64 {
        let k = r as usize;
        (at(k) + at(k + 1)) / 2.0
    } else {
        at(h.ceil() as usize)
    }
}
