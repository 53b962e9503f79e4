//! Simulation study: contaminated ENRT populations, potential outcomes,
//! and replicated randomizations summarized as bias, coverage and SD/SE.
//!
//! One population network and one potential-outcome table are generated
//! per scenario and held fixed; only the ego treatment assignment varies
//! across replications.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::{adjusted_de, adjusted_ie, naive_de, naive_ie, Estimand, KappaSpec};
use crate::linalg::Matrix;
use crate::outcome::{
    augmented_estimates_with, make_crossfit_plan, CrossFitError, CrossFitPredictions,
    OutcomeModelSpec,
};
use crate::rng::{stream, Purpose};
use crate::sample::Unit;
use crate::scalar::CompensatedSum;
use crate::sensmodel::{
    build_edge_probabilities, DistanceMetric, EdgeProbabilities, EdgeProbabilityModel,
    ExposureProfile, SensError,
};
use crate::{EdgeModel, Estimate, OutcomeTable, Profile, Sample};

pub use crate::estimators::theoretical_naive_bias;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Sens(#[from] SensError),
    #[error(transparent)]
    CrossFit(#[from] CrossFitError),
    #[error("invalid simulation setting: {0}")]
    Invalid(String),
    #[error("replication {rep}: {message}")]
    Replication { rep: usize, message: String },
}

/// Distance-based contamination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Heterogeneity {
    pub gamma: f64,
    pub metric: DistanceMetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationConfig {
    pub n_e: usize,
    pub alters_per_ego: usize,
    /// Expected latent alter–ego edges.
    pub m_a: f64,
    /// Expected latent ego–ego edges.
    pub m_e: f64,
    /// `None` spreads edges uniformly.
    pub heterogeneity: Option<Heterogeneity>,
    pub p_z: f64,
}

impl PopulationConfig {
    /// Edge-probability model the latent edges are drawn from.
    pub fn generating_model(&self) -> EdgeModel {
        match self.heterogeneity {
            None => EdgeProbabilityModel::HomogeneousCount {
                m_e: self.m_e,
                m_a: self.m_a,
            },
            Some(h) => EdgeProbabilityModel::HeterogeneousCount {
                m_e: self.m_e,
                m_a: self.m_a,
                gamma_e: h.gamma,
                gamma_a: h.gamma,
                metric: h.metric,
                standardize: true,
            },
        }
    }
}

/// Observed ego-networks plus the realized latent edges.
#[derive(Debug, Clone)]
pub struct PopulationNetwork {
    /// Recruited units with covariates; treatments and outcomes are
    /// placeholders until a replication assigns them.
    pub skeleton: Sample,
    /// Latent ego–ego edges `(i, j)` with `i < j`.
    pub ego_edges: Vec<(usize, usize)>,
    /// Latent `(alter, ego)` edges, never to the alter's own ego.
    pub alter_edges: Vec<(usize, usize)>,
    /// Probabilities the latent edges were drawn from.
    pub edge_probs: EdgeProbabilities<f64>,
    ego_neighbors: Vec<Vec<usize>>,
    alter_neighbors: Vec<Vec<usize>>,
}

impl PopulationNetwork {
    /// Latent ego neighbors of ego `i`.
    pub fn ego_neighbors(&self, i: usize) -> &[usize] {
        &self.ego_neighbors[i]
    }

    /// Latent ego neighbors of alter `a`.
    pub fn alter_neighbors(&self, a: usize) -> &[usize] {
        &self.alter_neighbors[a]
    }

    /// Edge probabilities equal to the realized latent adjacency (0/1).
    pub fn realized_edge_probs(&self) -> EdgeProbabilities<f64> {
        let s = &self.skeleton;
        let mut ee = Matrix::zeros(s.n_e(), s.n_e());
        for &(i, j) in &self.ego_edges {
            ee.set(i, j, 1.0);
            ee.set(j, i, 1.0);
        }
        let mut ae = Matrix::zeros(s.n_a(), s.n_e());
        for &(a, e) in &self.alter_edges {
            ae.set(a, e, 1.0);
        }
        EdgeProbabilities::from_matrices(ee, ae, s.alter_ego().to_vec())
            .expect("realized adjacency is valid")
    }
}

/// Draws covariates and latent edges.
pub fn generate_population(
    cfg: &PopulationConfig,
    seed: u64,
) -> Result<PopulationNetwork, SimError> {
    if cfg.n_e == 0 {
        return Err(SimError::Invalid("n_e must be positive".into()));
    }
    if !(cfg.p_z > 0.0 && cfg.p_z < 1.0) {
        return Err(SimError::Invalid(format!(
            "p_z = {} not in (0, 1)",
            cfg.p_z
        )));
    }
    let mut rng = stream(seed, Purpose::Population, 0);
    let covs = |p1: f64, p2: f64, rng: &mut rand_chacha::ChaCha8Rng| {
        let x1 = rng.random_bool(p1) as u8 as f64;
        let x2 = rng.random_bool(p2) as u8 as f64;
        let x3: f64 = StandardNormal.sample(rng);
        vec![x1, x2, x3]
    };
    let mut units = Vec::with_capacity(cfg.n_e * (1 + cfg.alters_per_ego));
    for e in 0..cfg.n_e {
        let ego = format!("e{e}");
        units.push(Unit::ego(ego.clone(), false, 0.0, covs(0.6, 0.2, &mut rng)));
        for a in 0..cfg.alters_per_ego {
            units.push(Unit::alter(
                format!("a{e}_{a}"),
                ego.clone(),
                0.0,
                covs(0.5, 0.3, &mut rng),
            ));
        }
    }
    let names = vec!["x_1".to_string(), "x_2".to_string(), "x_3".to_string()];
    let skeleton = Sample::from_units_named(units, cfg.p_z, names)
        .map_err(|e| SimError::Invalid(e.to_string()))?;
    let edge_probs = build_edge_probabilities(&cfg.generating_model(), &skeleton)?;

    let mut rng = stream(seed, Purpose::Population, 1);
    let (n_e, n_a) = (skeleton.n_e(), skeleton.n_a());
    let mut ego_edges = Vec::new();
    let mut ego_neighbors = vec![Vec::new(); n_e];
    for i in 0..n_e {
        for j in (i + 1)..n_e {
            if rng.random_bool(edge_probs.ego_ego(i, j)) {
                ego_edges.push((i, j));
                ego_neighbors[i].push(j);
                ego_neighbors[j].push(i);
            }
        }
    }
    let mut alter_edges = Vec::new();
    let mut alter_neighbors = vec![Vec::new(); n_a];
    for (a, nbrs) in alter_neighbors.iter_mut().enumerate() {
        for e in 0..n_e {
            if let Some(r) = edge_probs.alter_ego(a, e) {
                if rng.random_bool(r) {
                    alter_edges.push((a, e));
                    nbrs.push(e);
                }
            }
        }
    }
    Ok(PopulationNetwork {
        skeleton,
        ego_edges,
        alter_edges,
        edge_probs,
        ego_neighbors,
        alter_neighbors,
    })
}

/// Exposures on the full population network for ego treatments `z`:
/// `(per ego, per alter)`.
pub fn true_exposures(net: &PopulationNetwork, z: &[bool]) -> (Vec<bool>, Vec<bool>) {
    let ego = (0..net.skeleton.n_e())
        .map(|i| net.ego_neighbors(i).iter().any(|&j| z[j]))
        .collect();
    let alter = (0..net.skeleton.n_a())
        .map(|a| z[net.skeleton.alter_ego()[a]] || net.alter_neighbors(a).iter().any(|&e| z[e]))
        .collect();
    (ego, alter)
}

/// Outcome model coefficients. Covariate effects apply to `(X1, X2, X3)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub ego_intercept: f64,
    pub ego_z: f64,
    pub ego_f: f64,
    pub ego_zf: f64,
    pub beta_e: Vec<f64>,
    pub alter_intercept: f64,
    pub alter_f: f64,
    pub beta_a: Vec<f64>,
    pub noise_sd: f64,
}

impl Default for Coefficients {
    fn default() -> Self {
        Self {
            ego_intercept: -0.5,
            ego_z: 2.0,
            ego_f: 0.5,
            ego_zf: 1.0,
            beta_e: vec![-0.5, -0.3, 0.2],
            alter_intercept: -0.5,
            alter_f: 2.0,
            beta_a: vec![-0.4, -0.2, 0.1],
            noise_sd: 1.0,
        }
    }
}

/// Potential outcomes for every unit, with one noise draw per unit shared
/// by all of its cells.
pub fn generate_potential_outcomes(
    net: &PopulationNetwork,
    coef: &Coefficients,
    seed: u64,
) -> OutcomeTable {
    let s = &net.skeleton;
    let mut rng = stream(seed, Purpose::Outcomes, 0);
    let mut noise = || {
        let e: f64 = StandardNormal.sample(&mut rng);
        coef.noise_sd * e
    };
    let dot = |x: &[f64], b: &[f64]| x.iter().zip(b).map(|(x, b)| x * b).sum::<f64>();
    let ego = (0..s.n_e())
        .map(|i| {
            let base = coef.ego_intercept + dot(s.ego_covariates(i), &coef.beta_e) + noise();
            [
                base,
                base + coef.ego_f,
                base + coef.ego_z,
                base + coef.ego_z + coef.ego_f + coef.ego_zf,
            ]
        })
        .collect();
    let alter = (0..s.n_a())
        .map(|a| {
            let base = coef.alter_intercept + dot(s.alter_covariates(a), &coef.beta_a) + noise();
            [base, base + coef.alter_f]
        })
        .collect();
    OutcomeTable { ego, alter }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum KappaStatus {
    Constant(f64),
    NonConstant,
    Undefined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrueEffects {
    pub ie: f64,
    pub de: f64,
    pub kappa: KappaStatus,
}

/// Sample-average effects and the implied kappa.
pub fn true_effects(pot: &OutcomeTable) -> TrueEffects {
    let ratios: Vec<Option<f64>> = pot
        .ego
        .iter()
        .map(|y| {
            let d0 = y[2] - y[0];
            (d0 != 0.0).then(|| (y[3] - y[1]) / d0)
        })
        .collect();
    let kappa = match ratios.first() {
        None | Some(None) => KappaStatus::Undefined,
        Some(Some(k0)) => {
            if ratios.iter().any(Option::is_none) {
                KappaStatus::Undefined
            } else if ratios
                .iter()
                .flatten()
                .all(|k| (k - k0).abs() <= 1e-9 * k0.abs().max(1.0))
            {
                KappaStatus::Constant(*k0)
            } else {
                KappaStatus::NonConstant
            }
        }
    };
    TrueEffects {
        ie: pot.ie(),
        de: pot.de(),
        kappa,
    }
}

/// Which edge-probability specification an estimator uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specification {
    /// No correction.
    Naive,
    /// The generating edge probabilities.
    Heterogeneous,
    /// Uniform probabilities with the generating expected edge counts.
    Homogeneous,
    /// The realized latent adjacency.
    Oracle,
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Specification::Naive => "Naive",
            Specification::Heterogeneous => "Heterogeneous",
            Specification::Homogeneous => "Homogeneous",
            Specification::Oracle => "Oracle",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RosterEntry {
    pub specification: Specification,
    #[serde(default)]
    pub augmented: bool,
}

impl RosterEntry {
    /// Naive, heterogeneous and homogeneous, each with and without augmentation.
    pub fn standard() -> Vec<Self> {
        let mut v = Vec::new();
        for specification in [
            Specification::Heterogeneous,
            Specification::Homogeneous,
            Specification::Naive,
        ] {
            for augmented in [false, true] {
                v.push(Self {
                    specification,
                    augmented,
                });
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationOptions {
    pub reps: usize,
    pub seed: u64,
    /// Kappa used by the corrected DE estimators.
    pub kappa: f64,
    pub outcome_model: OutcomeModelSpec,
    pub level: f64,
}

/// Summary of one estimator over the replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub estimand: Estimand,
    pub specification: Specification,
    pub augmented: bool,
    pub mean: f64,
    pub bias: f64,
    /// Monte-Carlo standard error of `bias`.
    pub mc_se: f64,
    pub coverage: f64,
    /// Standard deviation of the estimates (n - 1 denominator).
    pub sd: f64,
    /// Mean of the estimated standard errors.
    pub mean_se: f64,
    pub sd_se: f64,
    pub mean_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationReport {
    pub reps: usize,
    pub truths: TrueEffects,
    pub rows: Vec<ReportRow>,
    /// Per row, the point estimates of every replication.
    #[serde(skip)]
    pub points: Vec<Vec<f64>>,
}

impl ReplicationReport {
    pub fn row(
        &self,
        estimand: Estimand,
        specification: Specification,
        augmented: bool,
    ) -> Option<&ReportRow> {
        self.rows.iter().find(|r| {
            r.estimand == estimand && r.specification == specification && r.augmented == augmented
        })
    }
}

fn profile_for(
    net: &PopulationNetwork,
    spec: Specification,
    cfg_model: Option<&EdgeModel>,
) -> Result<Profile, SimError> {
    let s = &net.skeleton;
    let p = s.p_z();
    Ok(match spec {
        Specification::Naive => ExposureProfile::homogeneous(s.n_e(), s.n_a(), 0.0, p),
        Specification::Heterogeneous => {
            ExposureProfile::from_edge_probabilities(&net.edge_probs, p, false)
        }
        Specification::Homogeneous => {
            let model =
                cfg_model
                    .cloned()
                    .unwrap_or_else(|| EdgeProbabilityModel::HomogeneousCount {
                        m_e: net.edge_probs.expected_ego_edges(),
                        m_a: net.edge_probs.expected_alter_edges(),
                    });
            ExposureProfile::from_edge_probabilities(
                &build_edge_probabilities(&model, s)?,
                p,
                false,
            )
        }
        Specification::Oracle => {
            ExposureProfile::from_edge_probabilities(&net.realized_edge_probs(), p, false)
        }
    })
}

/// Observed sample for one treatment assignment, outcomes realized from
/// the true exposures.
pub fn realize(net: &PopulationNetwork, pot: &OutcomeTable, z: Vec<bool>) -> Sample {
    let (fe, fa) = true_exposures(net, &z);
    let y_e = (0..z.len())
        .map(|i| pot.ego_outcome(i, z[i], fe[i]))
        .collect();
    let y_a = (0..fa.len()).map(|a| pot.alter_outcome(a, fa[a])).collect();
    net.skeleton
        .with_assignment(z, y_e, y_a)
        .expect("assignment matches skeleton")
}

/// Replicated randomizations on a fixed population; every roster entry
/// yields an IE and a DE row.
pub fn run_replications(
    net: &PopulationNetwork,
    pot: &OutcomeTable,
    roster: &[RosterEntry],
    opts: &ReplicationOptions,
) -> Result<ReplicationReport, SimError> {
    if opts.reps == 0 {
        return Err(SimError::Invalid("reps must be positive".into()));
    }
    let homogeneous = EdgeProbabilityModel::HomogeneousCount {
        m_e: net.edge_probs.expected_ego_edges(),
        m_a: net.edge_probs.expected_alter_edges(),
    };
    let profiles = roster
        .iter()
        .map(|e| profile_for(net, e.specification, Some(&homogeneous)))
        .collect::<Result<Vec<_>, _>>()?;
    let any_aug = roster.iter().any(|e| e.augmented);
    let kappa = KappaSpec::new(opts.kappa);
    let p = net.skeleton.p_z();

    let per_rep: Vec<Vec<(Estimate, Estimate)>> = (0..opts.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(opts.seed, Purpose::Replication, r as u64);
            let z: Vec<bool> = (0..net.skeleton.n_e())
                .map(|_| rng.random_bool(p))
                .collect();
            let plan_seed: u64 = rng.random();
            let s = realize(net, pot, z);
            let fail = |e: &dyn fmt::Display| SimError::Replication {
                rep: r,
                message: e.to_string(),
            };
            let preds = if any_aug {
                let plan = make_crossfit_plan(&s, plan_seed).map_err(|e| fail(&e))?;
                Some(
                    CrossFitPredictions::fit(&s, &opts.outcome_model, &plan)
                        .map_err(|e| fail(&e))?,
                )
            } else {
                None
            };
            roster
                .iter()
                .zip(&profiles)
                .map(|(entry, prof)| {
                    let (ie, de) = if entry.augmented {
                        let preds = preds
                            .as_ref()
                            .expect("predictions fit when any entry is augmented");
                        let k = if entry.specification == Specification::Naive {
                            KappaSpec::one()
                        } else {
                            kappa
                        };
                        let mut prof = prof.clone();
                        if entry.specification == Specification::Naive {
                            prof.ego_edges = None;
                        }
                        augmented_estimates_with(&s, &prof, k, preds).map_err(|e| fail(&e))?
                    } else if entry.specification == Specification::Naive {
                        (
                            naive_ie(&s).map_err(|e| fail(&e))?,
                            naive_de(&s).map_err(|e| fail(&e))?,
                        )
                    } else {
                        (
                            adjusted_ie(&s, prof).map_err(|e| fail(&e))?,
                            adjusted_de(&s, prof, kappa).map_err(|e| fail(&e))?,
                        )
                    };
                    Ok((ie.with_level(opts.level), de.with_level(opts.level)))
                })
                .collect()
        })
        .collect::<Result<_, SimError>>()?;

    let truths = true_effects(pot);
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for (estimand, truth) in [(Estimand::Ie, truths.ie), (Estimand::De, truths.de)] {
        for (k, entry) in roster.iter().enumerate() {
            let ests: Vec<&Estimate> = per_rep
                .iter()
                .map(|rep| {
                    if estimand == Estimand::Ie {
                        &rep[k].0
                    } else {
                        &rep[k].1
                    }
                })
                .collect();
            rows.push(summarize(estimand, *entry, &ests, truth));
            points.push(ests.iter().map(|e| e.point).collect());
        }
    }
    Ok(ReplicationReport {
        reps: opts.reps,
        truths,
        rows,
        points,
    })
}

fn summarize(estimand: Estimand, entry: RosterEntry, ests: &[&Estimate], truth: f64) -> ReportRow {
    let n = ests.len() as f64;
    let mean = ests
        .iter()
        .map(|e| e.point)
        .collect::<CompensatedSum<f64>>()
        .value()
        / n;
    let ss = ests
        .iter()
        .map(|e| (e.point - mean).powi(2))
        .collect::<CompensatedSum<f64>>()
        .value();
    let sd = if ests.len() > 1 {
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let var = |e: &&Estimate| e.variance.unwrap_or(f64::NAN);
    let mean_se = ests
        .iter()
        .map(|e| var(e).sqrt())
        .collect::<CompensatedSum<f64>>()
        .value()
        / n;
    let mean_variance = ests
        .iter()
        .map(var)
        .collect::<CompensatedSum<f64>>()
        .value()
        / n;
    let covered = ests
        .iter()
        .filter(|e| e.covers(truth) == Some(true))
        .count();
    ReportRow {
        estimand,
        specification: entry.specification,
        augmented: entry.augmented,
        mean,
        bias: mean - truth,
        mc_se: sd / n.sqrt(),
        coverage: covered as f64 / n,
        sd,
        mean_se,
        sd_se: sd / mean_se,
        mean_variance,
    }
}

fn two() -> usize {
    2
}

fn half() -> f64 {
    0.5
}

fn euclidean() -> DistanceMetric {
    DistanceMetric::Euclidean
}

fn default_level() -> f64 {
    crate::estimators::DEFAULT_LEVEL
}

/// A full simulation scenario, as read from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub n_e: usize,
    #[serde(default = "two")]
    pub alters_per_ego: usize,
    pub m_a: f64,
    pub m_e: f64,
    /// Homophily strength; absent means homogeneous contamination.
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default = "euclidean")]
    pub metric: DistanceMetric,
    #[serde(default = "half")]
    pub p_z: f64,
    pub reps: usize,
    pub seed: u64,
    /// Kappa for the corrected DE; defaults to the implied kappa of the
    /// outcome table.
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default = "RosterEntry::standard")]
    pub estimators: Vec<RosterEntry>,
    #[serde(default)]
    pub outcome_model: Option<OutcomeModelSpec>,
    #[serde(default = "default_level")]
    pub level: f64,
}

impl ScenarioConfig {
    pub fn label(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("m_a={}, m_e={}", self.m_a, self.m_e))
    }

    pub fn population(&self) -> PopulationConfig {
        PopulationConfig {
            n_e: self.n_e,
            alters_per_ego: self.alters_per_ego,
            m_a: self.m_a,
            m_e: self.m_e,
            heterogeneity: self.gamma.map(|gamma| Heterogeneity {
                gamma,
                metric: self.metric,
            }),
            p_z: self.p_z,
        }
    }
}

/// Generates the population and outcomes, then runs the replications.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ReplicationReport, SimError> {
    let net = generate_population(&cfg.population(), cfg.seed)?;
    let pot = generate_potential_outcomes(&net, &Coefficients::default(), cfg.seed);
    let kappa = match (cfg.kappa, true_effects(&pot).kappa) {
        (Some(k), _) => k,
        (None, KappaStatus::Constant(k)) => k,
        (None, _) => 1.0,
    };
    let opts = ReplicationOptions {
        reps: cfg.reps,
        seed: cfg.seed,
        kappa,
        outcome_model: cfg.outcome_model.clone().unwrap_or_default(),
        level: cfg.level,
    };
    run_replications(&net, &pot, &cfg.estimators, &opts)
}
