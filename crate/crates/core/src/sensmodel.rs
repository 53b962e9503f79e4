//! Sensitivity models for latent contamination edges and the exposure
//! probabilities they imply.
//!
//! A model postulates, for every ego pair and every alter–ego pair that is
//! not an observed star edge, the probability that an edge is missing from
//! the observed network. Under edge independence and Bernoulli(p_z) ego
//! treatment these give closed forms for the probability that a unit has
//! at least one treated neighbor (`pi_e`, `pi_a`), and for the three-level
//! mapping the distribution of the number of treated latent neighbors.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::Warning;
use crate::linalg::Matrix;
use crate::sample::{EgocentricSample, Role};
use crate::scalar::{CompensatedSum, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Euclidean,
    /// `1 - cos(angle)`.
    Cosine,
    /// Minkowski distance of order `p > 0`.
    Lp(f64),
}

fn yes() -> bool {
    true
}

/// Latent-edge probability specification.
///
/// Serialized as a flat JSON object tagged by `variant`, e.g.
/// `{"variant": "homogeneous_count", "m_e": 150, "m_a": 100}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
#[serde(bound = "T: Real")]
pub enum EdgeProbabilityModel<T> {
    HomogeneousProb {
        rho_e: T,
        rho_a: T,
    },
    /// Expected numbers of missing ego–ego and alter–ego edges, spread
    /// uniformly over the candidate pairs.
    HomogeneousCount {
        m_e: T,
        m_a: T,
    },
    /// Logistic homophily around base probabilities.
    HeterogeneousProb {
        rho_e: T,
        rho_a: T,
        gamma_e: T,
        gamma_a: T,
        metric: DistanceMetric,
        #[serde(default = "yes")]
        standardize: bool,
    },
    /// Expected edge counts spread proportionally to `exp(-gamma * d)`.
    HeterogeneousCount {
        m_e: T,
        m_a: T,
        gamma_e: T,
        gamma_a: T,
        metric: DistanceMetric,
        #[serde(default = "yes")]
        standardize: bool,
    },
}

impl<T: Real> EdgeProbabilityModel<T> {
    /// No contamination.
    pub fn none() -> Self {
        Self::HomogeneousProb {
            rho_e: T::zero(),
            rho_a: T::zero(),
        }
    }

    /// Distance settings, for heterogeneous variants.
    pub fn distance(&self) -> Option<(DistanceMetric, bool)> {
        match *self {
            Self::HeterogeneousProb {
                metric,
                standardize,
                ..
            }
            | Self::HeterogeneousCount {
                metric,
                standardize,
                ..
            } => Some((metric, standardize)),
            _ => None,
        }
    }

    /// Checks parameter ranges against a sample of `n_e` egos and `n_a` alters.
    pub fn validate(&self, n_e: usize, n_a: usize) -> Result<(), SensError> {
        let prob = |name: &str, v: T| {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(SensError::InvalidParameter(format!(
                    "{name} = {v} not in [0, 1]"
                )))
            }
        };
        let nonneg = |name: &str, v: T| {
            if v >= T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(SensError::InvalidParameter(format!(
                    "{name} = {v} must be finite and >= 0"
                )))
            }
        };
        let counts = |m_e: T, m_a: T| {
            nonneg("m_e", m_e)?;
            nonneg("m_a", m_a)?;
            if n_e == 1 && m_e > T::zero() {
                return Err(SensError::SingleEgo);
            }
            let (max_e, max_a) = pair_counts(n_e, n_a);
            if m_e > T::from_count(max_e) {
                return Err(SensError::CountExceedsMax {
                    kind: "ego-ego",
                    m: m_e.as_f64(),
                    max: max_e,
                });
            }
            if m_a > T::from_count(max_a) {
                return Err(SensError::CountExceedsMax {
                    kind: "alter-ego",
                    m: m_a.as_f64(),
                    max: max_a,
                });
            }
            Ok(())
        };
        let metric = |m: DistanceMetric| match m {
            DistanceMetric::Lp(p) if !(p > 0.0 && p.is_finite()) => Err(
                SensError::InvalidParameter(format!("Lp order {p} must be positive")),
            ),
            _ => Ok(()),
        };
        match *self {
            Self::HomogeneousProb { rho_e, rho_a } => {
                prob("rho_e", rho_e)?;
                prob("rho_a", rho_a)
            }
            Self::HomogeneousCount { m_e, m_a } => counts(m_e, m_a),
            Self::HeterogeneousProb {
                rho_e,
                rho_a,
                gamma_e,
                gamma_a,
                metric: m,
                ..
            } => {
                prob("rho_e", rho_e)?;
                prob("rho_a", rho_a)?;
                nonneg("gamma_e", gamma_e)?;
                nonneg("gamma_a", gamma_a)?;
                metric(m)
            }
            Self::HeterogeneousCount {
                m_e,
                m_a,
                gamma_e,
                gamma_a,
                metric: m,
                ..
            } => {
                counts(m_e, m_a)?;
                nonneg("gamma_e", gamma_e)?;
                nonneg("gamma_a", gamma_a)?;
                metric(m)
            }
        }
    }

    /// Named numeric parameters, for reporting.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Self::HomogeneousProb { rho_e, rho_a } => {
                vec![("rho_e", rho_e.as_f64()), ("rho_a", rho_a.as_f64())]
            }
            Self::HomogeneousCount { m_e, m_a } => {
                vec![("m_e", m_e.as_f64()), ("m_a", m_a.as_f64())]
            }
            Self::HeterogeneousProb {
                rho_e,
                rho_a,
                gamma_e,
                gamma_a,
                ..
            } => vec![
                ("rho_e", rho_e.as_f64()),
                ("rho_a", rho_a.as_f64()),
                ("gamma_e", gamma_e.as_f64()),
                ("gamma_a", gamma_a.as_f64()),
            ],
            Self::HeterogeneousCount {
                m_e,
                m_a,
                gamma_e,
                gamma_a,
                ..
            } => vec![
                ("m_e", m_e.as_f64()),
                ("m_a", m_a.as_f64()),
                ("gamma_e", gamma_e.as_f64()),
                ("gamma_a", gamma_a.as_f64()),
            ],
        }
    }

    /// Sets one of the parameters listed by [`params`](Self::params).
    pub fn set_param(&mut self, name: &str, v: T) -> Result<(), SensError> {
        let slot = match (self, name) {
            (
                Self::HomogeneousProb { rho_e, .. } | Self::HeterogeneousProb { rho_e, .. },
                "rho_e",
            ) => rho_e,
            (
                Self::HomogeneousProb { rho_a, .. } | Self::HeterogeneousProb { rho_a, .. },
                "rho_a",
            ) => rho_a,
            (Self::HomogeneousCount { m_e, .. } | Self::HeterogeneousCount { m_e, .. }, "m_e") => {
                m_e
            }
            (Self::HomogeneousCount { m_a, .. } | Self::HeterogeneousCount { m_a, .. }, "m_a") => {
                m_a
            }
            (
                Self::HeterogeneousProb { gamma_e, .. } | Self::HeterogeneousCount { gamma_e, .. },
                "gamma_e",
            ) => gamma_e,
            (
                Self::HeterogeneousProb { gamma_a, .. } | Self::HeterogeneousCount { gamma_a, .. },
                "gamma_a",
            ) => gamma_a,
            (_, other) => {
                return Err(SensError::InvalidParameter(format!(
                    "model has no parameter `{other}`"
                )))
            }
        };
        *slot = v;
        Ok(())
    }
}

/// Number of candidate (ego–ego, alter–ego) latent pairs.
pub fn pair_counts(n_e: usize, n_a: usize) -> (usize, usize) {
    (n_e * n_e.saturating_sub(1) / 2, n_a * n_e.saturating_sub(1))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensError {
    #[error("invalid sensitivity parameter: {0}")]
    InvalidParameter(String),
    #[error("expected {kind} edge count {m} exceeds the {max} candidate pairs")]
    CountExceedsMax {
        kind: &'static str,
        m: f64,
        max: usize,
    },
    #[error("a sample with one ego cannot have ego-ego edges")]
    SingleEgo,
    #[error("heterogeneous models need at least one covariate")]
    MissingCovariates,
    #[error("covariate {0} has zero variance and cannot be standardized")]
    ZeroVariance(usize),
    #[error("{role:?} {index} has an all-zero covariate vector; cosine distance undefined")]
    ZeroNorm { role: Role, index: usize },
    #[error("edge probability matrix: {0}")]
    InvalidMatrix(String),
}

/// Covariate distances for all ego–ego and alter–ego pairs.
#[derive(Debug, Clone)]
pub struct PairDistances<T> {
    ego_ego: Matrix<T>,
    alter_ego: Matrix<T>,
}

impl<T: Real> PairDistances<T> {
    pub fn ego_ego(&self, i: usize, j: usize) -> T {
        self.ego_ego.get(i, j)
    }

    pub fn alter_ego(&self, a: usize, e: usize) -> T {
        self.alter_ego.get(a, e)
    }
}

pub fn distance<T: Real>(metric: DistanceMetric, x: &[T], y: &[T]) -> T {
    match metric {
        DistanceMetric::Euclidean => x
            .iter()
            .zip(y)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt(),
        DistanceMetric::Cosine => {
            let dot: T = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
            let nx: T = x.iter().map(|&a| a * a).sum::<T>().sqrt();
            let ny: T = y.iter().map(|&b| b * b).sum::<T>().sqrt();
            // rounding can push the cosine slightly past 1
            (T::one() - dot / (nx * ny)).max(T::zero())
        }
        DistanceMetric::Lp(p) => {
            let p = T::lit(p);
            x.iter()
                .zip(y)
                .map(|(&a, &b)| (a - b).abs().powf(p))
                .sum::<T>()
                .powf(p.recip())
        }
    }
}

/// Pairwise covariate distances. With `standardize`, every covariate is
/// centered and scaled to unit (n-1) variance over all recruited units.
pub fn pairwise_distances<T: Real>(
    s: &EgocentricSample<T>,
    metric: DistanceMetric,
    standardize: bool,
) -> Result<PairDistances<T>, SensError> {
    let dim = s.covariate_dim();
    if dim == 0 {
        return Err(SensError::MissingCovariates);
    }
    let mut ego: Vec<Vec<T>> = (0..s.n_e()).map(|e| s.ego_covariates(e).to_vec()).collect();
    let mut alt: Vec<Vec<T>> = (0..s.n_a())
        .map(|a| s.alter_covariates(a).to_vec())
        .collect();
    if standardize {
        let n = s.n_e() + s.n_a();
        for c in 0..dim {
            let mean = ego
                .iter()
                .chain(&alt)
                .map(|x| x[c])
                .collect::<CompensatedSum<T>>()
                .value()
                / T::from_count(n);
            let ss = ego
                .iter()
                .chain(&alt)
                .map(|x| (x[c] - mean) * (x[c] - mean))
                .collect::<CompensatedSum<T>>()
                .value();
            let sd = if n > 1 {
                (ss / T::from_count(n - 1)).sqrt()
            } else {
                T::zero()
            };
            if !(sd > T::zero()) {
                return Err(SensError::ZeroVariance(c));
            }
            for x in ego.iter_mut().chain(alt.iter_mut()) {
                x[c] = (x[c] - mean) / sd;
            }
        }
    }
    if metric == DistanceMetric::Cosine {
        let zero = |x: &Vec<T>| x.iter().all(|v| *v == T::zero());
        if let Some(index) = ego.iter().position(zero) {
            return Err(SensError::ZeroNorm {
                role: Role::Ego,
                index,
            });
        }
        if let Some(index) = alt.iter().position(zero) {
            return Err(SensError::ZeroNorm {
                role: Role::Alter,
                index,
            });
        }
    }
    let mut ego_ego = Matrix::zeros(s.n_e(), s.n_e());
    for i in 0..s.n_e() {
        for j in 0..i {
            let d = distance(metric, &ego[i], &ego[j]);
            ego_ego.set(i, j, d);
            ego_ego.set(j, i, d);
        }
    }
    let alter_ego = Matrix::from_fn(s.n_a(), s.n_e(), |a, e| distance(metric, &alt[a], &ego[e]));
    Ok(PairDistances { ego_ego, alter_ego })
}

/// Latent-edge probabilities for every candidate pair.
#[derive(Debug, Clone)]
pub struct EdgeProbabilities<T> {
    ego_ego: Arc<Matrix<T>>,
    /// Entry `(a, alter_ego[a])` is unused and stored as zero.
    alter_ego: Matrix<T>,
    own_ego: Vec<usize>,
    pub warnings: Vec<Warning>,
}

impl<T: Real> EdgeProbabilities<T> {
    /// Wraps explicit matrices (e.g. realized 0/1 latent adjacency).
    /// `own_ego[a]` is the recruiting ego of alter `a`; its entry in
    /// `alter_ego` is ignored.
    pub fn from_matrices(
        ego_ego: Matrix<T>,
        mut alter_ego: Matrix<T>,
        own_ego: Vec<usize>,
    ) -> Result<Self, SensError> {
        let n_e = ego_ego.rows();
        if ego_ego.cols() != n_e || alter_ego.cols() != n_e || alter_ego.rows() != own_ego.len() {
            return Err(SensError::InvalidMatrix("inconsistent dimensions".into()));
        }
        if !ego_ego.is_symmetric() {
            return Err(SensError::InvalidMatrix(
                "ego-ego matrix not symmetric".into(),
            ));
        }
        if (0..n_e).any(|i| ego_ego.get(i, i) != T::zero()) {
            return Err(SensError::InvalidMatrix("nonzero ego-ego diagonal".into()));
        }
        for (a, &e) in own_ego.iter().enumerate() {
            if e >= n_e {
                return Err(SensError::InvalidMatrix(format!(
                    "alter {a}: ego {e} out of range"
                )));
            }
            alter_ego.set(a, e, T::zero());
        }
        let in_unit = |v: &T| *v >= T::zero() && *v <= T::one();
        if !ego_ego.iter().all(in_unit) || !alter_ego.iter().all(in_unit) {
            return Err(SensError::InvalidMatrix(
                "probability outside [0, 1]".into(),
            ));
        }
        Ok(Self {
            ego_ego: Arc::new(ego_ego),
            alter_ego,
            own_ego,
            warnings: Vec::new(),
        })
    }

    pub fn n_e(&self) -> usize {
        self.ego_ego.rows()
    }

    pub fn n_a(&self) -> usize {
        self.own_ego.len()
    }

    pub fn ego_ego(&self, i: usize, j: usize) -> T {
        self.ego_ego.get(i, j)
    }

    pub fn ego_ego_matrix(&self) -> &Matrix<T> {
        &self.ego_ego
    }

    /// `None` for the alter's own (observed) ego.
    pub fn alter_ego(&self, a: usize, e: usize) -> Option<T> {
        (e != self.own_ego[a]).then(|| self.alter_ego.get(a, e))
    }

    /// Row of alter `a`, own-ego entry zero.
    pub fn alter_row(&self, a: usize) -> &[T] {
        self.alter_ego.row(a)
    }

    pub fn own_ego(&self) -> &[usize] {
        &self.own_ego
    }

    /// Expected number of latent ego–ego edges.
    pub fn expected_ego_edges(&self) -> T {
        let n = self.n_e();
        (0..n)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| self.ego_ego.get(i, j))
            .collect::<CompensatedSum<T>>()
            .value()
    }

    /// Expected number of latent alter–ego edges.
    pub fn expected_alter_edges(&self) -> T {
        self.alter_ego
            .iter()
            .copied()
            .collect::<CompensatedSum<T>>()
            .value()
    }

    /// Largest expected ego–ego degree.
    pub fn max_expected_degree(&self) -> T {
        (0..self.n_e())
            .map(|i| self.ego_ego.row(i).iter().copied().sum::<T>())
            .fold(T::zero(), T::max)
    }
}

/// Evaluates a sensitivity model on a sample.
pub fn build_edge_probabilities<T: Real>(
    model: &EdgeProbabilityModel<T>,
    s: &EgocentricSample<T>,
) -> Result<EdgeProbabilities<T>, SensError> {
    match model.distance() {
        Some((metric, standardize)) => {
            model.validate(s.n_e(), s.n_a())?;
            let d = pairwise_distances(s, metric, standardize)?;
            build_edge_probabilities_with(model, s, &d)
        }
        None => build_edge_probabilities_with(model, s, &PairDistances::empty()),
    }
}

impl<T: Real> PairDistances<T> {
    pub(crate) fn empty() -> Self {
        Self {
            ego_ego: Matrix::zeros(0, 0),
            alter_ego: Matrix::zeros(0, 0),
        }
    }
}

/// As [`build_edge_probabilities`], reusing precomputed distances (which
/// must match the model's metric and standardization).
pub fn build_edge_probabilities_with<T: Real>(
    model: &EdgeProbabilityModel<T>,
    s: &EgocentricSample<T>,
    d: &PairDistances<T>,
) -> Result<EdgeProbabilities<T>, SensError> {
    let (n_e, n_a) = (s.n_e(), s.n_a());
    model.validate(n_e, n_a)?;
    let own = s.alter_ego();
    let (pairs_e, pairs_a) = pair_counts(n_e, n_a);
    let mut warnings = Vec::new();
    let constant = |rho_e: T, rho_a: T| {
        let ee = Matrix::from_fn(n_e, n_e, |i, j| if i == j { T::zero() } else { rho_e });
        let ae = Matrix::from_fn(n_a, n_e, |a, e| if own[a] == e { T::zero() } else { rho_a });
        (ee, ae)
    };
    let (ego_ego, alter_ego) = match *model {
        EdgeProbabilityModel::HomogeneousProb { rho_e, rho_a } => constant(rho_e, rho_a),
        EdgeProbabilityModel::HomogeneousCount { m_e, m_a } => {
            let rho = |m: T, pairs: usize| {
                if pairs == 0 {
                    T::zero()
                } else {
                    m / T::from_count(pairs)
                }
            };
            constant(rho(m_e, pairs_e), rho(m_a, pairs_a))
        }
        EdgeProbabilityModel::HeterogeneousProb {
            rho_e,
            rho_a,
            gamma_e,
            gamma_a,
            ..
        } => {
            let (mean_e, mean_a) = mean_distances(d, own);
            let ee = Matrix::from_fn(n_e, n_e, |i, j| {
                if i == j {
                    T::zero()
                } else {
                    logistic_shift(rho_e, gamma_e, d.ego_ego(i, j) - mean_e)
                }
            });
            let ae = Matrix::from_fn(n_a, n_e, |a, e| {
                if own[a] == e {
                    T::zero()
                } else {
                    logistic_shift(rho_a, gamma_a, d.alter_ego(a, e) - mean_a)
                }
            });
            (ee, ae)
        }
        EdgeProbabilityModel::HeterogeneousCount {
            m_e,
            m_a,
            gamma_e,
            gamma_a,
            ..
        } => {
            let mut ee = Matrix::from_fn(n_e, n_e, |i, j| {
                if i == j {
                    T::zero()
                } else {
                    (-gamma_e * d.ego_ego(i, j)).exp()
                }
            });
            let mut ae = Matrix::from_fn(n_a, n_e, |a, e| {
                if own[a] == e {
                    T::zero()
                } else {
                    (-gamma_a * d.alter_ego(a, e)).exp()
                }
            });
            // each unordered ego pair appears twice in the full matrix
            let w_e = ee.iter().copied().collect::<CompensatedSum<T>>().value() / T::lit(2.0);
            let w_a = ae.iter().copied().collect::<CompensatedSum<T>>().value();
            let scale_e = if w_e > T::zero() {
                m_e / w_e
            } else {
                T::zero()
            };
            let scale_a = if w_a > T::zero() {
                m_a / w_a
            } else {
                T::zero()
            };
            ee = ee.map(|w| w * scale_e);
            ae = ae.map(|w| w * scale_a);
            if let Some(w) = clamp(&mut ee, "ego-ego", true) {
                warnings.push(w);
            }
            if let Some(w) = clamp(&mut ae, "alter-ego", false) {
                warnings.push(w);
            }
            (ee, ae)
        }
    };
    let mut ep = EdgeProbabilities::from_matrices(ego_ego, alter_ego, own.to_vec())?;
    ep.warnings = warnings;
    Ok(ep)
}

fn mean_distances<T: Real>(d: &PairDistances<T>, own: &[usize]) -> (T, T) {
    let n_e = d.ego_ego.rows();
    let mut se = CompensatedSum::new();
    for i in 0..n_e {
        for j in 0..i {
            se.add(d.ego_ego(i, j));
        }
    }
    let mut sa = CompensatedSum::new();
    for (a, &o) in own.iter().enumerate() {
        for e in (0..n_e).filter(|&e| e != o) {
            sa.add(d.alter_ego(a, e));
        }
    }
    let (pe, pa) = pair_counts(n_e, own.len());
    let mean = |s: CompensatedSum<T>, n: usize| {
        if n == 0 {
            T::zero()
        } else {
            s.value() / T::from_count(n)
        }
    };
    (mean(se, pe), mean(sa, pa))
}

/// `logit^-1(logit(base) - gamma * centered)`; degenerate bases pass through.
fn logistic_shift<T: Real>(base: T, gamma: T, centered: T) -> T {
    if base <= T::zero() || base >= T::one() || gamma == T::zero() {
        return base;
    }
    let eta = (base / (T::one() - base)).ln() - gamma * centered;
    T::one() / (T::one() + (-eta).exp())
}

fn clamp<T: Real>(m: &mut Matrix<T>, kind: &'static str, symmetric: bool) -> Option<Warning> {
    let mut count = 0;
    let mut lost = 0.0;
    let mut first = None;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if v > T::one() {
                m.set(i, j, T::one());
                if !symmetric || j < i {
                    count += 1;
                    lost += (v - T::one()).as_f64();
                    first.get_or_insert((i, j));
                }
            }
        }
    }
    first.map(|first_pair| Warning::ClampedProbabilities {
        kind,
        count,
        lost_mass: lost,
        first_pair,
    })
}

/// `1 - prod(1 - q_j)` computed through logs to keep precision near 0.
fn any_success<T: Real>(q: impl Iterator<Item = T>) -> T {
    let log_none: T = q.map(|q| (-q).ln_1p()).sum();
    -log_none.exp_m1()
}

/// Per-ego probability of at least one treated latent ego neighbor.
pub fn exposure_prob_ego<T: Real>(ep: &EdgeProbabilities<T>, p_z: T) -> Vec<T> {
    (0..ep.n_e())
        .map(|i| any_success(ep.ego_ego.row(i).iter().map(|&r| p_z * r)))
        .collect()
}

/// Per-alter probability of exposure: own ego treated, or at least one
/// treated latent ego neighbor.
pub fn exposure_prob_alter<T: Real>(ep: &EdgeProbabilities<T>, p_z: T) -> Vec<T> {
    (0..ep.n_a())
        .map(|a| {
            // own-ego entry is stored as zero and contributes ln(1) = 0
            let latent = any_success(ep.alter_row(a).iter().map(|&r| p_z * r));
            p_z + (T::one() - p_z) * latent
        })
        .collect()
}

/// Per-alter `(P(S=0), P(S=1), P(S>=2))` for `S` the number of treated
/// latent ego neighbors (own ego excluded).
pub fn exposure_probs_three_level<T: Real>(ep: &EdgeProbabilities<T>, p_z: T) -> Vec<[T; 3]> {
    let mut q = Vec::with_capacity(ep.n_e());
    (0..ep.n_a())
        .map(|a| {
            let own = ep.own_ego[a];
            q.clear();
            q.extend(
                ep.alter_row(a)
                    .iter()
                    .enumerate()
                    .filter(|&(e, _)| e != own)
                    .map(|(_, &r)| p_z * r),
            );
            let (p0, p1, p2) = poisson_binomial_tail(&q);
            [p0, p1, p2]
        })
        .collect()
}

/// `(P(S=0), P(S=1), P(S>=2))` for a sum of independent Bernoullis.
///
/// Uses `P1 = P0 * sum q/(1-q)`; when some `q_j = 1` that form is 0 * inf,
/// so the distribution is convolved directly, truncated at 2.
pub fn poisson_binomial_tail<T: Real>(probs: &[T]) -> (T, T, T) {
    let (p0, p1) = if probs.iter().any(|&q| q >= T::one()) {
        let (mut p0, mut p1) = (T::one(), T::zero());
        for &q in probs {
            p1 = p1 * (T::one() - q) + p0 * q;
            p0 *= T::one() - q;
        }
        (p0, p1)
    } else {
        let p0: T = probs.iter().map(|&q| (-q).ln_1p()).sum::<T>().exp();
        let odds: T = probs
            .iter()
            .map(|&q| q / (T::one() - q))
            .collect::<CompensatedSum<T>>()
            .value();
        (p0, p0 * odds)
    };
    (p0, p1, (T::one() - p0 - p1).max(T::zero()))
}

/// Per-unit exposure probabilities used by the bias-corrected estimators.
#[derive(Debug, Clone)]
pub struct ExposureProfile<T> {
    /// Per alter, in `[p_z, 1)`.
    pub pi_a: Vec<T>,
    /// Per ego, in `[0, 1)`.
    pub pi_e: Vec<T>,
    /// Per alter `(pi*_0, pi*_1, pi*_2+)`.
    pub three_level: Option<Vec<[T; 3]>>,
    /// Ego–ego edge probabilities, for the DE covariance correction.
    pub ego_edges: Option<Arc<Matrix<T>>>,
}

impl<T: Real> ExposureProfile<T> {
    /// Largest usable exposure probability; weights divide by `1 - pi`.
    pub fn cap() -> T {
        T::one() - T::lit(1e-12).max(T::epsilon())
    }

    pub fn from_edge_probabilities(ep: &EdgeProbabilities<T>, p_z: T, three_level: bool) -> Self {
        let cap = Self::cap();
        Self {
            pi_a: exposure_prob_alter(ep, p_z)
                .into_iter()
                .map(|p| p.min(cap))
                .collect(),
            pi_e: exposure_prob_ego(ep, p_z)
                .into_iter()
                .map(|p| p.min(cap))
                .collect(),
            three_level: three_level.then(|| exposure_probs_three_level(ep, p_z)),
            ego_edges: Some(Arc::clone(&ep.ego_ego)),
        }
    }

    /// Constant probabilities with no ego–ego structure (so no DE
    /// covariance correction).
    pub fn homogeneous(n_e: usize, n_a: usize, pi_e: T, pi_a: T) -> Self {
        Self {
            pi_a: vec![pi_a; n_a],
            pi_e: vec![pi_e; n_e],
            three_level: None,
            ego_edges: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sample::Unit;

    fn star_sample(
        n_e: usize,
        alters: usize,
        covs: impl Fn(usize) -> Vec<f64>,
    ) -> EgocentricSample<f64> {
        let mut units = Vec::new();
        let mut k = 0;
        for e in 0..n_e {
            units.push(Unit::ego(format!("e{e}"), e % 2 == 0, 0.0, covs(k)));
            k += 1;
            for a in 0..alters {
                units.push(Unit::alter(
                    format!("a{e}.{a}"),
                    format!("e{e}"),
                    0.0,
                    covs(k),
                ));
                k += 1;
            }
        }
        EgocentricSample::from_units(units, 0.5).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn distance_examples() {
        assert_eq!(
            distance(DistanceMetric::Euclidean, &[0.0, 0.0], &[3.0, 4.0]),
            5.0
        );
        assert_eq!(
            distance(DistanceMetric::Euclidean, &[1.5, 2.0], &[1.5, 2.0]),
            0.0
        );
        assert!(close(
            distance(DistanceMetric::Cosine, &[1.0, 0.0], &[0.0, 1.0]),
            1.0,
            1e-15
        ));
        assert!(close(
            distance(DistanceMetric::Lp(1.0), &[0.0, 0.0], &[3.0, 4.0]),
            7.0,
            1e-15
        ));
    }

    #[test]
    fn distances_are_symmetric_with_zero_diagonal() {
        let s = star_sample(4, 2, |k| vec![k as f64, (k * k % 7) as f64]);
        let d = pairwise_distances(&s, DistanceMetric::Euclidean, true).unwrap();
        for i in 0..4 {
            assert_eq!(d.ego_ego(i, i), 0.0);
            for j in 0..4 {
                assert_eq!(d.ego_ego(i, j), d.ego_ego(j, i));
                assert!(d.ego_ego(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn standardization_errors() {
        let s = star_sample(3, 1, |k| vec![k as f64, 1.0]);
        assert_eq!(
            pairwise_distances(&s, DistanceMetric::Euclidean, true).unwrap_err(),
            SensError::ZeroVariance(1)
        );
        let s = star_sample(3, 1, |k| vec![(k % 2) as f64]);
        assert!(matches!(
            pairwise_distances(&s, DistanceMetric::Cosine, false),
            Err(SensError::ZeroNorm { .. })
        ));
        let s = star_sample(3, 1, |_| vec![]);
        assert_eq!(
            pairwise_distances(&s, DistanceMetric::Euclidean, false).unwrap_err(),
            SensError::MissingCovariates
        );
    }

    #[test]
    fn homogeneous_count_spreads_uniformly() {
        let s = star_sample(3, 0, |_| vec![]);
        let ep = build_edge_probabilities(
            &EdgeProbabilityModel::HomogeneousCount { m_e: 1.0, m_a: 0.0 },
            &s,
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 1.0 / 3.0 };
                assert_eq!(ep.ego_ego(i, j), want);
            }
        }
    }

    #[test]
    fn count_models_hit_their_totals() {
        let s = star_sample(7, 2, |k| vec![(k as f64).sin(), (k % 3) as f64]);
        for model in [
            EdgeProbabilityModel::HomogeneousCount { m_e: 5.0, m_a: 9.0 },
            EdgeProbabilityModel::HeterogeneousCount {
                m_e: 5.0,
                m_a: 9.0,
                gamma_e: 1.0,
                gamma_a: 0.7,
                metric: DistanceMetric::Euclidean,
                standardize: true,
            },
        ] {
            let ep = build_edge_probabilities(&model, &s).unwrap();
            assert!(ep.warnings.is_empty());
            assert!(close(ep.expected_ego_edges(), 5.0, 5e-10));
            assert!(close(ep.expected_alter_edges(), 9.0, 9e-10));
        }
    }

    #[test]
    fn count_limits_are_enforced() {
        let one = star_sample(1, 2, |_| vec![]);
        assert_eq!(
            build_edge_probabilities(
                &EdgeProbabilityModel::HomogeneousCount { m_e: 1.0, m_a: 0.0 },
                &one
            )
            .unwrap_err(),
            SensError::SingleEgo
        );
        let s = star_sample(3, 1, |_| vec![]);
        assert!(matches!(
            build_edge_probabilities(
                &EdgeProbabilityModel::HomogeneousCount { m_e: 4.0, m_a: 0.0 },
                &s
            ),
            Err(SensError::CountExceedsMax {
                kind: "ego-ego",
                ..
            })
        ));
        assert!(matches!(
            build_edge_probabilities(
                &EdgeProbabilityModel::HomogeneousProb {
                    rho_e: 1.5,
                    rho_a: 0.0
                },
                &s
            ),
            Err(SensError::InvalidParameter(_))
        ));
    }

    #[test]
    fn heterogeneous_count_clamps_and_warns() {
        // one close pair, the rest far apart: nearly all mass lands on it
        let s = star_sample(3, 0, |k| vec![[0.0, 0.01, 50.0][k]]);
        let model = EdgeProbabilityModel::HeterogeneousCount {
            m_e: 2.0,
            m_a: 0.0,
            gamma_e: 5.0,
            gamma_a: 0.0,
            metric: DistanceMetric::Euclidean,
            standardize: false,
        };
        let ep = build_edge_probabilities(&model, &s).unwrap();
        assert_eq!(ep.ego_ego(0, 1), 1.0);
        assert!(matches!(
            ep.warnings.as_slice(),
            [Warning::ClampedProbabilities {
                count: 1,
                first_pair: (1, 0),
                ..
            }]
        ));
    }

    #[test]
    fn zero_gamma_heterogeneous_matches_homogeneous() {
        let s = star_sample(5, 2, |k| vec![k as f64 * 0.3, (k % 4) as f64]);
        let het = EdgeProbabilityModel::HeterogeneousProb {
            rho_e: 0.2,
            rho_a: 0.35,
            gamma_e: 0.0,
            gamma_a: 0.0,
            metric: DistanceMetric::Euclidean,
            standardize: true,
        };
        let hom = EdgeProbabilityModel::HomogeneousProb {
            rho_e: 0.2,
            rho_a: 0.35,
        };
        let a = build_edge_probabilities(&het, &s).unwrap();
        let b = build_edge_probabilities(&hom, &s).unwrap();
        assert_eq!(a.ego_ego_matrix(), b.ego_ego_matrix());
        for i in 0..s.n_a() {
            assert_eq!(a.alter_row(i), b.alter_row(i));
        }

        let het_count = EdgeProbabilityModel::HeterogeneousCount {
            m_e: 3.0,
            m_a: 4.0,
            gamma_e: 0.0,
            gamma_a: 0.0,
            metric: DistanceMetric::Cosine,
            standardize: true,
        };
        let a = build_edge_probabilities(&het_count, &s).unwrap();
        let b = build_edge_probabilities(
            &EdgeProbabilityModel::HomogeneousCount { m_e: 3.0, m_a: 4.0 },
            &s,
        )
        .unwrap();
        for i in 0..s.n_e() {
            for j in 0..s.n_e() {
                assert!(close(a.ego_ego(i, j), b.ego_ego(i, j), 1e-15));
            }
        }
    }

    #[test]
    fn heterogeneous_prob_is_centered_on_base() {
        // three collinear egos: distances 1, 1, 2 with mean 4/3
        let s = star_sample(3, 0, |k| vec![k as f64]);
        let model = EdgeProbabilityModel::HeterogeneousProb {
            rho_e: 0.3,
            rho_a: 0.0,
            gamma_e: 2.0,
            gamma_a: 0.0,
            metric: DistanceMetric::Euclidean,
            standardize: false,
        };
        let ep = build_edge_probabilities(&model, &s).unwrap();
        let logit = |p: f64| (p / (1.0 - p)).ln();
        assert!(close(
            logit(ep.ego_ego(0, 1)),
            logit(0.3) + 2.0 / 3.0,
            1e-12
        ));
        assert!(close(
            logit(ep.ego_ego(0, 2)),
            logit(0.3) - 4.0 / 3.0,
            1e-12
        ));
    }

    #[test]
    fn exposure_examples() {
        let s = star_sample(3, 1, |_| vec![]);
        let ep = build_edge_probabilities(
            &EdgeProbabilityModel::HomogeneousProb {
                rho_e: 0.2,
                rho_a: 0.2,
            },
            &s,
        )
        .unwrap();
        for p in exposure_prob_ego(&ep, 0.5) {
            assert!(close(p, 0.19, 1e-15));
        }
        for p in exposure_prob_alter(&ep, 0.5) {
            assert!(close(p, 0.595, 1e-15));
        }
        let none = build_edge_probabilities(&EdgeProbabilityModel::none(), &s).unwrap();
        assert!(exposure_prob_ego(&none, 0.5).iter().all(|&p| p == 0.0));
        assert!(exposure_prob_alter(&none, 0.3).iter().all(|&p| p == 0.3));
        assert!(exposure_probs_three_level(&none, 0.3)
            .iter()
            .all(|t| *t == [1.0, 0.0, 0.0]));
    }

    #[test]
    fn certain_edge_and_treatment_gives_certain_exposure() {
        let s = star_sample(2, 1, |_| vec![]);
        let ep = build_edge_probabilities(
            &EdgeProbabilityModel::HomogeneousProb {
                rho_e: 1.0,
                rho_a: 1.0,
            },
            &s,
        )
        .unwrap();
        assert_eq!(exposure_prob_ego(&ep, 1.0), vec![1.0, 1.0]);
        assert_eq!(exposure_prob_alter(&ep, 1.0), vec![1.0, 1.0]);
        let prof = ExposureProfile::from_edge_probabilities(&ep, 1.0, false);
        assert!(prof.pi_a.iter().all(|&p| p < 1.0));
    }

    #[test]
    fn poisson_binomial_examples() {
        let (a, b, c) = poisson_binomial_tail(&[0.1, 0.2]);
        assert!(close(a, 0.72, 1e-15) && close(b, 0.26, 1e-15) && close(c, 0.02, 1e-15));
        let (a, b, c) = poisson_binomial_tail(&[0.1, 0.2, 0.3]);
        assert!(close(a, 0.504, 1e-15) && close(b, 0.398, 1e-15) && close(c, 0.098, 1e-15));
        assert_eq!(poisson_binomial_tail(&[0.5]), (0.5, 0.5, 0.0));
        assert_eq!(poisson_binomial_tail::<f64>(&[]), (1.0, 0.0, 0.0));
        let (a, b, c) = poisson_binomial_tail(&[1.0, 0.25]);
        assert_eq!((a, b, c), (0.0, 0.75, 0.25));
    }

    #[test]
    fn three_level_zero_count_matches_two_level() {
        let s = star_sample(6, 2, |k| vec![(k as f64 * 1.7).cos(), (k % 5) as f64]);
        let model = EdgeProbabilityModel::HeterogeneousProb {
            rho_e: 0.1,
            rho_a: 0.25,
            gamma_e: 1.0,
            gamma_a: 1.0,
            metric: DistanceMetric::Euclidean,
            standardize: true,
        };
        let ep = build_edge_probabilities(&model, &s).unwrap();
        let p = 0.4;
        let pi_a = exposure_prob_alter(&ep, p);
        for (t, pa) in exposure_probs_three_level(&ep, p).iter().zip(pi_a) {
            assert!(close(t[0], (1.0 - pa) / (1.0 - p), 1e-12));
            assert!(close(t[0] + t[1] + t[2], 1.0, 1e-12));
        }
    }

    #[test]
    fn model_json_round_trip() {
        let m: EdgeProbabilityModel<f64> = serde_json::from_str(
            r#"{"variant": "heterogeneous_count", "m_e": 150, "m_a": 100, "gamma_e": 1, "gamma_a": 1, "metric": "euclidean"}"#,
        )
        .unwrap();
        assert_eq!(m.distance(), Some((DistanceMetric::Euclidean, true)));
        let back: EdgeProbabilityModel<f64> =
            serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        let lp: EdgeProbabilityModel<f64> = serde_json::from_str(
            r#"{"variant": "heterogeneous_prob", "rho_e": 0.1, "rho_a": 0.1, "gamma_e": 1, "gamma_a": 1, "metric": {"lp": 3}, "standardize": false}"#,
        )
        .unwrap();
        assert_eq!(lp.distance(), Some((DistanceMetric::Lp(3.0), false)));
        assert!(serde_json::from_str::<EdgeProbabilityModel<f64>>(
            r#"{"variant": "homogeneous_prob", "rho_e": 0.1, "rho_a": 0.1, "m_e": 3}"#
        )
        .is_err());
    }
}
