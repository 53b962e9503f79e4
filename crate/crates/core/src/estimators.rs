//! Horvitz–Thompson estimators of the indirect (alter) and direct (ego)
//! effects, their contamination-corrected versions, variances and Wald
//! intervals.
//!
//! Every point estimator is a weighted mean of per-unit HT terms
//!
//! ```text
//! alter i:  r_i = F_i Y_i / p  -  (1 - F_i) Y_i / (1 - p)      F_i = Z_e(i)
//! ego i:    e_i = Z_i Y_i / p  -  (1 - Z_i) Y_i / (1 - p)
//! ```
//!
//! with weight one for the naive estimators and a per-unit weight derived
//! from an [`ExposureProfile`] for the corrected ones.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::diagnostics::Warning;
use crate::linalg::Matrix;
use crate::sample::EgocentricSample;
use crate::scalar::{CompensatedSum, Real};
use crate::sensmodel::ExposureProfile;

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Estimand {
    #[serde(rename = "IE")]
    Ie,
    #[serde(rename = "DE")]
    De,
    /// Indirect effect on the relative-risk scale.
    #[serde(rename = "IE_RR")]
    IeRr,
    /// Indirect effect under the three-level exposure mapping.
    #[serde(rename = "IE_3L")]
    Ie3L,
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Estimand::Ie => "IE",
            Estimand::De => "DE",
            Estimand::IeRr => "IE_RR",
            Estimand::Ie3L => "IE_3L",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Naive,
    Adjusted,
    Augmented,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Naive => "naive",
            Method::Adjusted => "adjusted",
            Method::Augmented => "augmented",
        })
    }
}

/// Point estimate with optional variance and Wald interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct EffectEstimate<T> {
    pub estimand: Estimand,
    pub method: Method,
    pub point: T,
    pub variance: Option<T>,
    pub ci_low: Option<T>,
    pub ci_high: Option<T>,
    pub level: f64,
    /// Sensitivity parameters and diagnostics the estimate was computed with.
    pub params: BTreeMap<String, f64>,
    pub warnings: Vec<Warning>,
}

impl<T: Real> EffectEstimate<T> {
    pub fn new(estimand: Estimand, method: Method, point: T, variance: Option<T>) -> Self {
        let mut est = Self {
            estimand,
            method,
            point,
            variance,
            ci_low: None,
            ci_high: None,
            level: DEFAULT_LEVEL,
            params: BTreeMap::new(),
            warnings: Vec::new(),
        };
        est.set_level(DEFAULT_LEVEL);
        est
    }

    /// Recomputes the interval at another confidence level.
    pub fn with_level(mut self, level: f64) -> Self {
        self.set_level(level);
        self
    }

    fn set_level(&mut self, level: f64) {
        self.level = level;
        if let Some(v) = self.variance {
            let (lo, hi) = wald_ci(self.point, v, level);
            self.ci_low = Some(lo);
            self.ci_high = Some(hi);
        }
    }

    pub fn with_param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn std_error(&self) -> Option<T> {
        self.variance.map(T::sqrt)
    }

    /// Whether the interval covers `truth`.
    pub fn covers(&self, truth: T) -> Option<bool> {
        Some(self.ci_low? <= truth && truth <= self.ci_high?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaSpec<T> {
    pub kappa: T,
}

impl<T: Real> KappaSpec<T> {
    pub fn new(kappa: T) -> Self {
        Self { kappa }
    }

    /// No effect modification by contamination.
    pub fn one() -> Self {
        Self::new(T::one())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSpec<T> {
    pub delta: T,
}

impl<T: Real> DeltaSpec<T> {
    pub fn new(delta: T) -> Self {
        Self { delta }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimError {
    #[error("sample has no alters")]
    NoAlters,
    #[error("sample has no egos")]
    NoEgos,
    #[error("profile does not match the sample ({0})")]
    ProfileShape(&'static str),
    #[error("alter {alter}: exposure probability {pi} >= 1")]
    CertainExposure { alter: usize, pi: f64 },
    #[error("ego {ego}: 1 + pi_e (kappa - 1) = 0 at kappa {kappa}")]
    KappaBoundary { ego: usize, kappa: f64 },
    #[error("non-finite sensitivity parameter {0}")]
    NonFinite(&'static str),
    #[error("alter {alter}: outcome {y} is not binary")]
    NonBinaryOutcome { alter: usize, y: f64 },
    #[error("relative-risk denominator is zero")]
    ZeroDenominator,
    #[error("profile has no three-level probabilities")]
    MissingThreeLevel,
    #[error("alter {alter}: pi*_0 + pi*_1 delta = {value} <= 0 at delta {delta}")]
    DegenerateDelta {
        alter: usize,
        delta: f64,
        value: f64,
    },
}

/// HT terms of the alters.
pub fn ie_terms<T: Real>(s: &EgocentricSample<T>) -> Vec<T> {
    let p = s.p_z();
    let z = s.ego_treatments();
    s.alter_ego()
        .iter()
        .zip(s.alter_outcomes())
        .map(|(&e, &y)| if z[e] { y / p } else { -y / (T::one() - p) })
        .collect()
}

/// HT terms of the egos.
pub fn de_terms<T: Real>(s: &EgocentricSample<T>) -> Vec<T> {
    let p = s.p_z();
    s.ego_treatments()
        .iter()
        .zip(s.ego_outcomes())
        .map(|(&z, &y)| if z { y / p } else { -y / (T::one() - p) })
        .collect()
}

pub(crate) fn mean<T: Real>(xs: impl IntoIterator<Item = T>, n: usize) -> T {
    xs.into_iter().collect::<CompensatedSum<T>>().value() / T::from_count(n)
}

/// Per-ego totals of alter terms (zero for egos without alters).
pub fn ego_totals<T: Real>(s: &EgocentricSample<T>, alter_terms: &[T]) -> Vec<T> {
    s.networks()
        .iter()
        .map(|net| {
            net.iter()
                .map(|&a| alter_terms[a])
                .collect::<CompensatedSum<T>>()
                .value()
        })
        .collect()
}

/// `sum_i (T_i - mean T)^2 / n_a^2` over the given ego-network totals.
pub fn cluster_variance<T: Real>(totals: &[T], n_a: usize) -> T {
    if totals.is_empty() || n_a == 0 {
        return T::zero();
    }
    let m = mean(totals.iter().copied(), totals.len());
    let ss = totals
        .iter()
        .map(|&t| (t - m) * (t - m))
        .collect::<CompensatedSum<T>>()
        .value();
    ss / T::from_count(n_a * n_a)
}

/// Cluster variance of `(1/n_a) sum_i w_i r_i`, clustering alters by ego.
pub fn variance_ie<T: Real>(s: &EgocentricSample<T>, weights: &[T]) -> T {
    let terms: Vec<T> = ie_terms(s)
        .iter()
        .zip(weights)
        .map(|(&r, &w)| w * r)
        .collect();
    cluster_variance(&ego_totals(s, &terms), s.n_a())
}

/// `sum_{i != j} xi_ij sd_i sd_j` with `xi_ij = sum_{k != i, j} rho_ik rho_jk`.
///
/// With a zero diagonal, `xi_ij = (P P^T)_ij` for `i != j`, so the double
/// sum collapses per shared neighbor `k` to
/// `(sum_i rho_ik sd_i)^2 - sum_i rho_ik^2 sd_i^2`, which is `O(n^2)`.
/// `sd` entries may be zero to restrict the pairs to a subset of egos.
pub fn shared_neighbor_sum<T: Real>(rho: &Matrix<T>, sd: &[T]) -> T {
    let n = rho.rows();
    let mut lin = vec![CompensatedSum::new(); n];
    let mut sq = vec![CompensatedSum::new(); n];
    for (i, &si) in sd.iter().enumerate() {
        if si == T::zero() {
            continue;
        }
        for (k, &r) in rho.row(i).iter().enumerate() {
            let t = r * si;
            lin[k].add(t);
            sq[k].add(t * t);
        }
    }
    lin.iter()
        .zip(&sq)
        .map(|(l, q)| l.value() * l.value() - q.value())
        .collect::<CompensatedSum<T>>()
        .value()
}

/// The shared-neighbor matrix `xi` as `P P^T` with the diagonal removed.
pub fn shared_neighbor_matrix<T: Real>(rho: &Matrix<T>) -> Matrix<T> {
    let n = rho.rows();
    Matrix::from_fn(n, n, |i, j| {
        if i == j {
            T::zero()
        } else {
            rho.row(i)
                .iter()
                .zip(rho.row(j))
                .map(|(&a, &b)| a * b)
                .sum()
        }
    })
}

/// Neyman variance of a mean of ego terms plus the conservative
/// covariance correction for ego–ego contamination.
///
/// `egos` lists the contributing egos (indices into `rho`), `values` their
/// weighted terms and `center` the estimate they are centered on.
pub fn de_variance_parts<T: Real>(
    egos: &[usize],
    values: &[T],
    center: T,
    rho: Option<&Matrix<T>>,
    p_z: T,
) -> (T, T) {
    let n = egos.len();
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let n2 = T::from_count(n * n);
    let neyman = values
        .iter()
        .map(|&v| (v - center) * (v - center))
        .collect::<CompensatedSum<T>>()
        .value()
        / n2;
    let cov = match rho {
        Some(rho) => {
            let mut sd = vec![T::zero(); rho.rows()];
            for (&e, &v) in egos.iter().zip(values) {
                sd[e] = (v - center).abs();
            }
            p_z * (T::one() - p_z) * shared_neighbor_sum(rho, &sd) / n2
        }
        None => T::zero(),
    };
    (neyman, cov)
}

/// Variance of `(1/n_e) sum_i w_i e_i`: Neyman term plus covariance
/// correction from the ego–ego edge probabilities (omitted when `None`).
pub fn variance_de<T: Real>(
    s: &EgocentricSample<T>,
    weights: &[T],
    ego_edges: Option<&Matrix<T>>,
    p_z: T,
) -> T {
    let values: Vec<T> = de_terms(s)
        .iter()
        .zip(weights)
        .map(|(&e, &w)| w * e)
        .collect();
    let center = mean(values.iter().copied(), values.len().max(1));
    let egos: Vec<usize> = (0..s.n_e()).collect();
    let (ney, cov) = de_variance_parts(&egos, &values, center, ego_edges, p_z);
    ney + cov
}

fn alter_warnings<T: Real>(s: &EgocentricSample<T>) -> Vec<Warning> {
    let z = s.ego_treatments();
    let exposed = s.alter_ego().iter().filter(|&&e| z[e]).count();
    let mut w = Vec::new();
    if exposed == 0 {
        w.push(Warning::EmptyStratum("exposed alters"));
    }
    if exposed == s.n_a() {
        w.push(Warning::EmptyStratum("unexposed alters"));
    }
    if s.n_e() == 1 {
        w.push(Warning::SingleCluster);
    }
    w
}

fn ego_warnings<T: Real>(s: &EgocentricSample<T>) -> Vec<Warning> {
    let treated = s.ego_treatments().iter().filter(|&&z| z).count();
    let mut w = Vec::new();
    if treated == 0 {
        w.push(Warning::EmptyStratum("treated egos"));
    }
    if treated == s.n_e() {
        w.push(Warning::EmptyStratum("control egos"));
    }
    w
}

fn weighted_ie<T: Real>(
    s: &EgocentricSample<T>,
    weights: &[T],
    estimand: Estimand,
    method: Method,
) -> EffectEstimate<T> {
    let terms: Vec<T> = ie_terms(s)
        .iter()
        .zip(weights)
        .map(|(&r, &w)| w * r)
        .collect();
    let point = mean(terms.iter().copied(), s.n_a());
    let var = cluster_variance(&ego_totals(s, &terms), s.n_a());
    let mut est = EffectEstimate::new(estimand, method, point, Some(var));
    est.warnings = alter_warnings(s);
    est
}

pub fn naive_ie<T: Real>(s: &EgocentricSample<T>) -> Result<EffectEstimate<T>, EstimError> {
    if s.n_a() == 0 {
        return Err(EstimError::NoAlters);
    }
    Ok(weighted_ie(
        s,
        &vec![T::one(); s.n_a()],
        Estimand::Ie,
        Method::Naive,
    ))
}

pub fn naive_de<T: Real>(s: &EgocentricSample<T>) -> Result<EffectEstimate<T>, EstimError> {
    if s.n_e() == 0 {
        return Err(EstimError::NoEgos);
    }
    let terms = de_terms(s);
    let point = mean(terms.iter().copied(), s.n_e());
    let egos: Vec<usize> = (0..s.n_e()).collect();
    let (ney, _) = de_variance_parts(&egos, &terms, point, None, s.p_z());
    let mut est = EffectEstimate::new(Estimand::De, Method::Naive, point, Some(ney));
    est.warnings = ego_warnings(s);
    Ok(est)
}

fn check_alters<T: Real>(
    s: &EgocentricSample<T>,
    prof: &ExposureProfile<T>,
) -> Result<(), EstimError> {
    if s.n_a() == 0 {
        return Err(EstimError::NoAlters);
    }
    if prof.pi_a.len() != s.n_a() {
        return Err(EstimError::ProfileShape("pi_a length"));
    }
    Ok(())
}

/// Two-level alter weights `(1 - p) / (1 - pi_a)`.
pub fn ie_weights<T: Real>(pi_a: &[T], p_z: T) -> Result<Vec<T>, EstimError> {
    pi_a.iter()
        .enumerate()
        .map(|(alter, &pi)| {
            if pi >= T::one() || !pi.is_finite() {
                Err(EstimError::CertainExposure {
                    alter,
                    pi: pi.as_f64(),
                })
            } else {
                Ok((T::one() - p_z) / (T::one() - pi))
            }
        })
        .collect()
}

/// Ego weights `1 / (1 + pi_e (kappa - 1))`.
pub fn de_weights<T: Real>(pi_e: &[T], kappa: T) -> Result<Vec<T>, EstimError> {
    if !kappa.is_finite() {
        return Err(EstimError::NonFinite("kappa"));
    }
    pi_e.iter()
        .enumerate()
        .map(|(ego, &pi)| {
            let d = T::one() + pi * (kappa - T::one());
            if d == T::zero() {
                Err(EstimError::KappaBoundary {
                    ego,
                    kappa: kappa.as_f64(),
                })
            } else {
                Ok(d.recip())
            }
        })
        .collect()
}

/// Contamination-corrected indirect effect.
pub fn adjusted_ie<T: Real>(
    s: &EgocentricSample<T>,
    prof: &ExposureProfile<T>,
) -> Result<EffectEstimate<T>, EstimError> {
    check_alters(s, prof)?;
    let w = ie_weights(&prof.pi_a, s.p_z())?;
    Ok(weighted_ie(s, &w, Estimand::Ie, Method::Adjusted))
}

/// Contamination-corrected direct effect with the covariance-corrected
/// variance.
pub fn adjusted_de<T: Real>(
    s: &EgocentricSample<T>,
    prof: &ExposureProfile<T>,
    k: KappaSpec<T>,
) -> Result<EffectEstimate<T>, EstimError> {
    if s.n_e() == 0 {
        return Err(EstimError::NoEgos);
    }
    if prof.pi_e.len() != s.n_e() {
        return Err(EstimError::ProfileShape("pi_e length"));
    }
    let w = de_weights(&prof.pi_e, k.kappa)?;
    let values: Vec<T> = de_terms(s).iter().zip(&w).map(|(&e, &w)| w * e).collect();
    let point = mean(values.iter().copied(), s.n_e());
    let egos: Vec<usize> = (0..s.n_e()).collect();
    let rho = prof.ego_edges.as_deref();
    let (ney, cov) = de_variance_parts(&egos, &values, point, rho, s.p_z());
    let mut est = EffectEstimate::new(Estimand::De, Method::Adjusted, point, Some(ney + cov))
        .with_param("kappa", k.kappa.as_f64());
    est.warnings = ego_warnings(s);
    if let Some(w) = kappa_warning(&prof.pi_e, k.kappa) {
        est.warnings.push(w);
    }
    if let Some(rho) = rho {
        let max_deg = (0..rho.rows())
            .map(|i| rho.row(i).iter().copied().sum::<T>())
            .fold(T::zero(), T::max);
        est.params
            .insert("max_expected_degree".into(), max_deg.as_f64());
    }
    Ok(est)
}

/// Warns when kappa is at or below `1 - 1/max(pi_e)`.
pub fn kappa_warning<T: Real>(pi_e: &[T], kappa: T) -> Option<Warning> {
    let max = pi_e.iter().copied().fold(T::zero(), T::max);
    if max <= T::zero() {
        return None;
    }
    let threshold = T::one() - max.recip();
    (kappa <= threshold).then(|| Warning::KappaSignFlip {
        kappa: kappa.as_f64(),
        threshold: threshold.as_f64(),
    })
}

/// Contamination-corrected relative risk of exposure for alters (binary
/// outcomes). Point estimate only.
pub fn adjusted_ie_rr<T: Real>(
    s: &EgocentricSample<T>,
    prof: &ExposureProfile<T>,
) -> Result<EffectEstimate<T>, EstimError> {
    check_alters(s, prof)?;
    let p = s.p_z();
    let z = s.ego_treatments();
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for (a, (&e, &y)) in s.alter_ego().iter().zip(s.alter_outcomes()).enumerate() {
        if y != T::zero() && y != T::one() {
            return Err(EstimError::NonBinaryOutcome {
                alter: a,
                y: y.as_f64(),
            });
        }
        let pi = prof.pi_a[a];
        if pi >= T::one() {
            return Err(EstimError::CertainExposure {
                alter: a,
                pi: pi.as_f64(),
            });
        }
        let q = T::one() - pi;
        if z[e] {
            num.add(y / p);
            den.add(-(pi - p) / q * y / p);
        } else {
            den.add((T::one() - p) / q * y / (T::one() - p));
        }
    }
    if den.value() == T::zero() {
        return Err(EstimError::ZeroDenominator);
    }
    let mut est = EffectEstimate::new(
        Estimand::IeRr,
        Method::Adjusted,
        num.value() / den.value(),
        None,
    );
    est.warnings = alter_warnings(s);
    Ok(est)
}

/// Contamination-corrected indirect effect under the three-level
/// exposure mapping.
pub fn adjusted_ie_three_level<T: Real>(
    s: &EgocentricSample<T>,
    prof: &ExposureProfile<T>,
    d: DeltaSpec<T>,
) -> Result<EffectEstimate<T>, EstimError> {
    if s.n_a() == 0 {
        return Err(EstimError::NoAlters);
    }
    let three = prof
        .three_level
        .as_ref()
        .ok_or(EstimError::MissingThreeLevel)?;
    if three.len() != s.n_a() {
        return Err(EstimError::ProfileShape("three-level length"));
    }
    if !d.delta.is_finite() {
        return Err(EstimError::NonFinite("delta"));
    }
    let w = three
        .iter()
        .enumerate()
        .map(|(alter, t)| {
            let v = t[0] + t[1] * d.delta;
            if v > T::zero() {
                Ok(v.recip())
            } else {
                Err(EstimError::DegenerateDelta {
                    alter,
                    delta: d.delta.as_f64(),
                    value: v.as_f64(),
                })
            }
        })
        .collect::<Result<Vec<T>, _>>()?;
    Ok(weighted_ie(s, &w, Estimand::Ie3L, Method::Adjusted).with_param("delta", d.delta.as_f64()))
}

/// First alter whose three-level weight denominator is nonpositive.
pub fn delta_warning<T: Real>(three: &[[T; 3]], delta: T) -> Option<Warning> {
    three
        .iter()
        .position(|t| t[0] + t[1] * delta <= T::zero())
        .map(|alter| Warning::DegenerateDelta {
            delta: delta.as_f64(),
            alter,
        })
}

/// Standard-normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided Wald interval.
pub fn wald_ci<T: Real>(point: T, variance: T, level: f64) -> (T, T) {
    let z = T::lit(normal_quantile(0.5 + level / 2.0));
    let half = z * variance.max(T::zero()).sqrt();
    (point - half, point + half)
}

/// Full potential-outcome table under the two-level mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomeTable<T> {
    /// Per ego `[Y(0,0), Y(0,1), Y(1,0), Y(1,1)]`, indexed by `(z, f)`.
    pub ego: Vec<[T; 4]>,
    /// Per alter `[Y(0,0), Y(0,1)]`.
    pub alter: Vec<[T; 2]>,
}

impl<T: Real> PotentialOutcomeTable<T> {
    pub fn ego_outcome(&self, i: usize, z: bool, f: bool) -> T {
        self.ego[i][2 * z as usize + f as usize]
    }

    pub fn alter_outcome(&self, i: usize, f: bool) -> T {
        self.alter[i][f as usize]
    }

    /// Mean alter effect of exposure.
    pub fn ie(&self) -> T {
        mean(
            self.alter.iter().map(|y| y[1] - y[0]),
            self.alter.len().max(1),
        )
    }

    /// Mean ego effect of treatment without exposure.
    pub fn de(&self) -> T {
        mean(self.ego.iter().map(|y| y[2] - y[0]), self.ego.len().max(1))
    }
}

/// Closed-form bias of the naive `(IE, DE)` estimators.
pub fn theoretical_naive_bias<T: Real>(
    pot: &PotentialOutcomeTable<T>,
    prof: &ExposureProfile<T>,
    p_z: T,
) -> (T, T) {
    let ie = mean(
        pot.alter
            .iter()
            .zip(&prof.pi_a)
            .map(|(y, &pi)| (p_z - pi) / (T::one() - p_z) * (y[1] - y[0])),
        pot.alter.len().max(1),
    );
    let de = mean(
        pot.ego
            .iter()
            .zip(&prof.pi_e)
            .map(|(y, &pi)| pi * ((y[3] - y[1]) - (y[2] - y[0]))),
        pot.ego.len().max(1),
    );
    (ie, de)
}
