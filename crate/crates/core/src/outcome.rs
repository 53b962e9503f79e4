//! Outcome regression and the two-fold cross-fitted augmented estimators.
//!
//! Ego-networks are split into two folds. For each fold, outcome models
//! for egos (indicator `Z`) and alters (indicator `F`) are fit on the
//! other fold and used to predict both potential outcomes of the fold's
//! own units. The augmented estimators replace `Y` in the HT terms by the
//! residual `Y - mu(indicator)` and add back the predicted contrast.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diagnostics::Warning;
use crate::estimators::{
    cluster_variance, de_variance_parts, de_weights, ie_weights, kappa_warning, EffectEstimate,
    EstimError, Estimand, KappaSpec, Method,
};
use crate::linalg::{cholesky_solve, Matrix};
use crate::rng::{stream, Purpose};
use crate::sample::EgocentricSample;
use crate::scalar::{CompensatedSum, Real};
use crate::sensmodel::ExposureProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Linear,
    /// Predictions are probabilities.
    Logistic,
}

/// Which regression to fit and which features enter it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModelSpec {
    pub family: Family,
    /// Covariate names to use; `None` uses all of them.
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
    /// Append neighbor averages: for an ego the mean of its alters'
    /// covariates, for an alter its ego's covariates.
    #[serde(default)]
    pub neighbor_averages: bool,
}

impl Default for OutcomeModelSpec {
    fn default() -> Self {
        Self {
            family: Family::Linear,
            covariates: None,
            neighbor_averages: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{rows} rows cannot fit {params} parameters (need at least {params} + 2)")]
    TooFewRows { rows: usize, params: usize },
    #[error("logistic outcome {0} is not binary")]
    NonBinaryOutcome(f64),
    #[error("design matrix is singular even after ridge stabilization")]
    Singular,
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CrossFitError {
    #[error("cross-fitting needs at least two egos with alters, found {0}")]
    TooFewNetworks(usize),
    #[error("no valid split after {0} attempts")]
    NoValidSplit(usize),
    #[error("plan covers {got} egos, sample has {expected}")]
    PlanShape { expected: usize, got: usize },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Estimator(#[from] EstimError),
}

/// One regression row.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignRow<T> {
    pub features: Vec<T>,
    /// Treatment (egos) or observed exposure (alters).
    pub indicator: bool,
    pub outcome: T,
}

/// Fitted regression on `[1, indicator, features...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel<T> {
    pub family: Family,
    pub coef: Vec<T>,
    pub warnings: Vec<Warning>,
}

impl<T: Real> FittedModel<T> {
    /// Predicted mean at the given indicator level.
    pub fn predict(&self, indicator: bool, features: &[T]) -> T {
        let eta = self.coef[0]
            + if indicator { self.coef[1] } else { T::zero() }
            + self.coef[2..]
                .iter()
                .zip(features)
                .map(|(&b, &x)| b * x)
                .sum::<T>();
        match self.family {
            Family::Linear => eta,
            Family::Logistic => sigmoid(eta),
        }
    }

    /// Predictions at indicator 0 and 1.
    pub fn predict_both(&self, features: &[T]) -> [T; 2] {
        [self.predict(false, features), self.predict(true, features)]
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

fn design_vector<T: Real>(row: &DesignRow<T>) -> Vec<T> {
    let mut x = Vec::with_capacity(row.features.len() + 2);
    x.push(T::one());
    x.push(if row.indicator { T::one() } else { T::zero() });
    x.extend_from_slice(&row.features);
    x
}

/// Solves weighted normal equations `X' W X b = X' W y`, adding a small
/// ridge when `X' W X` is not numerically positive definite.
fn weighted_least_squares<T: Real>(
    xs: &[Vec<T>],
    weights: &[T],
    ys: &[T],
    warnings: &mut Vec<Warning>,
) -> Result<Vec<T>, FitError> {
    let p = xs[0].len();
    let mut xtx = Matrix::zeros(p, p);
    let mut xty = vec![T::zero(); p];
    for ((x, &w), &y) in xs.iter().zip(weights).zip(ys) {
        for i in 0..p {
            xty[i] += w * x[i] * y;
            for j in 0..=i {
                let v = xtx.get(i, j) + w * x[i] * x[j];
                xtx.set(i, j, v);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            xtx.set(j, i, xtx.get(i, j));
        }
    }
    if let Some(b) = cholesky_solve(&xtx, &xty) {
        return Ok(b);
    }
    let trace: T = (0..p).map(|i| xtx.get(i, i)).sum();
    let lambda = T::lit(1e-8) * trace / T::from_count(p);
    for i in 0..p {
        xtx.set(i, i, xtx.get(i, i) + lambda);
    }
    let b = cholesky_solve(&xtx, &xty).ok_or(FitError::Singular)?;
    warnings.push(Warning::RidgeFallback {
        lambda: lambda.as_f64(),
    });
    Ok(b)
}

/// Fits a linear (OLS) or logistic (IRLS) regression of the outcome on
/// an intercept, the indicator and the features.
///
/// A logistic fit whose coefficients diverge (separation) or that does
/// not converge in 50 iterations is replaced by a linear fit, with a
/// warning.
pub fn fit_outcome_model<T: Real>(
    family: Family,
    rows: &[DesignRow<T>],
) -> Result<FittedModel<T>, FitError> {
    let params = rows.first().map_or(2, |r| r.features.len() + 2);
    if rows.len() < params + 2 {
        return Err(FitError::TooFewRows {
            rows: rows.len(),
            params,
        });
    }
    let xs: Vec<Vec<T>> = rows.iter().map(design_vector).collect();
    let ys: Vec<T> = rows.iter().map(|r| r.outcome).collect();
    let mut warnings = Vec::new();
    if family == Family::Logistic {
        if let Some(y) = ys.iter().find(|&&y| y != T::zero() && y != T::one()) {
            return Err(FitError::NonBinaryOutcome(y.as_f64()));
        }
        match irls(&xs, &ys, &mut warnings) {
            Ok(coef) => {
                return Ok(FittedModel {
                    family,
                    coef,
                    warnings,
                })
            }
            Err(reason) => warnings.push(Warning::LogisticFallback { reason }),
        }
    }
    let ones = vec![T::one(); xs.len()];
    let coef = weighted_least_squares(&xs, &ones, &ys, &mut warnings)?;
    Ok(FittedModel {
        family: Family::Linear,
        coef,
        warnings,
    })
}

fn irls<T: Real>(xs: &[Vec<T>], ys: &[T], warnings: &mut Vec<Warning>) -> Result<Vec<T>, String> {
    let p = xs[0].len();
    let mut beta = vec![T::zero(); p];
    let tol = T::lit(1e-8);
    let limit = T::lit(1e3);
    // keep IRLS weights away from zero so the Hessian stays invertible
    let floor = T::lit(1e-10);
    for _ in 0..50 {
        let mu: Vec<T> = xs
            .iter()
            .map(|x| sigmoid(x.iter().zip(&beta).map(|(&a, &b)| a * b).sum::<T>()))
            .collect();
        let mut grad = vec![T::zero(); p];
        for ((x, &m), &y) in xs.iter().zip(&mu).zip(ys) {
            for (g, &xi) in grad.iter_mut().zip(x) {
                *g += xi * (y - m);
            }
        }
        let norm = grad.iter().map(|&g| g * g).sum::<T>().sqrt();
        if norm < tol {
            // a vanishing gradient with every fitted probability at 0 or 1
            // means the data are separated and the optimum is at infinity
            let perfect = mu
                .iter()
                .zip(ys)
                .all(|(&m, &y)| (y - m).abs() < T::lit(1e-6));
            if perfect {
                return Err("fitted probabilities all 0 or 1 (separation)".into());
            }
            return Ok(beta);
        }
        // Newton step as a weighted least-squares solve for the increment
        let w: Vec<T> = mu
            .iter()
            .map(|&m| (m * (T::one() - m)).max(floor))
            .collect();
        let z: Vec<T> = mu
            .iter()
            .zip(ys)
            .zip(&w)
            .map(|((&m, &y), &w)| (y - m) / w)
            .collect();
        let step = weighted_least_squares(xs, &w, &z, warnings).map_err(|e| e.to_string())?;
        for (b, s) in beta.iter_mut().zip(step) {
            *b += s;
        }
        let bn = beta.iter().map(|&b| b * b).sum::<T>().sqrt();
        if !bn.is_finite() || bn > limit {
            return Err(format!(
                "coefficient norm {:.3e} exceeds 1e3 (separation)",
                bn.as_f64()
            ));
        }
    }
    Err("IRLS did not converge in 50 iterations".into())
}

/// Fold membership per ego-network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossFitPlan {
    /// Fold (0 or 1) of each ego, by ego position.
    pub fold: Vec<u8>,
    pub seed: u64,
}

impl CrossFitPlan {
    pub fn egos_in(&self, q: u8) -> Vec<usize> {
        (0..self.fold.len())
            .filter(|&e| self.fold[e] == q)
            .collect()
    }

    /// Same split with the fold labels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            fold: self.fold.iter().map(|&f| 1 - f).collect(),
            seed: self.seed,
        }
    }
}

const MAX_SPLIT_ATTEMPTS: usize = 1000;

/// Assigns each ego-network to a fold by a fair coin, redrawing until both
/// folds hold at least one ego and one alter.
pub fn make_crossfit_plan<T: Real>(
    s: &EgocentricSample<T>,
    seed: u64,
) -> Result<CrossFitPlan, CrossFitError> {
    let with_alters = s.networks().iter().filter(|n| !n.is_empty()).count();
    if with_alters < 2 {
        return Err(CrossFitError::TooFewNetworks(with_alters));
    }
    for attempt in 0..MAX_SPLIT_ATTEMPTS {
        let mut rng = stream(seed, Purpose::CrossFit, attempt as u64);
        let fold: Vec<u8> = (0..s.n_e()).map(|_| rng.random_bool(0.5) as u8).collect();
        let alters = |q: u8| {
            (0..s.n_e())
                .filter(|&e| fold[e] == q)
                .map(|e| s.network(e).len())
                .sum::<usize>()
        };
        if alters(0) > 0 && alters(1) > 0 {
            return Ok(CrossFitPlan { fold, seed });
        }
    }
    Err(CrossFitError::NoValidSplit(MAX_SPLIT_ATTEMPTS))
}

/// Resolves the covariate columns a spec selects.
pub fn covariate_columns<T: Real>(
    spec: &OutcomeModelSpec,
    s: &EgocentricSample<T>,
) -> Result<Vec<usize>, FitError> {
    match &spec.covariates {
        None => Ok((0..s.covariate_dim()).collect()),
        Some(names) => names
            .iter()
            .map(|n| {
                s.covariate_names()
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| FitError::UnknownCovariate(n.clone()))
            })
            .collect(),
    }
}

fn select<'a, T: Real>(x: &'a [T], cols: &'a [usize]) -> impl Iterator<Item = T> + 'a {
    cols.iter().map(move |&c| x[c])
}

/// Feature vectors of egos and alters under `spec`.
pub fn unit_features<T: Real>(
    spec: &OutcomeModelSpec,
    s: &EgocentricSample<T>,
) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>), FitError> {
    let cols = covariate_columns(spec, s)?;
    let ego: Vec<Vec<T>> = (0..s.n_e())
        .map(|e| {
            let mut f: Vec<T> = select(s.ego_covariates(e), &cols).collect();
            if spec.neighbor_averages {
                let net = s.network(e);
                for &c in &cols {
                    let avg = if net.is_empty() {
                        T::zero()
                    } else {
                        net.iter().map(|&a| s.alter_covariates(a)[c]).sum::<T>()
                            / T::from_count(net.len())
                    };
                    f.push(avg);
                }
            }
            f
        })
        .collect();
    let alter: Vec<Vec<T>> = (0..s.n_a())
        .map(|a| {
            let mut f: Vec<T> = select(s.alter_covariates(a), &cols).collect();
            if spec.neighbor_averages {
                f.extend(select(s.ego_covariates(s.alter_ego()[a]), &cols));
            }
            f
        })
        .collect();
    Ok((ego, alter))
}

/// Cross-fitted predictions `[mu(0), mu(1)]` for every unit. They do not
/// depend on sensitivity parameters, so one set serves a whole GSA or PBA.
#[derive(Debug, Clone)]
pub struct CrossFitPredictions<T> {
    pub plan: CrossFitPlan,
    pub mu_e: Vec<[T; 2]>,
    pub mu_a: Vec<[T; 2]>,
    pub warnings: Vec<Warning>,
}

impl<T: Real> CrossFitPredictions<T> {
    /// Fits the fold models and predicts on the held-out fold.
    pub fn fit(
        s: &EgocentricSample<T>,
        spec: &OutcomeModelSpec,
        plan: &CrossFitPlan,
    ) -> Result<Self, CrossFitError> {
        if plan.fold.len() != s.n_e() {
            return Err(CrossFitError::PlanShape {
                expected: s.n_e(),
                got: plan.fold.len(),
            });
        }
        let (fe, fa) = unit_features(spec, s)?;
        let z = s.ego_treatments();
        let fold_a: Vec<u8> = s.alter_ego().iter().map(|&e| plan.fold[e]).collect();
        let mut mu_e = vec![[T::zero(); 2]; s.n_e()];
        let mut mu_a = vec![[T::zero(); 2]; s.n_a()];
        let mut warnings = Vec::new();
        for q in 0..2u8 {
            let train = 1 - q;
            let ego_rows: Vec<DesignRow<T>> = (0..s.n_e())
                .filter(|&e| plan.fold[e] == train)
                .map(|e| DesignRow {
                    features: fe[e].clone(),
                    indicator: z[e],
                    outcome: s.ego_outcomes()[e],
                })
                .collect();
            let alter_rows: Vec<DesignRow<T>> = (0..s.n_a())
                .filter(|&a| fold_a[a] == train)
                .map(|a| DesignRow {
                    features: fa[a].clone(),
                    indicator: z[s.alter_ego()[a]],
                    outcome: s.alter_outcomes()[a],
                })
                .collect();
            if let Some(m) = fit_fold(spec.family, &ego_rows, q, "ego", &mut warnings) {
                for e in (0..s.n_e()).filter(|&e| plan.fold[e] == q) {
                    mu_e[e] = m.predict_both(&fe[e]);
                }
            }
            if let Some(m) = fit_fold(spec.family, &alter_rows, q, "alter", &mut warnings) {
                for a in (0..s.n_a()).filter(|&a| fold_a[a] == q) {
                    mu_a[a] = m.predict_both(&fa[a]);
                }
            }
        }
        Ok(Self {
            plan: plan.clone(),
            mu_e,
            mu_a,
            warnings,
        })
    }

    /// All-zero predictions: the augmented estimators reduce to fold-wise
    /// HT estimators.
    pub fn zeros(s: &EgocentricSample<T>, plan: &CrossFitPlan) -> Self {
        Self {
            plan: plan.clone(),
            mu_e: vec![[T::zero(); 2]; s.n_e()],
            mu_a: vec![[T::zero(); 2]; s.n_a()],
            warnings: Vec::new(),
        }
    }
}

fn fit_fold<T: Real>(
    family: Family,
    rows: &[DesignRow<T>],
    fold: u8,
    role: &str,
    warnings: &mut Vec<Warning>,
) -> Option<FittedModel<T>> {
    let treated = rows.iter().filter(|r| r.indicator).count();
    let reason = if treated == 0 || treated == rows.len() {
        format!("{role} training data lacks one indicator level")
    } else {
        match fit_outcome_model(family, rows) {
            Ok(m) => {
                warnings.extend(m.warnings.iter().cloned());
                return Some(m);
            }
            Err(e) => format!("{role} model: {e}"),
        }
    };
    warnings.push(Warning::HtOnlyFold {
        fold: fold as usize,
        reason,
    });
    None
}

/// Fits the fold models, then computes the augmented IE and DE.
pub fn augmented_estimates<T: Real>(
    s: &EgocentricSample<T>,
    prof: &ExposureProfile<T>,
    k: KappaSpec<T>,
    spec: &OutcomeModelSpec,
    plan: &CrossFitPlan,
) -> Result<(EffectEstimate<T>, EffectEstimate<T>), CrossFitError> {
    let preds = CrossFitPredictions::fit(s, spec, plan)?;
    augmented_estimates_with(s, prof, k, &preds)
}

/// Augmented bias-corrected IE and DE from precomputed predictions.
pub fn augmented_estimates_with<T: Real>(
    s: &EgocentricSample<T>,
    prof: &ExposureProfile<T>,
    k: KappaSpec<T>,
    preds: &CrossFitPredictions<T>,
) -> Result<(EffectEstimate<T>, EffectEstimate<T>), CrossFitError> {
    let plan = &preds.plan;
    if plan.fold.len() != s.n_e() {
        return Err(CrossFitError::PlanShape {
            expected: s.n_e(),
            got: plan.fold.len(),
        });
    }
    if s.n_a() == 0 {
        return Err(EstimError::NoAlters.into());
    }
    if prof.pi_a.len() != s.n_a() || prof.pi_e.len() != s.n_e() {
        return Err(EstimError::ProfileShape("profile length").into());
    }
    let p = s.p_z();
    let q1 = T::one() - p;
    let z = s.ego_treatments();
    let (n_a, n_e) = (T::from_count(s.n_a()), T::from_count(s.n_e()));
    let residual = |y: T, mu: [T; 2], ind: bool| {
        if ind {
            (y - mu[1]) / p
        } else {
            -(y - mu[0]) / q1
        }
    };

    // alters
    let wa = ie_weights(&prof.pi_a, p)?;
    let resid_a: Vec<T> = (0..s.n_a())
        .map(|a| wa[a] * residual(s.alter_outcomes()[a], preds.mu_a[a], z[s.alter_ego()[a]]))
        .collect();
    let ie_point = (0..s.n_a())
        .map(|a| resid_a[a] + wa[a] * (preds.mu_a[a][1] - preds.mu_a[a][0]))
        .collect::<CompensatedSum<T>>()
        .value()
        / n_a;
    let mut ie_var = T::zero();
    for q in 0..2u8 {
        let egos = plan.egos_in(q);
        let n_aq: usize = egos.iter().map(|&e| s.network(e).len()).sum();
        if n_aq == 0 {
            continue;
        }
        let totals: Vec<T> = egos
            .iter()
            .map(|&e| s.network(e).iter().map(|&a| resid_a[a]).sum::<T>())
            .collect();
        let share = T::from_count(n_aq) / n_a;
        ie_var += share * share * cluster_variance(&totals, n_aq);
    }

    // egos
    let we = de_weights(&prof.pi_e, k.kappa)?;
    let resid_e: Vec<T> = (0..s.n_e())
        .map(|e| we[e] * residual(s.ego_outcomes()[e], preds.mu_e[e], z[e]))
        .collect();
    let de_point = (0..s.n_e())
        .map(|e| resid_e[e] + we[e] * (preds.mu_e[e][1] - preds.mu_e[e][0]))
        .collect::<CompensatedSum<T>>()
        .value()
        / n_e;
    let rho = prof.ego_edges.as_deref();
    let mut de_var = T::zero();
    for q in 0..2u8 {
        let egos = plan.egos_in(q);
        if egos.is_empty() {
            continue;
        }
        let vals: Vec<T> = egos.iter().map(|&e| resid_e[e]).collect();
        let center = vals.iter().copied().sum::<T>() / T::from_count(egos.len());
        let sub =
            rho.map(|r| Matrix::from_fn(egos.len(), egos.len(), |i, j| r.get(egos[i], egos[j])));
        let local: Vec<usize> = (0..egos.len()).collect();
        let (ney, cov) = de_variance_parts(&local, &vals, center, sub.as_ref(), p);
        let share = T::from_count(egos.len()) / n_e;
        de_var += share * share * (ney + cov);
    }

    let mut ie = EffectEstimate::new(Estimand::Ie, Method::Augmented, ie_point, Some(ie_var));
    let mut de = EffectEstimate::new(Estimand::De, Method::Augmented, de_point, Some(de_var))
        .with_param("kappa", k.kappa.as_f64());
    ie.warnings = preds.warnings.clone();
    de.warnings = preds.warnings.clone();
    if let Some(w) = kappa_warning(&prof.pi_e, k.kappa) {
        de.warnings.push(w);
    }
    let seed = plan.seed as f64;
    ie.params = BTreeMap::from([("crossfit_seed".to_string(), seed)]);
    de.params.insert("crossfit_seed".into(), seed);
    Ok((ie, de))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{adjusted_de, adjusted_ie};
    use crate::sample::Unit;
    use rand::SeedableRng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn row(x: f64, ind: bool, y: f64) -> DesignRow<f64> {
        DesignRow {
            features: vec![x],
            indicator: ind,
            outcome: y,
        }
    }

    #[test]
    fn linear_matches_normal_equations() {
        let rows = vec![
            row(1.0, false, 1.0),
            row(2.0, true, 4.5),
            row(3.0, false, 2.5),
            row(4.0, true, 7.0),
            row(5.0, false, 5.5),
        ];
        // normal equations X'X b = X'y for columns [1, ind, x], solved by hand:
        // X'X = [[5,2,15],[2,2,6],[15,6,55]], X'y = [20.5, 11.5, 73.0]
        let m = fit_outcome_model(Family::Linear, &rows).unwrap();
        let xtx = [[5.0, 2.0, 15.0], [2.0, 2.0, 6.0], [15.0, 6.0, 55.0]];
        let xty = [20.5, 11.5, 73.0];
        for i in 0..3 {
            let lhs: f64 = (0..3).map(|j| xtx[i][j] * m.coef[j]).sum();
            assert!(close(lhs, xty[i], 1e-10), "{lhs} vs {}", xty[i]);
        }
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn collinear_design_uses_ridge() {
        let rows: Vec<DesignRow<f64>> = (0..6)
            .map(|i| DesignRow {
                features: vec![i as f64, 2.0 * i as f64],
                indicator: i % 2 == 0,
                outcome: i as f64,
            })
            .collect();
        let m = fit_outcome_model(Family::Linear, &rows).unwrap();
        assert!(matches!(m.warnings[..], [Warning::RidgeFallback { .. }]));
        for r in &rows {
            assert!(close(m.predict(r.indicator, &r.features), r.outcome, 1e-5));
        }
    }

    #[test]
    fn logistic_symmetric_data_has_zero_intercept() {
        let mut rows = Vec::new();
        for x in [-2.0, -1.0, 1.0, 2.0] {
            for ind in [false, true] {
                rows.push(row(x, ind, 1.0));
                rows.push(row(x, ind, 0.0));
                rows.push(row(x, ind, (x > 0.0) as u8 as f64));
            }
        }
        let m = fit_outcome_model(Family::Logistic, &rows).unwrap();
        assert_eq!(m.family, Family::Logistic);
        let p0 = m.predict(false, &[0.0]);
        assert!(m.coef[1].abs() < 1e-10);
        assert!(close(p0, 0.5, 1e-10), "{p0}");
        assert!(m.coef[2] > 0.0);
    }

    #[test]
    fn logistic_separation_falls_back_to_linear() {
        let rows: Vec<DesignRow<f64>> = (0..10)
            .map(|i| row(i as f64, i % 2 == 1, (i >= 5) as u8 as f64))
            .collect();
        let m = fit_outcome_model(Family::Logistic, &rows).unwrap();
        assert_eq!(m.family, Family::Linear);
        assert!(m
            .warnings
            .iter()
            .any(|w| matches!(w, Warning::LogisticFallback { .. })));
        assert!(matches!(
            fit_outcome_model(Family::Logistic, &vec![row(0.0, true, 2.0); 6]),
            Err(FitError::NonBinaryOutcome(_))
        ));
        assert!(matches!(
            fit_outcome_model(Family::Linear, &rows[..4]),
            Err(FitError::TooFewRows { .. })
        ));
    }

    fn random_sample(n_e: usize, seed: u64) -> EgocentricSample<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut units = Vec::new();
        for e in 0..n_e {
            let x: f64 = rng.random();
            let z = rng.random_bool(0.5);
            units.push(Unit::ego(
                format!("e{e}"),
                z,
                1.0 + 2.0 * z as u8 as f64 + x,
                vec![x],
            ));
            for a in 0..rng.random_range(1..4) {
                let xa: f64 = rng.random();
                let y = 0.5 + 1.5 * z as u8 as f64 - xa + rng.random::<f64>() * 0.1;
                units.push(Unit::alter(
                    format!("a{e}.{a}"),
                    format!("e{e}"),
                    y,
                    vec![xa],
                ));
            }
        }
        EgocentricSample::from_units(units, 0.5).unwrap()
    }

    #[test]
    fn plan_is_seeded_and_balanced() {
        let s = random_sample(12, 1);
        assert_eq!(
            make_crossfit_plan(&s, 9).unwrap(),
            make_crossfit_plan(&s, 9).unwrap()
        );
        let seeds = 10_000;
        let total: usize = (0..seeds)
            .map(|seed| make_crossfit_plan(&s, seed).unwrap().egos_in(1).len())
            .sum();
        let mean = total as f64 / seeds as f64;
        let se = (12.0 * 0.25 / seeds as f64).sqrt();
        assert!((mean - 6.0).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn two_egos_split_one_per_fold() {
        let s = random_sample(2, 4);
        let plan = make_crossfit_plan(&s, 0).unwrap();
        assert_eq!(plan.egos_in(0).len(), 1);
        let units = vec![
            Unit::ego("e0", true, 0.0, vec![]),
            Unit::ego("e1", false, 0.0, vec![]),
            Unit::alter("a", "e0", 0.0, vec![]),
        ];
        let lopsided = EgocentricSample::from_units(units, 0.5).unwrap();
        assert_eq!(
            make_crossfit_plan(&lopsided, 0),
            Err(CrossFitError::TooFewNetworks(1))
        );
    }

    #[test]
    fn zero_models_reproduce_adjusted_points() {
        let s = random_sample(20, 2);
        let plan = make_crossfit_plan(&s, 3).unwrap();
        let mut prof = ExposureProfile::homogeneous(20, s.n_a(), 0.2, 0.6);
        prof.pi_e[3] = 0.4;
        let k = KappaSpec::new(1.7);
        let (ie, de) =
            augmented_estimates_with(&s, &prof, k, &CrossFitPredictions::zeros(&s, &plan)).unwrap();
        assert!(close(
            ie.point,
            adjusted_ie(&s, &prof).unwrap().point,
            1e-12
        ));
        assert!(close(
            de.point,
            adjusted_de(&s, &prof, k).unwrap().point,
            1e-12
        ));
    }

    #[test]
    fn perfect_model_has_zero_variance() {
        let mut units = Vec::new();
        for e in 0..10 {
            let x = e as f64 * 0.37 % 1.0;
            let z = e % 3 == 0;
            units.push(Unit::ego(
                format!("e{e}"),
                z,
                1.0 + 2.0 * z as u8 as f64 - x,
                vec![x],
            ));
            for a in 0..2 {
                let xa = (e * 7 + a) as f64 * 0.13 % 1.0;
                units.push(Unit::alter(
                    format!("a{e}.{a}"),
                    format!("e{e}"),
                    -1.0 + 3.0 * z as u8 as f64 + 2.0 * xa,
                    vec![xa],
                ));
            }
        }
        let s = EgocentricSample::from_units(units, 0.5).unwrap();
        let plan = CrossFitPlan {
            fold: (0..10).map(|e| (e % 2) as u8).collect(),
            seed: 0,
        };
        let prof = ExposureProfile::homogeneous(10, 20, 0.0, 0.5);
        let (ie, de) = augmented_estimates(
            &s,
            &prof,
            KappaSpec::one(),
            &OutcomeModelSpec::default(),
            &plan,
        )
        .unwrap();
        assert!(ie.variance.unwrap() < 1e-20);
        assert!(de.variance.unwrap() < 1e-20);
        assert!(close(ie.point, 3.0, 1e-10) && close(de.point, 2.0, 1e-10));
    }

    #[test]
    fn fold_labels_are_exchangeable() {
        let s = random_sample(30, 5);
        let plan = make_crossfit_plan(&s, 11).unwrap();
        let prof = ExposureProfile::homogeneous(30, s.n_a(), 0.1, 0.55);
        let spec = OutcomeModelSpec {
            neighbor_averages: true,
            ..Default::default()
        };
        let a = augmented_estimates(&s, &prof, KappaSpec::new(1.5), &spec, &plan).unwrap();
        let b =
            augmented_estimates(&s, &prof, KappaSpec::new(1.5), &spec, &plan.swapped()).unwrap();
        for (x, y) in [(&a.0, &b.0), (&a.1, &b.1)] {
            assert!(close(x.point, y.point, 1e-12));
            assert!(close(x.variance.unwrap(), y.variance.unwrap(), 1e-12));
        }
    }

    #[test]
    fn degenerate_fold_falls_back_to_ht() {
        let mut units = Vec::new();
        for e in 0..6 {
            // fold 1 (odd egos) is entirely treated
            let z = e % 2 == 1 || e == 0;
            units.push(Unit::ego(format!("e{e}"), z, e as f64, vec![e as f64]));
            units.push(Unit::alter(
                format!("a{e}"),
                format!("e{e}"),
                1.0,
                vec![0.5 * e as f64],
            ));
        }
        let s = EgocentricSample::from_units(units, 0.5).unwrap();
        let plan = CrossFitPlan {
            fold: (0..6).map(|e| (e % 2) as u8).collect(),
            seed: 0,
        };
        let preds = CrossFitPredictions::fit(&s, &OutcomeModelSpec::default(), &plan).unwrap();
        assert!(preds
            .warnings
            .iter()
            .any(|w| matches!(w, Warning::HtOnlyFold { fold: 0, .. })));
        assert_eq!(preds.mu_e[0], [0.0, 0.0]);
    }

    #[test]
    fn spec_json() {
        let spec: OutcomeModelSpec = serde_json::from_str(
            r#"{"family": "logistic", "covariates": ["x_age"], "neighbor_averages": true}"#,
        )
        .unwrap();
        assert_eq!(spec.family, Family::Logistic);
        assert!(
            serde_json::from_str::<OutcomeModelSpec>(r#"{"family": "linear", "extra": 1}"#)
                .is_err()
        );
    }
}
