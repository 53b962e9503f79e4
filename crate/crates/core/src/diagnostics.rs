//! Non-fatal conditions reported alongside results.

use std::fmt;

use serde::{Serialize, Serializer};

/// A warning attached to an estimate, a fitted model or a set of edge
/// probabilities. Warnings never abort a computation.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// A treatment/exposure stratum has no units.
    EmptyStratum(&'static str),
    /// Only one ego-network contributes; the cluster variance is zero.
    SingleCluster,
    /// Count-based edge probabilities above one were clamped.
    ClampedProbabilities {
        kind: &'static str,
        count: usize,
        lost_mass: f64,
        first_pair: (usize, usize),
    },
    /// Kappa lies at or below `1 - 1/max(pi_e)`; some weights change sign.
    KappaSignFlip { kappa: f64, threshold: f64 },
    /// `pi*_0 + pi*_1 * delta <= 0` for some alter.
    DegenerateDelta { delta: f64, alter: usize },
    /// Normal equations were singular; a small ridge penalty was added.
    RidgeFallback { lambda: f64 },
    /// IRLS did not converge or diverged; a linear model was fit instead.
    LogisticFallback { reason: String },
    /// Outcome model for a fold could not be fit; HT terms only.
    HtOnlyFold { fold: usize, reason: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::EmptyStratum(s) => write!(f, "empty stratum: {s}"),
            Warning::SingleCluster => {
                write!(f, "single ego-network: variance estimate is zero")
            }
            Warning::ClampedProbabilities {
                kind,
                count,
                lost_mass,
                first_pair,
            } => write!(
                f,
                "{count} {kind} edge probabilities clamped to 1 (lost expected edges {lost_mass:.6}, first pair {first_pair:?})"
            ),
            Warning::KappaSignFlip { kappa, threshold } => write!(
                f,
                "kappa {kappa} <= {threshold}: adjusted DE weights flip sign"
            ),
            Warning::DegenerateDelta { delta, alter } => write!(
                f,
                "delta {delta}: nonpositive three-level weight denominator at alter {alter}"
            ),
            Warning::RidgeFallback { lambda } => {
                write!(f, "rank-deficient design, ridge lambda {lambda:e}")
            }
            Warning::LogisticFallback { reason } => {
                write!(f, "logistic fit replaced by linear: {reason}")
            }
            Warning::HtOnlyFold { fold, reason } => {
                write!(f, "fold {fold}: no outcome model ({reason})")
            }
        }
    }
}

impl Serialize for Warning {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
