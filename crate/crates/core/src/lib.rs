//! Design-based estimation of direct and indirect effects in
//! egocentric-network randomized trials, with sensitivity analysis for
//! contamination through unobserved ego–ego and alter–ego edges.
//!
//! The estimation kernels are generic over the floating-point type
//! ([`Real`], implemented for `f32` and `f64`); the aliases below fix the
//! common choices. Orchestration (`analysis`, `sim`) works in `f64`.

pub mod analysis;
pub mod diagnostics;
pub mod estimators;
pub mod linalg;
pub mod outcome;
pub mod rng;
pub mod sample;
pub mod scalar;
pub mod sensmodel;
pub mod sim;

pub use diagnostics::Warning;
pub use scalar::Real;

pub type Sample = sample::EgocentricSample<f64>;
pub type SampleF32 = sample::EgocentricSample<f32>;
pub type EdgeModel = sensmodel::EdgeProbabilityModel<f64>;
pub type EdgeModelF32 = sensmodel::EdgeProbabilityModel<f32>;
pub type EdgeProbs = sensmodel::EdgeProbabilities<f64>;
pub type EdgeProbsF32 = sensmodel::EdgeProbabilities<f32>;
pub type Profile = sensmodel::ExposureProfile<f64>;
pub type ProfileF32 = sensmodel::ExposureProfile<f32>;
pub type Estimate = estimators::EffectEstimate<f64>;
pub type EstimateF32 = estimators::EffectEstimate<f32>;
pub type OutcomeTable = estimators::PotentialOutcomeTable<f64>;
