//! Emotion-conditioned backstory generation and evaluation.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`corpus`]: events, event chains, annotations and their line-delimited persistence.
//! - [`genpipe`]: prompt templates and the Baseline / PC / PCR generation chains.
//! - [`likelihood`]: sequence and continuation log-likelihoods (n-gram and remote).
//! - [`coherence`]: shuffle-test coherence scoring.
//! - [`emotion`]: zero-shot emotion distributions and prefix trajectories.
//! - [`textstats`]: tokenization, Jaccard diversity, leakage detection, length statistics.
//! - [`stats`]: Fleiss' kappa, best-chain curves, correlations, confusion matrices.
//!
//! Numeric routines are generic over [`scalar::Scalar`] (counting-style ratios,
//! which also run exactly over [`Rational`]) or [`scalar::Real`] (anything that
//! needs `exp`, `ln` or `sqrt`). The aliases below pin the common instantiations.

pub mod coherence;
pub mod corpus;
pub mod emotion;
pub mod error;
pub mod genpipe;
pub mod likelihood;
pub mod scalar;
pub mod stats;
pub mod tables;
pub mod textstats;

pub use corpus::{
    AnnotationRecord, BackstorySet, EmotionCategory, EventChain, EventRecord, Method,
};
pub use error::{Error, Result};

/// Exact rational scalar used for oracle-grade evaluation of counting statistics.
pub type Rational = num_rational::Ratio<i128>;

pub type EmotionDistributionF64 = emotion::EmotionDistribution<f64>;
pub type EmotionDistributionF32 = emotion::EmotionDistribution<f32>;
pub type EmotionTrajectoryF64 = emotion::EmotionTrajectory<f64>;
pub type CoherenceResultF64 = coherence::CoherenceResult<f64>;
pub type CorrelationF64 = stats::CorrelationResult<f64>;
pub type CorrelationF32 = stats::CorrelationResult<f32>;
pub type ClassScoresF64 = stats::ClassScores<f64>;
