//! Bayesian finite Plackett-Luce mixtures for partially ranked (top-m) data.
//!
//! The crate covers the whole inference pipeline:
//!
//! - [`data`]: ragged CSV ingestion of top-m orderings and the summary
//!   statistics (top-choice counts, paired comparisons) used by diagnostics.
//! - [`model`]: Plackett-Luce and PL-mixture probabilities, modal orderings,
//!   simulation and censoring.
//! - [`em`]: MAP estimation by EM on the data-augmented posterior.
//! - [`gibbs`]: the conjugate Gibbs sampler over latent exponential times,
//!   component labels, supports and weights.
//! - [`relabel`]: pivotal reordering against label switching.
//! - [`criteria`]: DIC, BPIC, BICM and BIC model-selection criteria.
//! - [`gof`]: posterior predictive chi-square checks, unconditional and
//!   stratified by ordering length.
//! - [`simulation`]: the scenario/censoring simulation study harness.
//!
//! Item indices are 0-based everywhere in the API and 1-based in files.

pub mod criteria;
pub mod data;
pub mod em;
mod error;
pub mod gibbs;
pub mod gof;
mod math;
pub mod model;
pub mod prior;
pub mod relabel;
pub mod rng;
pub mod simulation;
pub mod trace;

pub use error::{Error, Result};

pub use data::{PartialOrdering, RankingDataset, SummaryStats};
pub use model::PLMixtureParams;
pub use prior::{PriorHyper, PriorSpec};
