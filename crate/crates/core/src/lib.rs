//! Variational neural networks for tabular binary classification, with
//! epistemic/aleatoric uncertainty decomposition and fairness auditing.
//!
//! The crate covers the whole audit pipeline:
//!
//! - [`synthgen`]: seedable group-conditional mixture datasets.
//! - [`tabular`]: dataset model, CSV ingestion, group selection, scaling.
//! - [`bayesnet`]: variational classifier trained by Bayes-by-Backprop.
//! - [`ensemble`]: deep-ensemble alternative uncertainty backend.
//! - [`uncertainty`]: Monte-Carlo prediction sets and their decomposition.
//! - [`fairness`]: point-based and uncertainty-based group fairness ratios,
//!   k-NN individual consistency.
//! - [`metrics`]: reliability bins and expected calibration error.
//! - [`audit`]: configuration, end-to-end runs, sweeps and reports.

pub mod audit;
pub mod bayesnet;
pub mod checkpoint;
pub mod ensemble;
pub mod error;
pub mod fairness;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod synthgen;
pub mod tabular;
pub mod uncertainty;

pub use error::{Error, Result};
