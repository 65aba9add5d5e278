//! Worst-case publication bias bounds for meta-analysis.
//!
//! The crate fits the univariate random-effects model and the bivariate
//! Reitsma model by maximum likelihood, then bounds the bias of the pooled
//! estimate over every selection function that is monotone in a study's
//! (combined) variance, for a given marginal selection probability `p`.
//!
//! Module map:
//!
//! - [`study_data`]: CSV ingestion, continuity correction, logit transform.
//! - [`model_fit`]: ML fits with estimate covariance.
//! - [`sroc`]: SROC curve, SAUC, summary operating point, delta-method CI.
//! - [`bounds`]: Copas–Jackson bound and the simulation-based bounds.
//! - [`sensitivity`]: p-grid sweeps, replicate medians, report assembly.
//! - [`report`] and [`cli`]: file outputs, SVG plots and the `pubbound` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod linalg;
pub mod model_fit;
pub mod numeric;
pub mod optim;
pub mod quadrature;
pub mod report;
pub mod sensitivity;
pub mod sroc;
pub mod study_data;

pub use error::{Error, Result};
