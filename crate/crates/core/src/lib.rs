//! Probabilistic reconciliation of hierarchical and temporal forecasts by
//! conditioning, with bottom-up importance sampling as the main sampler.
//!
//! Start from an [`hierarchy::AggregationStructure`], wrap the node-wise
//! forecasts in [`reconcile::BaseForecasts`] and call one of the routines
//! in [`reconcile`]. [`metrics`] scores the result and [`harness`] runs the
//! synthetic comparison experiments.

pub mod cli;
pub mod distributions;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod io;
pub mod metrics;
pub mod reconcile;
pub mod rng;

pub use error::{Error, Result};
