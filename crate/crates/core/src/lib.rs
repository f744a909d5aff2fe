//! Leakage-safe benchmarking engine for predictive process mining.
//!
//! The pipeline runs event log parsing ([`eventlog`]), split assignment
//! ([`splitting`]), train-only fitting and sample generation ([`preprocessing`]),
//! prediction ([`predictors`], [`sampling`]) and evaluation ([`harness`],
//! [`metrics`]). [`experiment`] wires the stages together from a [`config`].

pub mod config;
pub mod eventlog;
pub mod experiment;
pub mod harness;
pub mod metrics;
pub mod predictors;
pub mod preprocessing;
pub mod sampling;
pub mod splitting;
