//! Experiment harness: configuration, excitation-data collection, closed-loop
//! scenario execution, metrics, manifests, and report aggregation for the
//! simulated manipulator control stack.

pub mod collect;
pub mod config;
pub mod manifest;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod scenario;
