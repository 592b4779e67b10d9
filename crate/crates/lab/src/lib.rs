//! Experiment runner for the `mfl-core` solvers: TOML-configured pipelines
//! writing CSV, SVG and JSON manifests, plus the acceptance experiments and
//! finite-difference checks used by the test suite.

pub mod cli;
pub mod config;
pub mod criteria;
pub mod error;
pub mod fdcheck;
pub mod pipelines;
pub mod report;
pub mod svg;
