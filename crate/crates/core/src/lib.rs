//! Semantic genetic programming classifier.
//!
//! Individuals are nodes of a shared DAG. Each node emits one output per
//! class, fitted by least squares against one-vs-rest targets, and evolution
//! proceeds one offspring at a time under a configurable selection scheme.

pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod evolution;
pub mod metrics;
pub mod nodes;
pub mod selection;
pub mod semantics;

pub use dataset::Dataset;
pub use ensemble::{train_ensemble, Combine, EnsembleModel};
pub use error::{Error, Result};
pub use evolution::{evolve, EvolveConfig, Model};
pub use selection::SchemeConfig;
