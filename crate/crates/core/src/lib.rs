//! Preferential Bayesian optimization with multiple latent objectives.
//!
//! The engine proposes queries of `q` designs, ingests per-objective winner
//! feedback, learns one preference Gaussian process per objective, and
//! explores the Pareto front with dueling scalarized Thompson sampling.

pub mod dm;
pub mod error;
pub mod finite_bayes;
pub mod metrics;
pub mod pareto;
pub mod policies;
pub mod rng;
pub mod runner;
pub mod scalarization;
pub mod surrogate;
pub mod testbed;
pub mod types;

pub use error::{Error, Result};
pub use types::{Design, DesignSpace, InteractionDataset, ObjectiveVector, Observation, Query, Record, Response};
