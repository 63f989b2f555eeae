//! Deterministic equivalents and central-limit variances for the output SNR
//! (and MSE) of diagonally loaded MVDR/LMMSE filters trained on a finite
//! number of spatially and temporally correlated snapshots, together with a
//! reproducible Monte Carlo engine to check them.
//!
//! The pipeline is:
//! [`model::canonicalize`] → [`asymptotics::predict`] for the theory, and
//! [`montecarlo::run_experiment`] → [`stats`] for the empirical side.

// `!(x > 0.0)` guards are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod config;
pub mod deteq;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod model;
pub mod montecarlo;
pub mod stats;

pub use asymptotics::{predict, AsymptoticPrediction, ModelPrediction};
pub use config::ExperimentConfig;
pub use metric::{MetricRegistry, PerformanceMetric};
pub use model::{canonicalize, CanonicalModel, Scenario, Training};
pub use montecarlo::{run_experiment, McConfig, McSamples};
