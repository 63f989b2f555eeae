//! Performance metrics of the loaded filter, each a smooth function of the
//! realized pair `(a, b)` with its own first-order center and CLT variance.
//!
//! Metrics are looked up by name through [`MetricRegistry`], which is how the
//! CLI maps the config's `mode` field to an implementation.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::asymptotics::{AsymptoticPrediction, Coefficients};
use crate::model::Training;
use crate::montecarlo::{self, McError};

pub trait PerformanceMetric: Send + Sync {
    fn name(&self) -> &'static str;

    /// Training covariance the data must be drawn with.
    fn training(&self) -> Training;

    fn realized(&self, a: f64, b: f64) -> Result<f64, McError>;

    /// Deterministic equivalent of the metric.
    fn center(&self, p: &AsymptoticPrediction) -> f64;

    /// Linearization coefficients with respect to `(a, b)`.
    fn coefficients(&self, p: &AsymptoticPrediction) -> Coefficients;

    /// Asymptotic variance of `√N (metric − center)`.
    fn variance(&self, p: &AsymptoticPrediction) -> f64;

    /// Second derivatives `[f_aa, f_ab, f_bb]` of the metric as a function
    /// of `(a, b)`.
    fn hessian(&self, a: f64, b: f64) -> [f64; 3];

    /// Leading `O(1/N)` bias of the metric's mean relative to `center`,
    /// `½ tr(H Σ) / N` with the Hessian taken at `(ā, b̄)`.
    fn second_order_bias(&self, p: &AsymptoticPrediction, n: usize) -> f64 {
        let [faa, fab, fbb] = self.hessian(p.abar, p.bbar);
        let s = &p.sigma_matrix;
        0.5 * (faa * s.saa + 2.0 * fab * s.sab + fbb * s.sbb) / n as f64
    }
}

pub struct SupervisedSnr;

impl PerformanceMetric for SupervisedSnr {
    fn name(&self) -> &'static str {
        "supervised"
    }

    fn training(&self) -> Training {
        Training::Supervised
    }

    fn realized(&self, a: f64, b: f64) -> Result<f64, McError> {
        montecarlo::realized_snr(a, b, Training::Supervised)
    }

    fn center(&self, p: &AsymptoticPrediction) -> f64 {
        p.snr_bar_s
    }

    fn coefficients(&self, p: &AsymptoticPrediction) -> Coefficients {
        p.coeffs.supervised()
    }

    fn variance(&self, p: &AsymptoticPrediction) -> f64 {
        p.sigma_s2
    }

    fn hessian(&self, a: f64, b: f64) -> [f64; 3] {
        [2.0 / b, -2.0 * a / (b * b), 2.0 * a * a / b.powi(3)]
    }
}

pub struct UnsupervisedSnr;

impl PerformanceMetric for UnsupervisedSnr {
    fn name(&self) -> &'static str {
        "unsupervised"
    }

    fn training(&self) -> Training {
        Training::Unsupervised
    }

    fn realized(&self, a: f64, b: f64) -> Result<f64, McError> {
        montecarlo::realized_snr(a, b, Training::Unsupervised)
    }

    fn center(&self, p: &AsymptoticPrediction) -> f64 {
        p.snr_bar_u
    }

    fn coefficients(&self, p: &AsymptoticPrediction) -> Coefficients {
        p.coeffs.unsupervised()
    }

    fn variance(&self, p: &AsymptoticPrediction) -> f64 {
        p.sigma_u2
    }

    fn hessian(&self, a: f64, b: f64) -> [f64; 3] {
        // f = a² / g with g = b − a²
        let g = b - a * a;
        [
            2.0 * b / (g * g) + 8.0 * a * a * b / g.powi(3),
            2.0 * a / (g * g) - 4.0 * a * b / g.powi(3),
            2.0 * a * a / g.powi(3),
        ]
    }
}

/// Mean squared error `1 − 2a + b` of the loaded LMMSE estimator, trained on
/// signal-contaminated snapshots.
pub struct LmmseMse;

impl PerformanceMetric for LmmseMse {
    fn name(&self) -> &'static str {
        "mse"
    }

    fn training(&self) -> Training {
        Training::Unsupervised
    }

    fn realized(&self, a: f64, b: f64) -> Result<f64, McError> {
        Ok(montecarlo::realized_mse(a, b))
    }

    fn center(&self, p: &AsymptoticPrediction) -> f64 {
        p.mse_bar
    }

    fn coefficients(&self, p: &AsymptoticPrediction) -> Coefficients {
        p.mse_coeffs
    }

    fn variance(&self, p: &AsymptoticPrediction) -> f64 {
        p.sigma_mse2
    }

    fn hessian(&self, _: f64, _: f64) -> [f64; 3] {
        [0.0; 3]
    }
}

#[derive(Clone)]
pub struct MetricRegistry {
    metrics: BTreeMap<&'static str, Arc<dyn PerformanceMetric>>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self {
            metrics: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(SupervisedSnr));
        r.register(Arc::new(UnsupervisedSnr));
        r.register(Arc::new(LmmseMse));
        r
    }

    /// Adds or replaces the metric registered under `metric.name()`.
    pub fn register(&mut self, metric: Arc<dyn PerformanceMetric>) {
        self.metrics.insert(metric.name(), metric);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn PerformanceMetric>> {
        self.metrics.get(name).cloned()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.metrics.keys().copied().collect()
    }
}

impl Default for MetricRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}
