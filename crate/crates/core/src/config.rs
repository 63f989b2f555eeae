//! Experiment configuration (a single JSON document) and the prediction
//! document emitted for it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::asymptotics::ModelPrediction;
use crate::metric::{MetricRegistry, PerformanceMetric};
use crate::model::{CanonicalModel, Scenario, SpatialSpec, TemporalSpec};
use std::sync::Arc;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_reps() -> usize {
    10_000
}

fn default_bins() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: f64,
    /// Registered metric name: `supervised`, `unsupervised` or `mse`.
    pub mode: String,
    pub spatial: SpatialSpec,
    pub temporal: TemporalSpec,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if MetricRegistry::with_defaults().get(&self.mode).is_none() {
            return Err(ConfigError::Invalid(format!(
                "unknown mode {:?} (expected one of {:?})",
                self.mode,
                MetricRegistry::with_defaults().names()
            )));
        }
        if self.reps == 0 {
            return Err(ConfigError::Invalid("reps must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(ConfigError::Invalid("bins must be at least 1".into()));
        }
        self.scenario()?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn metric(&self) -> Result<Arc<dyn PerformanceMetric>, ConfigError> {
        MetricRegistry::with_defaults()
            .get(&self.mode)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown mode {:?}", self.mode)))
    }

    /// Scenario with the training covariance required by the selected metric.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        let training = MetricRegistry::with_defaults()
            .get(&self.mode)
            .ok_or_else(|| ConfigError::Invalid(format!("unknown mode {:?}", self.mode)))?
            .training();
        Ok(Scenario {
            m: self.m,
            n: self.n,
            alpha: self.alpha,
            training,
            spatial: self.spatial.clone(),
            temporal: self.temporal,
        })
    }
}

/// Flat prediction document: fixed point, deterministic equivalents,
/// variances for every metric, and the bound report.
pub fn prediction_json(
    config: &ExperimentConfig,
    model: &CanonicalModel,
    mp: &ModelPrediction,
    metric: &dyn PerformanceMetric,
) -> Value {
    let d = &mp.deteq;
    let p = &mp.prediction;
    json!({
        "mode": config.mode,
        "M": model.m,
        "N": model.n,
        "alpha": model.alpha,
        "delta": d.delta,
        "delta_tilde": d.delta_tilde,
        "gamma": d.gamma,
        "gamma_tilde": d.gamma_tilde,
        "one_minus_gg": d.one_minus_gg,
        "iterations": d.iterations,
        "abar": p.abar,
        "bbar": p.bbar,
        "snr_bar_s": p.snr_bar_s,
        "snr_bar_u": p.snr_bar_u,
        "uEk": p.u_e_k,
        "V": p.components.v,
        "S": p.components.s,
        "T_script": p.components.t_script,
        "v_lower_bound": p.v_lower_bound,
        "sigma_s2": p.sigma_s2,
        "sigma_u2": p.sigma_u2,
        "sigma_matrix": p.sigma_matrix,
        "coeffs": p.coeffs,
        "mse_bar": p.mse_bar,
        "sigma_mse2": p.sigma_mse2,
        "mse_coeffs": p.mse_coeffs,
        "snr_opt": model.snr_opt,
        "center": metric.center(p),
        "sigma2": metric.variance(p),
        "bound_report": mp.bounds,
    })
}
