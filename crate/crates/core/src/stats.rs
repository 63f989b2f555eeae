//! Empirical-distribution tools: standardization, Kolmogorov–Smirnov
//! distance, normal and Beta distribution functions, histograms.

use libm::erfc;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty sample")]
    Empty,
    #[error("scale must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("argument out of domain: {0}")]
    Domain(String),
    #[error("degenerate histogram range [{lo}, {hi}]")]
    DegenerateRange { lo: f64, hi: f64 },
}

pub type Result<T> = std::result::Result<T, StatsError>;

/// `z_r = √N (x_r − center) / sigma`
pub fn standardize(samples: &[f64], center: f64, sigma: f64, n: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) {
        return Err(StatsError::NonPositiveScale(sigma));
    }
    let scale = (n as f64).sqrt() / sigma;
    Ok(samples.iter().map(|x| (x - center) * scale).collect())
}

/// Sample mean and unbiased variance.
pub fn mean_var(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok((mean, var))
}

/// Standard error of the mean.
pub fn standard_error(samples: &[f64]) -> Result<f64> {
    let (_, var) = mean_var(samples)?;
    Ok((var / samples.len() as f64).sqrt())
}

/// `D = max_i max(i/n − F(x_i), F(x_i) − (i−1)/n)` for ascending samples.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = sorted.len() as f64;
    let mut d = 0.0_f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Sorts a copy and computes the KS distance.
pub fn ks_unsorted(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    ks_statistic(&sorted, cdf)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Density of `N(mean, var)`.
pub fn gaussian_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let sd = var.sqrt();
    normal_pdf((x - mean) / sd) / sd
}

/// Standard normal quantile, Wichura's AS 241 (PPND16), relative accuracy
/// about 1e-16.
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r
                + 67265.770927008700853)
                * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r
                + 39307.89580009271061)
                * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r
            + 0.24178072517745061177)
            * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r
                + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r
            + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

/// Regularized incomplete beta `I_x(p, q)`.
pub fn beta_cdf(x: f64, p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(StatsError::Domain(format!("x = {x} outside [0, 1]")));
    }
    if !(p > 0.0) || !(q > 0.0) || !p.is_finite() || !q.is_finite() {
        return Err(StatsError::Domain(format!(
            "shape parameters must be positive, got ({p}, {q})"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    Ok(beta_reg(p, q, x).clamp(0.0, 1.0))
}

pub fn beta_pdf(x: f64, p: f64, q: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let ln_b = statrs::function::beta::ln_beta(p, q);
    ((p - 1.0) * x.ln() + (q - 1.0) * (1.0 - x).ln() - ln_b).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    /// `count / (n_in_range · width)`
    pub density: Vec<f64>,
    pub underflow: u64,
    pub overflow: u64,
}

impl Histogram {
    pub fn width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn midpoints(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }
}

/// Uniform-width histogram over `[lo, hi]`; the right edge is inclusive.
pub fn histogram(samples: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 {
        return Err(StatsError::Domain("bins must be at least 1".into()));
    }
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(StatsError::DegenerateRange { lo, hi });
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0u64; bins];
    let (mut underflow, mut overflow) = (0u64, 0u64);
    for &x in samples {
        if x < lo {
            underflow += 1;
        } else if x > hi {
            overflow += 1;
        } else {
            let idx = (((x - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
    }
    let total = counts.iter().sum::<u64>().max(1) as f64;
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    Ok(Histogram {
        edges,
        counts,
        density,
        underflow,
        overflow,
    })
}

/// Range `mean ± 4·sd`, widened to a unit interval around the mean when all
/// samples coincide.
pub fn default_range(samples: &[f64]) -> Result<(f64, f64)> {
    let (mean, var) = mean_var(samples)?;
    let sd = var.sqrt();
    if sd > 0.0 {
        Ok((mean - 4.0 * sd, mean + 4.0 * sd))
    } else {
        let half = 0.5 * mean.abs().max(1.0);
        Ok((mean - half, mean + half))
    }
}

/// Outcome of comparing standardized samples against `N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub mode: String,
    pub n: usize,
    pub ks_normal: f64,
    pub ks_threshold: f64,
    pub empirical_mean: f64,
    pub empirical_var: f64,
    pub predicted_center: f64,
    pub predicted_sigma2: f64,
    /// `N · var(samples) / σ²`
    pub variance_ratio: f64,
    pub variance_ratio_band: (f64, f64),
    pub bounds_passed: bool,
    pub passed: bool,
    /// Predicted `O(1/N)` mean offset from the first-order center.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_order_bias: Option<f64>,
    /// KS after shifting the center by `second_order_bias`; informational,
    /// does not enter `passed`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ks_bias_corrected: Option<f64>,
}

impl ValidationReport {
    /// Standardizes `samples`, computes KS against `N(0,1)` and the variance
    /// ratio, and applies the pass rule: KS within threshold, variance ratio
    /// inside the band, and the caller-supplied bound verdict.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        mode: &str,
        samples: &[f64],
        center: f64,
        sigma2: f64,
        dimension_n: usize,
        ks_threshold: f64,
        variance_ratio_band: (f64, f64),
        bounds_passed: bool,
    ) -> Result<Self> {
        let z = standardize(samples, center, sigma2.sqrt(), dimension_n)?;
        let ks_normal = ks_unsorted(&z, normal_cdf)?;
        let (empirical_mean, empirical_var) = mean_var(samples)?;
        let variance_ratio = dimension_n as f64 * empirical_var / sigma2;
        let passed = ks_normal <= ks_threshold
            && variance_ratio >= variance_ratio_band.0
            && variance_ratio <= variance_ratio_band.1
            && bounds_passed;
        Ok(Self {
            mode: mode.to_string(),
            n: samples.len(),
            ks_normal,
            ks_threshold,
            empirical_mean,
            empirical_var,
            predicted_center: center,
            predicted_sigma2: sigma2,
            variance_ratio,
            variance_ratio_band,
            bounds_passed,
            passed,
            second_order_bias: None,
            ks_bias_corrected: None,
        })
    }

    /// Attaches the KS statistic obtained with the center shifted by `bias`.
    pub fn with_bias_diagnostic(
        mut self,
        samples: &[f64],
        bias: f64,
        dimension_n: usize,
    ) -> Result<Self> {
        let z = standardize(
            samples,
            self.predicted_center + bias,
            self.predicted_sigma2.sqrt(),
            dimension_n,
        )?;
        self.second_order_bias = Some(bias);
        self.ks_bias_corrected = Some(ks_unsorted(&z, normal_cdf)?);
        Ok(self)
    }
}
