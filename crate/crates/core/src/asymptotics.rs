//! First-order SNR predictions and second-order (CLT) variances.
//!
//! Notation: `kᵢ = uᴴ Eⁱ u`, `ηᵢ = (1/N) tr Eⁱ`, `η̃ᵢ = (1/N) tr Ẽⁱ`,
//! `D = 1 − γγ̃`. Every formula below is evaluated literally, term by term,
//! so that each line can be compared against its closed form.

use serde::Serialize;
use thiserror::Error;

use crate::deteq::{self, BoundReport, DetEq, DetEqError};
use crate::model::CanonicalModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AsymptoticsError {
    #[error("b̄ = {bbar:e} does not exceed ā² = {abar_sq:e}")]
    DegenerateMoments { bbar: f64, abar_sq: f64 },
    #[error("non-positive moment: {0}")]
    NonPositive(&'static str),
    #[error("variance component V = {0:e} is not positive")]
    NonPositiveV(f64),
    #[error("unsupervised variance factor base {0:e} is not positive")]
    NonPositiveQuarticBase(f64),
    #[error("Σ is not positive definite (saa = {saa:e}, det = {det:e})")]
    SigmaNotPositiveDefinite { saa: f64, det: f64 },
    #[error(transparent)]
    DetEq(#[from] DetEqError),
}

pub type Result<T> = std::result::Result<T, AsymptoticsError>;

/// `uᴴ Eᵏ u` for k = 1..=4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UeMoments(pub [f64; 4]);

impl UeMoments {
    pub fn k(&self, power: usize) -> f64 {
        self.0[power - 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceComponents {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "T_script")]
    pub t_script: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaMatrix {
    pub saa: f64,
    pub sab: f64,
    pub sbb: f64,
}

impl SigmaMatrix {
    pub fn determinant(&self) -> f64 {
        self.saa * self.sbb - self.sab * self.sab
    }
}

/// Linearization coefficients `(A, B)` of a functional of `(a, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficients {
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CltCoefficients {
    #[serde(rename = "A_s")]
    pub a_s: f64,
    #[serde(rename = "B_s")]
    pub b_s: f64,
    #[serde(rename = "A_u")]
    pub a_u: f64,
    #[serde(rename = "B_u")]
    pub b_u: f64,
}

impl CltCoefficients {
    pub fn supervised(&self) -> Coefficients {
        Coefficients {
            a: self.a_s,
            b: self.b_s,
        }
    }

    pub fn unsupervised(&self) -> Coefficients {
        Coefficients {
            a: self.a_u,
            b: self.b_u,
        }
    }
}

/// MSE linearization: `MSE = 1 − 2a + b`.
pub const MSE_COEFFICIENTS: Coefficients = Coefficients { a: -2.0, b: 1.0 };

/// `ā = Σ e_i|u_i|²`, `b̄ = D⁻¹ Σ e_i²|u_i|²`, plus `uᴴEᵏu`.
pub fn abar_bbar(u_weights: &[f64], deteq: &DetEq) -> (f64, f64, UeMoments) {
    let mut k = [0.0; 4];
    for (&w, &e) in u_weights.iter().zip(&deteq.e) {
        let mut p = e;
        for slot in k.iter_mut() {
            *slot += p * w;
            p *= e;
        }
    }
    (k[0], k[1] / deteq.one_minus_gg, UeMoments(k))
}

/// `(ā²/b̄, (b̄/ā² − 1)⁻¹)`
pub fn first_order_snr(abar: f64, bbar: f64) -> Result<(f64, f64)> {
    require_moments(abar, bbar)?;
    let supervised = abar * abar / bbar;
    let unsupervised = 1.0 / (bbar / (abar * abar) - 1.0);
    Ok((supervised, unsupervised))
}

fn require_moments(abar: f64, bbar: f64) -> Result<()> {
    if !(abar > 0.0) {
        return Err(AsymptoticsError::NonPositive("abar"));
    }
    if !(bbar > abar * abar) {
        return Err(AsymptoticsError::DegenerateMoments {
            bbar,
            abar_sq: abar * abar,
        });
    }
    Ok(())
}

/// The cubic trace combination shared by V and σ_b²:
/// `γ̃³η₃² − 2γγ̃η₃η̃₃ + γ³η̃₃²`.
fn cubic_trace_form(d: &DetEq) -> f64 {
    let (g, gt) = (d.gamma, d.gamma_tilde);
    let (e3, et3) = (d.eta(3), d.eta_tilde(3));
    gt.powi(3) * e3 * e3 - 2.0 * g * gt * e3 * et3 + g.powi(3) * et3 * et3
}

/// `γ̃²η₃ − γη̃₃`
fn mixed_cubic(d: &DetEq) -> f64 {
    d.gamma_tilde * d.gamma_tilde * d.eta(3) - d.gamma * d.eta_tilde(3)
}

/// `γ̃²η₄ + γ²η̃₄`
fn quartic_traces(d: &DetEq) -> f64 {
    d.gamma_tilde * d.gamma_tilde * d.eta(4) + d.gamma * d.gamma * d.eta_tilde(4)
}

pub fn variance_components(k: &UeMoments, d: &DetEq) -> Result<VarianceComponents> {
    let (k1, k2, k3, k4) = (k.k(1), k.k(2), k.k(3), k.k(4));
    let s = (k2 / k1).powi(2) - 2.0 * k3 / k1 + 0.5 * (k4 / k2 + (k3 / k2).powi(2));
    let t_script = k3 / k2 - k2 / k1;
    let om = d.one_minus_gg;
    let v = quartic_traces(d)
        + 4.0 * d.gamma_tilde * om * s
        + 4.0 * mixed_cubic(d) * t_script
        + 2.0 / om * cubic_trace_form(d);
    if !(v > 0.0) {
        return Err(AsymptoticsError::NonPositiveV(v));
    }
    Ok(VarianceComponents { s, t_script, v })
}

/// Lower bound on V: `(η₃ · (1/N)Σ t_j⁻¹ẽ_j³)² / ((1−γγ̃)γ)`.
///
/// Uses `t⁻¹ẽ³ = ẽ²(1 − δẽ)` so the temporal eigenvalues are not needed.
pub fn v_lower_bound(d: &DetEq) -> f64 {
    let n = d.e_tilde.len() as f64;
    let weighted: f64 = d
        .e_tilde
        .iter()
        .map(|&e| e * e * (1.0 - d.delta * e))
        .sum::<f64>()
        / n;
    (d.eta(3) * weighted).powi(2) / (d.one_minus_gg * d.gamma)
}

/// `σ_s² = (k₁²/k₂)² V` and `σ_u² = σ_s² (1 − k₁²(1−γγ̃)/k₂)⁻⁴`.
pub fn closed_form_variances(k: &UeMoments, d: &DetEq, v: f64) -> Result<(f64, f64)> {
    if !(v > 0.0) {
        return Err(AsymptoticsError::NonPositiveV(v));
    }
    let ratio = k.k(1).powi(2) / k.k(2);
    let sigma_s2 = ratio * ratio * v;
    let base = 1.0 - ratio * d.one_minus_gg;
    if !(base > 0.0) {
        return Err(AsymptoticsError::NonPositiveQuarticBase(base));
    }
    Ok((sigma_s2, sigma_s2 * base.powi(-4)))
}

/// Asymptotic covariance of `√N (a − ā, b − b̄)`.
pub fn sigma_matrix(k: &UeMoments, d: &DetEq) -> Result<SigmaMatrix> {
    let (k2, k3, k4) = (k.k(2), k.k(3), k.k(4));
    let gt = d.gamma_tilde;
    let om = d.one_minus_gg;
    let mixed = mixed_cubic(d);

    let saa = gt / om * k2 * k2;
    let sab = 2.0 * gt / om.powi(2) * k2 * k3 + k2 * k2 / om.powi(3) * mixed;
    let sbb = 2.0 * gt / om.powi(3) * k4 * k2
        + 2.0 * gt / om.powi(3) * k3 * k3
        + 4.0 * k3 * k2 / om.powi(4) * mixed
        + k2 * k2 / om.powi(4) * quartic_traces(d)
        + 2.0 * k2 * k2 / om.powi(5) * cubic_trace_form(d);

    let sigma = SigmaMatrix { saa, sab, sbb };
    let det = sigma.determinant();
    if !(saa > 0.0) || !(det > 0.0) {
        return Err(AsymptoticsError::SigmaNotPositiveDefinite { saa, det });
    }
    Ok(sigma)
}

pub fn clt_coefficients(abar: f64, bbar: f64) -> Result<CltCoefficients> {
    require_moments(abar, bbar)?;
    let gap = bbar - abar * abar;
    Ok(CltCoefficients {
        a_s: 2.0 * abar / bbar,
        b_s: -(abar / bbar).powi(2),
        a_u: 2.0 * abar * bbar / (gap * gap),
        b_u: -(abar / gap).powi(2),
    })
}

/// `[A B] Σ [A B]ᵀ`
pub fn quadratic_form_variance(coeffs: Coefficients, sigma: &SigmaMatrix) -> f64 {
    let Coefficients { a, b } = coeffs;
    a * a * sigma.saa + 2.0 * a * b * sigma.sab + b * b * sigma.sbb
}

/// `(1 − 2ā + b̄, [−2 1] Σ [−2 1]ᵀ)`
pub fn mse_prediction(abar: f64, bbar: f64, sigma: &SigmaMatrix) -> (f64, f64) {
    (
        1.0 - 2.0 * abar + bbar,
        quadratic_form_variance(MSE_COEFFICIENTS, sigma),
    )
}

/// Everything predicted for one canonical model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticPrediction {
    pub abar: f64,
    pub bbar: f64,
    pub snr_bar_s: f64,
    pub snr_bar_u: f64,
    #[serde(rename = "uEk")]
    pub u_e_k: UeMoments,
    #[serde(flatten)]
    pub components: VarianceComponents,
    pub v_lower_bound: f64,
    pub sigma_s2: f64,
    pub sigma_u2: f64,
    pub sigma_matrix: SigmaMatrix,
    pub coeffs: CltCoefficients,
    /// `[A_s B_s] Σ [A_s B_s]ᵀ`, the second route to `σ_s²`.
    pub sigma_s2_quadratic: f64,
    /// `[A_u B_u] Σ [A_u B_u]ᵀ`, the second route to `σ_u²`.
    pub sigma_u2_quadratic: f64,
    pub mse_bar: f64,
    pub sigma_mse2: f64,
    pub mse_coeffs: Coefficients,
}

pub fn predict_from(u_weights: &[f64], d: &DetEq) -> Result<AsymptoticPrediction> {
    let (abar, bbar, k) = abar_bbar(u_weights, d);
    let (snr_bar_s, snr_bar_u) = first_order_snr(abar, bbar)?;
    let components = variance_components(&k, d)?;
    let (sigma_s2, sigma_u2) = closed_form_variances(&k, d, components.v)?;
    let sigma = sigma_matrix(&k, d)?;
    let coeffs = clt_coefficients(abar, bbar)?;
    let (mse_bar, sigma_mse2) = mse_prediction(abar, bbar, &sigma);
    Ok(AsymptoticPrediction {
        abar,
        bbar,
        snr_bar_s,
        snr_bar_u,
        u_e_k: k,
        components,
        v_lower_bound: v_lower_bound(d),
        sigma_s2,
        sigma_u2,
        sigma_matrix: sigma,
        coeffs,
        sigma_s2_quadratic: quadratic_form_variance(coeffs.supervised(), &sigma),
        sigma_u2_quadratic: quadratic_form_variance(coeffs.unsupervised(), &sigma),
        mse_bar,
        sigma_mse2,
        mse_coeffs: MSE_COEFFICIENTS,
    })
}

/// Fixed point, deterministic equivalents, bound report and prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelPrediction {
    pub deteq: DetEq,
    pub bounds: BoundReport,
    pub prediction: AsymptoticPrediction,
}

pub fn predict(model: &CanonicalModel) -> Result<ModelPrediction> {
    let d = deteq::solve(model)?;
    let bounds = deteq::check_bounds(&d, &model.lambda, &model.t, model.alpha, model.m, model.n);
    let prediction = predict_from(&model.u_weights(), &d)?;
    Ok(ModelPrediction {
        deteq: d,
        bounds,
        prediction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deteq::{deterministic_equivalents, solve_fixed_point};

    const X: f64 = 0.618_033_988_749_894_8;

    fn symmetric(n: usize) -> (DetEq, Vec<f64>) {
        let ones = vec![1.0; n];
        let fp = solve_fixed_point(&ones, &ones, 1.0, n).unwrap();
        let d = deterministic_equivalents(&fp, &ones, &ones, 1.0, n);
        let mut w = vec![0.0; n];
        w[0] = 1.0;
        (d, w)
    }

    #[test]
    fn symmetric_first_order() {
        let (d, w) = symmetric(12);
        let (abar, bbar, k) = abar_bbar(&w, &d);
        assert!((abar - X).abs() < 1e-12);
        assert!((bbar - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(k.k(1), abar);
        let (s, u) = first_order_snr(abar, bbar).unwrap();
        assert!((s - (3.0 * 5f64.sqrt() - 5.0) / 2.0).abs() < 1e-12);
        assert!((u - s / (1.0 - s)).abs() < 1e-12);
        assert!((u - 5.854_101_966_249_68).abs() < 1e-10);
    }

    #[test]
    fn coordinate_weight_picks_first_equivalent_eigenvalue() {
        let lambda = [0.3, 2.0, 5.0];
        let t = [1.0, 2.0];
        let fp = solve_fixed_point(&lambda, &t, 0.5, 2).unwrap();
        let d = deterministic_equivalents(&fp, &lambda, &t, 0.5, 2);
        let (abar, _, _) = abar_bbar(&[1.0, 0.0, 0.0], &d);
        assert_eq!(abar, d.e[0]);
    }

    #[test]
    fn first_order_arithmetic() {
        assert_eq!(first_order_snr(1.0, 2.0).unwrap(), (0.5, 1.0));
        assert!(first_order_snr(1.0, 1.0).is_err());
        assert!(first_order_snr(1.0, 0.5).is_err());
    }

    #[test]
    fn symmetric_variances() {
        let (d, w) = symmetric(12);
        let (_, _, k) = abar_bbar(&w, &d);
        let c = variance_components(&k, &d).unwrap();
        assert!(c.s.abs() < 1e-12);
        assert!(c.t_script.abs() < 1e-12);
        let v_closed = 2.0 * X.powi(8) - 4.0 * X.powi(10) / (1.0 + X * X);
        assert!((c.v - v_closed).abs() < 1e-12);
        assert!((c.v - 0.019_038).abs() < 1e-6);

        let (s2, u2) = closed_form_variances(&k, &d, c.v).unwrap();
        assert!((s2 - c.v).abs() < 1e-12);
        let u2_closed = v_closed / (2.0 - 3.0 * X).powi(4);
        assert!((u2 - u2_closed).abs() < 1e-9 * u2_closed);
        assert!((u2 - 42.017).abs() < 0.01);
    }

    #[test]
    fn symmetric_sigma_matrix() {
        let (d, w) = symmetric(12);
        let (_, _, k) = abar_bbar(&w, &d);
        let sigma = sigma_matrix(&k, &d).unwrap();
        let om = 1.0 - X.powi(4);
        assert!((sigma.saa - X.powi(6) / om).abs() < 1e-12);
        assert!((sigma.saa - 0.065_247_6).abs() < 1e-7);
        let sab = 2.0 * X.powi(7) / om.powi(2) - X.powi(10) / om.powi(3);
        assert!((sigma.sab - sab).abs() < 1e-12);
        assert!((sigma.sab - 0.081_377_7).abs() < 1e-7);
    }

    #[test]
    fn coefficient_examples() {
        let c = clt_coefficients(1.0, 2.0).unwrap();
        assert_eq!((c.a_s, c.b_s, c.a_u, c.b_u), (1.0, -0.25, 4.0, -1.0));
        assert!((c.a_s / c.b_s + 4.0).abs() < 1e-12);
        assert!((c.a_u / c.b_u + 4.0).abs() < 1e-12);

        let (abar, bbar) = (X, 1.0 / 5f64.sqrt());
        let c = clt_coefficients(abar, bbar).unwrap();
        assert!((c.a_s - 2.0 * X * 5f64.sqrt()).abs() < 1e-12);
        assert!((c.b_s + 5.0 * X * X).abs() < 1e-12);
        assert!((c.a_s / c.b_s + 2.0 * bbar / abar).abs() < 1e-12);
        assert!((c.a_u / c.b_u + 2.0 * bbar / abar).abs() < 1e-12);
    }

    #[test]
    fn quadratic_form_examples() {
        let sigma = SigmaMatrix {
            saa: 2.0,
            sab: 0.5,
            sbb: 3.0,
        };
        assert_eq!(
            quadratic_form_variance(Coefficients { a: 1.0, b: 0.0 }, &sigma),
            2.0
        );
        assert_eq!(
            quadratic_form_variance(Coefficients { a: 0.0, b: 1.0 }, &sigma),
            3.0
        );
        let (_, mse_var) = mse_prediction(1.0, 2.0, &sigma);
        assert_eq!(mse_var, 4.0 * 2.0 - 4.0 * 0.5 + 3.0);
    }

    #[test]
    fn mse_examples() {
        let sigma = SigmaMatrix {
            saa: 1.0,
            sab: 0.0,
            sbb: 1.0,
        };
        assert_eq!(mse_prediction(1.0, 2.0, &sigma).0, 1.0);
        let (mse, _) = mse_prediction(X, 1.0 / 5f64.sqrt(), &sigma);
        assert!((mse - (1.0 - 2.0 * X + 1.0 / 5f64.sqrt())).abs() < 1e-15);
        assert!((mse - 0.211_145_6).abs() < 1e-7);
    }

    #[test]
    fn symmetric_dual_route() {
        let (d, w) = symmetric(12);
        let p = predict_from(&w, &d).unwrap();
        assert!((p.sigma_s2 - p.sigma_s2_quadratic).abs() <= 1e-9 * p.sigma_s2);
        assert!((p.sigma_u2 - p.sigma_u2_quadratic).abs() <= 1e-9 * p.sigma_u2);
        assert!(p.components.v >= p.v_lower_bound);
    }
}
