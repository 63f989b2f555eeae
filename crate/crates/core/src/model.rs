//! Scenario construction (array geometry, interference, temporal correlation)
//! and reduction to the diagonal canonical form used by every downstream
//! computation.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Cholesky, ComplexMatrix, LinalgError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Which spatial covariance the training snapshots carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Training {
    /// Signal-free snapshots, covariance `R₀`.
    Supervised,
    /// Signal-contaminated snapshots, covariance `R₁ = s sᴴ + R₀`.
    Unsupervised,
}

/// Spatial part of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialSpec {
    /// Half-wavelength uniform linear array with unit-norm steering vectors.
    Ula {
        soi_angle_deg: f64,
        #[serde(default)]
        interferer_angles_deg: Vec<f64>,
        /// Linear power of each interferer.
        #[serde(default)]
        interferer_power: f64,
        noise_power: f64,
    },
    /// Explicit `R₀` and signature, complex entries as `[re, im]` pairs.
    Explicit {
        r0: Vec<Vec<[f64; 2]>>,
        s: Vec<[f64; 2]>,
    },
}

/// Temporal covariance `T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalSpec {
    Identity {},
    /// `T[i][j] = exp(-|i-j|)`
    ExpToeplitz {},
    /// Stationary AR(1): `T[i][j] = ψ^|i-j| / (1-ψ²)`
    Ar1 {
        psi: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub m: usize,
    pub n: usize,
    pub alpha: f64,
    pub training: Training,
    pub spatial: SpatialSpec,
    pub temporal: TemporalSpec,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(ModelError::Invalid(format!(
                "dimensions must be positive (M={}, N={})",
                self.m, self.n
            )));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(ModelError::Invalid(format!(
                "loading factor must be positive and finite, got {}",
                self.alpha
            )));
        }
        validate_spatial(&self.spatial, self.m)?;
        validate_temporal(&self.temporal)
    }
}

fn validate_spatial(spec: &SpatialSpec, m: usize) -> Result<()> {
    match spec {
        SpatialSpec::Ula {
            soi_angle_deg,
            interferer_angles_deg,
            interferer_power,
            noise_power,
        } => {
            if !(*noise_power > 0.0) || !noise_power.is_finite() {
                return Err(ModelError::Invalid(format!(
                    "noise_power must be positive, got {noise_power}"
                )));
            }
            if !(*interferer_power >= 0.0) || !interferer_power.is_finite() {
                return Err(ModelError::Invalid(format!(
                    "interferer_power must be non-negative, got {interferer_power}"
                )));
            }
            if !soi_angle_deg.is_finite() || interferer_angles_deg.iter().any(|a| !a.is_finite()) {
                return Err(ModelError::Invalid("angles must be finite".into()));
            }
            Ok(())
        }
        SpatialSpec::Explicit { r0, s } => {
            if r0.len() != m || r0.iter().any(|row| row.len() != m) {
                return Err(ModelError::Invalid(format!("explicit r0 must be {m}x{m}")));
            }
            if s.len() != m {
                return Err(ModelError::Invalid(format!(
                    "explicit s must have length {m}, got {}",
                    s.len()
                )));
            }
            Ok(())
        }
    }
}

fn validate_temporal(spec: &TemporalSpec) -> Result<()> {
    if let TemporalSpec::Ar1 { psi } = spec {
        if !(psi.abs() < 1.0) {
            return Err(ModelError::Invalid(format!(
                "AR(1) coefficient must satisfy |psi| < 1, got {psi}"
            )));
        }
    }
    Ok(())
}

/// Diagonalized model: spatial eigenvalues of the training covariance,
/// temporal eigenvalues, and the whitened signature in the spatial eigenbasis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalModel {
    pub lambda: Vec<f64>,
    pub t: Vec<f64>,
    /// `Λ^{-1/2} Uᴴ s`
    pub u: Vec<Complex64>,
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
    /// `sᴴ R₀⁻¹ s`, independent of the training mode.
    pub snr_opt: f64,
    pub training: Training,
}

impl CanonicalModel {
    /// Assembles a model that is already diagonal, with supervised training
    /// (so `snr_opt = ‖u‖²`).
    pub fn diagonal(lambda: Vec<f64>, t: Vec<f64>, u: Vec<Complex64>, alpha: f64) -> Result<Self> {
        if u.len() != lambda.len() {
            return Err(ModelError::Invalid("u and lambda lengths differ".into()));
        }
        if lambda.is_empty() || t.is_empty() {
            return Err(ModelError::Invalid("empty spectrum".into()));
        }
        if lambda
            .iter()
            .chain(&t)
            .any(|&x| !(x > 0.0) || !x.is_finite())
        {
            return Err(ModelError::Invalid(
                "eigenvalues must be positive and finite".into(),
            ));
        }
        if !(alpha > 0.0) {
            return Err(ModelError::Invalid(format!(
                "loading factor must be positive, got {alpha}"
            )));
        }
        let snr_opt = linalg::norm_sqr(&u);
        if !(snr_opt > 0.0) {
            return Err(ModelError::Invalid("signature must be nonzero".into()));
        }
        Ok(Self {
            m: lambda.len(),
            n: t.len(),
            lambda,
            t,
            u,
            alpha,
            snr_opt,
            training: Training::Supervised,
        })
    }

    pub fn c(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// `‖u‖² = sᴴ R_β⁻¹ s`
    pub fn u_norm_sqr(&self) -> f64 {
        linalg::norm_sqr(&self.u)
    }

    /// `|u_i|²`
    pub fn u_weights(&self) -> Vec<f64> {
        self.u.iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Half-wavelength ULA steering vector normalized to unit norm.
pub fn ula_steering(angle_deg: f64, m: usize) -> Result<Vec<Complex64>> {
    if m == 0 {
        return Err(ModelError::Invalid(
            "array must have at least one element".into(),
        ));
    }
    let phase = PI * angle_deg.to_radians().sin();
    let scale = 1.0 / (m as f64).sqrt();
    Ok((0..m)
        .map(|k| Complex64::from_polar(scale, phase * k as f64))
        .collect())
}

/// Returns `(R₀, s)`.
pub fn build_spatial(spec: &SpatialSpec, m: usize) -> Result<(ComplexMatrix, Vec<Complex64>)> {
    validate_spatial(spec, m)?;
    match spec {
        SpatialSpec::Ula {
            soi_angle_deg,
            interferer_angles_deg,
            interferer_power,
            noise_power,
        } => {
            let s = ula_steering(*soi_angle_deg, m)?;
            let mut r0 = ComplexMatrix::identity(m).scale(*noise_power);
            for &angle in interferer_angles_deg {
                let a = ula_steering(angle, m)?;
                for i in 0..m {
                    for j in 0..m {
                        r0[(i, j)] += *interferer_power * a[i] * a[j].conj();
                    }
                }
            }
            Ok((r0, s))
        }
        SpatialSpec::Explicit { r0, s } => {
            let r0 = ComplexMatrix::from_fn(m, m, |i, j| Complex64::new(r0[i][j][0], r0[i][j][1]));
            let s: Vec<Complex64> = s.iter().map(|z| Complex64::new(z[0], z[1])).collect();
            let norm = linalg::norm_sqr(&s).sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(ModelError::Invalid(format!(
                    "signature must have unit norm, got {norm}"
                )));
            }
            if !r0.is_hermitian() {
                return Err(ModelError::Invalid("r0 is not Hermitian".into()));
            }
            Cholesky::factor(&r0)
                .map_err(|e| ModelError::Invalid(format!("r0 is not positive definite ({e})")))?;
            Ok((r0, s))
        }
    }
}

/// Real symmetric positive definite temporal covariance, as a complex matrix.
pub fn build_temporal(spec: &TemporalSpec, n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(ModelError::Invalid("N must be positive".into()));
    }
    validate_temporal(spec)?;
    let entry: Box<dyn Fn(usize) -> f64> = match *spec {
        TemporalSpec::Identity {} => Box::new(|lag| if lag == 0 { 1.0 } else { 0.0 }),
        TemporalSpec::ExpToeplitz {} => Box::new(|lag| (-(lag as f64)).exp()),
        TemporalSpec::Ar1 { psi } => Box::new(move |lag| psi.powi(lag as i32) / (1.0 - psi * psi)),
    };
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        Complex64::new(entry(i.abs_diff(j)), 0.0)
    }))
}

fn temporal_eigenvalues(spec: &TemporalSpec, n: usize) -> Result<Vec<f64>> {
    if matches!(spec, TemporalSpec::Identity {}) {
        return Ok(vec![1.0; n]);
    }
    let t = build_temporal(spec, n)?;
    Ok(linalg::hermitian_eigen(&t)?.eigenvalues)
}

/// Reduces a scenario to diagonal form.
pub fn canonicalize(scenario: &Scenario) -> Result<CanonicalModel> {
    scenario.validate()?;
    let m = scenario.m;
    let (r0, s) = build_spatial(&scenario.spatial, m)?;

    let snr_opt = {
        let x = Cholesky::factor(&r0)?.solve_vec(&s)?;
        linalg::inner(&s, &x).re
    };

    let r_beta = match scenario.training {
        Training::Supervised => r0,
        Training::Unsupervised => {
            let mut r1 = r0;
            for i in 0..m {
                for j in 0..m {
                    r1[(i, j)] += s[i] * s[j].conj();
                }
            }
            r1
        }
    };
    let eig = linalg::hermitian_eigen(&r_beta)?;
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&l| !(l > 0.0)) {
        return Err(ModelError::Invalid(format!(
            "spatial covariance has non-positive eigenvalue {bad}"
        )));
    }
    let projected = eig.basis.conj_transpose().matvec(&s)?;
    let u = projected
        .iter()
        .zip(&eig.eigenvalues)
        .map(|(z, l)| z / l.sqrt())
        .collect();

    let t = temporal_eigenvalues(&scenario.temporal, scenario.n)?;
    if let Some(&bad) = t.iter().find(|&&x| !(x > 0.0)) {
        return Err(ModelError::Invalid(format!(
            "temporal covariance has non-positive eigenvalue {bad}"
        )));
    }

    Ok(CanonicalModel {
        lambda: eig.eigenvalues,
        t,
        u,
        alpha: scenario.alpha,
        m,
        n: scenario.n,
        snr_opt,
        training: scenario.training,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ula(interferers: Vec<f64>, power: f64) -> SpatialSpec {
        SpatialSpec::Ula {
            soi_angle_deg: 0.0,
            interferer_angles_deg: interferers,
            interferer_power: power,
            noise_power: 1.0,
        }
    }

    fn scenario(m: usize, spatial: SpatialSpec, training: Training) -> Scenario {
        Scenario {
            m,
            n: 2 * m,
            alpha: 0.1,
            training,
            spatial,
            temporal: TemporalSpec::ExpToeplitz {},
        }
    }

    #[test]
    fn steering_examples() {
        let v = ula_steering(0.0, 4).unwrap();
        for z in &v {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-15);
        }
        assert_eq!(
            ula_steering(37.0, 1).unwrap(),
            vec![Complex64::new(1.0, 0.0)]
        );

        let v = ula_steering(30.0, 8).unwrap();
        assert!((linalg::norm_sqr(&v) - 1.0).abs() < 1e-14);
        let ratio = v[1] / v[0];
        assert!((ratio - Complex64::from_polar(1.0, PI * 0.5)).norm() < 1e-12);

        assert!(ula_steering(0.0, 0).is_err());
    }

    #[test]
    fn spatial_noise_only_is_identity() {
        let (r0, s) = build_spatial(&ula(vec![], 0.0), 5).unwrap();
        assert_eq!(r0, ComplexMatrix::identity(5));
        assert!((linalg::norm_sqr(&s) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn spatial_single_interferer_spectrum() {
        let m = 6;
        let (r0, _) = build_spatial(&ula(vec![40.0], 10.0), m).unwrap();
        let e = linalg::hermitian_eigen(&r0).unwrap();
        for l in &e.eigenvalues[..m - 1] {
            assert!((l - 1.0).abs() < 1e-12);
        }
        assert!((e.eigenvalues[m - 1] - 11.0).abs() < 1e-12);
    }

    #[test]
    fn spatial_rejects_bad_explicit_input() {
        let bad_norm = SpatialSpec::Explicit {
            r0: vec![vec![[1.0, 0.0], [0.0, 0.0]], vec![[0.0, 0.0], [1.0, 0.0]]],
            s: vec![[1.0, 0.0], [1.0, 0.0]],
        };
        assert!(build_spatial(&bad_norm, 2).is_err());
        let indefinite = SpatialSpec::Explicit {
            r0: vec![vec![[1.0, 0.0], [2.0, 0.0]], vec![[2.0, 0.0], [1.0, 0.0]]],
            s: vec![[1.0, 0.0], [0.0, 0.0]],
        };
        assert!(build_spatial(&indefinite, 2).is_err());
    }

    #[test]
    fn temporal_examples() {
        assert_eq!(
            build_temporal(&TemporalSpec::Identity {}, 3).unwrap(),
            ComplexMatrix::identity(3)
        );

        let t = build_temporal(&TemporalSpec::ExpToeplitz {}, 2).unwrap();
        let e1 = (-1.0_f64).exp();
        assert_eq!(t[(0, 0)].re, 1.0);
        assert!((t[(0, 1)].re - e1).abs() < 1e-16);
        assert!((t[(1, 0)].re - e1).abs() < 1e-16);

        let t = build_temporal(&TemporalSpec::Ar1 { psi: 0.5 }, 2).unwrap();
        assert!((t[(0, 0)].re - 4.0 / 3.0).abs() < 1e-15);
        assert!((t[(0, 1)].re - 2.0 / 3.0).abs() < 1e-15);

        assert!(build_temporal(&TemporalSpec::Ar1 { psi: 1.0 }, 2).is_err());
        assert!(build_temporal(&TemporalSpec::Ar1 { psi: -1.5 }, 2).is_err());
    }

    #[test]
    fn canonical_identity_case() {
        let sc = Scenario {
            m: 4,
            n: 4,
            alpha: 1.0,
            training: Training::Supervised,
            spatial: ula(vec![], 0.0),
            temporal: TemporalSpec::Identity {},
        };
        let c = canonicalize(&sc).unwrap();
        assert!(c.lambda.iter().all(|l| (l - 1.0).abs() < 1e-14));
        assert!((c.u_norm_sqr() - 1.0).abs() < 1e-14);
        assert!((c.snr_opt - 1.0).abs() < 1e-14);
    }

    #[test]
    fn canonical_scaled_noise() {
        let sc = Scenario {
            m: 3,
            n: 6,
            alpha: 1.0,
            training: Training::Supervised,
            spatial: SpatialSpec::Ula {
                soi_angle_deg: 10.0,
                interferer_angles_deg: vec![],
                interferer_power: 0.0,
                noise_power: 2.0,
            },
            temporal: TemporalSpec::Identity {},
        };
        let c = canonicalize(&sc).unwrap();
        assert!((c.u_norm_sqr() - 0.5).abs() < 1e-14);
        assert!((c.snr_opt - 0.5).abs() < 1e-14);
    }

    #[test]
    fn canonical_unsupervised_identity() {
        let sc = Scenario {
            training: Training::Unsupervised,
            ..scenario(5, ula(vec![], 0.0), Training::Unsupervised)
        };
        let c = canonicalize(&sc).unwrap();
        assert!((c.lambda[4] - 2.0).abs() < 1e-12);
        assert!(c.lambda[..4].iter().all(|l| (l - 1.0).abs() < 1e-12));
        assert!((c.u_norm_sqr() - 0.5).abs() < 1e-12);
        assert!((c.snr_opt - 1.0).abs() < 1e-12);
    }

    #[test]
    fn canonical_norm_identities_ula_scenario() {
        let spatial = ula(vec![-20.0, 50.0, 55.0], 10.0);
        let sup = canonicalize(&scenario(20, spatial.clone(), Training::Supervised)).unwrap();
        let uns = canonicalize(&scenario(20, spatial, Training::Unsupervised)).unwrap();
        assert!((sup.snr_opt - uns.snr_opt).abs() <= 1e-10 * sup.snr_opt);
        assert!((sup.u_norm_sqr() - sup.snr_opt).abs() <= 1e-10 * sup.snr_opt);
        let expected = uns.snr_opt / (1.0 + uns.snr_opt);
        assert!((uns.u_norm_sqr() - expected).abs() <= 1e-10 * expected);
        assert!(sup.lambda.iter().chain(&sup.t).all(|&x| x > 0.0));
    }

    #[test]
    fn snr_opt_is_rotation_invariant() {
        let spatial = ula(vec![-20.0, 50.0, 55.0], 10.0);
        let c = canonicalize(&scenario(12, spatial.clone(), Training::Supervised)).unwrap();
        // Direct evaluation in the original basis via eigen-solve.
        let (r0, s) = build_spatial(&spatial, 12).unwrap();
        let e = linalg::hermitian_eigen(&r0).unwrap();
        let proj = e.basis.conj_transpose().matvec(&s).unwrap();
        let direct: f64 = proj
            .iter()
            .zip(&e.eigenvalues)
            .map(|(z, l)| z.norm_sqr() / l)
            .sum();
        assert!((c.snr_opt - direct).abs() <= 1e-10 * direct);
    }

    #[test]
    fn scenario_validation() {
        let mut sc = scenario(4, ula(vec![], 0.0), Training::Supervised);
        sc.alpha = 0.0;
        assert!(canonicalize(&sc).is_err());
        sc.alpha = 1.0;
        sc.spatial = SpatialSpec::Ula {
            soi_angle_deg: 0.0,
            interferer_angles_deg: vec![],
            interferer_power: 0.0,
            noise_power: 0.0,
        };
        assert!(canonicalize(&sc).is_err());
    }
}
