//! Deterministic equivalents: the coupled fixed point `(δ, δ̃)` and the
//! spectral quantities built from it.
//!
//! With `λ` the spatial and `t` the temporal eigenvalues,
//!
//! ```text
//! δ̃ = (1/N) Σ_j t_j / (1 + δ t_j)
//! δ  = (1/N) Σ_i λ_i / (δ̃ λ_i + α)
//! ```
//!
//! Substituting the first equation into the second leaves a scalar equation
//! `f(δ) = δ − g(h(δ)) = 0` with `f' = 1 − γγ̃ > 0`, solved by bracketed Newton.

use serde::Serialize;
use thiserror::Error;

use crate::model::CanonicalModel;

/// Relative residual required of a converged solution.
pub const RESIDUAL_TOL: f64 = 1e-13;
pub const MAX_ITERATIONS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetEqError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("fixed point did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub delta: f64,
    pub delta_tilde: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetEq {
    pub delta: f64,
    pub delta_tilde: f64,
    /// `e_i = λ_i / (δ̃ λ_i + α)`
    pub e: Vec<f64>,
    /// `ẽ_j = t_j / (1 + δ t_j)`
    pub e_tilde: Vec<f64>,
    pub gamma: f64,
    pub gamma_tilde: f64,
    /// `(1/N) Σ e_i^k` for k = 1..=4
    pub eta: [f64; 4],
    /// `(1/N) Σ ẽ_j^k` for k = 1..=4
    pub eta_tilde: [f64; 4],
    pub one_minus_gg: f64,
    pub iterations: usize,
}

impl DetEq {
    /// `(1/N) tr Eᵏ`, k in 1..=4.
    pub fn eta(&self, k: usize) -> f64 {
        self.eta[k - 1]
    }

    /// `(1/N) tr Ẽᵏ`, k in 1..=4.
    pub fn eta_tilde(&self, k: usize) -> f64 {
        self.eta_tilde[k - 1]
    }
}

fn temporal_map(delta: f64, t: &[f64], n: f64) -> (f64, f64) {
    // (h(δ), γ̃(δ))
    let mut h = 0.0;
    let mut g = 0.0;
    for &tj in t {
        let e = tj / (1.0 + delta * tj);
        h += e;
        g += e * e;
    }
    (h / n, g / n)
}

fn spatial_map(delta_tilde: f64, lambda: &[f64], alpha: f64, n: f64) -> (f64, f64) {
    // (g(δ̃), γ(δ̃))
    let mut d = 0.0;
    let mut g = 0.0;
    for &l in lambda {
        let e = l / (delta_tilde * l + alpha);
        d += e;
        g += e * e;
    }
    (d / n, g / n)
}

/// Relative residuals of the two fixed-point equations.
pub fn residuals(
    delta: f64,
    delta_tilde: f64,
    lambda: &[f64],
    t: &[f64],
    alpha: f64,
    n: usize,
) -> (f64, f64) {
    let nf = n as f64;
    let (h, _) = temporal_map(delta, t, nf);
    let (g, _) = spatial_map(delta_tilde, lambda, alpha, nf);
    (
        (delta_tilde - h).abs() / delta_tilde.abs().max(f64::MIN_POSITIVE),
        (delta - g).abs() / delta.abs().max(f64::MIN_POSITIVE),
    )
}

fn check_inputs(lambda: &[f64], t: &[f64], alpha: f64, n: usize) -> Result<(), DetEqError> {
    if lambda.is_empty() || t.is_empty() || n == 0 {
        return Err(DetEqError::InvalidInput("empty spectrum".into()));
    }
    if lambda
        .iter()
        .chain(t)
        .any(|&x| !(x > 0.0) || !x.is_finite())
    {
        return Err(DetEqError::InvalidInput(
            "eigenvalues must be positive and finite".into(),
        ));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(DetEqError::InvalidInput(format!(
            "loading factor must be positive, got {alpha}"
        )));
    }
    Ok(())
}

/// Solves the coupled system for `(δ, δ̃)`.
pub fn solve_fixed_point(
    lambda: &[f64],
    t: &[f64],
    alpha: f64,
    n: usize,
) -> Result<FixedPoint, DetEqError> {
    check_inputs(lambda, t, alpha, n)?;
    let nf = n as f64;

    // f(0) < 0 and f(Σλ/(Nα)) ≥ 0 since g is bounded by its value at δ̃ = 0.
    let mut lo = 0.0_f64;
    let mut hi = lambda.iter().sum::<f64>() / (nf * alpha);
    let mut delta = 0.5 * hi;

    for iteration in 1..=MAX_ITERATIONS {
        let (delta_tilde, gamma_tilde) = temporal_map(delta, t, nf);
        let (g, gamma) = spatial_map(delta_tilde, lambda, alpha, nf);
        let f = delta - g;
        let rel = f.abs() / delta.max(f64::MIN_POSITIVE);
        if rel <= 1e-15 || hi - lo <= 4.0 * f64::EPSILON * hi {
            let (r1, r2) = residuals(delta, delta_tilde, lambda, t, alpha, n);
            if r1.max(r2) <= RESIDUAL_TOL {
                return Ok(FixedPoint {
                    delta,
                    delta_tilde,
                    iterations: iteration,
                });
            }
        }
        if f < 0.0 {
            lo = delta;
        } else {
            hi = delta;
        }
        let slope = 1.0 - gamma * gamma_tilde;
        let newton = delta - f / slope;
        delta = if slope > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    let (dt, _) = temporal_map(delta, t, nf);
    let (r1, r2) = residuals(delta, dt, lambda, t, alpha, n);
    Err(DetEqError::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: r1.max(r2),
    })
}

/// Builds every deterministic-equivalent quantity from a converged solution.
pub fn deterministic_equivalents(
    fp: &FixedPoint,
    lambda: &[f64],
    t: &[f64],
    alpha: f64,
    n: usize,
) -> DetEq {
    let nf = n as f64;
    let e: Vec<f64> = lambda
        .iter()
        .map(|&l| l / (fp.delta_tilde * l + alpha))
        .collect();
    let e_tilde: Vec<f64> = t.iter().map(|&tj| tj / (1.0 + fp.delta * tj)).collect();
    let moments = |xs: &[f64]| {
        let mut out = [0.0; 4];
        for &x in xs {
            let mut p = x;
            for slot in out.iter_mut() {
                *slot += p;
                p *= x;
            }
        }
        out.map(|s| s / nf)
    };
    let eta = moments(&e);
    let eta_tilde = moments(&e_tilde);
    let gamma = eta[1];
    let gamma_tilde = eta_tilde[1];
    DetEq {
        delta: fp.delta,
        delta_tilde: fp.delta_tilde,
        e,
        e_tilde,
        gamma,
        gamma_tilde,
        eta,
        eta_tilde,
        one_minus_gg: 1.0 - gamma * gamma_tilde,
        iterations: fp.iterations,
    }
}

/// Solve and assemble in one step.
pub fn solve(model: &CanonicalModel) -> Result<DetEq, DetEqError> {
    let fp = solve_fixed_point(&model.lambda, &model.t, model.alpha, model.n)?;
    Ok(deterministic_equivalents(
        &fp,
        &model.lambda,
        &model.t,
        model.alpha,
        model.n,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: &'static str,
    pub value: f64,
    pub bound: f64,
    pub kind: BoundKind,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
    pub all_passed: bool,
}

impl BoundReport {
    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Evaluates the uniform upper/lower bounds on `δ, δ̃, γ, γ̃, 1−γγ̃` with the
/// sup/inf norms taken over the given finite model (`c_inf = c_sup = M/N`),
/// plus the fixed-point residuals.
pub fn check_bounds(
    deteq: &DetEq,
    lambda: &[f64],
    t: &[f64],
    alpha: f64,
    m: usize,
    n: usize,
) -> BoundReport {
    let c = m as f64 / n as f64;
    let r_sup = lambda.iter().copied().fold(f64::MIN, f64::max);
    let r_inf = lambda.iter().copied().fold(f64::MAX, f64::min);
    let t_sup = t.iter().copied().fold(f64::MIN, f64::max);
    let t_inf = t.iter().copied().fold(f64::MAX, f64::min);

    let delta_inf = c * r_inf / (alpha + r_sup * t_sup);
    let delta_tilde_inf = alpha * t_inf / (alpha + c * r_sup * t_sup);
    // γγ̃ ≥ (δ_inf²/c)·δ̃_inf² from the Jensen lower bounds. The sharper
    // form 1 − α‖R‖_inf‖T‖_inf / ((α+‖R‖‖T‖)(α+c‖R‖‖T‖)) does not hold: the
    // symmetric model gives 0.854 against 0.75.
    let omg_upper = 1.0 - delta_inf * delta_inf * delta_tilde_inf * delta_tilde_inf / c;
    let omg_lower = alpha * alpha / (c * c * r_sup * r_sup) * delta_inf * delta_inf;

    // Slack for bounds that are attained with equality in degenerate models.
    let slack = 1e-12;
    let lower = |name, value: f64, bound: f64| BoundCheck {
        name,
        value,
        bound,
        kind: BoundKind::Lower,
        passed: value >= bound * (1.0 - slack),
    };
    let upper = |name, value: f64, bound: f64| BoundCheck {
        name,
        value,
        bound,
        kind: BoundKind::Upper,
        passed: value <= bound * (1.0 + slack),
    };

    let (r1, r2) = residuals(deteq.delta, deteq.delta_tilde, lambda, t, alpha, n);
    let checks = vec![
        upper("delta_tilde_residual", r1, RESIDUAL_TOL),
        upper("delta_residual", r2, RESIDUAL_TOL),
        lower("delta", deteq.delta, delta_inf),
        upper("delta", deteq.delta, c * r_sup / alpha),
        lower("delta_tilde", deteq.delta_tilde, delta_tilde_inf),
        upper("delta_tilde", deteq.delta_tilde, t_sup),
        upper("gamma", deteq.gamma, c * r_sup * r_sup / (alpha * alpha)),
        upper("gamma_tilde", deteq.gamma_tilde, t_sup * t_sup),
        lower("gamma", deteq.gamma, delta_inf * delta_inf / c),
        lower(
            "gamma_tilde",
            deteq.gamma_tilde,
            delta_tilde_inf * delta_tilde_inf,
        ),
        upper("one_minus_gg", deteq.one_minus_gg, omg_upper),
        lower("one_minus_gg", deteq.one_minus_gg, omg_lower),
        upper("one_minus_gg_below_one", deteq.one_minus_gg, 1.0),
        lower(
            "one_minus_gg_positive",
            deteq.one_minus_gg,
            f64::MIN_POSITIVE,
        ),
    ];
    let all_passed = checks.iter().all(|c| c.passed);
    BoundReport { checks, all_passed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GOLDEN: f64 = 0.618_033_988_749_894_8;

    fn symmetric(n: usize) -> DetEq {
        let lambda = vec![1.0; n];
        let t = vec![1.0; n];
        let fp = solve_fixed_point(&lambda, &t, 1.0, n).unwrap();
        deterministic_equivalents(&fp, &lambda, &t, 1.0, n)
    }

    /// Scalar reduction for λ ≡ r, t ≡ τ, M = N:
    /// δ = r/(δ̃r+α), δ̃ = τ/(1+δτ); solve φ(δ) = δ − r/(r τ/(1+δτ) + α) by bisection.
    fn bisection_oracle(r: f64, tau: f64, alpha: f64) -> (f64, f64) {
        let phi = |d: f64| d - r / (r * tau / (1.0 + d * tau) + alpha);
        let (mut lo, mut hi) = (0.0, r / alpha);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if phi(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d = 0.5 * (lo + hi);
        (d, tau / (1.0 + d * tau))
    }

    #[test]
    fn symmetric_case_is_golden_ratio() {
        let d = symmetric(16);
        assert!((d.delta - GOLDEN).abs() < 1e-12);
        assert!((d.delta_tilde - GOLDEN).abs() < 1e-12);
        let x2 = GOLDEN * GOLDEN;
        assert!((d.gamma - x2).abs() < 1e-12);
        assert!((d.gamma_tilde - x2).abs() < 1e-12);
        assert!((d.one_minus_gg - (3.0 * GOLDEN - 1.0)).abs() < 1e-12);
        assert!(check_bounds(&d, &[1.0; 16], &[1.0; 16], 1.0, 16, 16).all_passed);
    }

    #[test]
    fn matches_scalar_bisection() {
        for &(r, tau, alpha) in &[(2.0, 0.5, 0.3), (0.1, 3.0, 1.0), (7.0, 1.2, 0.01)] {
            let n = 10;
            let fp = solve_fixed_point(&vec![r; n], &vec![tau; n], alpha, n).unwrap();
            let (d, dt) = bisection_oracle(r, tau, alpha);
            assert!(
                (fp.delta - d).abs() < 1e-12 * d.max(1.0),
                "{r} {tau} {alpha}"
            );
            assert!((fp.delta_tilde - dt).abs() < 1e-12 * dt.max(1.0));
        }
    }

    #[test]
    fn constant_temporal_spectrum() {
        let lambda = [0.5, 1.0, 4.0];
        let t = vec![1.0; 7];
        let fp = solve_fixed_point(&lambda, &t, 0.2, 7).unwrap();
        let d = deterministic_equivalents(&fp, &lambda, &t, 0.2, 7);
        for e in &d.e_tilde {
            assert!((e - 1.0 / (1.0 + d.delta)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(solve_fixed_point(&[1.0], &[1.0], 0.0, 1).is_err());
        assert!(solve_fixed_point(&[-1.0], &[1.0], 1.0, 1).is_err());
        assert!(solve_fixed_point(&[], &[1.0], 1.0, 1).is_err());
    }

    #[test]
    fn corrupted_delta_fails_bounds() {
        let mut d = symmetric(8);
        d.delta *= 2.0;
        let report = check_bounds(&d, &[1.0; 8], &[1.0; 8], 1.0, 8, 8);
        assert!(!report.all_passed);
        assert!(report
            .failures()
            .any(|c| c.name.contains("residual") || c.name == "delta"));
    }

    fn spectrum(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.05f64..20.0, 1..=max_len)
    }

    proptest! {
        #[test]
        fn converged_solution_satisfies_contract(
            lambda in spectrum(64),
            t in spectrum(64),
            alpha in 0.01f64..10.0,
        ) {
            let n = t.len();
            let fp = solve_fixed_point(&lambda, &t, alpha, n).unwrap();
            let (r1, r2) = residuals(fp.delta, fp.delta_tilde, &lambda, &t, alpha, n);
            prop_assert!(r1 <= RESIDUAL_TOL && r2 <= RESIDUAL_TOL);
            let d = deterministic_equivalents(&fp, &lambda, &t, alpha, n);
            prop_assert!((d.eta(1) - d.delta).abs() <= 1e-12 * d.delta);
            prop_assert!((d.eta_tilde(1) - d.delta_tilde).abs() <= 1e-12 * d.delta_tilde);
            prop_assert!(d.one_minus_gg > 0.0 && d.one_minus_gg < 1.0);
            prop_assert!(d.e.iter().chain(&d.e_tilde).all(|&x| x > 0.0));
            let report = check_bounds(&d, &lambda, &t, alpha, lambda.len(), n);
            prop_assert!(report.all_passed, "{:?}", report.failures().collect::<Vec<_>>());
        }

        #[test]
        fn joint_scaling_of_loading_and_spectrum(
            lambda in spectrum(32),
            t in spectrum(32),
            alpha in 0.01f64..10.0,
            scale in 0.1f64..10.0,
        ) {
            let n = t.len();
            let base = solve_fixed_point(&lambda, &t, alpha, n).unwrap();
            let scaled_lambda: Vec<f64> = lambda.iter().map(|l| l * scale).collect();
            let scaled = solve_fixed_point(&scaled_lambda, &t, alpha * scale, n).unwrap();
            prop_assert!((base.delta - scaled.delta).abs() <= 1e-12 * base.delta);
            prop_assert!((base.delta_tilde - scaled.delta_tilde).abs() <= 1e-12 * base.delta_tilde);
        }
    }
}
