//! Monte Carlo engine: draws standardized complex Gaussian data matrices and
//! evaluates the realized quadratic forms `a = uᴴQu`, `b = uᴴQ²u` with
//! `Q = (X diag(t) Xᴴ / N + α diag(λ)⁻¹)⁻¹`.
//!
//! Working in the canonical basis is exact: rotating the data by the
//! eigenbases of `R` and `T` leaves the law of `X` unchanged, so the colored
//! data matrix `R^{1/2} X T^{1/2}` never needs to be formed.

pub mod rng;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, Cholesky, ComplexMatrix, LinalgError};
use crate::model::{CanonicalModel, Training};

pub use rng::ReplicationStream;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("replication {rep}: {source}")]
    Linalg { rep: usize, source: LinalgError },
    #[error("replication {rep}: {message}")]
    Invariant { rep: usize, message: String },
    #[error("{count} replications failed; first: {first}")]
    Multiple { count: usize, first: Box<McError> },
    #[error("realized moments violate b > a² (a = {a:e}, b = {b:e})")]
    DegenerateMoments { a: f64, b: f64 },
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, McError>;

#[derive(Debug, Clone)]
pub struct McConfig {
    pub canonical: CanonicalModel,
    pub reps: usize,
    pub seed: u64,
    /// Worker threads; 0 selects the rayon default.
    pub workers: usize,
}

/// Per-replication realized quantities in replication order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSamples {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// Realized SNR for the model's training mode.
    pub snr: Vec<f64>,
    pub mse: Vec<f64>,
    pub seed: u64,
    pub reps: usize,
    pub training: Training,
}

impl McSamples {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }
}

/// `m × n` matrix of i.i.d. circular complex Gaussians with unit variance,
/// filled row-major from the stream.
pub fn sample_gaussian_matrix(stream: &mut ReplicationStream, m: usize, n: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(m, n, |_, _| stream.next_complex_gaussian())
}

/// Lower triangle of `X diag(w) Xᴴ / N` plus `diag(shift)`; the upper
/// triangle is left at zero since the Cholesky factorization reads only the
/// lower one.
fn loaded_gram(x: &ComplexMatrix, weights: &[f64], n: usize, shift: &[f64]) -> ComplexMatrix {
    let m = x.rows();
    let inv_n = 1.0 / n as f64;
    let mut h = ComplexMatrix::zeros(m, m);
    for i in 0..m {
        let xi = x.row(i);
        for j in 0..=i {
            let xj = x.row(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for ((p, q), w) in xi.iter().zip(xj).zip(weights) {
                acc += p * q.conj() * *w;
            }
            h[(i, j)] = acc * inv_n;
        }
        h[(i, i)] = Complex64::new(h[(i, i)].re + shift[i], 0.0);
    }
    h
}

/// `(uᴴ H⁻¹ u, ‖H⁻¹ u‖²)` for the lower-stored HPD matrix `H`.
fn resolvent_forms(
    h: &ComplexMatrix,
    u: &[Complex64],
) -> std::result::Result<(f64, f64), LinalgError> {
    let chol = Cholesky::factor(h)?;
    let q = chol.solve_vec(u)?;
    Ok((linalg::inner(u, &q).re, linalg::norm_sqr(&q)))
}

/// Realized `(a, b)` for one data matrix.
pub fn realized_ab(
    x: &ComplexMatrix,
    model: &CanonicalModel,
) -> std::result::Result<(f64, f64), LinalgError> {
    if x.rows() != model.m || x.cols() != model.n {
        return Err(LinalgError::DimensionMismatch(format!(
            "data matrix is {}x{}, model is {}x{}",
            x.rows(),
            x.cols(),
            model.m,
            model.n
        )));
    }
    let shift: Vec<f64> = model.lambda.iter().map(|l| model.alpha / l).collect();
    let h = loaded_gram(x, &model.t, model.n, &shift);
    resolvent_forms(&h, &model.u)
}

/// Supervised `a²/b`; unsupervised `(b/a² − 1)⁻¹`.
pub fn realized_snr(a: f64, b: f64, training: Training) -> Result<f64> {
    if !(a > 0.0) || !(b > a * a) {
        return Err(McError::DegenerateMoments { a, b });
    }
    Ok(match training {
        Training::Supervised => a * a / b,
        Training::Unsupervised => 1.0 / (b / (a * a) - 1.0),
    })
}

/// `1 − 2a + b`
pub fn realized_mse(a: f64, b: f64) -> f64 {
    1.0 - 2.0 * a + b
}

fn check_sample(rep: usize, a: f64, b: f64, a_max: f64) -> Result<()> {
    let fail = |message: String| Err(McError::Invariant { rep, message });
    if !(a > 0.0) || !(b > 0.0) {
        return fail(format!("non-positive moments a = {a:e}, b = {b:e}"));
    }
    if !(b > a * a) {
        return fail(format!("b − a² = {:e} is not positive", b - a * a));
    }
    if a > a_max * (1.0 + 1e-12) {
        return fail(format!("a = {a:e} exceeds ‖u‖² max λ / α = {a_max:e}"));
    }
    Ok(())
}

/// Runs `reps` in parallel on an optional dedicated pool, returning results
/// in replication order and aggregating failures.
fn run_replications<T: Send>(
    reps: usize,
    workers: usize,
    job: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let compute = || {
        (0..reps)
            .into_par_iter()
            .map(&job)
            .collect::<Vec<Result<T>>>()
    };
    let results = if workers == 0 {
        compute()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| McError::ThreadPool(e.to_string()))?
            .install(compute)
    };
    let mut out = Vec::with_capacity(reps);
    let mut errors = Vec::new();
    for r in results {
        match r {
            Ok(v) => out.push(v),
            Err(e) => errors.push(e),
        }
    }
    match errors.len() {
        0 => Ok(out),
        1 => Err(errors.pop().expect("one error")),
        count => Err(McError::Multiple {
            count,
            first: Box::new(errors.swap_remove(0)),
        }),
    }
}

/// One replication of the loaded-SCM experiment.
pub fn single_replication(model: &CanonicalModel, seed: u64, rep: usize) -> Result<(f64, f64)> {
    let mut stream = ReplicationStream::new(seed, rep as u64);
    let x = sample_gaussian_matrix(&mut stream, model.m, model.n);
    let (a, b) = realized_ab(&x, model).map_err(|source| McError::Linalg { rep, source })?;
    let a_max = model.u_norm_sqr() * model.lambda.iter().copied().fold(0.0, f64::max) / model.alpha;
    check_sample(rep, a, b, a_max)?;
    Ok((a, b))
}

pub fn run_experiment(config: &McConfig) -> Result<McSamples> {
    if config.reps == 0 {
        return Err(McError::InvalidConfig("reps must be at least 1".into()));
    }
    let model = &config.canonical;
    let pairs = run_replications(config.reps, config.workers, |rep| {
        single_replication(model, config.seed, rep)
    })?;
    let mut samples = McSamples {
        a: Vec::with_capacity(config.reps),
        b: Vec::with_capacity(config.reps),
        snr: Vec::with_capacity(config.reps),
        mse: Vec::with_capacity(config.reps),
        seed: config.seed,
        reps: config.reps,
        training: model.training,
    };
    for (a, b) in pairs {
        samples.a.push(a);
        samples.b.push(b);
        samples.snr.push(realized_snr(a, b, model.training)?);
        samples.mse.push(realized_mse(a, b));
    }
    Ok(samples)
}

/// Normalized SNR `SNR(ŵ)/SNR_opt` of the unloaded sample MVDR filter with
/// temporally white training data (α = 0, T = I). Requires `N ≥ M + 1`.
pub fn beta_oracle_run(
    m: usize,
    n: usize,
    r0: &ComplexMatrix,
    s: &[Complex64],
    reps: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<f64>> {
    if m == 0 || n < m + 1 {
        return Err(McError::InvalidConfig(format!(
            "need N ≥ M + 1, got M = {m}, N = {n}"
        )));
    }
    if reps == 0 {
        return Err(McError::InvalidConfig("reps must be at least 1".into()));
    }
    if r0.rows() != m || s.len() != m {
        return Err(McError::InvalidConfig("R0 and s must match M".into()));
    }
    let eig = linalg::hermitian_eigen(r0).map_err(|source| McError::Linalg { rep: 0, source })?;
    let u: Vec<Complex64> = eig
        .basis
        .conj_transpose()
        .matvec(s)
        .map_err(|source| McError::Linalg { rep: 0, source })?
        .iter()
        .zip(&eig.eigenvalues)
        .map(|(z, l)| z / l.sqrt())
        .collect();
    let snr_opt = linalg::norm_sqr(&u);
    let ones = vec![1.0; n];
    let zeros = vec![0.0; m];
    run_replications(reps, workers, |rep| {
        let mut stream = ReplicationStream::new(seed, rep as u64);
        let x = sample_gaussian_matrix(&mut stream, m, n);
        let w = loaded_gram(&x, &ones, n, &zeros);
        let (a, b) = resolvent_forms(&w, &u).map_err(|source| McError::Linalg { rep, source })?;
        let ratio = a * a / (b * snr_opt);
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(McError::Invariant {
                rep,
                message: format!("normalized SNR {ratio} outside (0, 1)"),
            });
        }
        Ok(ratio)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{canonicalize, Scenario, SpatialSpec, TemporalSpec};
    use crate::stats;

    fn small_model(training: Training) -> CanonicalModel {
        canonicalize(&Scenario {
            m: 6,
            n: 12,
            alpha: 0.1,
            training,
            spatial: SpatialSpec::Ula {
                soi_angle_deg: 0.0,
                interferer_angles_deg: vec![-20.0, 50.0],
                interferer_power: 10.0,
                noise_power: 1.0,
            },
            temporal: TemporalSpec::ExpToeplitz {},
        })
        .unwrap()
    }

    #[test]
    fn gaussian_matrix_is_deterministic() {
        let x1 = sample_gaussian_matrix(&mut ReplicationStream::new(5, 9), 3, 4);
        let x2 = sample_gaussian_matrix(&mut ReplicationStream::new(5, 9), 3, 4);
        assert_eq!(x1, x2);
    }

    #[test]
    fn gaussian_entries_have_unit_circular_law() {
        let mut total = Complex64::new(0.0, 0.0);
        let mut power = 0.0;
        let mut pseudo = Complex64::new(0.0, 0.0);
        let mut count = 0.0;
        for rep in 0..1000 {
            let x = sample_gaussian_matrix(&mut ReplicationStream::new(77, rep), 20, 50);
            for z in x.as_slice() {
                total += z;
                power += z.norm_sqr();
                pseudo += z * z;
                count += 1.0;
            }
        }
        assert!((total / count).norm() < 5e-3);
        assert!((power / count - 1.0).abs() < 5e-3);
        assert!((pseudo / count).norm() < 5e-3);
    }

    #[test]
    fn zero_data_gives_prior_resolvent() {
        let model = small_model(Training::Supervised);
        let x = ComplexMatrix::zeros(model.m, model.n);
        let (a, b) = realized_ab(&x, &model).unwrap();
        // Q = diag(λ)/α: a = Σλ|u|²/α = ‖s‖²/α, b = Σλ²|u|²/α².
        assert!((a - 1.0 / model.alpha).abs() < 1e-10 * a);
        let b_expected: f64 = model
            .u
            .iter()
            .zip(&model.lambda)
            .map(|(z, l)| l * l * z.norm_sqr())
            .sum::<f64>()
            / model.alpha.powi(2);
        assert!((b - b_expected).abs() < 1e-10 * b);
    }

    #[test]
    fn zero_data_identity_model_recovers_exact_filter() {
        let model = CanonicalModel::diagonal(
            vec![1.0; 3],
            vec![1.0; 5],
            vec![
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, 0.0),
            ],
            1.0,
        )
        .unwrap();
        let (a, b) = realized_ab(&ComplexMatrix::zeros(3, 5), &model).unwrap();
        assert!((a - 1.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        assert_eq!(realized_mse(a, b), 0.0);
    }

    #[test]
    fn realized_snr_arithmetic() {
        assert_eq!(realized_snr(1.0, 2.0, Training::Supervised).unwrap(), 0.5);
        assert_eq!(realized_snr(1.0, 2.0, Training::Unsupervised).unwrap(), 1.0);
        assert!(realized_snr(1.0, 1.0, Training::Supervised).is_err());
        assert_eq!(realized_mse(1.0, 2.0), 1.0);
    }

    #[test]
    fn per_sample_invariants_and_identity() {
        let model = small_model(Training::Unsupervised);
        let samples = run_experiment(&McConfig {
            canonical: model.clone(),
            reps: 2000,
            seed: 3,
            workers: 2,
        })
        .unwrap();
        let a_max =
            model.u_norm_sqr() * model.lambda.iter().copied().fold(0.0, f64::max) / model.alpha;
        for i in 0..samples.len() {
            let (a, b) = (samples.a[i], samples.b[i]);
            assert!(a > 0.0 && b > a * a && a <= a_max);
            let s = realized_snr(a, b, Training::Supervised).unwrap();
            let u = realized_snr(a, b, Training::Unsupervised).unwrap();
            assert!((u - s / (1.0 - s)).abs() <= 1e-12 * u.max(1.0));
            assert_eq!(samples.snr[i], u);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let model = small_model(Training::Supervised);
        let run = |workers| {
            run_experiment(&McConfig {
                canonical: model.clone(),
                reps: 64,
                seed: 11,
                workers,
            })
            .unwrap()
        };
        assert_eq!(run(1), run(4));
        let single = single_replication(&model, 11, 0).unwrap();
        let one = run_experiment(&McConfig {
            canonical: model.clone(),
            reps: 1,
            seed: 11,
            workers: 1,
        })
        .unwrap();
        assert_eq!((one.a[0], one.b[0]), single);
    }

    #[test]
    fn rejects_zero_reps() {
        let err = run_experiment(&McConfig {
            canonical: small_model(Training::Supervised),
            reps: 0,
            seed: 0,
            workers: 1,
        });
        assert!(matches!(err, Err(McError::InvalidConfig(_))));
    }

    #[test]
    fn beta_oracle_samples_in_unit_interval() {
        let r0 = ComplexMatrix::identity(3);
        let s = crate::model::ula_steering(10.0, 3).unwrap();
        let xs = beta_oracle_run(3, 8, &r0, &s, 500, 1, 0).unwrap();
        assert!(xs.iter().all(|&x| x > 0.0 && x < 1.0));
        // Beta(N+2−M, M−1) = Beta(7, 2)
        let (mean, _) = stats::mean_var(&xs).unwrap();
        let se = stats::standard_error(&xs).unwrap();
        assert!((mean - 7.0 / 9.0).abs() < 4.0 * se);
        assert!(beta_oracle_run(3, 3, &r0, &s, 10, 1, 0).is_err());
    }
}
