use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use mvdr_clt::config::{prediction_json, ConfigError, ExperimentConfig};
use mvdr_clt::linalg::ComplexMatrix;
use mvdr_clt::model::{self, SpatialSpec};
use mvdr_clt::montecarlo::{self, McConfig, McError};
use mvdr_clt::{io, stats, CanonicalModel, ModelPrediction, PerformanceMetric};

#[derive(Parser)]
#[command(
    name = "mvdr-clt",
    version,
    about = "Asymptotic SNR laws for diagonally loaded MVDR filters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print deterministic equivalents, CLT variances and bound checks as JSON.
    Predict {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the Monte Carlo experiment and write the per-replication CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores); does not affect the output.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Simulate and test the standardized metric against N(0, 1).
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// KS threshold; defaults to 3/√reps (0.03 at 10,000 reps).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Unloaded, temporally white case: KS of the normalized SNR against
    /// Beta(N+2−M, M−1).
    BetaOracle {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 20_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Take the spatial scenario from this config instead of the default ULA.
        #[arg(long)]
        config: Option<PathBuf>,
        /// KS threshold; defaults to 0.02·√(20000/reps).
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Histogram of a sample CSV with the asymptotic Gaussian density overlay.
    Hist {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the config's `bins`.
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Statistical,
    Config(anyhow::Error),
    Numerical(anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Statistical => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<McError> for Failure {
    fn from(e: McError) -> Self {
        match e {
            McError::InvalidConfig(_) => Failure::Config(e.into()),
            _ => Failure::Numerical(e.into()),
        }
    }
}

type Outcome = Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn numerical(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Numerical(e.into())
}

struct Prepared {
    config: ExperimentConfig,
    metric: std::sync::Arc<dyn PerformanceMetric>,
    model: CanonicalModel,
    prediction: ModelPrediction,
}

fn prepare(path: &Path) -> Result<Prepared, Failure> {
    let config = ExperimentConfig::load(path)?;
    let metric = config.metric()?;
    let model = model::canonicalize(&config.scenario()?).map_err(|e| match e {
        model::ModelError::Invalid(_) => config_err(e),
        model::ModelError::Linalg(_) => numerical(e),
    })?;
    let prediction = mvdr_clt::predict(&model).map_err(numerical)?;
    for check in prediction.bounds.failures() {
        warn!(
            "bound check {} failed: value {:e}, {:?} bound {:e}",
            check.name, check.value, check.kind, check.bound
        );
    }
    Ok(Prepared {
        config,
        metric,
        model,
        prediction,
    })
}

fn write_file(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))
        .map_err(Failure::Config)
}

fn print_json(value: &serde_json::Value) -> Outcome {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).map_err(numerical)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(numerical(e)),
        _ => Ok(()),
    }
}

fn predict(config: &Path) -> Outcome {
    let p = prepare(config)?;
    print_json(&prediction_json(
        &p.config,
        &p.model,
        &p.prediction,
        p.metric.as_ref(),
    ))
}

fn simulate_samples(p: &Prepared, workers: usize) -> Result<montecarlo::McSamples, Failure> {
    let start = std::time::Instant::now();
    let samples = montecarlo::run_experiment(&McConfig {
        canonical: p.model.clone(),
        reps: p.config.reps,
        seed: p.config.seed,
        workers,
    })?;
    info!(
        "{} replications of M={} N={} ({}) in {:.2?}",
        samples.len(),
        p.model.m,
        p.model.n,
        p.config.mode,
        start.elapsed()
    );
    Ok(samples)
}

fn simulate(config: &Path, out: &Path, workers: usize) -> Outcome {
    let p = prepare(config)?;
    let samples = simulate_samples(&p, workers)?;
    write_file(out, &io::samples_csv(&samples))?;
    info!("wrote {}", out.display());
    Ok(())
}

fn validate(config: &Path, threshold: Option<f64>, workers: usize) -> Outcome {
    let p = prepare(config)?;
    let samples = simulate_samples(&p, workers)?;
    let values = samples
        .a
        .iter()
        .zip(&samples.b)
        .map(|(&a, &b)| p.metric.realized(a, b))
        .collect::<Result<Vec<f64>, _>>()?;
    let threshold = threshold.unwrap_or(3.0 / (p.config.reps as f64).sqrt());
    let pred = &p.prediction.prediction;
    let n = p.model.n;
    let report = stats::ValidationReport::evaluate(
        p.metric.name(),
        &values,
        p.metric.center(pred),
        p.metric.variance(pred),
        n,
        threshold,
        (0.85, 1.15),
        p.prediction.bounds.all_passed,
    )
    .and_then(|r| r.with_bias_diagnostic(&values, p.metric.second_order_bias(pred, n), n))
    .map_err(numerical)?;
    info!(
        "KS {:.4} (threshold {:.4}), variance ratio {:.3}: {}",
        report.ks_normal,
        report.ks_threshold,
        report.variance_ratio,
        if report.passed { "pass" } else { "fail" }
    );
    print_json(&serde_json::to_value(&report).map_err(numerical)?)?;
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Statistical)
    }
}

/// Default spatial scenario for the Beta check: the ULA used by the shipped
/// configs.
fn default_spatial() -> SpatialSpec {
    SpatialSpec::Ula {
        soi_angle_deg: 0.0,
        interferer_angles_deg: vec![-20.0, 50.0, 55.0],
        interferer_power: 10.0,
        noise_power: 1.0,
    }
}

#[allow(clippy::too_many_arguments)]
fn beta_oracle(
    m: usize,
    n: usize,
    reps: usize,
    seed: u64,
    config: Option<&Path>,
    threshold: Option<f64>,
    workers: usize,
) -> Outcome {
    if m < 2 || n < m + 1 {
        return Err(config_err(anyhow!(
            "beta oracle needs M ≥ 2 and N ≥ M + 1 (got M = {m}, N = {n})"
        )));
    }
    if reps < 2 {
        return Err(config_err(anyhow!(
            "beta oracle needs at least 2 replications"
        )));
    }
    let spatial = match config {
        Some(path) => ExperimentConfig::load(path)?.spatial,
        None => default_spatial(),
    };
    let (r0, s): (ComplexMatrix, _) = model::build_spatial(&spatial, m).map_err(config_err)?;
    let xs = montecarlo::beta_oracle_run(m, n, &r0, &s, reps, seed, workers)?;
    let (p, q) = ((n + 2 - m) as f64, (m - 1) as f64);
    let threshold = threshold.unwrap_or(0.02 * (20_000.0 / reps as f64).sqrt());
    // beta_oracle_run only returns samples inside (0, 1), and p, q > 0.
    let ks = stats::ks_unsorted(&xs, |x| {
        stats::beta_cdf(x, p, q).expect("sample inside (0, 1)")
    })
    .map_err(numerical)?;
    let (mean, _) = stats::mean_var(&xs).map_err(numerical)?;
    let se = stats::standard_error(&xs).map_err(numerical)?;
    let expected = p / (p + q);
    let passed = ks <= threshold && (mean - expected).abs() <= 4.0 * se;
    info!(
        "Beta({p}, {q}) KS {ks:.4} (threshold {threshold:.4}): {}",
        if passed { "pass" } else { "fail" }
    );
    print_json(&json!({
        "M": m,
        "N": n,
        "reps": reps,
        "seed": seed,
        "beta_p": p,
        "beta_q": q,
        "ks": ks,
        "ks_threshold": threshold,
        "empirical_mean": mean,
        "expected_mean": expected,
        "standard_error": se,
        "passed": passed,
    }))?;
    if passed {
        Ok(())
    } else {
        Err(Failure::Statistical)
    }
}

fn hist(samples: &Path, config: &Path, bins: Option<usize>, out: &Path) -> Outcome {
    let p = prepare(config)?;
    let text = fs::read_to_string(samples)
        .with_context(|| format!("cannot read {}", samples.display()))
        .map_err(Failure::Config)?;
    let table = io::parse_samples_csv(&text).map_err(config_err)?;
    let values = if p.metric.name() == "mse" {
        if table.mse.is_empty() {
            return Err(config_err(anyhow!("sample file has no mse column")));
        }
        table.mse
    } else {
        table.snr
    };
    let bins = bins.unwrap_or(p.config.bins);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = if hi > lo {
        (lo, hi)
    } else {
        stats::default_range(&values).map_err(numerical)?
    };
    let h = stats::histogram(&values, bins, range).map_err(config_err)?;
    let pred = &p.prediction.prediction;
    let center = p.metric.center(pred);
    let var = p.metric.variance(pred) / p.model.n as f64;
    write_file(
        out,
        &io::histogram_csv(&h, |x| stats::gaussian_pdf(x, center, var)),
    )?;
    info!("wrote {} bins to {}", bins, out.display());
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Predict { config } => predict(&config),
        Command::Simulate {
            config,
            out,
            workers,
        } => simulate(&config, &out, workers),
        Command::Validate {
            config,
            threshold,
            workers,
        } => validate(&config, threshold, workers),
        Command::BetaOracle {
            m,
            n,
            reps,
            seed,
            config,
            threshold,
            workers,
        } => beta_oracle(m, n, reps, seed, config.as_deref(), threshold, workers),
        Command::Hist {
            samples,
            config,
            bins,
            out,
        } => hist(&samples, &config, bins, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Statistical => {}
                Failure::Config(e) => eprintln!("error: {e:#}"),
                Failure::Numerical(e) => eprintln!("numerical failure: {e:#}"),
            }
            ExitCode::from(failure.exit_code())
        }
    }
}
