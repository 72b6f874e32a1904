//! Command-line front end: `fit`, `simulate`, `bench` and `cv`.
//!
//! Every subcommand accepts `--config <json>`; keys in the file use the
//! same names as the resolved config echoed into the outputs, and explicit
//! flags win over the file. Outputs are written to a temporary file in the
//! destination directory and renamed into place, so a failed run never
//! leaves partial files behind.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::inference::{
    covariance_from_information, cross_validate_k, curve_with_bands, information_matrix,
    test_time_variation, CurveEstimate, CvReport, InformationKind, TestReport,
};
use crate::likelihood::DEFAULT_HESSIAN_GUARD;
use crate::optimizers::{FitProblem, FitResult, MmsaConfig, Optimizer};
use crate::simulate::{generate, metrics, metrics_grid, ScenarioSpec};
use crate::spline::DEFAULT_DEGREE;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable holding the worker-thread count for `bench`.
pub const THREADS_ENV: &str = "TVCOX_THREADS";
const CURVE_POINTS: usize = 101;

#[derive(Debug, Parser)]
#[command(name = "tvcox", version, about = "Time-varying stratified Cox models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model, test each coefficient for time variation, write curves.
    Fit(FitArgs),
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Compare optimizers on paired simulated replicates.
    Bench(BenchArgs),
    /// Choose the number of basis functions by cross-validation.
    Cv(CvArgs),
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[arg(long = "K")]
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    ridge: Option<f64>,
    #[arg(long = "hessian-guard")]
    #[serde(skip_serializing_if = "Option::is_none")]
    hessian_guard: Option<usize>,
    /// Information matrix for the Wald tests and bands: empirical|observed.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    information: Option<InformationKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    standardize: Option<bool>,
    #[arg(long = "stop-on-loglik-change")]
    #[serde(skip_serializing_if = "Option::is_none")]
    stop_on_loglik_change: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    setting: Option<u8>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long = "P")]
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[arg(long = "J")]
    #[serde(rename = "J", skip_serializing_if = "Option::is_none")]
    j: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct BenchArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    setting: Option<u8>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[arg(long = "P")]
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    p: Option<usize>,
    #[arg(long = "J")]
    #[serde(rename = "J", skip_serializing_if = "Option::is_none")]
    j: Option<usize>,
    #[arg(long = "K")]
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    optimizers: Option<Vec<Optimizer>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    replicates: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    eta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long = "hessian-guard")]
    #[serde(skip_serializing_if = "Option::is_none")]
    hessian_guard: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    level: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct CvArgs {
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    data: Option<String>,
    #[arg(long = "K-grid", value_delimiter = ',')]
    #[serde(rename = "K_grid", skip_serializing_if = "Option::is_none")]
    k_grid: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    folds: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    standardize: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    out: Option<String>,
}

fn default_degree() -> usize {
    DEFAULT_DEGREE
}
fn default_optimizer() -> Optimizer {
    Optimizer::Mmsa
}
fn default_nu() -> f64 {
    MmsaConfig::default().learning_rate
}
fn default_eta() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    MmsaConfig::default().tol
}
fn default_max_iter() -> usize {
    MmsaConfig::default().max_iterations
}
fn default_seed() -> u64 {
    1
}
fn default_ridge() -> f64 {
    MmsaConfig::default().ridge
}
fn default_guard() -> usize {
    DEFAULT_HESSIAN_GUARD
}
fn default_information() -> InformationKind {
    InformationKind::Empirical
}
fn yes() -> bool {
    true
}
fn default_out_dir() -> String {
    ".".into()
}
fn default_j() -> usize {
    1
}
fn default_gamma() -> f64 {
    1.0
}
fn default_level() -> f64 {
    0.05
}
fn default_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_guard")]
    pub hessian_guard: usize,
    #[serde(default = "default_information")]
    pub information: InformationKind,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default = "yes")]
    pub stop_on_loglik_change: bool,
    #[serde(default = "default_out_dir")]
    pub out: String,
}

impl FitConfig {
    fn optimizer_config(&self) -> MmsaConfig {
        MmsaConfig {
            learning_rate: self.nu,
            subsample_fraction: self.eta,
            max_iterations: self.max_iter,
            tol: self.tol,
            ridge: self.ridge,
            seed: self.seed,
            stop_on_loglik_change: self.stop_on_loglik_change,
            hessian_guard: self.hessian_guard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub setting: u8,
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "J", default = "default_j")]
    pub j: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub seed: u64,
    pub out: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub setting: u8,
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "J", default = "default_j")]
    pub j: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    pub optimizers: Vec<Optimizer>,
    pub replicates: u64,
    pub seed: u64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_guard")]
    pub hessian_guard: usize,
    /// Significance level behind `rejection_rate`.
    #[serde(default = "default_level")]
    pub level: f64,
    pub out: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvConfig {
    pub data: String,
    #[serde(rename = "K_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    pub seed: u64,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "yes")]
    pub standardize: bool,
    #[serde(default = "default_out_dir")]
    pub out: String,
}

/// Config-file keys overlaid with the flags that were given.
fn resolve<A: Serialize, C: DeserializeOwned>(file: Option<&Path>, flags: &A) -> Result<C> {
    let mut merged = match file {
        Some(path) => match serde_json::from_str::<Value>(&std::fs::read_to_string(path)?)? {
            Value::Object(map) => map,
            _ => return Err(Error::Usage(format!("{} is not a JSON object", path.display()))),
        },
        None => Map::new(),
    };
    if let Value::Object(overlay) = serde_json::to_value(flags)? {
        merged.extend(overlay);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Usage(e.to_string()))
}

/// Writes `contents` next to `path` and renames it into place.
fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `# tvcox <version> <config>` comment line heading the tabular outputs.
fn preamble<C: Serialize>(config: &C) -> Result<Vec<u8>> {
    Ok(format!("# tvcox {VERSION} {}\n", serde_json::to_string(config)?).into_bytes())
}

#[derive(Debug, Serialize)]
struct FitOutput<'a> {
    version: &'static str,
    config: &'a FitConfig,
    fit: &'a FitResult,
    tests: &'a TestReport,
    /// Wall-clock seconds spent in the optimizer.
    elapsed_sec: f64,
}

fn tests_csv(report: &TestReport, config: &FitConfig) -> Result<Vec<u8>> {
    let mut buf = preamble(config)?;
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        wtr.write_record(["covariate", "statistic", "df", "p_value", "information"])?;
        for e in &report.entries {
            wtr.write_record([
                e.name.clone(),
                e.statistic.to_string(),
                e.df.to_string(),
                e.p_value.to_string(),
                report.information.name().to_string(),
            ])?;
        }
        wtr.flush()?;
    }
    Ok(buf)
}

fn curve_grid(fit: &FitResult) -> Vec<f64> {
    let (lo, hi) = fit.spec.domain();
    (0..CURVE_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect()
}

/// Exit status of a completed fit: 0 when converged, 2 at the iteration cap.
pub fn cmd_fit(config: &FitConfig) -> Result<i32> {
    let data = SurvivalDataset::load_csv(&config.data)?;
    let problem = FitProblem::new(&data, config.degree, config.k, config.standardize)?;
    let start = Instant::now();
    let fit = config
        .optimizer
        .fit(&problem, &config.optimizer_config(), None)?;
    let elapsed_sec = start.elapsed().as_secs_f64();

    let tests = if config.k >= 2 {
        test_time_variation(&problem, &fit, config.information, config.hessian_guard)?
    } else {
        TestReport {
            information: config.information,
            convergence: Some(fit.reason),
            entries: Vec::new(),
        }
    };
    let information = information_matrix(
        problem.kernel(),
        &fit.theta,
        config.information,
        config.hessian_guard,
    )?;
    let curves: CurveEstimate = curve_with_bands(
        &fit.theta,
        &covariance_from_information(&information)?,
        &fit.spec,
        &curve_grid(&fit),
        &fit.standardization,
        &fit.covariate_names,
    )?;

    let output = FitOutput {
        version: VERSION,
        config,
        fit: &fit,
        tests: &tests,
        elapsed_sec,
    };
    let mut fit_json = serde_json::to_vec_pretty(&output)?;
    fit_json.push(b'\n');
    let mut curves_csv = preamble(config)?;
    curves.write_csv(&mut curves_csv)?;
    let tests_csv = tests_csv(&tests, config)?;

    let dir = Path::new(&config.out);
    write_atomic(&dir.join("fit.json"), &fit_json)?;
    write_atomic(&dir.join("curves.csv"), &curves_csv)?;
    write_atomic(&dir.join("tests.csv"), &tests_csv)?;
    Ok(if fit.converged { 0 } else { 2 })
}

/// The dataset goes to `out` in the plain input schema; version and config
/// go to the sidecar `<out>.json`.
pub fn cmd_simulate(config: &SimulateConfig) -> Result<i32> {
    let spec = ScenarioSpec::new(config.setting, config.n, config.p, config.j, config.gamma, config.seed)?;
    let data = generate(&spec)?;
    let mut csv = Vec::new();
    data.write_csv(&mut csv)?;
    let meta = serde_json::json!({
        "version": VERSION,
        "config": config,
        "scenario": spec,
        "n_events": data.n_events(),
    });
    let mut meta_json = serde_json::to_vec_pretty(&meta)?;
    meta_json.push(b'\n');
    write_atomic(Path::new(&config.out), &csv)?;
    write_atomic(Path::new(&format!("{}.json", config.out)), &meta_json)?;
    Ok(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub replicate: u64,
    pub scenario: String,
    pub optimizer: Optimizer,
    pub n: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub time_sec: f64,
    pub iterations: Option<usize>,
    pub loglik: Option<f64>,
    pub bias: Option<f64>,
    pub imse: Option<f64>,
    pub rejection_rate: Option<f64>,
    pub status: String,
}

fn bench_replicate(config: &BenchConfig, base: &ScenarioSpec, r: u64) -> Vec<BenchRow> {
    let spec = base.replicate(r);
    let scenario = format!("setting{}", config.setting);
    let row = |optimizer, time_sec, status: String| BenchRow {
        replicate: r,
        scenario: scenario.clone(),
        optimizer,
        n: config.n,
        p: config.p,
        k: config.k,
        time_sec,
        iterations: None,
        loglik: None,
        bias: None,
        imse: None,
        rejection_rate: None,
        status,
    };
    let problem = generate(&spec).and_then(|d| FitProblem::new(&d, config.degree, config.k, true));
    let problem = match problem {
        Ok(p) => p,
        Err(e) => {
            return config
                .optimizers
                .iter()
                .map(|&o| row(o, 0.0, format!("error:{}", e.code())))
                .collect()
        }
    };
    let fit_config = MmsaConfig {
        learning_rate: config.nu,
        subsample_fraction: config.eta,
        max_iterations: config.max_iter,
        tol: config.tol,
        seed: config.seed,
        hessian_guard: config.hessian_guard,
        ..MmsaConfig::default()
    };
    let grid = metrics_grid();
    config
        .optimizers
        .iter()
        .map(|&optimizer| {
            let start = Instant::now();
            let outcome = optimizer.fit(&problem, &fit_config, None);
            let time_sec = start.elapsed().as_secs_f64();
            let evaluated = outcome.and_then(|fit| {
                let m = metrics(std::slice::from_ref(&fit), &spec, &grid)?;
                let rejection_rate = if config.k >= 2 {
                    let t = test_time_variation(
                        &problem,
                        &fit,
                        InformationKind::Empirical,
                        config.hessian_guard,
                    )?;
                    let rejected = t.entries.iter().filter(|e| e.p_value < config.level).count();
                    Some(rejected as f64 / t.entries.len() as f64)
                } else {
                    None
                };
                Ok((fit, m, rejection_rate))
            });
            match evaluated {
                Ok((fit, m, rejection_rate)) => BenchRow {
                    iterations: Some(fit.iterations),
                    loglik: Some(fit.loglik),
                    bias: Some(m.mean_abs_bias),
                    imse: Some(m.mean_imse),
                    rejection_rate,
                    ..row(
                        optimizer,
                        time_sec,
                        if fit.converged { "converged" } else { "max-iterations" }.into(),
                    )
                },
                Err(e) => row(optimizer, time_sec, format!("error:{}", e.code())),
            }
        })
        .collect()
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let threads = raw
            .parse::<usize>()
            .map_err(|_| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker threads: {e}")))
}

pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.optimizers.is_empty() || config.replicates == 0 {
        return Err(Error::Usage("bench needs at least one optimizer and one replicate".into()));
    }
    let base = ScenarioSpec::new(config.setting, config.n, config.p, config.j, config.gamma, config.seed)?;
    let rows: Vec<Vec<BenchRow>> = thread_pool()?.install(|| {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| bench_replicate(config, &base, r))
            .collect()
    });
    // collect() keeps replicate order and each replicate lists optimizers in
    // the requested order, so rows come out sorted regardless of scheduling.
    Ok(rows.into_iter().flatten().collect())
}

/// Exit 0 when some optimizer succeeded on every replicate, else 1.
pub fn cmd_bench(config: &BenchConfig) -> Result<i32> {
    let rows = run_bench(config)?;
    let mut buf = preamble(config)?;
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        for row in &rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
    }
    write_atomic(Path::new(&config.out), &buf)?;
    let clean = config.optimizers.iter().any(|o| {
        rows.iter()
            .filter(|r| r.optimizer == *o)
            .all(|r| !r.status.starts_with("error"))
    });
    Ok(if clean { 0 } else { 1 })
}

pub fn run_cv(config: &CvConfig) -> Result<CvReport> {
    let data = SurvivalDataset::load_csv(&config.data)?;
    let fit_config = MmsaConfig {
        learning_rate: config.nu,
        tol: config.tol,
        max_iterations: config.max_iter,
        seed: config.seed,
        ..MmsaConfig::default()
    };
    cross_validate_k(
        &data,
        &config.k_grid,
        config.folds,
        config.degree,
        &fit_config,
        config.standardize,
    )
}

pub fn cmd_cv(config: &CvConfig) -> Result<i32> {
    let report = run_cv(config)?;
    let mut buf = preamble(config)?;
    {
        let mut wtr = csv::Writer::from_writer(&mut buf);
        let mut header = vec!["K".to_string(), "score".into(), "chosen".into()];
        header.extend((1..=report.folds).map(|f| format!("fold{f}")));
        wtr.write_record(&header)?;
        for e in &report.entries {
            let mut record = vec![
                e.n_basis.to_string(),
                e.score.to_string(),
                u8::from(e.n_basis == report.chosen).to_string(),
            ];
            record.extend(e.fold_scores.iter().map(f64::to_string));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
    }
    write_atomic(&Path::new(&config.out).join("cv.csv"), &buf)?;
    for e in &report.entries {
        println!("K={} cv={}", e.n_basis, e.score);
    }
    println!("chosen K={}", report.chosen);
    Ok(0)
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Fit(a) => cmd_fit(&resolve(a.config.as_deref(), &a)?),
        Command::Simulate(a) => cmd_simulate(&resolve(a.config.as_deref(), &a)?),
        Command::Bench(a) => cmd_bench(&resolve(a.config.as_deref(), &a)?),
        Command::Cv(a) => cmd_cv(&resolve(a.config.as_deref(), &a)?),
    }
}

fn report_error(code: &str, message: &str) {
    let flat: Vec<&str> = message.split_whitespace().collect();
    eprintln!("error[{code}]: {}", flat.join(" "));
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            report_error("USAGE", &e.to_string());
            return 1;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            report_error(e.code(), &e.to_string());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"data": "a.csv", "K": 4, "nu": 0.2, "seed": 9}"#).unwrap();
        let cli = Cli::try_parse_from(["tvcox", "fit", "--config", path.to_str().unwrap(), "--K", "6"])
            .unwrap();
        let Command::Fit(args) = cli.command else { panic!() };
        let config: FitConfig = resolve(args.config.as_deref(), &args).unwrap();
        assert_eq!(config.k, 6);
        assert_eq!(config.nu, 0.2);
        assert_eq!(config.seed, 9);
        assert_eq!(config.degree, 3);
        assert_eq!(config.optimizer, Optimizer::Mmsa);
    }

    #[test]
    fn missing_required_key_is_usage() {
        let cli = Cli::try_parse_from(["tvcox", "fit", "--K", "4"]).unwrap();
        let Command::Fit(args) = cli.command else { panic!() };
        let err = resolve::<_, FitConfig>(None, &args).unwrap_err();
        assert_eq!(err.code(), "USAGE");
    }

    #[test]
    fn unknown_file_key_is_usage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"data": "a.csv", "K": 4, "bogus": 1}"#).unwrap();
        let err = resolve::<_, FitConfig>(Some(&path), &serde_json::json!({})).unwrap_err();
        assert_eq!(err.code(), "USAGE");
    }

    #[test]
    fn list_flags_split_on_commas() {
        let cli = Cli::try_parse_from([
            "tvcox", "cv", "--data", "x.csv", "--K-grid", "4,6,8", "--seed", "1",
        ])
        .unwrap();
        let Command::Cv(args) = cli.command else { panic!() };
        assert_eq!(args.k_grid, Some(vec![4, 6, 8]));
    }

    #[test]
    fn atomic_write_replaces_contents() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/out.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }

    #[test]
    fn bad_arguments_exit_one() {
        assert_eq!(run(["tvcox", "fit", "--K", "notanumber"]), 1);
        assert_eq!(run(["tvcox", "--help"]), 0);
    }
}
