//! Synthetic stratified survival data for the three simulation settings,
//! and estimation-quality metrics against the known coefficient curves.
//!
//! * Setting 1: AR(1) Gaussian covariates (lag-one correlation 0.6) with
//!   `beta_2(t) = sin(3 pi t / 4)`, `beta_4(t) = -(t/3)^2 exp(t/2)` and
//!   constant effects elsewhere.
//! * Setting 2: as Setting 1 with independent binary covariates whose
//!   prevalences are evenly spaced on [0.05, 0.2].
//! * Setting 3: two AR(1) covariates, `beta_1 = 1` and
//!   `beta_2(t) = gamma sin(3 pi t / 4)`.
//!
//! Death times come from an exponential baseline hazard of 0.5 through the
//! inverse cumulative hazard; censoring is Uniform(0, 3).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::optimizers::FitResult;

pub const AR_CORRELATION: f64 = 0.6;
pub const BASELINE_HAZARD: f64 = 0.5;
pub const CENSOR_MAX: f64 = 3.0;
/// Trapezoid step for the cumulative hazard.
pub const HAZARD_STEP: f64 = 1e-3;
/// Width at which the in-cell bisection stops; well below the 1e-8
/// accuracy required of the inverted cumulative hazard.
const BISECTION_WIDTH: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CoefficientTag {
    Constant(f64),
    SinTv,
    PolyExpTv,
    GammaSinTv,
}

pub fn true_beta(tag: CoefficientTag, t: f64, gamma: f64) -> f64 {
    match tag {
        CoefficientTag::Constant(c) => c,
        CoefficientTag::SinTv => (3.0 * PI * t / 4.0).sin(),
        CoefficientTag::PolyExpTv => -(t / 3.0).powi(2) * (t / 2.0).exp(),
        CoefficientTag::GammaSinTv => gamma * (3.0 * PI * t / 4.0).sin(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub setting: u8,
    pub n: usize,
    pub n_strata: usize,
    pub n_covariates: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Random stream within `seed`; replicate `r` uses stream `r`.
    pub stream: u64,
    pub coefficients: Vec<CoefficientTag>,
    pub baseline_hazard: f64,
}

impl ScenarioSpec {
    pub fn new(
        setting: u8,
        n: usize,
        n_covariates: usize,
        n_strata: usize,
        gamma: f64,
        seed: u64,
    ) -> Result<Self> {
        let coefficients = match setting {
            1 | 2 => (0..n_covariates)
                .map(|p| match p {
                    0 => CoefficientTag::Constant(1.0),
                    1 => CoefficientTag::SinTv,
                    2 => CoefficientTag::Constant(-1.0),
                    3 => CoefficientTag::PolyExpTv,
                    _ => CoefficientTag::Constant(0.0),
                })
                .collect(),
            3 => {
                if n_covariates != 2 {
                    return Err(Error::Usage(format!(
                        "setting 3 uses exactly two covariates, got {n_covariates}"
                    )));
                }
                vec![CoefficientTag::Constant(1.0), CoefficientTag::GammaSinTv]
            }
            other => return Err(Error::Usage(format!("unknown setting {other}"))),
        };
        let spec = Self {
            setting,
            n,
            n_strata,
            n_covariates,
            gamma,
            seed,
            stream: 0,
            coefficients,
            baseline_hazard: BASELINE_HAZARD,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.setting) {
            return Err(Error::Usage(format!("unknown setting {}", self.setting)));
        }
        if self.n_strata == 0 || self.n < self.n_strata {
            return Err(Error::Usage(format!(
                "need n >= J >= 1, got n = {}, J = {}",
                self.n, self.n_strata
            )));
        }
        if self.n_covariates == 0 || self.coefficients.len() != self.n_covariates {
            return Err(Error::Usage(format!(
                "{} coefficient tags for {} covariates",
                self.coefficients.len(),
                self.n_covariates
            )));
        }
        if !(0.0..=3.0).contains(&self.gamma) {
            return Err(Error::Usage(format!("gamma must lie in [0, 3], got {}", self.gamma)));
        }
        Ok(())
    }

    /// Same scenario on the independent stream of replicate `r`.
    pub fn replicate(&self, r: u64) -> Self {
        Self {
            stream: r,
            ..self.clone()
        }
    }

    pub fn true_beta(&self, p: usize, t: f64) -> f64 {
        true_beta(self.coefficients[p], t, self.gamma)
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }

    fn prevalences(&self) -> Vec<f64> {
        let p = self.n_covariates;
        if p == 1 {
            return vec![0.05];
        }
        (0..p).map(|j| 0.05 + 0.15 * j as f64 / (p - 1) as f64).collect()
    }
}

/// Row-major `n x P` covariates for the scenario's setting.
pub fn draw_covariates<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Vec<f64> {
    let (n, p) = (spec.n, spec.n_covariates);
    let mut x = Vec::with_capacity(n * p);
    match spec.setting {
        2 => {
            let prevalences = spec.prevalences();
            for _ in 0..n {
                for &q in &prevalences {
                    x.push(if rng.random::<f64>() < q { 1.0 } else { 0.0 });
                }
            }
        }
        _ => {
            let innovation = (1.0 - AR_CORRELATION * AR_CORRELATION).sqrt();
            for _ in 0..n {
                let mut prev: f64 = rng.sample(StandardNormal);
                x.push(prev);
                for _ in 1..p {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = AR_CORRELATION * prev + innovation * z;
                    x.push(prev);
                }
            }
        }
    }
    x
}

/// True coefficients tabulated on the trapezoid grid `0, h, 2h, .., horizon`.
#[derive(Debug, Clone)]
pub struct BetaGrid {
    n_covariates: usize,
    n_steps: usize,
    values: Vec<f64>,
}

impl BetaGrid {
    pub fn new(spec: &ScenarioSpec, horizon: f64) -> Self {
        let n_steps = (horizon / HAZARD_STEP).round() as usize;
        let p = spec.n_covariates;
        let mut values = Vec::with_capacity((n_steps + 1) * p);
        for g in 0..=n_steps {
            let t = g as f64 * HAZARD_STEP;
            values.extend((0..p).map(|j| spec.true_beta(j, t)));
        }
        Self {
            n_covariates: p,
            n_steps,
            values,
        }
    }

    fn log_relative_hazard(&self, x: &[f64], g: usize) -> f64 {
        let row = &self.values[g * self.n_covariates..(g + 1) * self.n_covariates];
        x.iter().zip(row).map(|(a, b)| a * b).sum()
    }
}

/// Solves `Lambda(D) = target` where `Lambda` is the trapezoid integral of
/// `baseline * exp(x' beta(s))`. `None` if `D` lies beyond the grid horizon.
pub fn death_time(x: &[f64], grid: &BetaGrid, baseline: f64, target: f64) -> Option<f64> {
    let h = HAZARD_STEP;
    let hazard = |g: usize| baseline * grid.log_relative_hazard(x, g).exp();
    let mut cumulative = 0.0;
    let mut f_lo = hazard(0);
    for g in 0..grid.n_steps {
        let f_hi = hazard(g + 1);
        let increment = 0.5 * h * (f_lo + f_hi);
        if cumulative + increment >= target {
            // Integrand is linear inside the cell.
            let within = |u: f64| cumulative + f_lo * u + (f_hi - f_lo) * u * u / (2.0 * h);
            let (mut lo, mut hi) = (0.0, h);
            let mut mid = 0.5 * h;
            while hi - lo > BISECTION_WIDTH {
                mid = 0.5 * (lo + hi);
                let value = within(mid);
                if value == target {
                    break;
                }
                if value < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(g as f64 * h + mid);
        }
        cumulative += increment;
        f_lo = f_hi;
    }
    None
}

/// Observed time and event flag for one subject. Death times past the
/// censoring support are capped there and counted as censored.
pub fn draw_survival_time<R: Rng>(x: &[f64], spec: &ScenarioSpec, rng: &mut R) -> (f64, bool) {
    draw_with_grid(x, spec, &BetaGrid::new(spec, CENSOR_MAX), rng)
}

fn draw_with_grid<R: Rng>(
    x: &[f64],
    spec: &ScenarioSpec,
    grid: &BetaGrid,
    rng: &mut R,
) -> (f64, bool) {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let censor = CENSOR_MAX * rng.random::<f64>();
    let death = death_time(x, grid, spec.baseline_hazard, -u.ln()).unwrap_or(CENSOR_MAX);
    if death < censor {
        (death, true)
    } else {
        (censor.min(CENSOR_MAX), false)
    }
}

/// Full dataset for the scenario; strata are assigned round-robin.
pub fn generate(spec: &ScenarioSpec) -> Result<SurvivalDataset> {
    spec.validate()?;
    let mut rng = spec.rng();
    let covariates = draw_covariates(spec, &mut rng);
    let grid = BetaGrid::new(spec, CENSOR_MAX);
    let p = spec.n_covariates;
    let mut time = Vec::with_capacity(spec.n);
    let mut status = Vec::with_capacity(spec.n);
    for row in covariates.chunks(p) {
        let (t, d) = draw_with_grid(row, spec, &grid, &mut rng);
        time.push(t);
        status.push(d);
    }
    let strata = (0..spec.n)
        .map(|i| (i % spec.n_strata + 1).to_string())
        .collect();
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    SurvivalDataset::new(time, status, strata, covariates, names)
}

/// 100 equispaced points on [0.05, 2.8].
pub fn metrics_grid() -> Vec<f64> {
    (0..100).map(|i| 0.05 + 2.75 * i as f64 / 99.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Per covariate: grid mean of (replicate-mean estimate - truth).
    pub bias: Vec<f64>,
    /// Per covariate: grid mean of the replicate mean squared error.
    pub imse: Vec<f64>,
    pub mean_abs_bias: f64,
    pub mean_imse: f64,
    pub rejection_rate: Option<f64>,
    pub fit_time_sec: Option<f64>,
}

/// `estimates[r][p][g]` is replicate `r`'s estimate of covariate `p` at grid
/// point `g`; `truth[p][g]` the true value.
pub fn metrics_from_estimates(estimates: &[Vec<Vec<f64>>], truth: &[Vec<f64>]) -> Result<MetricsReport> {
    if estimates.is_empty() {
        return Err(Error::InvalidData("no replicates to summarize".into()));
    }
    let n_rep = estimates.len() as f64;
    let mut bias = Vec::with_capacity(truth.len());
    let mut imse = Vec::with_capacity(truth.len());
    for (p, true_curve) in truth.iter().enumerate() {
        let mut b = 0.0;
        let mut m = 0.0;
        for (g, &target) in true_curve.iter().enumerate() {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for rep in estimates {
                let err = rep.get(p).and_then(|c| c.get(g)).ok_or_else(|| {
                    Error::InvalidData("estimate shape does not match the truth".into())
                })? - target;
                sum += err;
                sq += err * err;
            }
            b += sum / n_rep;
            m += sq / n_rep;
        }
        let n_grid = true_curve.len() as f64;
        bias.push(b / n_grid);
        imse.push(m / n_grid);
    }
    let p = truth.len() as f64;
    Ok(MetricsReport {
        mean_abs_bias: bias.iter().map(|b| b.abs()).sum::<f64>() / p,
        mean_imse: imse.iter().sum::<f64>() / p,
        bias,
        imse,
        rejection_rate: None,
        fit_time_sec: None,
    })
}

pub fn true_curves(spec: &ScenarioSpec, grid: &[f64]) -> Vec<Vec<f64>> {
    (0..spec.n_covariates)
        .map(|p| grid.iter().map(|&t| spec.true_beta(p, t)).collect())
        .collect()
}

pub fn fitted_curves(fit: &FitResult, grid: &[f64]) -> Vec<Vec<f64>> {
    (0..fit.theta.n_covariates())
        .map(|p| grid.iter().map(|&t| fit.beta(p, t)).collect())
        .collect()
}

/// Bias and IMSE of fitted curves (original scale) over `grid`.
pub fn metrics(fits: &[FitResult], spec: &ScenarioSpec, grid: &[f64]) -> Result<MetricsReport> {
    if let Some(f) = fits.iter().find(|f| f.theta.n_covariates() != spec.n_covariates) {
        return Err(Error::InvalidData(format!(
            "fit has {} covariates, scenario has {}",
            f.theta.n_covariates(),
            spec.n_covariates
        )));
    }
    let estimates: Vec<_> = fits.iter().map(|f| fitted_curves(f, grid)).collect();
    metrics_from_estimates(&estimates, &true_curves(spec, grid))
}
