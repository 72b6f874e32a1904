//! Fitting routines driving the partial-likelihood kernel: the block-wise
//! MM steepest ascent (MMSA) and the comparison optimizers.

mod adagrad;
mod ascent;
mod coordinate;
mod gradient;
mod mmsa;
mod newton;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Standardization, SurvivalDataset};
use crate::error::{Error, Result};
use crate::likelihood::{CoefficientMatrix, CoxKernel, DEFAULT_HESSIAN_GUARD};
use crate::spline::{make_spec, SplineSpec};

pub use adagrad::adagrad_fit;
pub use ascent::{ascent_eigenvalue, surrogate_value, verify_ascent_condition};
pub use coordinate::coordinate_ascent_fit;
pub use gradient::gradient_ascent_fit;
pub use mmsa::{literal_directional_derivative, mmsa_block_quantities, mmsa_fit, BlockStep};
pub use newton::newton_fit;

/// Tuning shared by MMSA and the baselines. Baselines ignore what does not
/// apply to them (e.g. Newton ignores the learning rate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsaConfig {
    pub learning_rate: f64,
    pub subsample_fraction: f64,
    pub max_iterations: usize,
    pub tol: f64,
    pub ridge: f64,
    pub seed: u64,
    /// Also stop when the relative change in log-likelihood falls below `tol`.
    pub stop_on_loglik_change: bool,
    /// Largest `PK` for which a full Hessian may be formed.
    pub hessian_guard: usize,
}

impl Default for MmsaConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            subsample_fraction: 1.0,
            max_iterations: 20_000,
            tol: 1e-6,
            ridge: 1e-8,
            seed: 1,
            stop_on_loglik_change: true,
            hessian_guard: DEFAULT_HESSIAN_GUARD,
        }
    }
}

impl MmsaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Usage(format!(
                "subsample fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Usage(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Usage(format!("ridge must be non-negative, got {}", self.ridge)));
        }
        Ok(())
    }

    pub(crate) fn relative_change_small(&self, previous: f64, current: f64) -> bool {
        self.stop_on_loglik_change
            && (current - previous).abs() / (1.0 + previous.abs()) < self.tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Mmsa,
    Newton,
    Gradient,
    Coordinate,
    Adagrad,
}

impl Optimizer {
    pub const ALL: [Optimizer; 5] = [
        Optimizer::Mmsa,
        Optimizer::Newton,
        Optimizer::Gradient,
        Optimizer::Coordinate,
        Optimizer::Adagrad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Mmsa => "mmsa",
            Optimizer::Newton => "newton",
            Optimizer::Gradient => "gradient",
            Optimizer::Coordinate => "coordinate",
            Optimizer::Adagrad => "adagrad",
        }
    }

    pub fn fit(
        self,
        problem: &FitProblem,
        config: &MmsaConfig,
        init: Option<&CoefficientMatrix>,
    ) -> Result<FitResult> {
        match self {
            Optimizer::Mmsa => mmsa_fit(problem, config, init),
            Optimizer::Newton => newton_fit(problem, config, init),
            Optimizer::Gradient => gradient_ascent_fit(problem, config, init),
            Optimizer::Coordinate => coordinate_ascent_fit(problem, config, init),
            Optimizer::Adagrad => adagrad_fit(problem, config, init),
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Optimizer::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceReason {
    ScoreThreshold,
    LoglikRelativeChange,
    MaxIterations,
}

impl ConvergenceReason {
    pub fn converged(self) -> bool {
        self != ConvergenceReason::MaxIterations
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    /// Block updated at this iteration (MMSA only).
    pub block: Option<usize>,
    /// `c_p` of the selected block (MMSA only).
    pub block_score: Option<f64>,
    /// `grad_p . mu_p` with `mu_p = H_p^{-1} grad_p`, kept for inspection.
    pub directional_derivative: Option<f64>,
    pub loglik: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub optimizer: Optimizer,
    /// Coefficients on the internal (standardized) covariate scale.
    pub theta: CoefficientMatrix,
    pub iterations: usize,
    pub converged: bool,
    pub reason: ConvergenceReason,
    /// Full-data log-partial likelihood at `theta`.
    pub loglik: f64,
    pub trace: Vec<TraceEntry>,
    pub spec: SplineSpec,
    pub standardization: Standardization,
    pub covariate_names: Vec<String>,
}

impl FitResult {
    /// `beta_p(t)` on the original covariate scale.
    pub fn beta(&self, p: usize, t: f64) -> f64 {
        let local = self.spec.evaluate_local(t);
        self.standardization
            .to_original(p, local.dot(self.theta.block(p)))
    }

    /// Coefficients mapped back to the original covariate scale.
    pub fn theta_original(&self) -> CoefficientMatrix {
        let mut out = self.theta.clone();
        for p in 0..out.n_covariates() {
            let scale = self.standardization.scale[p];
            out.block_mut(p).iter_mut().for_each(|v| *v /= scale);
        }
        out
    }
}

/// A dataset prepared for fitting: optionally standardized, with its spline
/// basis and risk index.
#[derive(Debug, Clone)]
pub struct FitProblem {
    kernel: CoxKernel,
    standardization: Standardization,
}

impl FitProblem {
    /// Knots are placed from the dataset's own event times.
    pub fn new(
        data: &SurvivalDataset,
        degree: usize,
        n_basis: usize,
        standardize: bool,
    ) -> Result<Self> {
        let spec = make_spec(degree, n_basis, &data.event_times())?;
        Self::with_spec(data, spec, standardize)
    }

    pub fn with_spec(data: &SurvivalDataset, spec: SplineSpec, standardize: bool) -> Result<Self> {
        let (data, standardization) = if standardize {
            data.standardize()?
        } else {
            (data.clone(), Standardization::identity(data.n_covariates()))
        };
        Ok(Self {
            kernel: CoxKernel::new(data, spec),
            standardization,
        })
    }

    /// Uses an existing transform (e.g. the full-data one inside
    /// cross-validation); `data` is on the original scale.
    pub fn with_transform(
        data: &SurvivalDataset,
        spec: SplineSpec,
        standardization: Standardization,
    ) -> Self {
        let mut data = data.clone();
        let mut covariates = data.covariates().to_vec();
        standardization.apply_in_place(&mut covariates);
        data = SurvivalDataset::new(
            data.time().to_vec(),
            data.status().to_vec(),
            data.stratum()
                .iter()
                .map(|&s| data.stratum_labels()[s].clone())
                .collect(),
            covariates,
            data.covariate_names().to_vec(),
        )
        .expect("transform keeps a valid dataset valid");
        Self {
            kernel: CoxKernel::new(data, spec),
            standardization,
        }
    }

    pub fn kernel(&self) -> &CoxKernel {
        &self.kernel
    }

    pub fn spec(&self) -> &SplineSpec {
        self.kernel.spec()
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub(crate) fn initial_theta(&self, init: Option<&CoefficientMatrix>) -> Result<CoefficientMatrix> {
        match init {
            None => Ok(self.kernel.zero_theta()),
            Some(theta)
                if theta.n_covariates() == self.kernel.n_covariates()
                    && theta.n_basis() == self.kernel.n_basis() =>
            {
                Ok(theta.clone())
            }
            Some(theta) => Err(Error::InvalidData(format!(
                "initial theta is {}x{}, expected {}x{}",
                theta.n_covariates(),
                theta.n_basis(),
                self.kernel.n_covariates(),
                self.kernel.n_basis()
            ))),
        }
    }

    pub(crate) fn finish(
        &self,
        optimizer: Optimizer,
        theta: CoefficientMatrix,
        iterations: usize,
        reason: ConvergenceReason,
        loglik: f64,
        trace: Vec<TraceEntry>,
    ) -> Result<FitResult> {
        if !theta.is_finite() {
            return Err(Error::Numerical("fitted coefficients are not finite".into()));
        }
        Ok(FitResult {
            optimizer,
            theta,
            iterations,
            converged: reason.converged(),
            reason,
            loglik,
            trace,
            spec: self.spec().clone(),
            standardization: self.standardization.clone(),
            covariate_names: self.kernel.data().covariate_names().to_vec(),
        })
    }
}

/// Subsample mask of `round(fraction * n)` subjects drawn without
/// replacement; the stream is keyed by `(seed, counter)`.
pub(crate) fn subsample_mask(n: usize, fraction: f64, seed: u64, counter: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(counter);
    let size = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut mask = vec![false; n];
    for i in rand::seq::index::sample(&mut rng, n, size) {
        mask[i] = true;
    }
    mask
}
