use nalgebra::DVector;

use super::{ConvergenceReason, FitProblem, FitResult, MmsaConfig, Optimizer, TraceEntry};
use crate::error::{Error, Result};
use crate::likelihood::{CoefficientMatrix, CoxKernel, Request};
use crate::linalg::cholesky_with_ridge;

pub(crate) const ARMIJO: f64 = 1e-4;
pub(crate) const SHRINK: f64 = 0.5;
const MAX_HALVINGS: usize = 60;

/// Backtracking along `direction` from `theta` until the Armijo condition
/// holds. Returns the accepted point and its log-likelihood, or `None` when
/// no step length improves.
pub(crate) fn backtrack(
    kernel: &CoxKernel,
    theta: &CoefficientMatrix,
    loglik: f64,
    direction: &DVector<f64>,
    slope: f64,
) -> Result<Option<(CoefficientMatrix, f64)>> {
    let mut step = 1.0;
    for _ in 0..MAX_HALVINGS {
        let mut trial = theta.clone();
        for (t, d) in trial.as_mut_slice().iter_mut().zip(direction.iter()) {
            *t += step * d;
        }
        match kernel.loglik(&trial) {
            Ok(value) if value >= loglik + ARMIJO * step * slope => return Ok(Some((trial, value))),
            Ok(_) | Err(Error::Overflow { .. }) => step *= SHRINK,
            Err(e) => return Err(e),
        }
    }
    Ok(None)
}

/// Full-Hessian Newton ascent with Armijo backtracking.
pub fn newton_fit(
    problem: &FitProblem,
    config: &MmsaConfig,
    init: Option<&CoefficientMatrix>,
) -> Result<FitResult> {
    config.validate()?;
    let kernel = problem.kernel();
    kernel.check_guard(config.hessian_guard)?;
    let request = Request {
        gradient: true,
        full_hessian: true,
        ..Request::LOGLIK
    };
    let mut theta = problem.initial_theta(init)?;
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut report = kernel.evaluate(&theta, request, None)?;
    let reason = loop {
        let gradient = report.gradient().clone();
        if gradient.amax() < config.tol {
            break ConvergenceReason::ScoreThreshold;
        }
        if iteration == config.max_iterations {
            break ConvergenceReason::MaxIterations;
        }
        iteration += 1;
        let information = -report.full_hessian.as_ref().expect("requested");
        let (chol, _) = cholesky_with_ridge(&information, config.ridge)
            .ok_or(Error::Conditioning { block: 0 })?;
        let direction = chol.solve(&gradient);
        let slope = gradient.dot(&direction);
        let Some((next, value)) = backtrack(kernel, &theta, report.loglik, &direction, slope)?
        else {
            break ConvergenceReason::LoglikRelativeChange;
        };
        trace.push(TraceEntry {
            iteration,
            block: None,
            block_score: None,
            directional_derivative: None,
            loglik: value,
        });
        let previous = report.loglik;
        theta = next;
        report = kernel.evaluate(&theta, request, None)?;
        if config.relative_change_small(previous, report.loglik) {
            break ConvergenceReason::LoglikRelativeChange;
        }
    };
    problem.finish(Optimizer::Newton, theta, iteration, reason, report.loglik, trace)
}
