use super::{
    subsample_mask, ConvergenceReason, FitProblem, FitResult, MmsaConfig, Optimizer, TraceEntry,
};
use crate::error::Result;
use crate::likelihood::{CoefficientMatrix, Request};

const EPSILON: f64 = 1e-8;
/// Iterations between full-data convergence checks.
pub const CHECK_EVERY: usize = 50;

/// Stochastic gradient ascent with Adagrad per-coordinate step sizes
/// `nu / (sqrt(sum g^2) + 1e-8)`. Gradients use an `eta`-subsample; the
/// full-data log-likelihood is checked every [`CHECK_EVERY`] iterations.
pub fn adagrad_fit(
    problem: &FitProblem,
    config: &MmsaConfig,
    init: Option<&CoefficientMatrix>,
) -> Result<FitResult> {
    config.validate()?;
    let kernel = problem.kernel();
    let n = kernel.data().n();
    let request = Request {
        gradient: true,
        ..Request::LOGLIK
    };
    let mut theta = problem.initial_theta(init)?;
    let mut accumulated = vec![0.0; kernel.n_params()];
    let mut trace = Vec::new();
    let mut last_check = kernel.loglik(&theta)?;
    let mut current = last_check;
    let mut iteration = 0;
    let reason = loop {
        if iteration == config.max_iterations {
            break ConvergenceReason::MaxIterations;
        }
        iteration += 1;
        let report = if config.subsample_fraction < 1.0 {
            let mask = subsample_mask(n, config.subsample_fraction, config.seed, iteration as u64);
            kernel.evaluate(&theta, request, Some(&mask))?
        } else {
            kernel.evaluate(&theta, request, None)?
        };
        for ((t, acc), g) in theta
            .as_mut_slice()
            .iter_mut()
            .zip(accumulated.iter_mut())
            .zip(report.gradient().iter())
        {
            *acc += g * g;
            *t += config.learning_rate * g / (acc.sqrt() + EPSILON);
        }
        if iteration % CHECK_EVERY == 0 {
            current = kernel.loglik(&theta)?;
            trace.push(TraceEntry {
                iteration,
                block: None,
                block_score: None,
                directional_derivative: None,
                loglik: current,
            });
            let previous = last_check;
            last_check = current;
            if (current - previous).abs() / (1.0 + previous.abs()) < config.tol {
                break ConvergenceReason::LoglikRelativeChange;
            }
        }
    };
    if iteration % CHECK_EVERY != 0 {
        current = kernel.loglik(&theta)?;
    }
    problem.finish(Optimizer::Adagrad, theta, iteration, reason, current, trace)
}
