use super::{ConvergenceReason, FitProblem, FitResult, MmsaConfig, Optimizer, TraceEntry};
use crate::error::{Error, Result};
use crate::likelihood::{CoefficientMatrix, Request};

/// Consecutive iterations below the best value so far tolerated before
/// declaring divergence.
const DIVERGENCE_RUN: usize = 10;

/// Fixed-step gradient ascent, `theta += nu * grad`.
pub fn gradient_ascent_fit(
    problem: &FitProblem,
    config: &MmsaConfig,
    init: Option<&CoefficientMatrix>,
) -> Result<FitResult> {
    config.validate()?;
    let kernel = problem.kernel();
    let request = Request {
        gradient: true,
        ..Request::LOGLIK
    };
    let mut theta = problem.initial_theta(init)?;
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut decreasing = 0;
    let mut report = kernel.evaluate(&theta, request, None)?;
    let mut best = report.loglik;
    let reason = loop {
        let gradient = report.gradient();
        if gradient.amax() < config.tol {
            break ConvergenceReason::ScoreThreshold;
        }
        if iteration == config.max_iterations {
            break ConvergenceReason::MaxIterations;
        }
        iteration += 1;
        for (t, g) in theta.as_mut_slice().iter_mut().zip(gradient.iter()) {
            *t += config.learning_rate * g;
        }
        let next = match kernel.evaluate(&theta, request, None) {
            Err(Error::Overflow { .. }) => return Err(Error::StepSize { iteration }),
            other => other?,
        };
        let below = next.loglik < best - 1e-12 * (1.0 + best.abs());
        decreasing = if below { decreasing + 1 } else { 0 };
        best = best.max(next.loglik);
        if decreasing >= DIVERGENCE_RUN {
            return Err(Error::StepSize { iteration });
        }
        trace.push(TraceEntry {
            iteration,
            block: None,
            block_score: None,
            directional_derivative: None,
            loglik: next.loglik,
        });
        let previous = report.loglik;
        report = next;
        if !below && config.relative_change_small(previous, report.loglik) {
            break ConvergenceReason::LoglikRelativeChange;
        }
    };
    problem.finish(Optimizer::Gradient, theta, iteration, reason, report.loglik, trace)
}
