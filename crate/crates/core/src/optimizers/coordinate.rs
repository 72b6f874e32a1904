use super::newton::backtrack;
use super::{ConvergenceReason, FitProblem, FitResult, MmsaConfig, Optimizer, TraceEntry};
use crate::error::{Error, Result};
use crate::likelihood::{CoefficientMatrix, Request};
use crate::linalg::MAX_RIDGE;

/// Cyclic coordinate ascent over the `PK` scalar coefficients, each moved by
/// a one-dimensional Newton step with Armijo backtracking. One iteration is
/// one full cycle.
pub fn coordinate_ascent_fit(
    problem: &FitProblem,
    config: &MmsaConfig,
    init: Option<&CoefficientMatrix>,
) -> Result<FitResult> {
    config.validate()?;
    let kernel = problem.kernel();
    let n_basis = kernel.n_basis();
    let n_params = kernel.n_params();
    let mut theta = problem.initial_theta(init)?;
    let mut trace = Vec::new();
    let mut iteration = 0;
    let mut report = kernel.evaluate(&theta, Request::BLOCKS, None)?;
    let reason = loop {
        if report.gradient().amax() < config.tol {
            break ConvergenceReason::ScoreThreshold;
        }
        if iteration == config.max_iterations {
            break ConvergenceReason::MaxIterations;
        }
        iteration += 1;
        let cycle_start = report.loglik;
        for coord in 0..n_params {
            let (p, k) = (coord / n_basis, coord % n_basis);
            let g = report.gradient()[coord];
            if g == 0.0 {
                continue;
            }
            let curvature = -report.block_hessians[p][(k, k)];
            let mut ridge = config.ridge;
            while !(curvature + ridge > 0.0) {
                ridge = if ridge == 0.0 { 1e-8 } else { ridge * 10.0 };
                if ridge > MAX_RIDGE {
                    return Err(Error::Conditioning { block: p });
                }
            }
            let step = g / (curvature + ridge);
            let mut direction = nalgebra::DVector::zeros(n_params);
            direction[coord] = step;
            if let Some((next, _)) = backtrack(kernel, &theta, report.loglik, &direction, g * step)? {
                theta = next;
                report = kernel.evaluate(&theta, Request::BLOCKS, None)?;
            }
        }
        trace.push(TraceEntry {
            iteration,
            block: None,
            block_score: None,
            directional_derivative: None,
            loglik: report.loglik,
        });
        if config.relative_change_small(cycle_start, report.loglik) {
            break ConvergenceReason::LoglikRelativeChange;
        }
    };
    problem.finish(Optimizer::Coordinate, theta, iteration, reason, report.loglik, trace)
}
