//! Block-wise MM steepest ascent.
//!
//! Each iteration scores every covariate block by the quadratic gain
//! `c_p = g_p' (-H_p + eps I)^{-1} g_p`, picks the block with the largest
//! gain (ties to the smallest index) and moves only that block by `nu`
//! times its block-Newton direction. Under the block-diagonal metric
//! `H_p = c_p (-H_p)` the unit-norm steepest-ascent direction is
//! `mu_p = newton_dir_p / c_p`, whose directional derivative `g_p' mu_p`
//! is identically one; that value is recorded in the trace but cannot rank
//! blocks, so `c_p` does.

use nalgebra::{DMatrix, DVector};

use super::{
    subsample_mask, ConvergenceReason, FitProblem, FitResult, MmsaConfig, Optimizer, TraceEntry,
};
use crate::error::{Error, Result};
use crate::likelihood::{CoefficientMatrix, LikelihoodReport, Request};
use crate::linalg::cholesky_with_ridge;

/// Allowed per-iteration decrease of the full-data log-likelihood before
/// the run is declared non-ascending.
pub const ASCENT_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStep {
    /// `c_p`, the block's quadratic-approximation gain.
    pub score: f64,
    /// `(-H_p + eps I)^{-1} g_p`.
    pub newton_direction: DVector<f64>,
    /// Ridge that made the block factorizable.
    pub ridge: f64,
}

pub fn mmsa_block_quantities(
    gradient: &DVector<f64>,
    hessian: &DMatrix<f64>,
    ridge: f64,
    block: usize,
) -> Result<BlockStep> {
    if gradient.iter().all(|&g| g == 0.0) {
        return Ok(BlockStep {
            score: 0.0,
            newton_direction: DVector::zeros(gradient.len()),
            ridge,
        });
    }
    let information = -hessian;
    let (chol, used) =
        cholesky_with_ridge(&information, ridge).ok_or(Error::Conditioning { block })?;
    let direction = chol.solve(gradient);
    let score = gradient.dot(&direction).max(0.0);
    Ok(BlockStep {
        score,
        newton_direction: direction,
        ridge: used,
    })
}

/// `g_p' mu_p` with `mu_p` solved directly from `H_p mu_p = g_p`,
/// `H_p = c_p (-H_p + eps I)`. `None` when `c_p` is zero.
pub fn literal_directional_derivative(
    gradient: &DVector<f64>,
    hessian: &DMatrix<f64>,
    step: &BlockStep,
) -> Option<f64> {
    if !(step.score > 0.0) {
        return None;
    }
    let mut metric = -hessian;
    for i in 0..metric.nrows() {
        metric[(i, i)] += step.ridge;
    }
    metric *= step.score;
    let mu = metric.lu().solve(gradient)?;
    Some(gradient.dot(&mu))
}

pub(crate) fn block_steps(
    report: &LikelihoodReport,
    n_basis: usize,
    ridge: f64,
) -> Result<Vec<BlockStep>> {
    report
        .block_hessians
        .iter()
        .enumerate()
        .map(|(p, h)| mmsa_block_quantities(&report.gradient_block(p, n_basis), h, ridge, p))
        .collect()
}

/// Index of the largest score; the smallest index wins ties.
pub(crate) fn select_block(steps: &[BlockStep]) -> usize {
    let mut best = 0;
    for (p, s) in steps.iter().enumerate().skip(1) {
        if s.score > steps[best].score {
            best = p;
        }
    }
    best
}

pub fn mmsa_fit(
    problem: &FitProblem,
    config: &MmsaConfig,
    init: Option<&CoefficientMatrix>,
) -> Result<FitResult> {
    config.validate()?;
    let kernel = problem.kernel();
    let n_basis = kernel.n_basis();
    let n = kernel.data().n();
    let stochastic = config.subsample_fraction < 1.0;
    let mut theta = problem.initial_theta(init)?;
    let mut trace = Vec::new();

    let mut full = kernel.evaluate(&theta, Request::BLOCKS, None)?;
    let mut iteration = 0;
    let reason = loop {
        // Stopping is always judged on the full data.
        let full_steps = block_steps(&full, n_basis, config.ridge)?;
        let max_score = full_steps.iter().map(|s| s.score).fold(0.0, f64::max);
        if max_score < config.tol {
            break ConvergenceReason::ScoreThreshold;
        }
        if iteration == config.max_iterations {
            break ConvergenceReason::MaxIterations;
        }
        iteration += 1;

        let (steps, report) = if stochastic {
            let mask = subsample_mask(n, config.subsample_fraction, config.seed, iteration as u64);
            let sub = kernel.evaluate(&theta, Request::BLOCKS, Some(&mask))?;
            (block_steps(&sub, n_basis, config.ridge)?, sub)
        } else {
            (full_steps, full.clone())
        };
        let chosen = select_block(&steps);
        let step = &steps[chosen];
        let literal = literal_directional_derivative(
            &report.gradient_block(chosen, n_basis),
            &report.block_hessians[chosen],
            step,
        );
        for (t, d) in theta.block_mut(chosen).iter_mut().zip(&step.newton_direction) {
            *t += config.learning_rate * d;
        }

        let next = kernel.evaluate(&theta, Request::BLOCKS, None)?;
        if !stochastic && next.loglik < full.loglik - ASCENT_SLACK {
            return Err(Error::AscentViolation {
                iteration,
                decrease: full.loglik - next.loglik,
            });
        }
        trace.push(TraceEntry {
            iteration,
            block: Some(chosen),
            block_score: Some(step.score),
            directional_derivative: literal,
            loglik: next.loglik,
        });
        let previous = full.loglik;
        full = next;
        if config.relative_change_small(previous, full.loglik) {
            break ConvergenceReason::LoglikRelativeChange;
        }
    };
    problem.finish(Optimizer::Mmsa, theta, iteration, reason, full.loglik, trace)
}
