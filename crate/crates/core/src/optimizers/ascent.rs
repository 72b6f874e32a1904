//! Diagnostic for the learning-rate condition under which the block-diagonal
//! quadratic surrogate minorizes the log-likelihood.

use nalgebra::DMatrix;

use super::mmsa::block_steps;
use crate::error::Result;
use crate::likelihood::{CoefficientMatrix, CoxKernel, Request};
use crate::linalg::{inverse_sqrt, sym_eigenvalues};

/// Largest eigenvalue of `H^{-1/2} C H^{-1/2}` with `H` block diagonal.
/// `None` when some block of `H` is not positive definite.
pub fn ascent_eigenvalue(metric_blocks: &[DMatrix<f64>], curvature: &DMatrix<f64>) -> Option<f64> {
    let dim: usize = metric_blocks.iter().map(DMatrix::nrows).sum();
    let mut root = DMatrix::zeros(dim, dim);
    let mut offset = 0;
    for block in metric_blocks {
        let k = block.nrows();
        root.view_mut((offset, offset), (k, k))
            .copy_from(&inverse_sqrt(block)?);
        offset += k;
    }
    let similar = &root * curvature * &root;
    sym_eigenvalues(&similar).last().copied()
}

/// Metric blocks `H_p = c_p (-H_p + eps I)` at `theta`.
fn metric_blocks(kernel: &CoxKernel, theta: &CoefficientMatrix, ridge: f64) -> Result<Vec<DMatrix<f64>>> {
    let report = kernel.evaluate(theta, Request::BLOCKS, None)?;
    let steps = block_steps(&report, kernel.n_basis(), ridge)?;
    Ok(report
        .block_hessians
        .iter()
        .zip(&steps)
        .map(|(h, s)| {
            let mut m = -h;
            for i in 0..m.nrows() {
                m[(i, i)] += s.ridge;
            }
            m * s.score
        })
        .collect())
}

/// Checks `lambda_max(H^{-1/2} (-Hess(mid)) H^{-1/2}) < 1 / nu`, where `H`
/// is the block-diagonal metric at `theta` and `mid` the midpoint of
/// `theta` and `theta_next` (a stand-in for the unknown mean-value point).
pub fn verify_ascent_condition(
    kernel: &CoxKernel,
    theta: &CoefficientMatrix,
    theta_next: &CoefficientMatrix,
    nu: f64,
    ridge: f64,
    guard: usize,
) -> Result<bool> {
    kernel.check_guard(guard)?;
    let blocks = metric_blocks(kernel, theta, ridge)?;
    let mid = CoefficientMatrix::from_vec(
        theta.n_covariates(),
        theta.n_basis(),
        theta
            .as_slice()
            .iter()
            .zip(theta_next.as_slice())
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    )?;
    let curvature = -kernel.full_hessian(&mid, guard)?;
    Ok(ascent_eigenvalue(&blocks, &curvature).is_some_and(|l| l < 1.0 / nu))
}

/// Surrogate `l(theta) + g'(x - theta) - (x - theta)' H (x - theta) / (2 nu)`
/// evaluated at `x`.
pub fn surrogate_value(
    kernel: &CoxKernel,
    theta: &CoefficientMatrix,
    x: &CoefficientMatrix,
    nu: f64,
    ridge: f64,
) -> Result<f64> {
    let report = kernel.evaluate(theta, Request::BLOCKS, None)?;
    let blocks = metric_blocks(kernel, theta, ridge)?;
    let k = kernel.n_basis();
    let delta = x.to_dvector() - theta.to_dvector();
    let mut quad = 0.0;
    for (p, block) in blocks.iter().enumerate() {
        let d = delta.rows(p * k, k);
        quad += d.dot(&(block * d));
    }
    Ok(report.loglik + report.gradient().dot(&delta) - quad / (2.0 * nu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::DEFAULT_HESSIAN_GUARD;
    use crate::optimizers::FitProblem;
    use crate::simulate::{generate, ScenarioSpec};

    #[test]
    fn identity_similarity_gives_one() {
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let lambda = ascent_eigenvalue(&[c.clone()], &c).unwrap();
        assert!((lambda - 1.0).abs() < 1e-12);
        // criterion 1 < 1/nu holds iff nu < 1
        assert!(lambda < 1.0 / 0.99);
        assert!(!(lambda < 1.0 / 1.01));
    }

    #[test]
    fn small_nu_always_passes_for_pd_metric() {
        let problem = FitProblem::new(
            &generate(&ScenarioSpec::new(1, 120, 2, 1, 0.0, 5).unwrap()).unwrap(),
            3,
            4,
            true,
        )
        .unwrap();
        let kernel = problem.kernel();
        let theta = kernel.zero_theta();
        let mut next = theta.clone();
        next.as_mut_slice()[0] = 0.1;
        assert!(
            verify_ascent_condition(kernel, &theta, &next, 1e-9, 1e-8, DEFAULT_HESSIAN_GUARD)
                .unwrap()
        );
    }

    #[test]
    fn surrogate_minorizes_when_condition_holds() {
        let problem = FitProblem::new(
            &generate(&ScenarioSpec::new(1, 150, 2, 1, 0.0, 11).unwrap()).unwrap(),
            3,
            4,
            true,
        )
        .unwrap();
        let kernel = problem.kernel();
        let theta = kernel.zero_theta();
        let mut checked = 0;
        for (i, nu) in [0.001, 0.01, 0.05, 0.2].into_iter().enumerate() {
            let mut next = theta.clone();
            for (j, v) in next.as_mut_slice().iter_mut().enumerate() {
                *v = 0.05 * ((i * 7 + j * 3) % 5) as f64 - 0.1;
            }
            if verify_ascent_condition(kernel, &theta, &next, nu, 1e-8, DEFAULT_HESSIAN_GUARD)
                .unwrap()
            {
                checked += 1;
                let g = surrogate_value(kernel, &theta, &next, nu, 1e-8).unwrap();
                let l = kernel.loglik(&next).unwrap();
                assert!(g <= l + 1e-10, "nu={nu}: surrogate {g} > loglik {l}");
            }
        }
        assert!(checked > 0);
    }
}
