//! Wald tests for time variation of each coefficient, pointwise confidence
//! bands for the fitted curves, and cross-validated choice of `K`.
//!
//! A coefficient is time-invariant exactly when its `K` spline coefficients
//! coincide (the basis sums to one), so the null is `C_p theta = 0` with
//! `C_p` the `(K-1) x PK` contrast `theta_p1 - theta_pk`, `k = 2..K`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Standardization, SurvivalDataset};
use crate::error::{Error, Result};
use crate::likelihood::{CoefficientMatrix, CoxKernel};
use crate::linalg::{cholesky_with_ridge, symmetrize};
use crate::optimizers::{mmsa_fit, ConvergenceReason, FitProblem, FitResult, MmsaConfig};
use crate::spline::{make_spec, SplineSpec};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959964;
const WALD_RIDGE: f64 = 1e-10;
const FOLD_ATTEMPTS: u64 = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    pub covariate: usize,
    pub matrix: DMatrix<f64>,
}

impl ContrastMatrix {
    pub fn new(covariate: usize, n_covariates: usize, n_basis: usize) -> Self {
        let rows = n_basis.saturating_sub(1);
        let mut matrix = DMatrix::zeros(rows, n_covariates * n_basis);
        let base = covariate * n_basis;
        for r in 0..rows {
            matrix[(r, base)] = 1.0;
            matrix[(r, base + r + 1)] = -1.0;
        }
        Self { covariate, matrix }
    }

    pub fn apply(&self, theta: &CoefficientMatrix) -> DVector<f64> {
        &self.matrix * theta.to_dvector()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InformationKind {
    /// Sum of outer products of the score residuals.
    Empirical,
    /// Negative Hessian of the log-partial likelihood.
    Observed,
}

impl InformationKind {
    pub fn name(self) -> &'static str {
        match self {
            InformationKind::Empirical => "empirical",
            InformationKind::Observed => "observed",
        }
    }
}

impl std::str::FromStr for InformationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "empirical" => Ok(InformationKind::Empirical),
            "observed" => Ok(InformationKind::Observed),
            other => Err(Error::Usage(format!("unknown information kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestEntry {
    pub covariate: usize,
    pub name: String,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub information: InformationKind,
    pub convergence: Option<ConvergenceReason>,
    pub entries: Vec<TestEntry>,
}

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut sum = COEF[0];
    for (i, c) in COEF.iter().enumerate().skip(1) {
        sum += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + sum.ln()
}

/// Regularized upper incomplete gamma `Q(a, x)`.
fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let log_prefactor = -x + a * x.ln() - ln_gamma(a);
    if x < a + 1.0 {
        // Series for P(a, x).
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..10_000 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (1.0 - sum * log_prefactor.exp()).max(0.0)
    } else {
        // Modified Lentz continued fraction for Q(a, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (log_prefactor.exp() * h).min(1.0)
    }
}

/// `P(chi^2_df > x)`.
pub fn chi_square_upper_tail(x: f64, df: usize) -> f64 {
    assert!(df >= 1, "chi-square needs at least one degree of freedom");
    if !(x > 0.0) {
        return 1.0;
    }
    gamma_q(df as f64 / 2.0, x / 2.0)
}

/// Cholesky factor of a symmetric information matrix scaled to unit mean
/// diagonal, with ridge escalation from 1e-10. Returns the factor and scale.
fn factor_information(information: &DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let dim = information.nrows();
    let scale = (information.trace() / dim as f64).abs();
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let normalized = symmetrize(information) / scale;
    if let Some(chol) = Cholesky::new(normalized.clone()) {
        return Some((chol, scale));
    }
    cholesky_with_ridge(&normalized, WALD_RIDGE).map(|(c, _)| (c, scale))
}

/// `(C theta)' (C I^{-1} C')^{-1} (C theta)` for covariate `p`. The inverse
/// information is only ever applied to the `K - 1` contrast columns.
pub fn wald_statistic(
    theta: &CoefficientMatrix,
    information: &DMatrix<f64>,
    p: usize,
) -> Result<f64> {
    let k = theta.n_basis();
    if k < 2 {
        return Err(Error::Usage(
            "testing for time variation needs at least two basis functions".into(),
        ));
    }
    let contrast = ContrastMatrix::new(p, theta.n_covariates(), k);
    let diff = contrast.apply(theta);
    if diff.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    let (chol, scale) =
        factor_information(information).ok_or(Error::RankDeficient { covariate: p })?;
    let solved = chol.solve(&contrast.matrix.transpose()) / scale;
    let inner = symmetrize(&(&contrast.matrix * solved));
    let inner_chol = Cholesky::new(inner).ok_or(Error::RankDeficient { covariate: p })?;
    let stat = diff.dot(&inner_chol.solve(&diff));
    Ok(stat.max(0.0))
}

fn entry(theta: &CoefficientMatrix, information: &DMatrix<f64>, p: usize, name: String) -> Result<TestEntry> {
    let statistic = wald_statistic(theta, information, p)?;
    let df = theta.n_basis() - 1;
    Ok(TestEntry {
        covariate: p,
        name,
        statistic,
        df,
        p_value: chi_square_upper_tail(statistic, df),
    })
}

/// Test for covariate `p` using the empirical information `V = sum Psi Psi'`.
pub fn wald_test_empirical(
    theta: &CoefficientMatrix,
    empirical_information: &DMatrix<f64>,
    p: usize,
) -> Result<TestEntry> {
    entry(theta, empirical_information, p, format!("x{}", p + 1))
}

/// Test for covariate `p` using the observed information `-Hessian`.
pub fn wald_test_observed(
    theta: &CoefficientMatrix,
    hessian: &DMatrix<f64>,
    p: usize,
) -> Result<TestEntry> {
    entry(theta, &(-hessian), p, format!("x{}", p + 1))
}

/// Information matrix of the requested kind at `theta`.
pub fn information_matrix(
    kernel: &CoxKernel,
    theta: &CoefficientMatrix,
    kind: InformationKind,
    guard: usize,
) -> Result<DMatrix<f64>> {
    match kind {
        InformationKind::Empirical => Ok(kernel.score_residuals(theta)?.information),
        InformationKind::Observed => Ok(-kernel.full_hessian(theta, guard)?),
    }
}

/// Tests every covariate of a fit.
pub fn test_time_variation(
    problem: &FitProblem,
    fit: &FitResult,
    kind: InformationKind,
    guard: usize,
) -> Result<TestReport> {
    let information = information_matrix(problem.kernel(), &fit.theta, kind, guard)?;
    let entries = (0..fit.theta.n_covariates())
        .map(|p| entry(&fit.theta, &information, p, fit.covariate_names[p].clone()))
        .collect::<Result<_>>()?;
    Ok(TestReport {
        information: kind,
        convergence: Some(fit.reason),
        entries,
    })
}

/// Inverse of an information matrix (ridge-stabilized as for the tests).
pub fn covariance_from_information(information: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (chol, scale) = factor_information(information)
        .ok_or_else(|| Error::Numerical("information matrix cannot be inverted".into()))?;
    Ok(chol.inverse() / scale)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateCurve {
    pub name: String,
    pub estimate: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveEstimate {
    pub times: Vec<f64>,
    pub curves: Vec<CovariateCurve>,
}

impl CurveEstimate {
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["time", "covariate", "estimate", "se", "lower", "upper"])?;
        for curve in &self.curves {
            for (g, t) in self.times.iter().enumerate() {
                wtr.write_record([
                    t.to_string(),
                    curve.name.clone(),
                    curve.estimate[g].to_string(),
                    curve.se[g].to_string(),
                    curve.lower[g].to_string(),
                    curve.upper[g].to_string(),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Pointwise 95% bands `beta_p(t) +- 1.959964 SE_p(t)` with
/// `SE_p(t)^2 = B(t)' Cov_pp B(t)`, reported on the original covariate scale.
pub fn curve_with_bands(
    theta: &CoefficientMatrix,
    covariance: &DMatrix<f64>,
    spec: &SplineSpec,
    grid: &[f64],
    transform: &Standardization,
    names: &[String],
) -> Result<CurveEstimate> {
    let k = theta.n_basis();
    let covariance = symmetrize(covariance);
    let mut curves = Vec::with_capacity(theta.n_covariates());
    for p in 0..theta.n_covariates() {
        let block = covariance.view((p * k, p * k), (k, k));
        let scale = transform.scale[p];
        let mut curve = CovariateCurve {
            name: names.get(p).cloned().unwrap_or_else(|| format!("x{}", p + 1)),
            estimate: Vec::with_capacity(grid.len()),
            se: Vec::with_capacity(grid.len()),
            lower: Vec::with_capacity(grid.len()),
            upper: Vec::with_capacity(grid.len()),
        };
        for &t in grid {
            let b = DVector::from_vec(spec.evaluate(t));
            let point = b.dot(&DVector::from_column_slice(theta.block(p))) / scale;
            let var = b.dot(&(block * &b));
            let magnitude = b.dot(&(block.abs() * &b));
            if var < -1e-10 * magnitude.max(f64::MIN_POSITIVE) {
                return Err(Error::Numerical(format!(
                    "negative variance {var:e} for covariate {p} at t = {t}"
                )));
            }
            let se = var.max(0.0).sqrt() / scale;
            curve.estimate.push(point);
            curve.se.push(se);
            curve.lower.push(point - Z_95 * se);
            curve.upper.push(point + Z_95 * se);
        }
        curves.push(curve);
    }
    Ok(CurveEstimate {
        times: grid.to_vec(),
        curves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub n_basis: usize,
    pub score: f64,
    pub fold_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub chosen: usize,
    pub folds: usize,
    pub entries: Vec<CvEntry>,
    /// Fold of every row.
    pub assignment: Vec<usize>,
}

/// Fold labels stratified by (stratum, event status); every fold must hold
/// at least one event, otherwise the shuffle is retried.
pub fn assign_folds(data: &SurvivalDataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Usage(format!("need at least two folds, got {folds}")));
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 2 * data.n_strata()];
    for i in 0..data.n() {
        groups[2 * data.stratum()[i] + usize::from(data.status()[i])].push(i);
    }
    for attempt in 0..FOLD_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt);
        let mut assignment = vec![0; data.n()];
        let mut counter = 0;
        for group in &groups {
            let mut members = group.clone();
            members.shuffle(&mut rng);
            for i in members {
                assignment[i] = counter % folds;
                counter += 1;
            }
        }
        let mut events = vec![0usize; folds];
        for i in 0..data.n() {
            if data.status()[i] {
                events[assignment[i]] += 1;
            }
        }
        let training_ok = (0..folds).all(|f| events.iter().sum::<usize>() > events[f]);
        if events.iter().all(|&e| e > 0) && training_ok {
            return Ok(assignment);
        }
    }
    Err(Error::FoldConstruction(format!(
        "no assignment into {folds} folds gave every fold an event after {FOLD_ATTEMPTS} attempts"
    )))
}

/// Chooses `K` by maximizing the summed cross-validated partial likelihood
/// `l_full(theta_-k) - l_-k(theta_-k)`; ties go to the smallest `K`, then to
/// the first occurrence.
pub fn cross_validate_k(
    data: &SurvivalDataset,
    candidates: &[usize],
    folds: usize,
    degree: usize,
    config: &MmsaConfig,
    standardize: bool,
) -> Result<CvReport> {
    if candidates.is_empty() {
        return Err(Error::Usage("no candidate K values".into()));
    }
    if let Some(&bad) = candidates.iter().find(|&&k| k < degree + 1) {
        return Err(Error::InvalidSpec(format!(
            "candidate K = {bad} is below degree + 1 = {}",
            degree + 1
        )));
    }
    let assignment = assign_folds(data, folds, config.seed)?;
    let transform = if standardize {
        data.standardize()?.1
    } else {
        Standardization::identity(data.n_covariates())
    };
    let training: Vec<SurvivalDataset> = (0..folds)
        .map(|f| {
            let rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] != f).collect();
            data.subset(&rows)
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(candidates.len());
    for &k in candidates {
        let spec = make_spec(degree, k, &data.event_times())?;
        let full = FitProblem::with_transform(data, spec.clone(), transform.clone());
        let mut fold_scores = Vec::with_capacity(folds);
        for train in &training {
            let problem = FitProblem::with_transform(train, spec.clone(), transform.clone());
            let fit = mmsa_fit(&problem, config, None)?;
            fold_scores.push(full.kernel().loglik(&fit.theta)? - fit.loglik);
        }
        entries.push(CvEntry {
            n_basis: k,
            score: fold_scores.iter().sum(),
            fold_scores,
        });
    }
    let mut best = 0;
    for (i, e) in entries.iter().enumerate().skip(1) {
        let incumbent = &entries[best];
        if e.score > incumbent.score
            || (e.score == incumbent.score && e.n_basis < incumbent.n_basis)
        {
            best = i;
        }
    }
    Ok(CvReport {
        chosen: entries[best].n_basis,
        folds,
        entries,
        assignment,
    })
}
