//! Stratified log-partial likelihood with spline-expanded time-varying
//! coefficients, and its derivatives.
//!
//! For an event of subject `i` in stratum `j` at time `T`, the linear
//! predictor of every risk-set member `i'` is `X_i' . Theta B(T)`. The basis
//! is evaluated once per distinct (stratum, event time) and the scores are
//! accumulated as `(X - Zbar) (x) B(T)` without expanding the data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{RiskIndex, SurvivalDataset};
use crate::error::{Error, Result};
use crate::spline::{LocalBasis, SplineSpec};

/// Default refusal threshold for materializing the `PK x PK` Hessian.
pub const DEFAULT_HESSIAN_GUARD: usize = 2000;

/// `P x K` coefficient matrix. The vectorization is by row: entries
/// `p*K .. (p+1)*K` of any length-`PK` vector belong to covariate `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    n_covariates: usize,
    n_basis: usize,
    values: Vec<f64>,
}

impl CoefficientMatrix {
    pub fn zeros(n_covariates: usize, n_basis: usize) -> Self {
        Self {
            n_covariates,
            n_basis,
            values: vec![0.0; n_covariates * n_basis],
        }
    }

    pub fn from_vec(n_covariates: usize, n_basis: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_covariates * n_basis {
            return Err(Error::InvalidData(format!(
                "{} coefficients do not fill a {n_covariates}x{n_basis} matrix",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("coefficients must be finite".into()));
        }
        Ok(Self {
            n_covariates,
            n_basis,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidData("ragged coefficient rows".into()));
        }
        Self::from_vec(rows.len(), k, rows.concat())
    }

    pub fn n_covariates(&self) -> usize {
        self.n_covariates
    }

    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// `vec(Theta)` by row.
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn block(&self, p: usize) -> &[f64] {
        &self.values[p * self.n_basis..(p + 1) * self.n_basis]
    }

    pub fn block_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.values[p * self.n_basis..(p + 1) * self.n_basis]
    }

    pub fn get(&self, p: usize, k: usize) -> f64 {
        self.values[p * self.n_basis + k]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.n_basis).map(<[f64]>::to_vec).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }
}

impl Serialize for CoefficientMatrix {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CoefficientMatrix {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        Self::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Which derivative pieces to accumulate in one pass over the risk sets.
#[derive(Debug, Clone, Copy, Default)]
pub struct Request {
    pub gradient: bool,
    pub block_hessians: bool,
    pub full_hessian: bool,
    pub residuals: bool,
}

impl Request {
    pub const LOGLIK: Request = Request {
        gradient: false,
        block_hessians: false,
        full_hessian: false,
        residuals: false,
    };

    pub const BLOCKS: Request = Request {
        gradient: true,
        block_hessians: true,
        full_hessian: false,
        residuals: false,
    };
}

/// Per-event score contributions `Psi = delta (X - Zbar) (x) B(T)` and the
/// empirical information `V = sum Psi Psi^T`.
#[derive(Debug, Clone)]
pub struct ScoreResiduals {
    /// Row index (into the dataset) of the event owning each row of `psi`.
    pub subjects: Vec<usize>,
    /// `n_events x PK`.
    pub psi: DMatrix<f64>,
    /// `PK x PK`.
    pub information: DMatrix<f64>,
}

impl ScoreResiduals {
    /// Residual vector of `subject`; zero for censored subjects.
    pub fn for_subject(&self, subject: usize) -> DVector<f64> {
        match self.subjects.iter().position(|&s| s == subject) {
            Some(r) => self.psi.row(r).transpose(),
            None => DVector::zeros(self.psi.ncols()),
        }
    }

    pub fn sum(&self) -> DVector<f64> {
        self.psi.row_sum().transpose()
    }
}

#[derive(Debug, Clone)]
pub struct LikelihoodReport {
    pub loglik: f64,
    pub gradient: Option<DVector<f64>>,
    /// `P` blocks of size `K x K`; empty unless requested.
    pub block_hessians: Vec<DMatrix<f64>>,
    pub full_hessian: Option<DMatrix<f64>>,
    pub residuals: Option<ScoreResiduals>,
}

impl LikelihoodReport {
    pub fn gradient(&self) -> &DVector<f64> {
        self.gradient
            .as_ref()
            .expect("gradient was not requested for this report")
    }

    pub fn gradient_block(&self, p: usize, n_basis: usize) -> DVector<f64> {
        self.gradient().rows(p * n_basis, n_basis).into_owned()
    }
}

/// Appends `a[i, .] . B` for every row of the row-major `a`.
fn linear_predictors(a: &[f64], k_dim: usize, basis: &LocalBasis, out: &mut Vec<f64>) {
    fn fixed<const L: usize>(a: &[f64], k_dim: usize, start: usize, b: &[f64], out: &mut Vec<f64>) {
        let b: [f64; L] = b.try_into().expect("basis length");
        out.extend(a.chunks_exact(k_dim).map(|row| {
            let row: &[f64; L] = row[start..start + L].try_into().expect("row length");
            (0..L).map(|l| row[l] * b[l]).sum::<f64>()
        }));
    }
    let (start, b) = (basis.start, basis.values.as_slice());
    match b.len() {
        4 => fixed::<4>(a, k_dim, start, b, out),
        3 => fixed::<3>(a, k_dim, start, b, out),
        2 => fixed::<2>(a, k_dim, start, b, out),
        _ => out.extend(a.chunks_exact(k_dim).map(|row| basis.dot(row))),
    }
}

/// The partial-likelihood kernel: dataset, risk index, spline spec and the
/// basis cached at every event group.
#[derive(Debug, Clone)]
pub struct CoxKernel {
    data: SurvivalDataset,
    index: RiskIndex,
    spec: SplineSpec,
    bases: Vec<LocalBasis>,
    // Subjects laid out stratum by stratum in risk-set order, so that every
    // risk set is a contiguous range.
    layout: Vec<usize>,
    position: Vec<usize>,
    offsets: Vec<usize>,
    sorted_x: Vec<f64>,
}

impl CoxKernel {
    pub fn new(data: SurvivalDataset, spec: SplineSpec) -> Self {
        let index = RiskIndex::build(&data);
        let bases = index
            .groups()
            .iter()
            .map(|g| spec.evaluate_local(g.time))
            .collect();
        let layout: Vec<usize> = (0..data.n_strata())
            .flat_map(|s| index.stratum_order(s).iter().copied())
            .collect();
        let mut position = vec![0; data.n()];
        for (pos, &i) in layout.iter().enumerate() {
            position[i] = pos;
        }
        let mut offsets = Vec::with_capacity(data.n_strata());
        let mut acc = 0;
        for s in 0..data.n_strata() {
            offsets.push(acc);
            acc += index.stratum_order(s).len();
        }
        let sorted_x = layout.iter().flat_map(|&i| data.row(i).iter().copied()).collect();
        Self {
            data,
            index,
            spec,
            bases,
            layout,
            position,
            offsets,
            sorted_x,
        }
    }

    pub fn data(&self) -> &SurvivalDataset {
        &self.data
    }

    pub fn index(&self) -> &RiskIndex {
        &self.index
    }

    pub fn spec(&self) -> &SplineSpec {
        &self.spec
    }

    pub fn n_covariates(&self) -> usize {
        self.data.n_covariates()
    }

    pub fn n_basis(&self) -> usize {
        self.spec.n_basis()
    }

    pub fn n_params(&self) -> usize {
        self.n_covariates() * self.n_basis()
    }

    pub fn zero_theta(&self) -> CoefficientMatrix {
        CoefficientMatrix::zeros(self.n_covariates(), self.n_basis())
    }

    pub fn loglik(&self, theta: &CoefficientMatrix) -> Result<f64> {
        Ok(self.evaluate(theta, Request::LOGLIK, None)?.loglik)
    }

    pub fn gradient(&self, theta: &CoefficientMatrix) -> Result<DVector<f64>> {
        let request = Request {
            gradient: true,
            ..Request::LOGLIK
        };
        let report = self.evaluate(theta, request, None)?;
        Ok(report.gradient.unwrap_or_else(|| DVector::zeros(self.n_params())))
    }

    pub fn block_hessian(&self, theta: &CoefficientMatrix, p: usize) -> Result<DMatrix<f64>> {
        if p >= self.n_covariates() {
            return Err(Error::InvalidData(format!(
                "block {p} out of range for {} covariates",
                self.n_covariates()
            )));
        }
        let request = Request {
            block_hessians: true,
            ..Request::LOGLIK
        };
        let mut report = self.evaluate(theta, request, None)?;
        Ok(report.block_hessians.swap_remove(p))
    }

    /// Full `PK x PK` Hessian; refuses when `PK > guard`.
    pub fn full_hessian(&self, theta: &CoefficientMatrix, guard: usize) -> Result<DMatrix<f64>> {
        self.check_guard(guard)?;
        let request = Request {
            full_hessian: true,
            ..Request::LOGLIK
        };
        Ok(self
            .evaluate(theta, request, None)?
            .full_hessian
            .expect("requested"))
    }

    pub fn check_guard(&self, guard: usize) -> Result<()> {
        let size = self.n_params();
        if size > guard {
            return Err(Error::Capacity { size, guard });
        }
        Ok(())
    }

    pub fn score_residuals(&self, theta: &CoefficientMatrix) -> Result<ScoreResiduals> {
        let request = Request {
            residuals: true,
            ..Request::LOGLIK
        };
        Ok(self
            .evaluate(theta, request, None)?
            .residuals
            .expect("requested"))
    }

    /// One pass over all event groups. With `mask`, only subjects flagged
    /// `true` take part, as events and as risk-set members.
    pub fn evaluate(
        &self,
        theta: &CoefficientMatrix,
        request: Request,
        mask: Option<&[bool]>,
    ) -> Result<LikelihoodReport> {
        let p_dim = self.n_covariates();
        let k_dim = self.n_basis();
        assert_eq!(theta.n_covariates(), p_dim, "theta row count");
        assert_eq!(theta.n_basis(), k_dim, "theta column count");
        let n = self.data.n();
        let x = &self.sorted_x;
        let sorted_mask: Option<Vec<bool>> = mask.map(|m| self.layout.iter().map(|&i| m[i]).collect());
        let active = |pos: usize| sorted_mask.as_ref().is_none_or(|m| m[pos]);
        let active_subject = |i: usize| mask.is_none_or(|m| m[i]);

        // a[i, k] = sum_p X[i, p] theta[p, k], so the linear predictor at an
        // event time is a[i, .] . B(T). Rows follow the sorted layout.
        let mut a = vec![0.0; n * k_dim];
        for i in 0..n {
            let xi = &x[i * p_dim..(i + 1) * p_dim];
            let ai = &mut a[i * k_dim..(i + 1) * k_dim];
            for (p, &xv) in xi.iter().enumerate() {
                if xv != 0.0 {
                    for (dst, &t) in ai.iter_mut().zip(theta.block(p)) {
                        *dst += xv * t;
                    }
                }
            }
        }

        let want_first = request.gradient || request.residuals;
        let want_diag = request.block_hessians;
        let want_cross = request.full_hessian;
        let mut loglik = 0.0;
        let mut grad = vec![0.0; if request.gradient { p_dim * k_dim } else { 0 }];
        let mut blocks = vec![DMatrix::zeros(k_dim, k_dim); if want_diag { p_dim } else { 0 }];
        let mut full = if want_cross {
            Some(DMatrix::zeros(p_dim * k_dim, p_dim * k_dim))
        } else {
            None
        };
        let mut psi_rows: Vec<f64> = Vec::new();
        let mut psi_subjects = Vec::new();

        let mut s1 = vec![0.0; p_dim];
        let mut s2 = vec![0.0; if want_cross { p_dim * p_dim } else { p_dim }];
        let mut centered = vec![0.0; p_dim];
        let mut weights: Vec<f64> = Vec::with_capacity(n);
        let mut zbar = vec![0.0; p_dim];
        let mut event_sum = vec![0.0; p_dim];

        for (group, basis) in self.index.groups().iter().zip(&self.bases) {
            let n_events = group.subjects.iter().filter(|&&i| active_subject(i)).count();
            if n_events == 0 {
                continue;
            }
            let offset = self.offsets[group.stratum];
            let range = offset..offset + group.risk_len;
            let Some(first) = range.clone().find(|&i| active(i)) else {
                continue;
            };
            // Sums are taken on covariates shifted by the first member's row
            // to limit cancellation in the risk-set variances. Inactive
            // members get eta = -inf and so zero weight.
            let reference = &x[first * p_dim..(first + 1) * p_dim];
            let len = group.risk_len;
            weights.clear();
            linear_predictors(
                &a[offset * k_dim..(offset + len) * k_dim],
                k_dim,
                basis,
                &mut weights,
            );
            if let Some(m) = sorted_mask.as_ref() {
                for (w, &on) in weights.iter_mut().zip(&m[offset..offset + len]) {
                    if !on {
                        *w = f64::NEG_INFINITY;
                    }
                }
            }
            let overflow = if weights.iter().all(|w| w.is_finite()) {
                None
            } else {
                (0..len).find(|&j| active(offset + j) && !weights[j].is_finite())
            };
            if let Some(j) = overflow {
                return Err(Error::Overflow {
                    subject: self.layout[offset + j],
                });
            }
            let max_lp = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s0 = 0.0;
            for w in weights.iter_mut() {
                *w = (*w - max_lp).exp();
                s0 += *w;
            }
            s1.iter_mut().for_each(|v| *v = 0.0);
            s2.iter_mut().for_each(|v| *v = 0.0);
            if want_cross {
                let rows = x[offset * p_dim..(offset + len) * p_dim].chunks_exact(p_dim);
                for (&e, xi) in weights.iter().zip(rows) {
                    for p in 0..p_dim {
                        centered[p] = xi[p] - reference[p];
                    }
                    for p in 0..p_dim {
                        let ex = e * centered[p];
                        s1[p] += ex;
                        for q in 0..p_dim {
                            s2[p * p_dim + q] += ex * centered[q];
                        }
                    }
                }
            } else if want_first || want_diag {
                for p in 0..p_dim {
                    let column = x[offset * p_dim..(offset + len) * p_dim]
                        .chunks_exact(p_dim)
                        .map(|row| row[p]);
                    let (mut first_moment, mut second_moment) = (0.0, 0.0);
                    for (&e, v) in weights.iter().zip(column) {
                        let ex = e * (v - reference[p]);
                        first_moment += ex;
                        second_moment += ex * (v - reference[p]);
                    }
                    s1[p] = first_moment;
                    s2[p] = second_moment;
                }
            }
            let log_den = max_lp + s0.ln();

            event_sum.iter_mut().for_each(|v| *v = 0.0);
            for &subject in group.subjects.iter().filter(|&&i| active_subject(i)) {
                let ev = self.position[subject];
                loglik += basis.dot(&a[ev * k_dim..(ev + 1) * k_dim]) - log_den;
                let xe = &x[ev * p_dim..(ev + 1) * p_dim];
                for p in 0..p_dim {
                    event_sum[p] += xe[p] - reference[p];
                }
            }
            for p in 0..p_dim {
                zbar[p] = s1[p] / s0;
            }
            let weight = n_events as f64;
            let b = &basis.values;
            let start = basis.start;

            if request.gradient {
                for p in 0..p_dim {
                    let coef = event_sum[p] - weight * zbar[p];
                    let dst = &mut grad[p * k_dim + start..p * k_dim + start + b.len()];
                    for (g, bv) in dst.iter_mut().zip(b) {
                        *g += coef * bv;
                    }
                }
            }
            if want_diag {
                for (p, block) in blocks.iter_mut().enumerate() {
                    let var = if want_cross {
                        s2[p * p_dim + p] / s0 - zbar[p] * zbar[p]
                    } else {
                        s2[p] / s0 - zbar[p] * zbar[p]
                    };
                    let w = weight * var;
                    for (r, br) in b.iter().enumerate() {
                        for (c, bc) in b.iter().enumerate() {
                            block[(start + r, start + c)] -= w * br * bc;
                        }
                    }
                }
            }
            if let Some(full) = full.as_mut() {
                for p in 0..p_dim {
                    for q in 0..p_dim {
                        let cov = s2[p * p_dim + q] / s0 - zbar[p] * zbar[q];
                        let w = weight * cov;
                        for (r, br) in b.iter().enumerate() {
                            for (c, bc) in b.iter().enumerate() {
                                full[(p * k_dim + start + r, q * k_dim + start + c)] -=
                                    w * br * bc;
                            }
                        }
                    }
                }
            }
            if request.residuals {
                for &subject in group.subjects.iter().filter(|&&i| active_subject(i)) {
                    let ev = self.position[subject];
                    let xe = &x[ev * p_dim..(ev + 1) * p_dim];
                    let row_start = psi_rows.len();
                    psi_rows.resize(row_start + p_dim * k_dim, 0.0);
                    let row = &mut psi_rows[row_start..];
                    for p in 0..p_dim {
                        let resid = xe[p] - reference[p] - zbar[p];
                        for (kk, bv) in b.iter().enumerate() {
                            row[p * k_dim + start + kk] = resid * bv;
                        }
                    }
                    psi_subjects.push(subject);
                }
            }
        }

        let residuals = request.residuals.then(|| {
            let psi = DMatrix::from_row_slice(psi_subjects.len(), p_dim * k_dim, &psi_rows);
            let information = psi.tr_mul(&psi);
            ScoreResiduals {
                subjects: psi_subjects,
                psi,
                information,
            }
        });
        Ok(LikelihoodReport {
            loglik,
            gradient: request.gradient.then(|| DVector::from_vec(grad)),
            block_hessians: blocks,
            full_hessian: full,
            residuals,
        })
    }
}
