//! Fixed-knot B-spline basis on a clamped (open) knot vector.
//!
//! Each time-varying coefficient is written as `beta_p(t) = theta_p . B(t)`
//! where `B(t) = (B_1(t), .., B_K(t))`. Interior knots sit at empirical
//! quantiles of the distinct event times; boundary knots are repeated
//! `degree + 1` times so the basis interpolates at both ends of the domain.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    degree: usize,
    interior_knots: Vec<f64>,
    t_min: f64,
    t_max: f64,
    n_basis: usize,
}

impl SplineSpec {
    /// Builds a spec from explicit knots, validating the knot layout.
    pub fn new(degree: usize, interior_knots: Vec<f64>, t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite()) || t_max <= t_min {
            return Err(Error::InvalidSpec(format!(
                "domain [{t_min}, {t_max}] must be a finite interval of positive length"
            )));
        }
        let mut prev = t_min;
        for &k in &interior_knots {
            if !(k > prev && k < t_max) {
                return Err(Error::KnotCollision(format!(
                    "interior knots {interior_knots:?} are not strictly increasing inside ({t_min}, {t_max})"
                )));
            }
            prev = k;
        }
        let n_basis = interior_knots.len() + degree + 1;
        Ok(Self {
            degree,
            interior_knots,
            t_min,
            t_max,
            n_basis,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.interior_knots
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t_min, self.t_max)
    }

    /// Number of basis functions `K`.
    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Full open knot vector of length `K + degree + 1`.
    pub fn knot_vector(&self) -> Vec<f64> {
        let d = self.degree;
        let mut knots = Vec::with_capacity(self.n_basis + d + 1);
        knots.extend(std::iter::repeat_n(self.t_min, d + 1));
        knots.extend_from_slice(&self.interior_knots);
        knots.extend(std::iter::repeat_n(self.t_max, d + 1));
        knots
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }

    /// Index of the first nonzero basis function at `t` together with the
    /// `degree + 1` values starting there.
    pub fn evaluate_local(&self, t: f64) -> LocalBasis {
        let d = self.degree;
        let t = self.clamp(t);
        let knots = self.knot_vector();
        let last = self.n_basis - 1;
        let span = if t >= self.t_max {
            last
        } else {
            // Largest s in [d, last] with knots[s] <= t.
            let mut lo = d;
            let mut hi = last;
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if knots[mid] <= t {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            lo
        };

        let mut values = vec![0.0; d + 1];
        let mut left = vec![0.0; d + 1];
        let mut right = vec![0.0; d + 1];
        values[0] = 1.0;
        for j in 1..=d {
            left[j] = t - knots[span + 1 - j];
            right[j] = knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        LocalBasis {
            start: span - d,
            values,
        }
    }

    /// All `K` basis values at `t` (clamped into the domain).
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let local = self.evaluate_local(t);
        let mut out = vec![0.0; self.n_basis];
        out[local.start..local.start + local.values.len()].copy_from_slice(&local.values);
        out
    }

    pub fn evaluate_batch(&self, times: &[f64]) -> BasisMatrix {
        let mut values = DMatrix::zeros(times.len(), self.n_basis);
        for (row, &t) in times.iter().enumerate() {
            let local = self.evaluate_local(t);
            for (offset, v) in local.values.iter().enumerate() {
                values[(row, local.start + offset)] = *v;
            }
        }
        BasisMatrix {
            times: times.to_vec(),
            values,
        }
    }
}

/// Nonzero window of the basis at one time point.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalBasis {
    pub start: usize,
    pub values: Vec<f64>,
}

impl LocalBasis {
    /// `sum_k coef[start + k] * values[k]`.
    #[inline]
    pub fn dot(&self, coef: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(&coef[self.start..])
            .map(|(b, c)| b * c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    pub times: Vec<f64>,
    /// `times.len() x K` matrix of basis evaluations.
    pub values: DMatrix<f64>,
}

/// Type-7 (linear interpolation) empirical quantile of a sorted sample.
pub(crate) fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Places `K - degree - 1` interior knots at the `j / (K - degree)` quantiles
/// of the distinct event times; the domain is `[0, max event time]`.
pub fn make_spec(degree: usize, n_basis: usize, event_times: &[f64]) -> Result<SplineSpec> {
    if n_basis < degree + 1 {
        return Err(Error::InvalidSpec(format!(
            "K = {n_basis} is below degree + 1 = {}",
            degree + 1
        )));
    }
    if event_times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidSpec("event times must be finite".into()));
    }
    let mut distinct = event_times.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let t_max = match distinct.last() {
        Some(&t) if t > 0.0 => t,
        _ => {
            return Err(Error::InvalidSpec(
                "event times must be non-empty with positive spread".into(),
            ))
        }
    };
    let n_interior = n_basis - degree - 1;
    if distinct.len() < n_interior {
        return Err(Error::KnotCollision(format!(
            "{} distinct event times cannot support {n_interior} interior knots",
            distinct.len()
        )));
    }
    let segments = (n_basis - degree) as f64;
    let knots = (1..=n_interior)
        .map(|j| quantile_sorted(&distinct, j as f64 / segments))
        .collect();
    SplineSpec::new(degree, knots, 0.0, t_max)
}
