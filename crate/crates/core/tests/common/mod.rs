#![allow(dead_code)]

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use tvcox::{CoefficientMatrix, FitProblem, SurvivalDataset};

/// Three subjects, one stratum: events at t=1 (x=1) and t=2 (x=0), censored
/// at t=3 (x=1).
pub fn d0_data() -> SurvivalDataset {
    SurvivalDataset::new(
        vec![1.0, 2.0, 3.0],
        vec![true, true, false],
        vec!["s".into(); 3],
        vec![1.0, 0.0, 1.0],
        vec!["x".into()],
    )
    .unwrap()
}

pub fn d0_problem() -> FitProblem {
    FitProblem::new(&d0_data(), 0, 1, false).unwrap()
}

/// Root of the D0 score `1 - 2e^t/(2e^t+1) - e^t/(1+e^t)` by bisection.
pub fn d0_optimum() -> f64 {
    let score = |t: f64| 1.0 - 2.0 * t.exp() / (2.0 * t.exp() + 1.0) - t.exp() / (1.0 + t.exp());
    let (mut lo, mut hi) = (-5.0, 5.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub struct Instance {
    pub data: SurvivalDataset,
    pub degree: usize,
    pub n_basis: usize,
}

impl Instance {
    pub fn problem(&self, standardize: bool) -> FitProblem {
        FitProblem::new(&self.data, self.degree, self.n_basis, standardize).unwrap()
    }
}

/// Random stratified dataset with `n <= max_n`, `P <= max_p`, `K <= max_k`.
/// Roughly a third of the times are rounded to create ties.
pub fn random_instance(seed: u64, max_n: usize, max_p: usize, max_k: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(30..=max_n);
    let p = rng.random_range(1..=max_p);
    let n_basis = rng.random_range(1..=max_k);
    let degree = (n_basis - 1).min(3);
    let n_strata = rng.random_range(1..=3);
    let mut time = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    let mut strata = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    for i in 0..n {
        let mut t: f64 = rng.random_range(0.05..3.0);
        if rng.random::<f64>() < 0.3 {
            t = (t * 10.0).ceil() / 10.0;
        }
        time.push(t);
        // The first subject of each stratum is an event so every stratum
        // contributes.
        status.push(i < n_strata || rng.random::<f64>() < 0.7);
        strata.push(format!("c{}", i % n_strata));
        for _ in 0..p {
            x.push(rng.sample::<f64, _>(StandardNormal));
        }
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Instance {
        data: SurvivalDataset::new(time, status, strata, x, names).unwrap(),
        degree,
        n_basis,
    }
}

pub fn random_theta(seed: u64, p: usize, k: usize, scale: f64) -> CoefficientMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let values = (0..p * k).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
    CoefficientMatrix::from_vec(p, k, values).unwrap()
}

pub fn perturbed(theta: &CoefficientMatrix, index: usize, delta: f64) -> CoefficientMatrix {
    let mut out = theta.clone();
    out.as_mut_slice()[index] += delta;
    out
}

/// Writes straight to the process stderr so the line shows even when the
/// harness captures test output.
pub fn verdict(criterion: u32, pass: bool, detail: &str) -> bool {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "ACCEPTANCE {criterion:>2} {status}: {detail}");
    pass
}
