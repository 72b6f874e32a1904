//! Small dense helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

/// Largest ridge tried before giving up.
pub const MAX_RIDGE: f64 = 1e-2;

/// Cholesky factor of `a + ridge * I`, escalating the ridge geometrically
/// (`ridge, 10 ridge, ...`, starting at 1e-8 when `ridge == 0`) up to
/// [`MAX_RIDGE`]. Returns the factor and the ridge that succeeded.
pub fn cholesky_with_ridge(a: &DMatrix<f64>, ridge: f64) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let mut current = ridge;
    loop {
        let mut shifted = a.clone();
        if current > 0.0 {
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += current;
            }
        }
        if let Some(chol) = Cholesky::new(shifted) {
            return Some((chol, current));
        }
        current = if current == 0.0 { 1e-8 } else { current * 10.0 };
        if current > MAX_RIDGE * (1.0 + 1e-12) {
            return None;
        }
    }
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `a^{-1/2}` for a symmetric positive definite `a`; `None` when some
/// eigenvalue is not positive.
pub fn inverse_sqrt(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| {
        eig.eigenvectors[(r, c)] / eig.eigenvalues[c].sqrt()
    });
    Some(&scaled * eig.eigenvectors.transpose())
}
