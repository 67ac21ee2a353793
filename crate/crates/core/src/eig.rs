//! Internal eigenvalue helpers for real dense matrices.
//!
//! Eigenvalues come from the real Schur form; eigenvectors for a selected
//! eigenvalue are recovered by inverse iteration with a complex shifted LU.

use nalgebra::{Complex, DMatrix, DVector};

use crate::{Error, Result};

pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex<f64>> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}

pub(crate) fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Eigenvalue of `m` closest to `target`, together with its distance.
pub(crate) fn closest_eigenvalue(m: &DMatrix<f64>, target: Complex<f64>) -> (Complex<f64>, f64) {
    let mut best = Complex::new(f64::NAN, f64::NAN);
    let mut best_dist = f64::INFINITY;
    for l in eigenvalues(m) {
        let d = (l - target).norm();
        if d < best_dist {
            best_dist = d;
            best = l;
        }
    }
    (best, best_dist)
}

/// Unit right eigenvector of a real matrix for the (complex) eigenvalue
/// `lambda`, via inverse iteration. `lambda` is assumed accurate to roughly
/// machine precision; a handful of iterations then suffices.
pub(crate) fn eigenvector_for(
    m: &DMatrix<f64>,
    lambda: Complex<f64>,
) -> Result<DVector<Complex<f64>>> {
    let n = m.nrows();
    let mc = m.map(|x| Complex::new(x, 0.0));
    let scale = 1.0 + m.norm();

    // A microscopic shift keeps the LU factorization well-defined when
    // lambda is exact to the last ulp.
    let mut shift = lambda;
    let mut lu = (&mc - DMatrix::identity(n, n) * shift).lu();
    if lu.determinant().norm() == 0.0 {
        shift += Complex::new(1e-13 * scale, 1e-13 * scale);
        lu = (&mc - DMatrix::identity(n, n) * shift).lu();
    }

    let mut v = DVector::from_fn(n, |i, _| Complex::new(1.0, (i as f64 + 1.0).recip()));
    v /= Complex::new(v.norm(), 0.0);
    let mut best = v.clone();
    let mut best_res = f64::INFINITY;
    for _ in 0..8 {
        let next = match lu.solve(&v) {
            Some(w) => w,
            None => break,
        };
        let norm = next.norm();
        if !norm.is_finite() || norm == 0.0 {
            break;
        }
        v = next / Complex::new(norm, 0.0);
        let res = (&mc * &v - &v * lambda).norm();
        if res < best_res {
            best_res = res;
            best = v.clone();
        }
        if res <= 1e-13 * scale {
            break;
        }
    }
    if best_res > 1e-6 * scale {
        return Err(Error::Numerical(format!(
            "inverse iteration did not converge: residual {best_res:.3e} for eigenvalue {lambda}"
        )));
    }
    Ok(best)
}
