//! Dense small-matrix utilities: column-stacking vectorization, Kronecker and
//! Hadamard products, the commutation matrix, and the Moore–Penrose
//! pseudoinverse.
//!
//! Everything here assumes the column-stacking convention for `vec`; the
//! Kronecker identities used elsewhere in the crate (`vec(ABC) = (Cᵀ⊗A)vec(B)`
//! and friends) only hold under that convention.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::{Error, Result};

/// Default relative rank cutoff for [`pinv`]: singular values below
/// `tol * σ_max` are treated as zero.
pub const DEFAULT_PINV_TOL: f64 = 1e-12;

/// Column-stacking vectorization `vec(M)`.
pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    // nalgebra stores matrices column-major, so the raw slice is already
    // the column-stacked vector.
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`]: reshape a length `rows*cols` vector into a matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols, "unvec: length mismatch");
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Entrywise (Hadamard) product `A ∘ B`.
pub fn hadamard(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "hadamard: {}x{} vs {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(a.component_mul(b))
}

/// Commutation matrix `T_{m,p}`: the `mp × mp` binary permutation with
/// `T_{m,p} · vec(A) = vec(Aᵀ)` for every `m×p` matrix `A`.
pub fn commutation_matrix(m: usize, p: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(m * p, m * p);
    for i in 0..m {
        for j in 0..p {
            // vec(A) puts A[i,j] at i + j*m; vec(Aᵀ) puts it at j + i*p.
            t[(j + i * p, i + j * m)] = 1.0;
        }
    }
    t
}

fn pinv_impl<T>(m: &DMatrix<T>, tol: f64) -> Result<DMatrix<T>>
where
    T: ComplexField<RealField = f64>,
{
    let svd = m.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Numerical("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("SVD did not produce Vᵀ".into()))?;
    let sigma_max = svd.singular_values.max();
    let cutoff = tol * sigma_max;
    let inv_sigma = svd
        .singular_values
        .map(|s| if s > cutoff { T::from_real(1.0 / s) } else { T::zero() });
    Ok(v_t.adjoint() * DMatrix::from_diagonal(&inv_sigma) * u.adjoint())
}

/// Moore–Penrose pseudoinverse of a real matrix via SVD.
///
/// Singular values `σ ≤ tol·σ_max` are treated as zero. `tol` must be positive;
/// use [`DEFAULT_PINV_TOL`] unless the caller has a reason not to.
pub fn pinv(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("pinv: tol must be > 0, got {tol}")));
    }
    pinv_impl(m, tol)
}

/// Moore–Penrose pseudoinverse of a complex matrix via SVD.
pub fn pinv_complex(
    m: &DMatrix<nalgebra::Complex<f64>>,
    tol: f64,
) -> Result<DMatrix<nalgebra::Complex<f64>>> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("pinv: tol must be > 0, got {tol}")));
    }
    pinv_impl(m, tol)
}

/// Numerical rank of a real matrix: singular values above `rtol · σ_max`.
pub fn rank(m: &DMatrix<f64>, rtol: f64) -> usize {
    let sv = m.clone().singular_values();
    let cutoff = rtol * sv.max();
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Numerical rank of a complex matrix.
pub fn rank_complex(m: &DMatrix<nalgebra::Complex<f64>>, rtol: f64) -> usize {
    let sv = m.clone().singular_values();
    let cutoff = rtol * sv.max();
    sv.iter().filter(|&&s| s > cutoff).count()
}

/// Standard basis vector `e_i` of length `n`.
pub fn basis_vector(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}
