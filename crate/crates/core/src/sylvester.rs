//! Sylvester-equation parametrization of the eigenvalue-assignment
//! constraint.
//!
//! For the standard (two-column) mode, `X ∈ ℝ^{n×2}` solves
//! `AX − ωXĪ = −BG` with `Ī = [[0,1],[−1,0]]`, which encodes
//! `(A+BΔC)x = jωx` for `x = X₁ + jX₂` once `Δ = G(CX)⁺` satisfies
//! `ΔCX = G`. The single-column mode (`k = 1`, `ω = 0`) encodes a real
//! eigenvector at the origin: `AX = −BG`.
//!
//! The lifted operator `Ã(ω) = I_k⊗A + ω(Ī⊗I_n)` is factorized once per
//! frequency and reused for gradient and Hessian evaluation; its transpose is
//! factorized alongside so that `Ã(ω)^{-ᵀ}` applications never form an
//! explicit inverse.

use nalgebra::{Complex, DMatrix, DVector, Dyn, LU};

use crate::matops::{kron, pinv, unvec, vec_of, DEFAULT_PINV_TOL};
use crate::model::{a3_check, ProblemInstance, RANK_TOL};
use crate::{Error, Result};

/// Conditioning threshold on `σ_k(CX)/σ_1(CX)` below which a point is treated
/// as too close to an A3 violation to trust derivatives.
pub const A3_COND_TOL: f64 = 1e-6;

/// The `k×k` skew generator `Ī`: `[[0,1],[−1,0]]` for `k = 2`, `[[0]]` for
/// `k = 1`.
pub fn rotation_generator(k: usize) -> DMatrix<f64> {
    match k {
        1 => DMatrix::zeros(1, 1),
        2 => DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        _ => panic!("rotation_generator: k must be 1 or 2, got {k}"),
    }
}

/// Cached factorization of the lifted operator `Ã(ω)`.
pub struct SylvesterOperator {
    omega: f64,
    k: usize,
    n: usize,
    lu: LU<f64, Dyn, Dyn>,
    lu_t: LU<f64, Dyn, Dyn>,
}

impl SylvesterOperator {
    /// Factorize `Ã(ω) = I_k⊗A + ω(Ī⊗I_n)`. Under A1 the operator is
    /// invertible for every real `ω`, since `Γ(Ã) = {λ ± jω : λ ∈ Γ(A)}`
    /// stays off zero.
    pub fn new(inst: &ProblemInstance, omega: f64, k: usize) -> Result<Self> {
        if !omega.is_finite() {
            return Err(Error::InvalidInput(format!("omega must be finite, got {omega}")));
        }
        let n = inst.n();
        let a_tilde = Self::lifted_matrix(inst, omega, k);
        let lu = a_tilde.clone().lu();
        let lu_t = a_tilde.transpose().lu();
        if lu.determinant() == 0.0 {
            return Err(Error::Numerical(format!(
                "singular Sylvester operator at omega = {omega}; A1 is likely violated"
            )));
        }
        Ok(Self { omega, k, n, lu, lu_t })
    }

    pub fn lifted_matrix(inst: &ProblemInstance, omega: f64, k: usize) -> DMatrix<f64> {
        let n = inst.n();
        let ibar = rotation_generator(k);
        kron(&DMatrix::identity(k, k), inst.a()) + kron(&ibar, &DMatrix::identity(n, n)) * omega
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.n * self.k
    }

    /// Solve `Ã(ω)·Y = rhs` column by column.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu
            .solve(rhs)
            .ok_or_else(|| Error::Numerical("Sylvester operator solve failed".into()))
    }

    /// Solve `Ã(ω)ᵀ·Y = rhs`.
    pub fn solve_transpose(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.lu_t
            .solve(rhs)
            .ok_or_else(|| Error::Numerical("Sylvester operator transpose solve failed".into()))
    }
}

/// Solve `AX − ωXĪ = −BG` for `X` (standard two-column form).
pub fn solve_x(inst: &ProblemInstance, g: &DMatrix<f64>, omega: f64) -> Result<DMatrix<f64>> {
    solve_x_k(inst, g, omega, g.ncols())
}

fn solve_x_k(inst: &ProblemInstance, g: &DMatrix<f64>, omega: f64, k: usize) -> Result<DMatrix<f64>> {
    if g.nrows() != inst.m() || g.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "G must be {}x{}, got {}x{}",
            inst.m(),
            k,
            g.nrows(),
            g.ncols()
        )));
    }
    let op = SylvesterOperator::new(inst, omega, k)?;
    let rhs = -(inst.b() * g);
    let x_v = op.solve(&DMatrix::from_column_slice(inst.n() * k, 1, vec_of(&rhs).as_slice()))?;
    Ok(unvec(&DVector::from_column_slice(x_v.as_slice()), inst.n(), k))
}

/// Minimum-norm solution of `ΔCX = G`: `Δ = G(CX)⁺`. Errors when `CX` is not
/// full column rank (A3 violation).
pub fn reconstruct_delta(
    inst: &ProblemInstance,
    g: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let cx = inst.c() * x;
    let chk = a3_check(&cx, inst.p());
    if !chk.full_rank {
        return Err(Error::RankDeficient { attempts: 0 });
    }
    Ok(g * pinv(&cx, RANK_TOL)?)
}

/// A point of the unconstrained search space together with everything derived
/// from it.
#[derive(Clone, Debug)]
pub struct SearchPoint {
    /// Free variables `vec(G)`, length `m·k`.
    pub g: DVector<f64>,
    /// Frequency; identically zero in the single-column mode.
    pub omega: f64,
    /// Number of columns of `X` (2 standard, 1 for the `ω = 0` variant).
    pub k: usize,
    /// Solution of the Sylvester equation, `n×k`.
    pub x: DMatrix<f64>,
    /// Reconstructed minimum-norm perturbation, `m×p`.
    pub delta: DMatrix<f64>,
    /// `CX`, kept for derivative assembly.
    pub cx: DMatrix<f64>,
    /// `(CX)⁺`, `k×p`.
    pub cx_pinv: DMatrix<f64>,
    /// `σ_k(CX)/σ_1(CX)`.
    pub sigma_ratio: f64,
    /// A3 holds at this point (`CX` full column rank at `RANK_TOL`).
    pub a3_ok: bool,
    /// `σ_k/σ_1 ≥ A3_COND_TOL`: derivatives are trustworthy.
    pub well_conditioned: bool,
}

impl SearchPoint {
    /// `G` as an `m×k` matrix.
    pub fn g_matrix(&self, m: usize) -> DMatrix<f64> {
        unvec(&self.g, m, self.k)
    }

    /// `δ = vec(Δ)`.
    pub fn delta_vec(&self) -> DVector<f64> {
        vec_of(&self.delta)
    }

    /// `‖Δ‖_F`.
    pub fn delta_norm(&self) -> f64 {
        self.delta.norm()
    }

    /// The complex eigenvector encoded by `X`: `x = X₁ + jX₂` (or the real
    /// `X₁` when `k = 1`).
    pub fn eigvec(&self) -> DVector<Complex<f64>> {
        let n = self.x.nrows();
        DVector::from_fn(n, |i, _| {
            let re = self.x[(i, 0)];
            let im = if self.k == 2 { self.x[(i, 1)] } else { 0.0 };
            Complex::new(re, im)
        })
    }
}

/// Evaluate the parametrization at `(g, ω)`: solve for `X`, reconstruct
/// `Δ = G(CX)⁺`, and report the A3 status. `k` is inferred from the length of
/// `g` (`m·k`); `ω` must be zero when `k = 1`.
pub fn evaluate(inst: &ProblemInstance, g: &DVector<f64>, omega: f64) -> Result<SearchPoint> {
    let m = inst.m();
    let k = match g.len() {
        l if l == 2 * m => 2,
        l if l == m => 1,
        l => {
            return Err(Error::DimensionMismatch(format!(
                "g must have length {} (standard) or {} (omega-zero), got {l}",
                2 * m,
                m
            )))
        }
    };
    if k == 1 && omega != 0.0 {
        return Err(Error::InvalidInput(
            "single-column mode requires omega = 0".into(),
        ));
    }
    let g_mat = unvec(g, m, k);
    let x = solve_x_k(inst, &g_mat, omega, k)?;
    let cx = inst.c() * &x;
    let chk = a3_check(&cx, inst.p());
    let cx_pinv = pinv(&cx, RANK_TOL)?;
    let delta = &g_mat * &cx_pinv;
    Ok(SearchPoint {
        g: g.clone(),
        omega,
        k,
        x,
        delta,
        cx,
        cx_pinv,
        sigma_ratio: chk.sigma_ratio,
        a3_ok: chk.full_rank,
        well_conditioned: chk.full_rank && chk.sigma_ratio >= A3_COND_TOL,
    })
}
