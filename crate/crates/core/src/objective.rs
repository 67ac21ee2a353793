//! Penalized cost `J_W = ½‖W∘Δ‖_F²` over the free variables `z̄ = [g; ω]`,
//! with its analytic gradient and Hessian, and centered finite-difference
//! oracles for both.
//!
//! The cost is evaluated through the parametrization `Δ(g, ω) = G(CX)⁺` with
//! `X` solving the Sylvester equation. Writing `Y = CX` and `S = (YᵀY)⁻¹`,
//! the minimum-norm reconstruction is the smooth composition `Δ = G·S·Yᵀ`,
//! whose differential is
//!
//! ```text
//! dΔ = (dG − Δ·dY)·Y⁺ + G·S·dYᵀ·Π,      Π = I − YY⁺.
//! ```
//!
//! The first term is the classical sensitivity `dδ = X̃⁺(dg − Δ̃·dx_v)` with
//! `X̃ = (CX)ᵀ⊗I`; the second is the pseudoinverse nullspace correction,
//! identically zero when `CX` is square (`p = k`) and at exactly sparse
//! points. Both are included, so the gradient and Hessian here are the exact
//! derivatives of the cost actually being minimized; centered finite
//! differences reproduce them to truncation order.
//!
//! The Hessian is assembled from analytic directional second derivatives of
//! the same composition (no finite-difference step enters), using the exact
//! second differential of the Sylvester solution,
//! `d²x_v = −2·dω·Ã(ω)⁻¹·Ĩ·dx_v`.

use nalgebra::{DMatrix, DVector};

use crate::matops::{kron, unvec, vec_of};
use crate::model::{ProblemInstance, WeightMatrix};
use crate::sylvester::{evaluate, rotation_generator, SearchPoint, SylvesterOperator};
use crate::{Error, Result};

/// Penalized cost of a perturbation: `½‖W∘Δ‖_F²`.
pub fn cost_of_delta(delta: &DMatrix<f64>, weights: &WeightMatrix) -> f64 {
    0.5 * weights.matrix().component_mul(delta).norm_squared()
}

/// Penalized cost at a search point.
pub fn cost(point: &SearchPoint, weights: &WeightMatrix) -> f64 {
    cost_of_delta(&point.delta, weights)
}

/// Gradient, Gauss–Newton core, and (optionally) the full Hessian at a point.
pub struct Derivatives {
    /// Exact gradient of the cost in `z̄`, length `m·k (+1)`.
    pub gradient: DVector<f64>,
    /// Sensitivity matrix: `dδ = zᵀ·dz̄` (rows are `vec(dΔ/dz̄_i)`).
    pub z: DMatrix<f64>,
    /// `sym(Z·W̄·Zᵀ)`; positive semidefinite Gram core.
    pub gauss_newton: DMatrix<f64>,
    /// Second-order correction `⟨W∘W∘Δ, d²Δ⟩` as a symmetric matrix
    /// (present when the Hessian was requested).
    pub curvature: Option<DMatrix<f64>>,
    /// `gauss_newton + curvature` (present when requested).
    pub hessian: Option<DMatrix<f64>>,
}

/// Number of free variables at a point: `m·k`, plus one for `ω` in the
/// standard mode.
pub fn var_count(inst: &ProblemInstance, k: usize) -> usize {
    inst.m() * k + usize::from(k == 2)
}

/// Pack `(g, ω)` into the free-variable vector `z̄`.
pub fn pack_vars(point: &SearchPoint) -> DVector<f64> {
    let mut z = DVector::zeros(point.g.len() + usize::from(point.k == 2));
    z.rows_mut(0, point.g.len()).copy_from(&point.g);
    if point.k == 2 {
        z[point.g.len()] = point.omega;
    }
    z
}

/// Split a free-variable vector back into `(g, ω)` for the given mode.
pub fn unpack_vars(z: &DVector<f64>, k: usize) -> (DVector<f64>, f64) {
    if k == 2 {
        let g = z.rows(0, z.len() - 1).clone_owned();
        (g, z[z.len() - 1])
    } else {
        (z.clone(), 0.0)
    }
}

/// Everything needed to differentiate `Δ(z̄)` at a point, with the Sylvester
/// factorization cached.
struct Sensitivity {
    m: usize,
    p: usize,
    k: usize,
    omega_free: bool,
    nv: usize,
    g_mat: DMatrix<f64>,
    /// `Y = CX`.
    y: DMatrix<f64>,
    /// `Y⁺ = (CX)⁺`.
    y_pinv: DMatrix<f64>,
    /// `S = (YᵀY)⁻¹ = Y⁺·Y⁺ᵀ`.
    s: DMatrix<f64>,
    /// `G·S`.
    gs: DMatrix<f64>,
    /// `dX` for each basis direction, `n×k` each.
    dx_basis: Vec<DMatrix<f64>>,
    /// `Ã⁻¹·Ĩ` (standard mode only), for second differentials of `X`.
    ainv_itilde: Option<DMatrix<f64>>,
    c: DMatrix<f64>,
}

impl Sensitivity {
    fn new(inst: &ProblemInstance, point: &SearchPoint) -> Result<Self> {
        if !point.a3_ok {
            return Err(Error::RankDeficient { attempts: 0 });
        }
        let (n, m, p) = (inst.n(), inst.m(), inst.p());
        let k = point.k;
        let omega_free = k == 2;
        let nv = var_count(inst, k);
        let op = SylvesterOperator::new(inst, point.omega, k)?;

        let eye_k = DMatrix::identity(k, k);
        let b_tilde = kron(&eye_k, inst.b());
        // dx_v(e_i) = −Ã⁻¹·B̃·e_i for g directions, −Ã⁻¹·Ĩ·x_v for ω
        let ainv_b = op.solve(&b_tilde)?;
        let mut dx_basis = Vec::with_capacity(nv);
        for i in 0..m * k {
            let col = -ainv_b.column(i).clone_owned();
            dx_basis.push(unvec(&DVector::from_column_slice(col.as_slice()), n, k));
        }
        let ainv_itilde = if omega_free {
            let i_tilde = kron(&rotation_generator(k), &DMatrix::identity(n, n));
            let ainv_i = op.solve(&i_tilde)?;
            let x_v = vec_of(&point.x);
            let col = -(&ainv_i * &x_v);
            dx_basis.push(unvec(&col, n, k));
            Some(ainv_i)
        } else {
            None
        };

        let y = point.cx.clone();
        let y_pinv = point.cx_pinv.clone();
        let s = &y_pinv * y_pinv.transpose();
        let g_mat = point.g_matrix(m);
        let gs = &g_mat * &s;
        Ok(Self {
            m,
            p,
            k,
            omega_free,
            nv,
            g_mat,
            y,
            y_pinv,
            s,
            gs,
            dx_basis,
            ainv_itilde,
            c: inst.c().clone(),
        })
    }

    /// `dX` along an arbitrary direction `u`.
    fn dx(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let mut dx = DMatrix::zeros(self.dx_basis[0].nrows(), self.k);
        for (i, base) in self.dx_basis.iter().enumerate() {
            if u[i] != 0.0 {
                dx += base * u[i];
            }
        }
        dx
    }

    fn dg(&self, u: &DVector<f64>) -> DMatrix<f64> {
        unvec(&u.rows(0, self.m * self.k).clone_owned(), self.m, self.k)
    }

    fn domega(&self, u: &DVector<f64>) -> f64 {
        if self.omega_free {
            u[self.nv - 1]
        } else {
            0.0
        }
    }

    /// First differential of `Δ = G·S·Yᵀ` along `u`.
    fn ddelta(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let dg = self.dg(u);
        let dy = &self.c * self.dx(u);
        let dq = dy.transpose() * &self.y + self.y.transpose() * &dy;
        let ds = -(&self.s * &dq * &self.s);
        dg * &self.y_pinv + &self.g_mat * ds * self.y.transpose() + &self.gs * dy.transpose()
    }

    /// Second differential of `Δ` along `(u, u)`.
    fn d2delta(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let dg = self.dg(u);
        let dx = self.dx(u);
        let dy = &self.c * &dx;
        let domega = self.domega(u);

        // d²X = −2·dω·Ã⁻¹·Ĩ·dx_v (zero in the single-column mode)
        let d2y = match (&self.ainv_itilde, domega) {
            (Some(ainv_i), dw) if dw != 0.0 => {
                let dx_v = vec_of(&dx);
                let d2x_v = -(ainv_i * dx_v) * (2.0 * dw);
                &self.c * unvec(&d2x_v, dx.nrows(), self.k)
            }
            _ => DMatrix::zeros(self.p, self.k),
        };

        let yt = self.y.transpose();
        let dq = dy.transpose() * &self.y + &yt * &dy;
        let ds = -(&self.s * &dq * &self.s);
        let d2q = d2y.transpose() * &self.y + dy.transpose() * &dy * 2.0 + &yt * &d2y;
        let d2s = -(&ds * &dq * &self.s) - &self.s * d2q * &self.s - &self.s * &dq * &ds;

        (&dg * &ds * &yt) * 2.0
            + (&dg * &self.s * dy.transpose()) * 2.0
            + &self.g_mat * d2s * &yt
            + (&self.g_mat * &ds * dy.transpose()) * 2.0
            + &self.gs * d2y.transpose()
    }
}

/// Compute the analytic derivatives of `J_W` at a search point.
///
/// Requires A3 at the point; rank-deficient `CX` is reported as
/// [`Error::RankDeficient`].
pub fn derivatives(
    inst: &ProblemInstance,
    point: &SearchPoint,
    weights: &WeightMatrix,
    with_hessian: bool,
) -> Result<Derivatives> {
    let sens = Sensitivity::new(inst, point)?;
    let (m, p, nv) = (sens.m, sens.p, sens.nv);

    // Z rows: vec(dΔ) along each basis direction
    let mut z = DMatrix::zeros(nv, m * p);
    for i in 0..nv {
        let mut e = DVector::zeros(nv);
        e[i] = 1.0;
        let dd = sens.ddelta(&e);
        z.row_mut(i).copy_from(&vec_of(&dd).transpose());
    }

    let w_bar = weights.w_bar();
    let delta_vec = point.delta_vec();
    let w_delta = w_bar.component_mul(&delta_vec);
    let gradient = &z * &w_delta;

    let zw = DMatrix::from_fn(nv, m * p, |i, j| z[(i, j)] * w_bar[j]);
    let gn_raw = &zw * z.transpose();
    let gauss_newton = (&gn_raw + gn_raw.transpose()) * 0.5;

    let (curvature, hessian) = if with_hessian {
        // Ω = W∘W∘Δ; the quadratic form q(u) = ⟨Ω, d²Δ(u,u)⟩ is polarized
        // into a symmetric matrix.
        let omega_mat = unvec(&w_delta, m, p);
        let q_form = |u: &DVector<f64>| sens.d2delta(u).component_mul(&omega_mat).sum();
        let mut diag = Vec::with_capacity(nv);
        for i in 0..nv {
            let mut e = DVector::zeros(nv);
            e[i] = 1.0;
            diag.push(q_form(&e));
        }
        let mut c_mat = DMatrix::zeros(nv, nv);
        for i in 0..nv {
            c_mat[(i, i)] = diag[i];
            for j in i + 1..nv {
                let mut e = DVector::zeros(nv);
                e[i] = 1.0;
                e[j] = 1.0;
                let mixed = 0.5 * (q_form(&e) - diag[i] - diag[j]);
                c_mat[(i, j)] = mixed;
                c_mat[(j, i)] = mixed;
            }
        }
        let h = &gauss_newton + &c_mat;
        (Some(c_mat), Some(h))
    } else {
        (None, None)
    };

    Ok(Derivatives {
        gradient,
        z,
        gauss_newton,
        curvature,
        hessian,
    })
}

/// Analytic gradient of the penalized cost in the free variables.
pub fn gradient(
    inst: &ProblemInstance,
    point: &SearchPoint,
    weights: &WeightMatrix,
) -> Result<DVector<f64>> {
    Ok(derivatives(inst, point, weights, false)?.gradient)
}

/// Analytic Hessian of the penalized cost; symmetric by construction.
pub fn hessian(
    inst: &ProblemInstance,
    point: &SearchPoint,
    weights: &WeightMatrix,
) -> Result<DMatrix<f64>> {
    Ok(derivatives(inst, point, weights, true)?
        .hessian
        .expect("hessian requested"))
}

/// Centered finite-difference gradient of the cost, step `h·(1+|z_i|)` per
/// coordinate. Independent of the analytic path: every probe re-solves the
/// Sylvester equation and rebuilds `Δ`.
pub fn fd_gradient(
    inst: &ProblemInstance,
    point: &SearchPoint,
    weights: &WeightMatrix,
    step: f64,
) -> Result<DVector<f64>> {
    let z0 = pack_vars(point);
    let k = point.k;
    let mut grad = DVector::zeros(z0.len());
    for i in 0..z0.len() {
        let h = step * (1.0 + z0[i].abs());
        let mut zp = z0.clone();
        zp[i] += h;
        let mut zm = z0.clone();
        zm[i] -= h;
        let (gp, op) = unpack_vars(&zp, k);
        let (gm, om) = unpack_vars(&zm, k);
        let cp = cost(&evaluate(inst, &gp, op)?, weights);
        let cm = cost(&evaluate(inst, &gm, om)?, weights);
        grad[i] = (cp - cm) / (2.0 * h);
    }
    Ok(grad)
}

/// Centered finite differences of the analytic gradient; oracle for the
/// Hessian.
pub fn fd_hessian(
    inst: &ProblemInstance,
    point: &SearchPoint,
    weights: &WeightMatrix,
    step: f64,
) -> Result<DMatrix<f64>> {
    let z0 = pack_vars(point);
    let k = point.k;
    let nv = z0.len();
    let mut h_mat = DMatrix::zeros(nv, nv);
    for j in 0..nv {
        let h = step * (1.0 + z0[j].abs());
        let mut zp = z0.clone();
        zp[j] += h;
        let mut zm = z0.clone();
        zm[j] -= h;
        let (gp, op) = unpack_vars(&zp, k);
        let (gm, om) = unpack_vars(&zm, k);
        let grad_p = gradient(inst, &evaluate(inst, &gp, op)?, weights)?;
        let grad_m = gradient(inst, &evaluate(inst, &gm, om)?, weights)?;
        let col = (grad_p - grad_m) / (2.0 * h);
        h_mat.set_column(j, &col);
    }
    // average the two one-sided estimates of the symmetric matrix
    Ok((&h_mat + h_mat.transpose()) * 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matops::{commutation_matrix, pinv};
    use crate::model::{SparsityPattern, RANK_TOL};
    use crate::testutil::{example_instance, lcg, random_stable_instance};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn published_point(inst: &ProblemInstance) -> SearchPoint {
        let g0 = DVector::from_vec(vec![1.0582, 0.4363, 1.4115, -0.0146]);
        evaluate(inst, &g0, 2.5).unwrap()
    }

    #[test]
    fn cost_examples() {
        let inst = example_instance(false);
        let w1 = WeightMatrix::new(inst.pattern(), 1.0).unwrap();
        assert_eq!(cost_of_delta(&DMatrix::zeros(2, 2), &w1), 0.0);

        // Case-1 optimum: with W = 1 the cost is ½‖Δ‖²
        let delta = DMatrix::from_row_slice(2, 2, &[-0.0332, -0.0717, 0.1975, 0.4700]);
        let c = cost_of_delta(&delta, &w1);
        assert_relative_eq!(c, 0.5 * delta.norm_squared(), epsilon = 1e-15);
        assert_relative_eq!(c, 0.13308, epsilon = 1e-4);
    }

    #[test]
    fn cost_two_routes_agree() {
        let inst = example_instance(true);
        let w = WeightMatrix::new(inst.pattern(), 31.0).unwrap();
        let mut state = 5u64;
        for _ in 0..25 {
            let delta = DMatrix::from_fn(2, 2, |_, _| lcg(&mut state));
            let direct = cost_of_delta(&delta, &w);
            let quad = 0.5
                * vec_of(&delta)
                    .component_mul(&w.w_bar())
                    .dot(&vec_of(&delta));
            assert_relative_eq!(direct, quad, epsilon = 1e-12 * (1.0 + direct));
        }
    }

    #[test]
    fn cost_ignores_weight_on_exactly_sparse_delta() {
        let inst = example_instance(true);
        let delta = DMatrix::from_row_slice(2, 2, &[-0.0418, 0.0, 0.0, 0.5638]);
        let base = 0.5 * delta.norm_squared();
        for w in [1.0, 5.0, 100.0, 1e4] {
            let wm = WeightMatrix::new(inst.pattern(), w).unwrap();
            assert_relative_eq!(cost_of_delta(&delta, &wm), base, epsilon = 1e-15);
        }
    }

    #[test]
    fn gradient_vanishes_with_delta() {
        // structural check: the gradient is Z·W̄·δ-shaped, so δ = 0 kills it
        // whatever the sensitivities are
        let inst = example_instance(false);
        let w = WeightMatrix::new(inst.pattern(), 100.0).unwrap();
        let mut point = published_point(&inst);
        point.delta = DMatrix::zeros(2, 2);
        let grad = gradient(&inst, &point, &w).unwrap();
        assert_eq!(grad.norm(), 0.0);
    }

    #[test]
    fn gradient_requires_a3() {
        let inst = example_instance(false);
        let w = WeightMatrix::new(inst.pattern(), 100.0).unwrap();
        let degenerate = evaluate(&inst, &DVector::zeros(4), 1.0).unwrap();
        assert!(matches!(
            gradient(&inst, &degenerate, &w),
            Err(crate::Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn gradient_matches_fd_at_published_start() {
        let inst = example_instance(true);
        let w = WeightMatrix::new(inst.pattern(), 100.0).unwrap();
        let point = published_point(&inst);
        let analytic = gradient(&inst, &point, &w).unwrap();
        let fd = fd_gradient(&inst, &point, &w, 1e-6).unwrap();
        let rel = (&analytic - &fd).norm() / (1.0 + analytic.norm());
        assert!(rel < 1e-5, "relative error {rel}");
    }

    /// The classical sensitivity `Zᵀ = [X̃⁺(I + Δ̃Ã⁻¹B̃) | X̃⁺Δ̃Ã⁻¹Ĩx_v]`
    /// plus curvature core `M`, assembled literally. Valid as the exact
    /// derivative whenever `CX` is square, where the pseudoinverse nullspace
    /// term vanishes; used here as an independent oracle for that case.
    fn literal_z_and_m(
        inst: &ProblemInstance,
        point: &SearchPoint,
        weights: &WeightMatrix,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, m, p) = (inst.n(), inst.m(), inst.p());
        let k = point.k;
        let nv = var_count(inst, k);
        let op = SylvesterOperator::new(inst, point.omega, k).unwrap();
        let eye_k = DMatrix::identity(k, k);
        let b_tilde = kron(&eye_k, inst.b());
        let delta_tilde = kron(&eye_k, &(&point.delta * inst.c()));
        let x_tilde = kron(&point.cx.transpose(), &DMatrix::identity(m, m));
        let x_tilde_pinv = pinv(&x_tilde, RANK_TOL).unwrap();
        let ainv_b = op.solve(&b_tilde).unwrap();
        let mut z_t = DMatrix::zeros(m * p, nv);
        z_t.view_mut((0, 0), (m * p, m * k)).copy_from(
            &(&x_tilde_pinv * (DMatrix::identity(m * k, m * k) + &delta_tilde * &ainv_b)),
        );
        let i_tilde = kron(&rotation_generator(k), &DMatrix::identity(n, n));
        let x_v = vec_of(&point.x);
        if k == 2 {
            let ix = &i_tilde * &x_v;
            let t = op
                .solve(&DMatrix::from_column_slice(n * k, 1, ix.as_slice()))
                .unwrap();
            let col = &x_tilde_pinv * (&delta_tilde * &t);
            z_t.view_mut((0, nv - 1), (m * p, 1)).copy_from(&col);
        }
        let z = z_t.transpose();

        let w_bar = weights.w_bar();
        let w_delta = w_bar.component_mul(&point.delta_vec());
        let wwd = unvec(&w_delta, m, p);
        let kk = kron(&(&point.cx_pinv * wwd.transpose()), &inst.c().transpose());
        let t_mp = commutation_matrix(m, p);
        let mut bracket = &kk * &t_mp * &z_t;
        if k == 2 {
            let xp_t_wd = x_tilde_pinv.transpose() * &w_delta;
            let dt = delta_tilde.transpose() * xp_t_wd;
            let solved = op
                .solve_transpose(&DMatrix::from_column_slice(n * k, 1, dt.as_slice()))
                .unwrap();
            let r = i_tilde.transpose() * solved;
            for i in 0..n * k {
                bracket[(i, nv - 1)] -= r[(i, 0)];
            }
        }
        let q = op.solve_transpose(&bracket).unwrap();
        let mut y_cols = DMatrix::zeros(n * k, nv);
        y_cols.view_mut((0, 0), (n * k, m * k)).copy_from(&b_tilde);
        if k == 2 {
            let ix = &i_tilde * &x_v;
            y_cols.view_mut((0, nv - 1), (n * k, 1)).copy_from(&ix);
        }
        let m_mat = y_cols.transpose() * q;
        (z, m_mat)
    }

    #[test]
    fn square_cx_reduces_to_literal_formulas() {
        // with p = k the nullspace correction vanishes and the sensitivity,
        // gradient, and Hessian must coincide with the literal assembly
        let inst = example_instance(true);
        let w = WeightMatrix::new(inst.pattern(), 100.0).unwrap();
        let point = published_point(&inst);
        let d = derivatives(&inst, &point, &w, true).unwrap();
        let (z_lit, m_lit) = literal_z_and_m(&inst, &point, &w);
        assert!(
            (&d.z - &z_lit).norm() < 1e-9 * (1.0 + z_lit.norm()),
            "sensitivity mismatch {}",
            (&d.z - &z_lit).norm()
        );
        let grad_lit = &z_lit * w.w_bar().component_mul(&point.delta_vec());
        assert!((&d.gradient - grad_lit).norm() < 1e-9 * (1.0 + d.gradient.norm()));
        let h_lit = &d.gauss_newton + (&m_lit + m_lit.transpose());
        let h = d.hessian.unwrap();
        assert!(
            (&h - &h_lit).norm() < 1e-7 * (1.0 + h_lit.norm()),
            "hessian mismatch {}",
            (&h - &h_lit).norm()
        );
    }

    #[test]
    fn gradient_and_hessian_match_fd_on_random_instances() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let inst = random_stable_instance(seed * 7 + 1, 4, 2, 3);
            let w = WeightMatrix::new(inst.pattern(), 10.0).unwrap();
            let mut s = seed * 131 + 17;
            let g = DVector::from_fn(4, |_, _| lcg(&mut s));
            let omega = 0.3 + lcg(&mut s).abs() * 2.0;
            let point = evaluate(&inst, &g, omega).unwrap();
            if !point.well_conditioned || point.sigma_ratio < 1e-3 {
                continue;
            }
            let analytic = gradient(&inst, &point, &w).unwrap();
            let fd = fd_gradient(&inst, &point, &w, 1e-6).unwrap();
            let rel = (&analytic - &fd).norm() / (1.0 + analytic.norm());
            assert!(rel < 1e-5, "seed {seed}: gradient FD mismatch {rel}");

            let h = hessian(&inst, &point, &w).unwrap();
            let h_fd = fd_hessian(&inst, &point, &w, 1e-5).unwrap();
            let max_rel = h
                .iter()
                .zip(h_fd.iter())
                .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
                .fold(0.0, f64::max);
            assert!(max_rel < 1e-4, "seed {seed}: hessian FD mismatch {max_rel}");
            checked += 1;
        }
        assert!(checked >= 20, "only {checked} well-conditioned draws");
    }

    #[test]
    fn omega_zero_mode_derivatives_match_fd() {
        for seed in [3u64, 11, 29] {
            let inst = random_stable_instance(seed, 5, 2, 2);
            let w = WeightMatrix::new(inst.pattern(), 10.0).unwrap();
            let mut s = seed + 1000;
            let g = DVector::from_fn(2, |_, _| lcg(&mut s));
            let point = evaluate(&inst, &g, 0.0).unwrap();
            if !point.well_conditioned {
                continue;
            }
            assert_eq!(point.k, 1);
            let analytic = gradient(&inst, &point, &w).unwrap();
            assert_eq!(analytic.len(), 2);
            let fd = fd_gradient(&inst, &point, &w, 1e-6).unwrap();
            let rel = (&analytic - &fd).norm() / (1.0 + analytic.norm());
            assert!(rel < 1e-5, "seed {seed}: omega-zero gradient mismatch {rel}");

            let h = hessian(&inst, &point, &w).unwrap();
            let h_fd = fd_hessian(&inst, &point, &w, 1e-5).unwrap();
            let max_rel = h
                .iter()
                .zip(h_fd.iter())
                .map(|(a, b)| (a - b).abs() / (1.0 + a.abs()))
                .fold(0.0, f64::max);
            assert!(max_rel < 1e-4, "seed {seed}: omega-zero hessian mismatch {max_rel}");
        }
    }

    #[test]
    fn hessian_is_exactly_symmetric_and_gn_psd() {
        let inst = example_instance(true);
        let w = WeightMatrix::new(inst.pattern(), 100.0).unwrap();
        let point = published_point(&inst);
        let d = derivatives(&inst, &point, &w, true).unwrap();
        let h = d.hessian.unwrap();
        assert_eq!(h, h.transpose());
        let gn = d.gauss_newton;
        assert_eq!(gn, gn.transpose());
        let eigs = gn.symmetric_eigenvalues();
        let max = eigs.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()));
        assert!(
            eigs.iter().all(|&e| e > -1e-10 * (1.0 + max)),
            "Gauss-Newton core must be PSD: {:?}",
            eigs.as_slice()
        );
    }

    #[test]
    fn curvature_vanishes_at_zero_delta() {
        // with Δ = 0 (hence Ω = 0) the second-order correction is identically
        // zero and the Hessian collapses to the Gram core
        let inst = example_instance(false);
        let w = WeightMatrix::new(inst.pattern(), 100.0).unwrap();
        let mut point = published_point(&inst);
        point.delta = DMatrix::zeros(2, 2);
        let d = derivatives(&inst, &point, &w, true).unwrap();
        assert_eq!(d.curvature.unwrap().norm(), 0.0);
        assert_eq!(d.hessian.unwrap(), d.gauss_newton);
    }

    #[test]
    fn nullspace_correction_active_only_for_tall_cx() {
        // p > k with an active penalty: the literal sensitivity alone must
        // NOT match FD, while the corrected gradient does.
        let mut s = 8u64;
        let a0 = DMatrix::from_fn(4, 4, |_, _| lcg(&mut s));
        let alpha = crate::eig::spectral_abscissa(&a0);
        let a = a0 - DMatrix::identity(4, 4) * (alpha + 1.0);
        let b = DMatrix::from_fn(4, 2, |_, _| lcg(&mut s));
        let c = DMatrix::from_fn(3, 4, |_, _| lcg(&mut s));
        let pattern = SparsityPattern::new(DMatrix::from_fn(2, 3, |i, j| {
            if (i + j) % 2 == 0 {
                1.0
            } else {
                0.0
            }
        }))
        .unwrap();
        let inst = ProblemInstance::new(a, b, c, pattern).unwrap();
        let w = WeightMatrix::new(inst.pattern(), 10.0).unwrap();
        let g = DVector::from_fn(4, |_, _| lcg(&mut s));
        let point = evaluate(&inst, &g, 1.3).unwrap();
        assert!(point.well_conditioned);

        let fd = fd_gradient(&inst, &point, &w, 1e-6).unwrap();
        let exact = gradient(&inst, &point, &w).unwrap();
        assert!((&exact - &fd).norm() / (1.0 + exact.norm()) < 1e-5);

        let (z_lit, _) = literal_z_and_m(&inst, &point, &w);
        let grad_lit = &z_lit * w.w_bar().component_mul(&point.delta_vec());
        assert!(
            (&grad_lit - &fd).norm() / (1.0 + fd.norm()) > 1e-3,
            "expected the uncorrected sensitivity to disagree for tall CX"
        );
    }
}
