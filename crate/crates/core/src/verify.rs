//! Independent certification of candidate minima, spectral value set
//! sampling, and brute-force stability-radius brackets.
//!
//! A candidate `(Δ̂, ω̂)` is certified against the first- and second-order
//! optimality conditions of the constrained problem:
//!
//! - stationarity `Δ̂ = −S∘[Bᵀ·Re(l̂x̂ᵀ)·Cᵀ]` with right/left eigenvectors
//!   `x̂`, `l̂` of `A(Δ̂)` at `±jω̂`,
//! - realness `Im(l̂ᵀx̂) = 0`,
//! - full rank of the constraint Jacobian `J_b`,
//! - positive definiteness of the Lagrangian Hessian projected onto
//!   `ker J_b` via `P = I − J_b⁺J_b`.
//!
//! The checks run on complex blocks assembled literally, treating `x` and
//! `x*` as independent variables.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matops::{pinv_complex, rank, rank_complex};
use crate::model::ProblemInstance;
use crate::{eig, Error, Result};

type CMatrix = DMatrix<Complex<f64>>;
type CVector = DVector<Complex<f64>>;

/// Spectral abscissa `α(M)`: the largest real part over the spectrum.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    eig::spectral_abscissa(m)
}

/// Thresholds used by [`certify`].
#[derive(Clone, Copy, Debug)]
pub struct CertifyOptions {
    /// Eigenvalue matching tolerance is `eig_tol_scale·(1+‖A(Δ̂)‖_F)`.
    pub eig_tol_scale: f64,
    pub stationarity_tol: f64,
    pub realness_tol: f64,
    /// `|α(A(Δ̂))| ≤ alpha_tol` declares a boundary point.
    pub alpha_tol: f64,
    /// Relative SVD threshold for Jacobian rank.
    pub rank_rtol: f64,
    /// Projected-Hessian eigenvalues within `pd_tol·max|λ|` of zero are
    /// treated as zero.
    pub pd_tol: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            eig_tol_scale: 1e-6,
            stationarity_tol: 1e-4,
            realness_tol: 1e-6,
            alpha_tol: 1e-4,
            rank_rtol: 1e-9,
            pd_tol: 1e-8,
        }
    }
}

/// Matched right/left eigenvectors of the perturbed matrix, with the left
/// vector rescaled by the admissible complex factor `β` that best fits the
/// stationarity equation.
#[derive(Clone, Debug)]
pub struct EigenPair {
    /// Right eigenvector, unit norm.
    pub x: CVector,
    /// Left eigenvector after `β` scaling: satisfies `A(Δ̂)ᵀl̂ = jω̂l̂`.
    pub l: CVector,
    /// Unit-norm left eigenvector before scaling.
    pub l_unit: CVector,
    /// The fitted scaling.
    pub beta: Complex<f64>,
    /// The eigenvalue of `A(Δ̂)` matched to `jω̂`.
    pub eigenvalue: Complex<f64>,
    pub omega: f64,
    /// `‖A(Δ̂)x̂ − jω̂x̂‖`.
    pub right_residual: f64,
    /// `‖A(Δ̂)ᵀl̂ − jω̂l̂‖ / ‖l̂‖`.
    pub left_residual: f64,
    /// Set when a second eigenvalue sits within the matching tolerance of
    /// `jω̂` (near-defective pairing; results are unreliable).
    pub conditioning_warning: bool,
}

fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(|v| Complex::new(v, 0.0))
}

/// Fit the admissible scaling `β` minimizing
/// `‖Δ̂ + S∘[BᵀRe(β·l·xᵀ)Cᵀ]‖_F` over complex `β` (two real parameters).
fn fit_beta(
    inst: &ProblemInstance,
    delta: &DMatrix<f64>,
    l: &CVector,
    x: &CVector,
) -> Complex<f64> {
    let outer = l * x.transpose();
    let bt = to_complex(&inst.b().transpose());
    let ct = to_complex(&inst.c().transpose());
    let base = &bt * &outer * &ct;
    let s = inst.pattern().matrix();
    let f1 = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)] * base[(i, j)].re);
    let f2 = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| -s[(i, j)] * base[(i, j)].im);
    // minimize ‖Δ + a·F1 + b·F2‖²  (β = a + jb multiplies l, and
    // Re(β·l·xᵀ) = a·Re(lxᵀ) − b·Im(lxᵀ))
    let g11 = f1.dot(&f1);
    let g12 = f1.dot(&f2);
    let g22 = f2.dot(&f2);
    let r1 = -f1.dot(delta);
    let r2 = -f2.dot(delta);
    let det = g11 * g22 - g12 * g12;
    if det.abs() < 1e-30 * (1.0 + g11) * (1.0 + g22) {
        return Complex::new(1.0, 0.0);
    }
    let a = (g22 * r1 - g12 * r2) / det;
    let b = (g11 * r2 - g12 * r1) / det;
    Complex::new(a, b)
}

/// Extract the eigenpair of `A(Δ̂)` at the eigenvalue closest to `jω̂`,
/// normalize `x̂`, and scale `l̂` by the fitted `β`.
pub fn extract_eigenpair(
    inst: &ProblemInstance,
    delta: &DMatrix<f64>,
    omega: f64,
    eig_tol_scale: f64,
) -> Result<EigenPair> {
    let m = inst.perturbed_matrix(delta)?;
    let target = Complex::new(0.0, omega);
    let tol = eig_tol_scale * (1.0 + m.norm());
    let eigs = m.clone().complex_eigenvalues();
    let mut dists: Vec<(Complex<f64>, f64)> =
        eigs.iter().map(|&l| (l, (l - target).norm())).collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (lambda, dist) = dists[0];
    if dist > tol {
        return Err(Error::NotBoundaryPoint { omega, tol });
    }
    let conditioning_warning = dists.len() > 1 && (dists[1].0 - lambda).norm() < tol;

    let x = eig::eigenvector_for(&m, lambda)?;
    let l_unit = eig::eigenvector_for(&m.transpose(), lambda)?;
    let mut beta = fit_beta(inst, delta, &l_unit, &x);
    // the remaining phase freedom is spent on making l̂ᵀx̂ exactly real; at a
    // true optimum this rotation is zero to first order and leaves the
    // stationarity fit untouched
    let z = beta * l_unit.dot(&x);
    if z.norm() > 1e-300 {
        let theta = z.arg();
        let residual_angle = theta - (theta / std::f64::consts::PI).round() * std::f64::consts::PI;
        beta *= Complex::from_polar(1.0, -residual_angle);
    }
    let l = &l_unit * beta;

    let mc = to_complex(&m);
    let right_residual = (&mc * &x - &x * target).norm();
    let l_norm = l.norm().max(1e-300);
    let left_residual = (mc.transpose() * &l - &l * target).norm() / l_norm;
    Ok(EigenPair {
        x,
        l,
        l_unit,
        beta,
        eigenvalue: lambda,
        omega,
        right_residual,
        left_residual,
        conditioning_warning,
    })
}

/// First-order residuals at a candidate.
#[derive(Clone, Copy, Debug)]
pub struct StationarityCheck {
    /// `‖Δ̂ + S∘[BᵀRe(l̂x̂ᵀ)Cᵀ]‖_F`.
    pub stationarity: f64,
    /// `|Im(l̂ᵀx̂)|`.
    pub realness: f64,
    /// `rank(BᵀL̂X̂ᵀCᵀ)` with `L̂ = [Re l̂, −Im l̂]`, `X̂ = [Re x̂, Im x̂]`;
    /// the sparse optimum itself may exceed this rank.
    pub outer_rank: usize,
}

pub fn check_stationarity(
    inst: &ProblemInstance,
    delta: &DMatrix<f64>,
    pair: &EigenPair,
) -> StationarityCheck {
    let outer = &pair.l * pair.x.transpose();
    let bt = to_complex(&inst.b().transpose());
    let ct = to_complex(&inst.c().transpose());
    let base = &bt * &outer * &ct;
    let s = inst.pattern().matrix();
    let predicted = DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| -s[(i, j)] * base[(i, j)].re);
    let stationarity = (delta - predicted).norm();
    let realness = pair.l.dot(&pair.x).im.abs();

    let n = inst.n();
    let l_hat = DMatrix::from_fn(n, 2, |i, j| if j == 0 { pair.l[i].re } else { -pair.l[i].im });
    let x_hat = DMatrix::from_fn(n, 2, |i, j| if j == 0 { pair.x[i].re } else { pair.x[i].im });
    let outer_real = inst.b().transpose() * l_hat * x_hat.transpose() * inst.c().transpose();
    let outer_rank = if outer_real.norm() < 1e-12 {
        0
    } else {
        rank(&outer_real, 1e-9)
    };
    StationarityCheck {
        stationarity,
        realness,
        outer_rank,
    }
}

/// The constraint Jacobian and its rank.
#[derive(Clone, Debug)]
pub struct JacobianInfo {
    pub matrix: CMatrix,
    pub rank: usize,
    pub rows: usize,
    pub cols: usize,
    /// `rank == rows` (the regularity condition).
    pub full_rank: bool,
}

/// Assemble the Jacobian of the equality constraints at `(Δ̂, x̂, ω̂)`:
/// block rows are the eigenvalue constraint, its conjugate, the eigenvector
/// normalization, and the vectorized sparsity constraint.
pub fn build_jacobian(
    inst: &ProblemInstance,
    delta: &DMatrix<f64>,
    pair: &EigenPair,
    rank_rtol: f64,
) -> Result<JacobianInfo> {
    let n = inst.n();
    let (m, p) = (inst.m(), inst.p());
    let mp = m * p;
    let n_s = inst.pattern().forced_zero_count();
    let rows = 2 * n + 1 + n_s;
    let cols = 2 * n + mp + 1;

    let a_pert = to_complex(&inst.perturbed_matrix(delta)?);
    let jw = Complex::new(0.0, pair.omega);
    let b_c = to_complex(inst.b());
    let cx = to_complex(inst.c()) * &pair.x;
    let cx_conj = cx.map(|v| v.conj());
    let x_conj = pair.x.map(|v| v.conj());

    let mut j = CMatrix::zeros(rows, cols);
    // ∂(eigenvalue constraint)/∂(x, δ, ω)
    let block = &a_pert - CMatrix::identity(n, n) * jw;
    j.view_mut((0, 0), (n, n)).copy_from(&block);
    let dxdelta = cx.transpose().kronecker(&b_c);
    j.view_mut((0, 2 * n), (n, mp)).copy_from(&dxdelta);
    for i in 0..n {
        j[(i, cols - 1)] = -Complex::<f64>::i() * pair.x[i];
    }
    // conjugate constraint
    let block2 = &a_pert + CMatrix::identity(n, n) * jw;
    j.view_mut((n, n), (n, n)).copy_from(&block2);
    let dxdelta2 = cx_conj.transpose().kronecker(&b_c);
    j.view_mut((n, 2 * n), (n, mp)).copy_from(&dxdelta2);
    for i in 0..n {
        j[(n + i, cols - 1)] = Complex::<f64>::i() * x_conj[i];
    }
    // normalization xᴴx = 1
    for i in 0..n {
        j[(2 * n, i)] = x_conj[i];
        j[(2 * n, n + i)] = pair.x[i];
    }
    // sparsity selector
    let sel = inst.pattern().selector();
    for (r, row) in sel.row_iter().enumerate() {
        for c in 0..mp {
            if row[c] != 0.0 {
                j[(2 * n + 1 + r, 2 * n + c)] = Complex::new(row[c], 0.0);
            }
        }
    }

    let rank = rank_complex(&j, rank_rtol);
    Ok(JacobianInfo {
        rank,
        rows,
        cols,
        full_rank: rank == rows,
        matrix: j,
    })
}

/// Spectrum of the projected Lagrangian Hessian `P·D̂·P`.
#[derive(Clone, Debug)]
pub struct SecondOrderReport {
    /// `dim ker J_b = cols − rank`.
    pub kernel_dim: usize,
    /// Eigenvalues of the Hermitian `P·D̂·P`, sorted descending.
    pub eigenvalues: Vec<f64>,
    /// Smallest of the `kernel_dim` eigenvalues attributed to the kernel.
    pub min_kernel_eigenvalue: f64,
    /// `‖P² − P‖ + ‖P − Pᴴ‖`, sanity of the projector.
    pub projector_residual: f64,
    /// Kernel eigenvalues all positive, remaining ones zero at `pd_tol`.
    pub pass: bool,
}

/// Build the Lagrangian Hessian `D̂`, project it onto `ker J_b` with
/// `P = I − J_b⁺J_b`, and test positive definiteness on the kernel.
pub fn check_second_order(
    inst: &ProblemInstance,
    pair: &EigenPair,
    jacobian: &JacobianInfo,
    pd_tol: f64,
) -> Result<SecondOrderReport> {
    if !jacobian.full_rank {
        return Err(Error::RegularityFailed);
    }
    let n = inst.n();
    let (m, p) = (inst.m(), inst.p());
    let mp = m * p;
    let dim = 2 * n + mp + 1;

    // L̃ = C ⊗ (Bᵀl̂)
    let btl = to_complex(&inst.b().transpose()) * &pair.l;
    let btl_mat = CMatrix::from_fn(m, 1, |i, _| btl[i]);
    let l_tilde = to_complex(inst.c()).kronecker(&btl_mat);

    let mut d = CMatrix::zeros(dim, dim);
    d.view_mut((0, 2 * n), (n, mp)).copy_from(&l_tilde.adjoint());
    d.view_mut((n, 2 * n), (n, mp))
        .copy_from(&l_tilde.transpose());
    d.view_mut((2 * n, 0), (mp, n)).copy_from(&l_tilde);
    d.view_mut((2 * n, n), (mp, n))
        .copy_from(&l_tilde.map(|v| v.conj()));
    for i in 0..mp {
        d[(2 * n + i, 2 * n + i)] = Complex::new(2.0, 0.0);
    }
    for i in 0..n {
        let li = pair.l[i];
        d[(i, dim - 1)] = Complex::<f64>::i() * li.conj();
        d[(n + i, dim - 1)] = -Complex::<f64>::i() * li;
        d[(dim - 1, i)] = -Complex::<f64>::i() * li;
        d[(dim - 1, n + i)] = Complex::<f64>::i() * li.conj();
    }
    debug_assert!((d.adjoint() - &d).norm() < 1e-12 * (1.0 + d.norm()));

    let j_pinv = pinv_complex(&jacobian.matrix, 1e-12)?;
    let p_raw = CMatrix::identity(dim, dim) - j_pinv * &jacobian.matrix;
    let projector_residual =
        (&p_raw * &p_raw - &p_raw).norm() + (p_raw.adjoint() - &p_raw).norm();
    let p_mat = (&p_raw + p_raw.adjoint()) * Complex::new(0.5, 0.0);

    let pdp_raw = &p_mat * d * &p_mat;
    let pdp = (&pdp_raw + pdp_raw.adjoint()) * Complex::new(0.5, 0.0);
    let se = nalgebra::SymmetricEigen::new(pdp);
    let mut eigenvalues: Vec<f64> = se.eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));

    let kernel_dim = dim - jacobian.rank;
    let max_abs = eigenvalues.iter().fold(0.0f64, |acc, &e| acc.max(e.abs()));
    let cutoff = pd_tol * max_abs;
    let significant_positive = eigenvalues.iter().filter(|&&e| e > cutoff).count();
    let significant = eigenvalues.iter().filter(|&&e| e.abs() > cutoff).count();
    let min_kernel_eigenvalue = if kernel_dim == 0 {
        0.0
    } else {
        eigenvalues[kernel_dim.min(eigenvalues.len()) - 1]
    };
    let pass = significant_positive == kernel_dim && significant == kernel_dim;
    Ok(SecondOrderReport {
        kernel_dim,
        eigenvalues,
        min_kernel_eigenvalue,
        projector_residual,
        pass,
    })
}

/// Full first- and second-order certification of a candidate `(Δ̂, ω̂)`.
#[derive(Clone, Debug)]
pub struct OptimalityReport {
    pub omega: f64,
    pub eigenvalue: Complex<f64>,
    pub beta: Complex<f64>,
    pub right_residual: f64,
    pub left_residual: f64,
    pub conditioning_warning: bool,
    pub residual_stationarity: f64,
    pub residual_realness: f64,
    pub outer_rank: usize,
    pub jacobian_rank: usize,
    pub jacobian_rows: usize,
    pub jacobian_cols: usize,
    pub jacobian_full_rank: bool,
    pub second_order: Option<SecondOrderReport>,
    /// `α(A(Δ̂))`.
    pub alpha: f64,
    pub stationarity_ok: bool,
    pub realness_ok: bool,
    pub alpha_ok: bool,
    pub second_order_ok: bool,
    /// Every condition passed.
    pub pass: bool,
    pub x: CVector,
    pub l: CVector,
}

/// Run every optimality condition at `(Δ̂, ω̂)` and collect the residuals.
pub fn certify(
    inst: &ProblemInstance,
    delta: &DMatrix<f64>,
    omega: f64,
    opts: &CertifyOptions,
) -> Result<OptimalityReport> {
    let pair = extract_eigenpair(inst, delta, omega, opts.eig_tol_scale)?;
    let st = check_stationarity(inst, delta, &pair);
    let jac = build_jacobian(inst, delta, &pair, opts.rank_rtol)?;
    let second_order = if jac.full_rank {
        Some(check_second_order(inst, &pair, &jac, opts.pd_tol)?)
    } else {
        None
    };
    let alpha = spectral_abscissa(&inst.perturbed_matrix(delta)?);

    let stationarity_ok = st.stationarity <= opts.stationarity_tol;
    let realness_ok = st.realness <= opts.realness_tol;
    let alpha_ok = alpha.abs() <= opts.alpha_tol;
    let second_order_ok = second_order.as_ref().map(|s| s.pass).unwrap_or(false);
    let pass = stationarity_ok && realness_ok && jac.full_rank && second_order_ok && alpha_ok;
    Ok(OptimalityReport {
        omega,
        eigenvalue: pair.eigenvalue,
        beta: pair.beta,
        right_residual: pair.right_residual,
        left_residual: pair.left_residual,
        conditioning_warning: pair.conditioning_warning,
        residual_stationarity: st.stationarity,
        residual_realness: st.realness,
        outer_rank: st.outer_rank,
        jacobian_rank: jac.rank,
        jacobian_rows: jac.rows,
        jacobian_cols: jac.cols,
        jacobian_full_rank: jac.full_rank,
        second_order,
        alpha,
        stationarity_ok,
        realness_ok,
        alpha_ok,
        second_order_ok,
        pass,
        x: pair.x,
        l: pair.l,
    })
}

/// Flat key/value export of an [`OptimalityReport`].
pub fn write_report_text(
    out: &mut impl std::io::Write,
    report: &OptimalityReport,
) -> std::io::Result<()> {
    use crate::solver::format_float as ff;
    writeln!(out, "omega = {}", ff(report.omega))?;
    writeln!(
        out,
        "eigenvalue = {} + {}i",
        ff(report.eigenvalue.re),
        ff(report.eigenvalue.im)
    )?;
    writeln!(out, "beta = {} + {}i", ff(report.beta.re), ff(report.beta.im))?;
    writeln!(out, "right_residual = {}", ff(report.right_residual))?;
    writeln!(out, "left_residual = {}", ff(report.left_residual))?;
    writeln!(out, "conditioning_warning = {}", report.conditioning_warning)?;
    writeln!(
        out,
        "residual_stationarity = {}",
        ff(report.residual_stationarity)
    )?;
    writeln!(out, "residual_realness = {}", ff(report.residual_realness))?;
    writeln!(out, "outer_rank = {}", report.outer_rank)?;
    writeln!(
        out,
        "jacobian_rank = {} ({}x{})",
        report.jacobian_rank, report.jacobian_rows, report.jacobian_cols
    )?;
    writeln!(out, "jacobian_full_rank = {}", report.jacobian_full_rank)?;
    match &report.second_order {
        Some(s) => {
            writeln!(out, "kernel_dim = {}", s.kernel_dim)?;
            writeln!(
                out,
                "min_kernel_eigenvalue = {}",
                ff(s.min_kernel_eigenvalue)
            )?;
            writeln!(out, "projector_residual = {}", ff(s.projector_residual))?;
            writeln!(out, "second_order_pass = {}", s.pass)?;
        }
        None => writeln!(out, "second_order_pass = inconclusive")?,
    }
    writeln!(out, "alpha = {}", ff(report.alpha))?;
    writeln!(out, "stationarity_ok = {}", report.stationarity_ok)?;
    writeln!(out, "realness_ok = {}", report.realness_ok)?;
    writeln!(out, "alpha_ok = {}", report.alpha_ok)?;
    writeln!(out, "pass = {}", report.pass)?;
    Ok(())
}

/// Sampling strategy for spectral value sets.
#[derive(Clone, Copy, Debug)]
pub enum SampleStrategy {
    /// Tensor grid over the free entries; only feasible for ≤ 3 of them.
    Grid { radial: usize, angular: usize },
    /// Uniform ball sampling (direction × radius^(1/k)), followed by
    /// `refine_rounds` of concentration around the rightmost samples.
    Random {
        samples: usize,
        refine_rounds: usize,
        seed: u64,
    },
}

/// One eigenvalue of one sampled perturbed matrix.
#[derive(Clone, Copy, Debug)]
pub struct CloudPoint {
    pub re: f64,
    pub im: f64,
    pub delta_norm: f64,
}

/// Sampled eigenvalue point set of the perturbed-system family
/// `{Γ(A+BΔC) : ‖Δ‖_F ≤ η, Δ sparse}`.
#[derive(Clone, Debug)]
pub struct SpectralCloud {
    pub eta: f64,
    pub points: Vec<CloudPoint>,
    pub strategy: String,
    pub sample_count: usize,
}

impl SpectralCloud {
    /// Largest real part over cloud points with `|Im λ − center| ≤ window`
    /// (the locally rightmost extent of one lobe).
    pub fn max_re_near(&self, center: f64, window: f64) -> Option<f64> {
        self.points
            .iter()
            .filter(|p| (p.im - center).abs() <= window)
            .map(|p| p.re)
            .fold(None, |acc, re| Some(acc.map_or(re, |a: f64| a.max(re))))
    }

    /// Largest real part over the whole cloud.
    pub fn max_re(&self) -> Option<f64> {
        self.points
            .iter()
            .map(|p| p.re)
            .fold(None, |acc, re| Some(acc.map_or(re, |a: f64| a.max(re))))
    }
}

fn delta_from_coeffs(
    inst: &ProblemInstance,
    entries: &[(usize, usize)],
    coeffs: &[f64],
) -> DMatrix<f64> {
    let mut delta = DMatrix::zeros(inst.m(), inst.p());
    for (&(i, j), &t) in entries.iter().zip(coeffs) {
        delta[(i, j)] = t;
    }
    delta
}

fn push_sample(
    inst: &ProblemInstance,
    entries: &[(usize, usize)],
    coeffs: &[f64],
    points: &mut Vec<CloudPoint>,
) -> f64 {
    let delta = delta_from_coeffs(inst, entries, coeffs);
    let norm = delta.norm();
    let a_pert = inst.a() + inst.b() * &delta * inst.c();
    let mut max_re = f64::NEG_INFINITY;
    for lambda in a_pert.complex_eigenvalues().iter() {
        max_re = max_re.max(lambda.re);
        points.push(CloudPoint {
            re: lambda.re,
            im: lambda.im,
            delta_norm: norm,
        });
    }
    max_re
}

/// Sample the spectral value set at radius `η`.
pub fn sample_spectral_set(
    inst: &ProblemInstance,
    eta: f64,
    strategy: SampleStrategy,
) -> Result<SpectralCloud> {
    if !(eta >= 0.0) {
        return Err(Error::InvalidInput(format!("eta must be ≥ 0, got {eta}")));
    }
    let entries = inst.pattern().free_entries();
    let k = entries.len();
    if k == 0 {
        return Err(Error::InvalidInput(
            "sparsity pattern has no free entries".into(),
        ));
    }
    let mut points = Vec::new();
    let mut sample_count = 0usize;

    if eta == 0.0 {
        push_sample(inst, &entries, &vec![0.0; k], &mut points);
        return Ok(SpectralCloud {
            eta,
            points,
            strategy: "nominal".into(),
            sample_count: 1,
        });
    }

    let desc;
    match strategy {
        SampleStrategy::Grid { radial, angular } => {
            if k > 3 {
                return Err(Error::InvalidInput(format!(
                    "grid sampling supports at most 3 free entries, got {k}; use the random strategy"
                )));
            }
            let radial = radial.max(1);
            let angular = angular.max(4);
            match k {
                1 => {
                    for i in 0..=2 * radial {
                        let t = -eta + eta * i as f64 / radial as f64;
                        push_sample(inst, &entries, &[t], &mut points);
                        sample_count += 1;
                    }
                }
                2 => {
                    push_sample(inst, &entries, &[0.0, 0.0], &mut points);
                    sample_count += 1;
                    for ri in 1..=radial {
                        let r = eta * ri as f64 / radial as f64;
                        for ai in 0..angular {
                            let th = 2.0 * std::f64::consts::PI * ai as f64 / angular as f64;
                            push_sample(inst, &entries, &[r * th.cos(), r * th.sin()], &mut points);
                            sample_count += 1;
                        }
                    }
                }
                _ => {
                    push_sample(inst, &entries, &[0.0, 0.0, 0.0], &mut points);
                    sample_count += 1;
                    let polar = (angular / 2).max(2);
                    for ri in 1..=radial {
                        let r = eta * ri as f64 / radial as f64;
                        for pi in 0..=polar {
                            let phi = std::f64::consts::PI * pi as f64 / polar as f64;
                            for ai in 0..angular {
                                let th = 2.0 * std::f64::consts::PI * ai as f64 / angular as f64;
                                push_sample(
                                    inst,
                                    &entries,
                                    &[
                                        r * phi.sin() * th.cos(),
                                        r * phi.sin() * th.sin(),
                                        r * phi.cos(),
                                    ],
                                    &mut points,
                                );
                                sample_count += 1;
                            }
                        }
                    }
                }
            }
            desc = format!("grid(radial={radial},angular={angular})");
        }
        SampleStrategy::Random {
            samples,
            refine_rounds,
            seed,
        } => {
            let samples = samples.max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut batch: Vec<(Vec<f64>, f64)> = Vec::new();
            push_sample(inst, &entries, &vec![0.0; k], &mut points);
            sample_count += 1;
            for _ in 0..samples {
                let mut dir: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm: f64 = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let u: f64 = rng.random_range(0.0..1.0f64);
                let r = eta * u.powf(1.0 / k as f64);
                dir.iter_mut().for_each(|v| *v *= r / norm);
                let max_re = push_sample(inst, &entries, &dir, &mut points);
                sample_count += 1;
                batch.push((dir, max_re));
            }
            for round in 0..refine_rounds {
                batch.sort_by(|a, b| b.1.total_cmp(&a.1));
                batch.truncate(32.min(batch.len()));
                let sigma = eta * 0.3f64.powi(round as i32 + 1);
                let mut children = Vec::new();
                for (parent, _) in &batch {
                    for _ in 0..samples.div_euclid(32).max(4) {
                        let mut child: Vec<f64> = parent
                            .iter()
                            .map(|&v| {
                                let g: f64 = StandardNormal.sample(&mut rng);
                                v + sigma * g
                            })
                            .collect();
                        let norm: f64 = child.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm > eta {
                            child.iter_mut().for_each(|v| *v *= eta / norm);
                        }
                        let max_re = push_sample(inst, &entries, &child, &mut points);
                        sample_count += 1;
                        children.push((child, max_re));
                    }
                }
                batch.extend(children);
            }
            desc = format!("random(samples={samples},refine_rounds={refine_rounds},seed={seed})");
        }
    }
    Ok(SpectralCloud {
        eta,
        points,
        strategy: desc,
        sample_count,
    })
}

/// CSV export: `re,im,delta_fnorm` rows.
pub fn write_cloud_csv(
    out: &mut impl std::io::Write,
    cloud: &SpectralCloud,
) -> std::io::Result<()> {
    use crate::solver::format_float as ff;
    writeln!(out, "re,im,delta_fnorm")?;
    for p in &cloud.points {
        writeln!(out, "{},{},{}", ff(p.re), ff(p.im), ff(p.delta_norm))?;
    }
    Ok(())
}

/// Options for the brute-force stability-radius search.
#[derive(Clone, Copy, Debug)]
pub struct BruteForceOptions {
    /// Largest coefficient magnitude searched before declaring "no
    /// instability found".
    pub bound: f64,
    /// Multiplicative ladder ratio of the coarse scan.
    pub ladder_ratio: f64,
    /// Angular resolution of the 2-entry polar sweep.
    pub angular: usize,
    /// Bracket width for one free entry.
    pub tol_1d: f64,
    /// Bracket width for two free entries.
    pub tol_2d: f64,
}

impl Default for BruteForceOptions {
    fn default() -> Self {
        Self {
            bound: 1e4,
            ladder_ratio: 1.05,
            angular: 720,
            tol_1d: 1e-6,
            tol_2d: 1e-3,
        }
    }
}

/// A bracket `[lower, upper]` around the stability radius, with the
/// destabilizing perturbation found at the upper end.
#[derive(Clone, Debug)]
pub struct SrBracket {
    pub lower: f64,
    pub upper: f64,
    pub delta: DMatrix<f64>,
}

impl SrBracket {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Exhaustive-search oracle for the stability radius of patterns with one or
/// two free entries: scan/bisection over the scalar coefficient (one entry)
/// or a polar sweep with golden-section refinement of the angle (two
/// entries).
pub fn brute_force_sr(inst: &ProblemInstance, opts: &BruteForceOptions) -> Result<SrBracket> {
    let entries = inst.pattern().free_entries();
    let (alpha0, stable) = inst.check_a1();
    if !stable {
        return Err(Error::NotStable { alpha: alpha0 });
    }
    match entries.len() {
        1 => brute_force_1d(inst, &entries, opts),
        2 => brute_force_2d(inst, &entries, opts),
        k => Err(Error::InvalidInput(format!(
            "brute-force search supports 1 or 2 free entries, got {k}"
        ))),
    }
}

fn alpha_at(inst: &ProblemInstance, entries: &[(usize, usize)], coeffs: &[f64]) -> f64 {
    let delta = delta_from_coeffs(inst, entries, coeffs);
    spectral_abscissa(&(inst.a() + inst.b() * delta * inst.c()))
}

/// First radius `r ∈ (0, bound]` with `α(r·dir) ≥ 0` along a fixed
/// direction, bisected to `tol`; `None` when the ray stays stable.
fn radial_crossing(
    inst: &ProblemInstance,
    entries: &[(usize, usize)],
    dir: &[f64],
    start: f64,
    opts: &BruteForceOptions,
    tol: f64,
) -> Option<(f64, f64)> {
    let eval = |r: f64| {
        let coeffs: Vec<f64> = dir.iter().map(|d| d * r).collect();
        alpha_at(inst, entries, &coeffs)
    };
    let mut lo = 0.0f64;
    let mut r = start.max(opts.bound * 1e-9);
    let mut hit = None;
    while r <= opts.bound {
        if eval(r) >= 0.0 {
            hit = Some(r);
            break;
        }
        lo = r;
        r *= opts.ladder_ratio;
    }
    let mut hi = hit?;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if eval(mid) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some((lo, hi))
}

fn brute_force_1d(
    inst: &ProblemInstance,
    entries: &[(usize, usize)],
    opts: &BruteForceOptions,
) -> Result<SrBracket> {
    let mut best: Option<(f64, f64, f64)> = None; // (lo, hi, sign)
    for sign in [1.0, -1.0] {
        if let Some((lo, hi)) =
            radial_crossing(inst, entries, &[sign], opts.bound * 1e-9, opts, opts.tol_1d * 0.5)
        {
            if best.map_or(true, |(_, bh, _)| hi < bh) {
                best = Some((lo, hi, sign));
            }
        }
    }
    let (lower, upper, sign) = best.ok_or(Error::NoInstabilityFound { bound: opts.bound })?;
    Ok(SrBracket {
        lower,
        upper,
        delta: delta_from_coeffs(inst, entries, &[sign * upper]),
    })
}

fn brute_force_2d(
    inst: &ProblemInstance,
    entries: &[(usize, usize)],
    opts: &BruteForceOptions,
) -> Result<SrBracket> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let coarse_tol = (opts.tol_2d * 0.25).max(1e-7);
    let crossing_at = |theta: f64, start: f64, tol: f64| {
        radial_crossing(inst, entries, &[theta.cos(), theta.sin()], start, opts, tol)
    };

    // coarse sweep, warm-starting each ray near the previous crossing
    let mut best_theta = None;
    let mut best_hi = f64::INFINITY;
    let mut prev_r: Option<f64> = None;
    for ai in 0..opts.angular {
        let theta = two_pi * ai as f64 / opts.angular as f64;
        let start = prev_r
            .map(|r| (r * 0.25).max(opts.bound * 1e-9))
            .unwrap_or(opts.bound * 1e-9);
        match crossing_at(theta, start, coarse_tol) {
            Some((_, hi)) => {
                prev_r = Some(hi);
                if hi < best_hi {
                    best_hi = hi;
                    best_theta = Some(theta);
                }
            }
            None => prev_r = None,
        }
    }
    let theta0 = best_theta.ok_or(Error::NoInstabilityFound { bound: opts.bound })?;

    // golden-section refinement of the angle around the best ray
    let gr = (5.0f64.sqrt() - 1.0) / 2.0;
    let span = two_pi / opts.angular as f64;
    let mut a = theta0 - span;
    let mut b = theta0 + span;
    let r_of = |theta: f64| -> f64 {
        crossing_at(theta, (best_hi * 0.25).max(opts.bound * 1e-9), coarse_tol)
            .map(|(_, hi)| hi)
            .unwrap_or(f64::INFINITY)
    };
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let mut fc = r_of(c);
    let mut fd = r_of(d);
    for _ in 0..60 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = r_of(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = r_of(d);
        }
    }
    let theta_best = 0.5 * (a + b);
    let (lower, upper) = crossing_at(
        theta_best,
        (best_hi * 0.25).max(opts.bound * 1e-9),
        opts.tol_2d * 0.25,
    )
    .ok_or(Error::NoInstabilityFound { bound: opts.bound })?;
    Ok(SrBracket {
        lower,
        upper,
        delta: delta_from_coeffs(
            inst,
            entries,
            &[theta_best.cos() * upper, theta_best.sin() * upper],
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SparsityPattern;
    use crate::solver::{solve, SolverConfig};
    use crate::testutil::example_instance;
    use approx::assert_relative_eq;

    fn published_case2_solution() -> (ProblemInstance, crate::solver::SolveResult) {
        let inst = example_instance(true);
        let cfg = SolverConfig::default();
        let g0 = DVector::from_vec(vec![1.0582, 0.4363, 1.4115, -0.0146]);
        let res = solve(&inst, &cfg, &g0, 2.5).unwrap();
        assert!(res.converged);
        (inst, res)
    }

    #[test]
    fn spectral_abscissa_examples() {
        let inst = example_instance(false);
        assert_relative_eq!(spectral_abscissa(inst.a()), -1.0, epsilon = 1e-9);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(spectral_abscissa(&rot).abs() < 1e-12);

        // the invalid Case-2 stationary point leaves eigenvalues in the
        // right-half plane
        let delta2 = DMatrix::from_row_slice(2, 2, &[4.8818, 0.0, 0.0, -0.8898]);
        let alpha = spectral_abscissa(&inst.perturbed_matrix(&delta2).unwrap());
        assert!(alpha > 0.1, "alpha = {alpha}");
    }

    #[test]
    fn eigenpair_matches_table_case1() {
        let inst = example_instance(false);
        let delta = DMatrix::from_row_slice(2, 2, &[-0.0332, -0.0717, 0.1975, 0.4700]);
        let pair = extract_eigenpair(&inst, &delta, 1.3753, 1e-4).unwrap();

        let x_table = CVector::from_vec(vec![
            Complex::new(0.1340, -0.0022),
            Complex::new(0.3692, 0.0456),
            Complex::new(0.7733, 0.2579),
            Complex::new(-0.2504, -0.3411),
        ]);
        let l_table = CVector::from_vec(vec![
            Complex::new(-1.3796, 0.4056),
            Complex::new(-0.5825, -0.1855),
            Complex::new(0.4576, -0.1326),
            Complex::new(0.2771, -0.4659),
        ]);
        // up to the admissible scaling and up to conjugating the whole pair
        // (the ±jω̂ symmetry), both vectors are collinear with the published
        // ones (print precision ~1e-3)
        let overlap = |a: &CVector, b: &CVector| a.dotc(b).norm() / (a.norm() * b.norm());
        let ox = overlap(&pair.x, &x_table).max(overlap(&pair.x, &x_table.map(|z| z.conj())));
        assert!(ox > 0.999, "x overlap {ox}");
        let ol = overlap(&pair.l, &l_table).max(overlap(&pair.l, &l_table.map(|z| z.conj())));
        assert!(ol > 0.999, "l overlap {ol}");
        // the conjugate choices of x and l must agree pairwise
        let same_side = overlap(&pair.x, &x_table) > 0.999;
        let l_side = overlap(&pair.l, &l_table) > 0.999;
        assert_eq!(same_side, l_side);
    }

    #[test]
    fn eigenpair_residuals_small_on_solver_output() {
        let (inst, res) = published_case2_solution();
        let pair = extract_eigenpair(&inst, &res.delta, res.omega, 1e-6).unwrap();
        assert!(pair.right_residual < 1e-8, "right {}", pair.right_residual);
        assert!(pair.left_residual < 1e-8, "left {}", pair.left_residual);
        assert!(!pair.conditioning_warning);
    }

    #[test]
    fn symmetric_matrix_has_collinear_left_right_vectors() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let eye = DMatrix::identity(2, 2);
        let inst =
            ProblemInstance::new(a, eye.clone(), eye, SparsityPattern::all_ones(2, 2)).unwrap();
        // eigenvalues {0, −2}: the zero eigenvalue is on the boundary
        let pair = extract_eigenpair(&inst, &DMatrix::zeros(2, 2), 0.0, 1e-6).unwrap();
        let overlap = pair.l_unit.dotc(&pair.x).norm() / (pair.l_unit.norm() * pair.x.norm());
        assert!(overlap > 1.0 - 1e-10);
    }

    #[test]
    fn not_a_boundary_point_is_rejected() {
        let inst = example_instance(false);
        let err = extract_eigenpair(&inst, &DMatrix::zeros(2, 2), 1.0, 1e-6).unwrap_err();
        assert!(matches!(err, Error::NotBoundaryPoint { .. }));
    }

    #[test]
    fn stationarity_residuals() {
        // Table Case-2 values at print precision
        let inst = example_instance(true);
        let delta = DMatrix::from_row_slice(2, 2, &[-0.0418, 0.0, 0.0, 0.5638]);
        let pair = extract_eigenpair(&inst, &delta, 1.3365, 1e-4).unwrap();
        let st = check_stationarity(&inst, &delta, &pair);
        assert!(st.stationarity < 1e-2, "stationarity {}", st.stationarity);
        assert!(st.realness < 1e-2, "realness {}", st.realness);
        assert!(st.outer_rank <= 2);

        // high-precision solver output after exact sparsification
        let (inst, res) = published_case2_solution();
        let pair = extract_eigenpair(&inst, &res.sparsified_delta, res.omega, 1e-6).unwrap();
        let st = check_stationarity(&inst, &res.sparsified_delta, &pair);
        assert!(st.stationarity < 1e-4, "stationarity {}", st.stationarity);
        assert!(st.realness < 1e-6, "realness {}", st.realness);
    }

    #[test]
    fn degenerate_zero_delta_zero_l() {
        let inst = example_instance(false);
        // at Δ = 0 with the nominal eigenvalue as target, the fitted scaling
        // collapses l to zero and the residuals vanish
        let pair = extract_eigenpair(&inst, &DMatrix::zeros(2, 2), 1.0, 2e-2).unwrap();
        let st = check_stationarity(&inst, &DMatrix::zeros(2, 2), &pair);
        assert!(pair.l.norm() < 1e-10);
        assert!(st.stationarity < 1e-12);
    }

    #[test]
    fn jacobian_dimensions_and_rank() {
        // all-ones pattern: no sparsity rows
        let inst1 = example_instance(false);
        let delta1 = DMatrix::from_row_slice(2, 2, &[-0.0332, -0.0717, 0.1975, 0.4700]);
        let pair1 = extract_eigenpair(&inst1, &delta1, 1.3753, 1e-4).unwrap();
        let jac1 = build_jacobian(&inst1, &delta1, &pair1, 1e-9).unwrap();
        assert_eq!(jac1.rows, 2 * 4 + 1);
        assert_eq!(jac1.cols, 2 * 4 + 4 + 1);
        assert!(jac1.full_rank, "rank {}", jac1.rank);

        // diagonal pattern: two forced zeros
        let (inst2, res) = published_case2_solution();
        let pair2 = extract_eigenpair(&inst2, &res.sparsified_delta, res.omega, 1e-6).unwrap();
        let jac2 = build_jacobian(&inst2, &res.sparsified_delta, &pair2, 1e-9).unwrap();
        assert_eq!(jac2.rows, 11);
        assert_eq!(jac2.cols, 13);
        assert!(jac2.full_rank);
    }

    #[test]
    fn second_order_passes_at_case2_minimum() {
        let (inst, res) = published_case2_solution();
        let pair = extract_eigenpair(&inst, &res.sparsified_delta, res.omega, 1e-6).unwrap();
        let jac = build_jacobian(&inst, &res.sparsified_delta, &pair, 1e-9).unwrap();
        let so = check_second_order(&inst, &pair, &jac, 1e-8).unwrap();
        assert!(
            so.projector_residual < 1e-10,
            "projector {}",
            so.projector_residual
        );
        assert_eq!(so.kernel_dim, 13 - 11);
        assert!(
            so.pass,
            "kernel eigenvalues: {:?}",
            &so.eigenvalues[..so.kernel_dim]
        );
        assert!(so.min_kernel_eigenvalue > 0.0);
    }

    #[test]
    fn certify_full_report() {
        let (inst, res) = published_case2_solution();
        let report = certify(
            &inst,
            &res.sparsified_delta,
            res.omega,
            &CertifyOptions::default(),
        )
        .unwrap();
        assert!(report.pass, "report: {report:?}");
        let mut buf = Vec::new();
        write_report_text(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("pass = true"));
    }

    #[test]
    fn spectral_set_nominal_and_case2() {
        let inst = example_instance(true);
        let cloud0 = sample_spectral_set(
            &inst,
            0.0,
            SampleStrategy::Grid {
                radial: 5,
                angular: 16,
            },
        )
        .unwrap();
        assert_eq!(cloud0.points.len(), 4);

        // at the radius of the Case-2 minimum the lobe near ±1.3365i touches
        // the axis
        let cloud = sample_spectral_set(
            &inst,
            0.5653,
            SampleStrategy::Grid {
                radial: 60,
                angular: 720,
            },
        )
        .unwrap();
        let near = cloud.max_re_near(1.3365, 1.0).unwrap();
        assert!(near.abs() < 2e-3, "max Re near lobe = {near}");

        // below the radius the whole set stays strictly stable
        let inside = sample_spectral_set(
            &inst,
            0.4,
            SampleStrategy::Grid {
                radial: 40,
                angular: 360,
            },
        )
        .unwrap();
        assert!(inside.max_re().unwrap() < 0.0);
    }

    #[test]
    fn spectral_set_random_strategy() {
        let inst = example_instance(false);
        let cloud = sample_spectral_set(
            &inst,
            0.5159,
            SampleStrategy::Random {
                samples: 2000,
                refine_rounds: 3,
                seed: 42,
            },
        )
        .unwrap();
        let near = cloud.max_re_near(1.3753, 1.0).unwrap();
        assert!(near.abs() < 5e-3, "max Re near lobe = {near}");
        // reproducible with the same seed
        let again = sample_spectral_set(
            &inst,
            0.5159,
            SampleStrategy::Random {
                samples: 2000,
                refine_rounds: 3,
                seed: 42,
            },
        )
        .unwrap();
        assert_eq!(cloud.points.len(), again.points.len());
        assert_eq!(cloud.points[10].re, again.points[10].re);

        // grid refuses > 3 free entries
        assert!(matches!(
            sample_spectral_set(
                &inst,
                0.5,
                SampleStrategy::Grid {
                    radial: 4,
                    angular: 8
                }
            ),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn brute_force_scalar() {
        let one = DMatrix::from_element(1, 1, 1.0);
        let inst = ProblemInstance::new(
            DMatrix::from_element(1, 1, -1.0),
            one.clone(),
            one,
            SparsityPattern::all_ones(1, 1),
        )
        .unwrap();
        let bracket = brute_force_sr(&inst, &BruteForceOptions::default()).unwrap();
        assert!(bracket.width() <= 1e-6);
        assert_relative_eq!(bracket.midpoint(), 1.0, epsilon = 1e-5);
    }

    #[test]
    fn brute_force_case2_two_entries() {
        let inst = example_instance(true);
        let bracket = brute_force_sr(&inst, &BruteForceOptions::default()).unwrap();
        assert!(bracket.width() <= 1e-3);
        assert_relative_eq!(bracket.midpoint(), 0.5653, epsilon = 1e-3);
        // the destabilizing perturbation respects the pattern and its
        // abscissa is non-negative at the upper end
        let alpha = spectral_abscissa(&inst.perturbed_matrix(&bracket.delta).unwrap());
        assert!(alpha >= 0.0);
    }

    #[test]
    fn brute_force_reports_universal_robustness() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -2.0]);
        let eye = DMatrix::identity(2, 2);
        let pattern =
            SparsityPattern::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).unwrap();
        let inst = ProblemInstance::new(a, eye.clone(), eye, pattern).unwrap();
        let err = brute_force_sr(&inst, &BruteForceOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NoInstabilityFound { .. }));
    }
}
