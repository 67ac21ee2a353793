//! Penalty-based gradient / damped-Newton descent over the Sylvester
//! parametrization, plus the `ω = 0` variant, multi-start, and weight sweeps.
//!
//! One descent step updates `z̄ ← z̄ − β·d` where `d` is either the gradient
//! or the regularized Newton direction `(ZW̄Zᵀ + εI)⁻¹·∇J`; after each update
//! the eigenvector block and the perturbation are recomputed from the
//! Sylvester equation. The regularization replaces the indefinite curvature
//! part of the Hessian, so the Newton system is positive definite by
//! construction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::model::{project_sparse, ProblemInstance, WeightMatrix};
use crate::objective::{cost, derivatives, pack_vars, unpack_vars};
use crate::sylvester::{evaluate, SearchPoint};
use crate::verify::spectral_abscissa;
use crate::{Error, Result};

/// `|ω̂|` below which a converged standard solve is re-run through the
/// single-eigenvalue `ω = 0` parametrization.
pub const OMEGA_ZERO_SWITCH: f64 = 1e-3;

/// Descent direction choice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DescentMode {
    Gradient,
    Newton,
}

/// Step-size rule: plain backtracking (any decrease) or Armijo sufficient
/// decrease.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepRule {
    Backtracking,
    Armijo,
}

/// Solver configuration. `Default` gives Newton descent with Armijo steps,
/// penalty weight 100, and the tolerances used throughout the test suite.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub mode: DescentMode,
    /// Penalty weight `w ≥ 1`.
    pub weight: f64,
    /// Newton regularization `ε` in `ZW̄Zᵀ + εI`.
    pub epsilon: f64,
    pub step_rule: StepRule,
    /// Initial trial step `β`.
    pub initial_step: f64,
    /// Multiplicative backtracking factor in `(0, 1)`.
    pub shrink: f64,
    /// Armijo sufficient-decrease constant.
    pub sufficient_decrease: f64,
    /// Convergence when `‖∇J‖ ≤ grad_tol·(1 + |J|)·max(1, w)`. The extra
    /// weight factor tracks the floating-point noise floor of the gradient,
    /// whose entries carry the `w²` penalty scale.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Relative magnitude of the recovery jitter applied to `g` when `CX`
    /// loses column rank.
    pub jitter_scale: f64,
    pub max_jitter_attempts: usize,
    pub seed: u64,
    pub multistart_count: usize,
    /// Also run the `ω = 0` parametrization inside [`multistart`].
    pub omega_zero_mode: bool,
    /// `|α(A(Δ̂))| ≤ alpha_tol` declares a boundary point.
    pub alpha_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: DescentMode::Newton,
            weight: 100.0,
            epsilon: 1e-6,
            step_rule: StepRule::Armijo,
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_decrease: 1e-4,
            grad_tol: 1e-9,
            max_iters: 500,
            jitter_scale: 1e-6,
            max_jitter_attempts: 10,
            seed: 0,
            multistart_count: 50,
            omega_zero_mode: false,
            alpha_tol: 1e-4,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight >= 1.0) {
            return Err(Error::InvalidInput(format!(
                "weight must be ≥ 1, got {}",
                self.weight
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::InvalidInput("shrink must lie in (0,1)".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidInput("grad_tol must be positive".into()));
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidInput("initial_step must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the iteration trace.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iter: usize,
    /// Penalized cost `J_W` (raw, unscaled).
    pub cost: f64,
    pub grad_norm: f64,
    pub omega: f64,
    /// Spectral abscissa of the perturbed matrix at this iterate.
    pub alpha: f64,
    /// Step size that produced this iterate (0 for the initial point).
    pub beta: f64,
    pub delta_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// `‖∇J‖` fell below the tolerance.
    Converged,
    MaxIterations,
    /// The line search could not find an acceptable step.
    StepSizeUnderflow,
}

/// A converged (or terminated) candidate with its certificate-relevant data.
#[derive(Clone, Debug)]
pub struct SolveResult {
    /// Raw perturbation from the parametrization (approximately sparse).
    pub delta: DMatrix<f64>,
    pub omega: f64,
    /// Eigenvector block (`n×k`).
    pub x: DMatrix<f64>,
    pub k: usize,
    /// Final free variables `vec(G)`.
    pub g: DVector<f64>,
    pub cost: f64,
    pub delta_norm: f64,
    /// `S∘Δ̂` and its norm.
    pub sparsified_delta: DMatrix<f64>,
    pub sparsified_norm: f64,
    /// `E = ‖Δ̂ − S∘Δ̂‖_F`.
    pub sparsity_error: f64,
    /// `α(A(Δ̂))` for the raw perturbation.
    pub alpha: f64,
    /// `α(A(S∘Δ̂))` after exact sparsification.
    pub alpha_sparsified: f64,
    /// `|α| ≤ alpha_tol` on the raw perturbation.
    pub valid_raw: bool,
    /// Same test on the sparsified perturbation.
    pub valid_sparsified: bool,
    /// Converged boundary point under both tests; these are the candidates
    /// that upper-bound the stability radius.
    pub valid_local_min: bool,
    pub converged: bool,
    pub termination: Termination,
    pub final_gradient_norm: f64,
    pub trace: Vec<IterationRecord>,
}

impl SolveResult {
    /// Complex eigenvector `x̂ = X̂₁ + jX̂₂` (real `X̂₁` when `k = 1`).
    pub fn eigvec(&self) -> DVector<nalgebra::Complex<f64>> {
        let n = self.x.nrows();
        DVector::from_fn(n, |i, _| {
            nalgebra::Complex::new(
                self.x[(i, 0)],
                if self.k == 2 { self.x[(i, 1)] } else { 0.0 },
            )
        })
    }
}

fn jitter_point(
    inst: &ProblemInstance,
    g: &DVector<f64>,
    omega: f64,
    scale: f64,
    rng: &mut ChaCha8Rng,
    attempts: usize,
) -> Result<SearchPoint> {
    let mut g_try = g.clone();
    for _ in 0..attempts {
        let point = evaluate(inst, &g_try, omega)?;
        if point.well_conditioned {
            return Ok(point);
        }
        let mag = scale * (1.0 + g_try.norm());
        g_try = g.map(|v| v + rng.random_range(-1.0..1.0) * mag);
    }
    Err(Error::RankDeficient { attempts })
}

fn descend(
    inst: &ProblemInstance,
    config: &SolverConfig,
    g0: &DVector<f64>,
    omega0: f64,
    k: usize,
) -> Result<SolveResult> {
    config.validate()?;
    let (alpha_nominal, stable) = inst.check_a1();
    if !stable {
        return Err(Error::NotStable {
            alpha: alpha_nominal,
        });
    }
    let expected_len = inst.m() * k;
    if g0.len() != expected_len {
        return Err(Error::DimensionMismatch(format!(
            "initial g must have length {expected_len}, got {}",
            g0.len()
        )));
    }
    let weights = WeightMatrix::new(inst.pattern(), config.weight)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_1e55_u64);
    let mut jitter_budget = config.max_jitter_attempts;

    let mut point = jitter_point(
        inst,
        g0,
        omega0,
        config.jitter_scale,
        &mut rng,
        jitter_budget.max(1),
    )?;
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut last_beta = 0.0;
    let min_step = 1e-16;
    let mut stalled_steps = 0usize;

    let termination = loop {
        let iter = trace.len();
        let derivs = derivatives(inst, &point, &weights, config.mode == DescentMode::Newton)?;
        let j_cost = cost(&point, &weights);
        if !j_cost.is_finite() {
            return Err(Error::NonFiniteCost { iter });
        }
        let grad_norm = derivs.gradient.norm();
        let alpha = spectral_abscissa(&inst.perturbed_matrix(&point.delta)?);
        trace.push(IterationRecord {
            iter,
            cost: j_cost,
            grad_norm,
            omega: point.omega,
            alpha,
            beta: last_beta,
            delta_norm: point.delta_norm(),
        });

        if grad_norm <= config.grad_tol * (1.0 + j_cost.abs()) * config.weight.max(1.0) {
            break Termination::Converged;
        }
        if iter >= config.max_iters {
            break Termination::MaxIterations;
        }
        if stalled_steps >= 8 {
            // the cost stopped moving at double-precision resolution
            break Termination::StepSizeUnderflow;
        }

        // descent direction
        let direction = match config.mode {
            DescentMode::Gradient => derivs.gradient.clone(),
            DescentMode::Newton => {
                let nv = derivs.gradient.len();
                let mut eps = config.epsilon;
                let mut dir = None;
                for _ in 0..4 {
                    let sys = &derivs.gauss_newton + DMatrix::identity(nv, nv) * eps;
                    if let Some(chol) = sys.cholesky() {
                        dir = Some(chol.solve(&derivs.gradient));
                        break;
                    }
                    eps *= 100.0;
                }
                dir.unwrap_or_else(|| derivs.gradient.clone())
            }
        };
        let slope = derivs.gradient.dot(&direction);
        let direction = if slope > 0.0 {
            direction
        } else {
            derivs.gradient.clone()
        };
        let slope = derivs.gradient.dot(&direction).max(0.0);

        // line search
        let z0 = pack_vars(&point);
        let mut beta = config.initial_step;
        let mut accepted: Option<(SearchPoint, f64)> = None;
        let mut saw_rank_rejection = false;
        while beta >= min_step {
            let z_trial = &z0 - &direction * beta;
            let (g_trial, omega_trial) = unpack_vars(&z_trial, k);
            match evaluate(inst, &g_trial, omega_trial) {
                Ok(trial) if trial.well_conditioned => {
                    let trial_cost = cost(&trial, &weights);
                    let ok = trial_cost.is_finite()
                        && match config.step_rule {
                            StepRule::Backtracking => trial_cost < j_cost,
                            StepRule::Armijo => {
                                trial_cost <= j_cost - config.sufficient_decrease * beta * slope
                            }
                        };
                    if ok {
                        accepted = Some((trial, beta));
                        break;
                    }
                }
                Ok(_) => saw_rank_rejection = true,
                Err(Error::RankDeficient { .. }) => saw_rank_rejection = true,
                Err(e) => return Err(e),
            }
            beta *= config.shrink;
        }

        match accepted {
            Some((next, used_beta)) => {
                let decrease = j_cost - cost(&next, &weights);
                if decrease <= 4.0 * f64::EPSILON * (1.0 + j_cost.abs()) {
                    stalled_steps += 1;
                } else {
                    stalled_steps = 0;
                }
                point = next;
                last_beta = used_beta;
            }
            None if saw_rank_rejection && jitter_budget > 0 => {
                // the step kept landing on (near-)rank-deficient CX: nudge g
                jitter_budget -= 1;
                let g_now = point.g.clone();
                point = jitter_point(
                    inst,
                    &g_now,
                    point.omega,
                    config.jitter_scale,
                    &mut rng,
                    config.max_jitter_attempts.max(1),
                )?;
                last_beta = 0.0;
            }
            None => break Termination::StepSizeUnderflow,
        }
    };

    // canonical representative: ω̂ ≥ 0 (mirror (G, ω) → (G·D, −ω), X → X·D)
    if k == 2 && point.omega < 0.0 {
        let mut g_mat = point.g_matrix(inst.m());
        for r in 0..g_mat.nrows() {
            g_mat[(r, 1)] = -g_mat[(r, 1)];
        }
        let g_flip = crate::matops::vec_of(&g_mat);
        point = evaluate(inst, &g_flip, -point.omega)?;
    }

    let j_cost = cost(&point, &weights);
    let grad_norm = trace.last().map(|r| r.grad_norm).unwrap_or(f64::NAN);
    let (sparsified, sparsity_error) = project_sparse(&point.delta, inst.pattern())?;
    let alpha = spectral_abscissa(&inst.perturbed_matrix(&point.delta)?);
    let alpha_sparsified = spectral_abscissa(&inst.perturbed_matrix(&sparsified)?);
    let converged = termination == Termination::Converged;
    let valid_raw = alpha.abs() <= config.alpha_tol;
    let valid_sparsified = alpha_sparsified.abs() <= config.alpha_tol;
    Ok(SolveResult {
        delta_norm: point.delta_norm(),
        sparsified_norm: sparsified.norm(),
        sparsified_delta: sparsified,
        sparsity_error,
        alpha,
        alpha_sparsified,
        valid_raw,
        valid_sparsified,
        valid_local_min: converged && valid_raw && valid_sparsified,
        converged,
        termination,
        final_gradient_norm: grad_norm,
        cost: j_cost,
        delta: point.delta,
        omega: point.omega,
        x: point.x,
        k,
        g: point.g,
        trace,
    })
}

/// Run the descent from `(g₀, ω₀)` in the standard two-column mode
/// (`g₀` has length `2m`).
pub fn solve(
    inst: &ProblemInstance,
    config: &SolverConfig,
    g0: &DVector<f64>,
    omega0: f64,
) -> Result<SolveResult> {
    descend(inst, config, g0, omega0, 2)
}

/// Descent on the real single-eigenvector parametrization assigning one
/// eigenvalue at the origin: `AX = −BG`, `Δ = G(CX)⁺` with `X ∈ ℝⁿ`
/// (`g₀` has length `m`).
pub fn solve_omega_zero(
    inst: &ProblemInstance,
    config: &SolverConfig,
    g0: &DVector<f64>,
) -> Result<SolveResult> {
    descend(inst, config, g0, 0.0, 1)
}

/// One initial condition for [`multistart`].
#[derive(Clone, Debug)]
pub struct Start {
    pub g0: DVector<f64>,
    pub omega0: f64,
    /// 2 for the standard mode, 1 for `ω = 0`.
    pub k: usize,
}

/// Everything produced by a multi-start run.
#[derive(Debug)]
pub struct MultistartOutcome {
    /// Distinct stationary points, ascending by `‖Δ̂‖_F`.
    pub results: Vec<SolveResult>,
    /// Index into `results` of the best valid local minimum, if any.
    pub best: Option<usize>,
    /// `min ‖Δ̂‖_F` over valid minima: the reported stability-radius upper
    /// bound.
    pub r_c: Option<f64>,
    pub starts_run: usize,
    pub failures: usize,
}

impl MultistartOutcome {
    pub fn best_result(&self) -> Option<&SolveResult> {
        self.best.map(|i| &self.results[i])
    }
}

fn sample_starts(inst: &ProblemInstance, config: &SolverConfig) -> Vec<Start> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let m = inst.m();
    let b_norm = inst.b().norm().max(1e-12);
    let eigs = inst.a().clone().complex_eigenvalues();
    let mut im_parts: Vec<f64> = eigs
        .iter()
        .map(|l| l.im.abs())
        .filter(|v| *v > 1e-9)
        .collect();
    im_parts.sort_by(f64::total_cmp);
    im_parts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let rho = eigs.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let (omega_lo, omega_hi) = if im_parts.is_empty() {
        (0.1, 10.0 * (1.0 + rho))
    } else {
        (0.1 * im_parts[0], 10.0 * im_parts[im_parts.len() - 1])
    };
    let log_lo = omega_lo.max(1e-6).ln();
    let log_hi = omega_hi.max(omega_lo * 10.0).ln();

    let random_g = |rng: &mut ChaCha8Rng, len: usize| {
        DVector::from_fn(len, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v / b_norm
        })
    };

    let count = config.multistart_count.max(1);
    let mut starts = Vec::new();
    // deterministic seeds at each nominal imaginary part
    for &im in im_parts.iter().take(count) {
        starts.push(Start {
            g0: random_g(&mut rng, 2 * m),
            omega0: im,
            k: 2,
        });
    }
    while starts.len() < count {
        let omega0 = (log_lo + (log_hi - log_lo) * rng.random_range(0.0..1.0)).exp();
        starts.push(Start {
            g0: random_g(&mut rng, 2 * m),
            omega0,
            k: 2,
        });
    }
    if config.omega_zero_mode {
        for _ in 0..count {
            starts.push(Start {
                g0: random_g(&mut rng, m),
                omega0: 0.0,
                k: 1,
            });
        }
    }
    starts
}

fn same_stationary_point(a: &SolveResult, b: &SolveResult) -> bool {
    (a.delta_norm - b.delta_norm).abs() < 1e-3 && (a.omega - b.omega).abs() < 1e-2
}

fn better_representative(a: &SolveResult, b: &SolveResult) -> bool {
    // prefer valid, then converged, then the sharper gradient
    (a.valid_local_min, a.converged, -a.final_gradient_norm)
        > (b.valid_local_min, b.converged, -b.final_gradient_norm)
}

fn run_starts(
    inst: &ProblemInstance,
    config: &SolverConfig,
    starts: &[Start],
) -> (Vec<SolveResult>, usize) {
    let mut indexed: Vec<(usize, Result<SolveResult>)> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9);
            let r = match s.k {
                1 => solve_omega_zero(inst, &cfg, &s.g0),
                _ => solve(inst, &cfg, &s.g0, s.omega0),
            };
            (i, r)
        })
        .collect();
    indexed.sort_by_key(|(i, _)| *i);
    let mut ok = Vec::new();
    let mut failures = 0;
    for (_, r) in indexed {
        match r {
            Ok(res) => ok.push(res),
            Err(_) => failures += 1,
        }
    }
    (ok, failures)
}

/// Multi-start solve: samples initializers, runs every start (standard and,
/// when enabled, `ω = 0`), re-runs near-zero-frequency candidates through the
/// single-eigenvalue mode, deduplicates stationary points, and reports the
/// best valid local minimum as the stability-radius upper bound.
pub fn multistart(inst: &ProblemInstance, config: &SolverConfig) -> Result<MultistartOutcome> {
    multistart_with_starts(inst, config, Vec::new())
}

/// [`multistart`] with caller-supplied extra starts (used for warm starts).
pub fn multistart_with_starts(
    inst: &ProblemInstance,
    config: &SolverConfig,
    extra: Vec<Start>,
) -> Result<MultistartOutcome> {
    config.validate()?;
    let (alpha, stable) = inst.check_a1();
    if !stable {
        return Err(Error::NotStable { alpha });
    }
    let mut starts = extra;
    starts.extend(sample_starts(inst, config));
    let starts_run = starts.len();
    let (mut results, failures) = run_starts(inst, config, &starts);

    // converged standard solves sitting at ω ≈ 0 assign a double eigenvalue
    // at the origin; the single-eigenvalue mode is the right object there
    let mut reruns = Vec::new();
    for r in &results {
        if r.k == 2 && r.converged && r.omega.abs() < OMEGA_ZERO_SWITCH {
            let g_mat = crate::matops::unvec(&r.g, inst.m(), 2);
            let c0 = g_mat.column(0).norm();
            let c1 = g_mat.column(1).norm();
            let col = if c0 >= c1 { 0 } else { 1 };
            reruns.push(Start {
                g0: g_mat.column(col).clone_owned(),
                omega0: 0.0,
                k: 1,
            });
        }
    }
    if !reruns.is_empty() {
        let (extra_results, _) = run_starts(inst, config, &reruns);
        results.extend(extra_results);
    }

    // deduplicate stationary points
    let mut distinct: Vec<SolveResult> = Vec::new();
    for r in results {
        if let Some(existing) = distinct.iter_mut().find(|d| same_stationary_point(d, &r)) {
            if better_representative(&r, existing) {
                *existing = r;
            }
        } else {
            distinct.push(r);
        }
    }
    distinct.sort_by(|a, b| a.delta_norm.total_cmp(&b.delta_norm));

    let best = distinct.iter().position(|r| r.valid_local_min);
    let r_c = best.map(|i| distinct[i].delta_norm);
    Ok(MultistartOutcome {
        results: distinct,
        best,
        r_c,
        starts_run,
        failures,
    })
}

/// One row of a weight sweep.
#[derive(Clone, Debug)]
pub struct WeightSweepRow {
    pub weight: f64,
    pub result: Option<SolveResult>,
    pub error: Option<String>,
}

/// Run [`multistart`] for each penalty weight in order, warm-starting each
/// run from the previous weight's best minimum.
pub fn weight_sweep(
    inst: &ProblemInstance,
    config: &SolverConfig,
    weights: &[f64],
) -> Result<Vec<WeightSweepRow>> {
    if weights.is_empty() {
        return Err(Error::InvalidInput(
            "weight sweep needs at least one weight".into(),
        ));
    }
    let mut rows = Vec::with_capacity(weights.len());
    let mut warm: Option<Start> = None;
    for &w in weights {
        let mut cfg = config.clone();
        cfg.weight = w;
        let extra = warm.clone().map(|s| vec![s]).unwrap_or_default();
        match multistart_with_starts(inst, &cfg, extra) {
            Ok(outcome) => match outcome.best {
                Some(i) => {
                    let best = outcome.results[i].clone();
                    warm = Some(Start {
                        g0: best.g.clone(),
                        omega0: best.omega,
                        k: best.k,
                    });
                    rows.push(WeightSweepRow {
                        weight: w,
                        result: Some(best),
                        error: None,
                    });
                }
                None => rows.push(WeightSweepRow {
                    weight: w,
                    result: None,
                    error: Some("no valid local minimum".into()),
                }),
            },
            Err(e) => rows.push(WeightSweepRow {
                weight: w,
                result: None,
                error: Some(e.to_string()),
            }),
        }
    }
    Ok(rows)
}

/// Decimal formatting used for every CSV export: 17 significant digits,
/// locale-independent.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Write the iteration trace as CSV
/// (`iter,cost,grad_norm,omega,alpha,beta,delta_fnorm`).
pub fn write_trace_csv(
    out: &mut impl std::io::Write,
    trace: &[IterationRecord],
) -> std::io::Result<()> {
    writeln!(out, "iter,cost,grad_norm,omega,alpha,beta,delta_fnorm")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.iter,
            format_float(r.cost),
            format_float(r.grad_norm),
            format_float(r.omega),
            format_float(r.alpha),
            format_float(r.beta),
            format_float(r.delta_norm)
        )?;
    }
    Ok(())
}
