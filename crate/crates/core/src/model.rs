//! Problem definition: the quadruple `(A, B, C, S)`, sparsity machinery, and
//! the weight matrix of the penalty method.
//!
//! `A` is `n×n`, `B` is `n×m`, `C` is `p×n`, and the binary pattern `S` marks
//! the freely perturbable entries of the `m×p` perturbation `Δ`. The
//! complementary constraint is `S^c ∘ Δ = 0`, vectorized as `𝖲·vec(Δ) = 0`
//! with a binary selector `𝖲`.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::matops::vec_of;
use crate::{eig, Error, Result};

/// Relative singular-value tolerance for rank decisions on `CX`.
pub const RANK_TOL: f64 = 1e-9;

/// Binary sparsity pattern `S` for the perturbation.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityPattern {
    s: DMatrix<f64>,
}

impl SparsityPattern {
    /// Build from a 0/1 matrix.
    pub fn new(s: DMatrix<f64>) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::InvalidInput("sparsity pattern must be non-empty".into()));
        }
        if s.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::InvalidInput(
                "sparsity pattern entries must be 0 or 1".into(),
            ));
        }
        Ok(Self { s })
    }

    /// Pattern with every entry free.
    pub fn all_ones(m: usize, p: usize) -> Self {
        Self {
            s: DMatrix::from_element(m, p, 1.0),
        }
    }

    /// Pattern with exactly the listed `(row, col)` entries free.
    pub fn from_entries(m: usize, p: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut s = DMatrix::zeros(m, p);
        for &(i, j) in entries {
            if i >= m || j >= p {
                return Err(Error::InvalidInput(format!(
                    "pattern entry ({i},{j}) out of bounds for {m}x{p}"
                )));
            }
            s[(i, j)] = 1.0;
        }
        Self::new(s)
    }

    pub fn nrows(&self) -> usize {
        self.s.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.s.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.s
    }

    /// Complementary pattern `S^c = 1 − S`.
    pub fn complement(&self) -> DMatrix<f64> {
        self.s.map(|v| 1.0 - v)
    }

    /// Number of forced-zero entries `n_s` (ones in `S^c`).
    pub fn forced_zero_count(&self) -> usize {
        self.s.iter().filter(|&&v| v == 0.0).count()
    }

    /// Free entries (where `S = 1`) in column-major order.
    pub fn free_entries(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for j in 0..self.s.ncols() {
            for i in 0..self.s.nrows() {
                if self.s[(i, j)] == 1.0 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Vectorized selector `𝖲`: binary `n_s × mp` matrix whose rows are the
    /// standard basis vectors indexed by `supp(vec(S^c))`, so that
    /// `𝖲·vec(Δ) = 0 ⇔ S^c ∘ Δ = 0`.
    pub fn selector(&self) -> DMatrix<f64> {
        let mp = self.s.len();
        let sc = vec_of(&self.complement());
        let rows: Vec<usize> = (0..mp).filter(|&k| sc[k] == 1.0).collect();
        let mut sel = DMatrix::zeros(rows.len(), mp);
        for (r, &k) in rows.iter().enumerate() {
            sel[(r, k)] = 1.0;
        }
        sel
    }

    /// `S ∘ Δ`.
    pub fn apply(&self, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        crate::matops::hadamard(&self.s, delta)
    }
}

/// Project onto the pattern and report the sparsity error
/// `E = ‖Δ − S∘Δ‖_F`.
pub fn project_sparse(delta: &DMatrix<f64>, pattern: &SparsityPattern) -> Result<(DMatrix<f64>, f64)> {
    let projected = pattern.apply(delta)?;
    let err = (delta - &projected).norm();
    Ok((projected, err))
}

/// The full problem data `(A, B, C, S)`.
#[derive(Clone, Debug)]
pub struct ProblemInstance {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    pattern: SparsityPattern,
}

impl ProblemInstance {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        pattern: SparsityPattern,
    ) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::DimensionMismatch(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B must have {} rows, got {}",
                n,
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C must have {} columns, got {}",
                n,
                c.ncols()
            )));
        }
        if pattern.nrows() != b.ncols() || pattern.ncols() != c.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "S must be {}x{} to match B and C, got {}x{}",
                b.ncols(),
                c.nrows(),
                pattern.nrows(),
                pattern.ncols()
            )));
        }
        for (name, m) in [("A", &a), ("B", &b), ("C", &c)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("{name} contains non-finite entries")));
            }
        }
        Ok(Self { a, b, c, pattern })
    }

    /// State dimension `n`.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// Perturbation row count `m`.
    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// Perturbation column count `p`.
    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    /// Replace the sparsity pattern (dimensions must match).
    pub fn with_pattern(&self, pattern: SparsityPattern) -> Result<Self> {
        Self::new(self.a.clone(), self.b.clone(), self.c.clone(), pattern)
    }

    /// `A(Δ) = A + BΔC`.
    pub fn perturbed_matrix(&self, delta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if delta.nrows() != self.m() || delta.ncols() != self.p() {
            return Err(Error::DimensionMismatch(format!(
                "Δ must be {}x{}, got {}x{}",
                self.m(),
                self.p(),
                delta.nrows(),
                delta.ncols()
            )));
        }
        Ok(&self.a + &self.b * delta * &self.c)
    }

    /// Assumption A1: the nominal matrix is stable. Returns the spectral
    /// abscissa `α(A)` and the pass flag `α(A) < 0`.
    pub fn check_a1(&self) -> (f64, bool) {
        let alpha = eig::spectral_abscissa(&self.a);
        (alpha, alpha < 0.0)
    }

    /// Assumption A3 for a given `X`: `CX` has full column rank.
    pub fn check_a3(&self, x: &DMatrix<f64>) -> A3Check {
        a3_check(&(&self.c * x), self.p())
    }
}

/// Outcome of the A3 (full column rank of `CX`) test.
#[derive(Clone, Copy, Debug)]
pub struct A3Check {
    /// `σ_k > RANK_TOL · σ_1` (and `p ≥ k`).
    pub full_rank: bool,
    /// `σ_k / σ_1`; zero when `CX = 0`.
    pub sigma_ratio: f64,
    /// Set when the test cannot pass structurally because `p <` number of
    /// columns of `X`.
    pub p_too_small: bool,
}

pub(crate) fn a3_check(cx: &DMatrix<f64>, p: usize) -> A3Check {
    let k = cx.ncols();
    if p < k {
        return A3Check {
            full_rank: false,
            sigma_ratio: 0.0,
            p_too_small: true,
        };
    }
    let sv = cx.clone().singular_values();
    let s1 = sv.max();
    let sk = sv.min();
    let ratio = if s1 > 0.0 { sk / s1 } else { 0.0 };
    A3Check {
        full_rank: s1 > 0.0 && ratio > RANK_TOL,
        sigma_ratio: ratio,
        p_too_small: false,
    }
}

/// Entrywise penalty weights: 1 on free entries, `w` on forced zeros.
#[derive(Clone, Debug)]
pub struct WeightMatrix {
    w: f64,
    mat: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn new(pattern: &SparsityPattern, w: f64) -> Result<Self> {
        if !(w >= 1.0) {
            return Err(Error::InvalidInput(format!("penalty weight must be ≥ 1, got {w}")));
        }
        // W = 1 + (w−1)·S^c
        let mat = pattern.complement().map(|sc| 1.0 + (w - 1.0) * sc);
        Ok(Self { w, mat })
    }

    pub fn weight(&self) -> f64 {
        self.w
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    /// Diagonal of `W̄ = diag(vec(W∘W))`; entries are 1 or `w²`.
    pub fn w_bar(&self) -> DVector<f64> {
        vec_of(&self.mat.component_mul(&self.mat))
    }
}

#[derive(Deserialize)]
struct ProblemFile {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "S")]
    s: Vec<Vec<f64>>,
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse(format!("matrix {name} is empty")));
    }
    let cols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Parse(format!(
                "matrix {name}: row {} has {} entries, expected {}",
                i + 1,
                r.len(),
                cols
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Parse a problem document: a JSON object with dense row-array matrices
/// named `A`, `B`, `C`, `S`. Dimensions are inferred and cross-checked.
pub fn parse_problem(text: &str) -> Result<ProblemInstance> {
    let file: ProblemFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("{e} (line {}, column {})", e.line(), e.column())))?;
    let a = matrix_from_rows("A", &file.a)?;
    let b = matrix_from_rows("B", &file.b)?;
    let c = matrix_from_rows("C", &file.c)?;
    let s = matrix_from_rows("S", &file.s)?;
    let pattern = SparsityPattern::new(s)
        .map_err(|e| Error::Parse(format!("matrix S: {e}")))?;
    ProblemInstance::new(a, b, c, pattern).map_err(|e| Error::Parse(e.to_string()))
}

/// Load a problem file from disk.
pub fn load_problem(path: impl AsRef<std::path::Path>) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text)
}
