//! Shared fixtures for unit tests.

use nalgebra::DMatrix;

use crate::model::{ProblemInstance, SparsityPattern};

/// The 4-state example system with spectrum {-1±i, -1±10i}; `diagonal_pattern`
/// selects the diagonal-only sparsity variant.
pub(crate) fn example_instance(diagonal_pattern: bool) -> ProblemInstance {
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            79.0, 20.0, -30.0, -20.0, //
            -41.0, -12.0, 17.0, 13.0, //
            167.0, 40.0, -60.0, -38.0, //
            33.5, 9.0, -14.5, -11.0,
        ],
    );
    let b = DMatrix::from_row_slice(
        4,
        2,
        &[
            0.2190, 0.9347, //
            0.0470, 0.3835, //
            0.6789, 0.5194, //
            0.6793, 0.8310,
        ],
    );
    let c = DMatrix::from_row_slice(
        2,
        4,
        &[
            0.0346, 0.5297, 0.0077, 0.0668, //
            0.0535, 0.6711, 0.3848, 0.4175,
        ],
    );
    let pattern = if diagonal_pattern {
        SparsityPattern::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap()
    } else {
        SparsityPattern::all_ones(2, 2)
    };
    ProblemInstance::new(a, b, c, pattern).unwrap()
}

pub(crate) fn lcg(state: &mut u64) -> f64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    ((*state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
}

/// Random instance with a stability margin of at least 0.5 and a random
/// (mostly-free) sparsity pattern.
pub(crate) fn random_stable_instance(seed: u64, n: usize, m: usize, p: usize) -> ProblemInstance {
    let mut s = seed;
    let a0 = DMatrix::from_fn(n, n, |_, _| lcg(&mut s));
    let alpha = crate::eig::spectral_abscissa(&a0);
    let a = a0 - DMatrix::identity(n, n) * (alpha + 0.5 + lcg(&mut s).abs());
    let b = DMatrix::from_fn(n, m, |_, _| lcg(&mut s));
    let c = DMatrix::from_fn(p, n, |_, _| lcg(&mut s));
    let pat = DMatrix::from_fn(m, p, |_, _| if lcg(&mut s) > -0.4 { 1.0 } else { 0.0 });
    let pattern = SparsityPattern::new(pat).unwrap_or_else(|_| SparsityPattern::all_ones(m, p));
    ProblemInstance::new(a, b, c, pattern).unwrap()
}
