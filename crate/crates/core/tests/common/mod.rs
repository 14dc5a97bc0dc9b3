//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use stls_sdp::extract::recover_from_point;
use stls_sdp::lift::{block_sym, kron_point, minor_set};
use stls_sdp::{AffineStructure, ProblemInstance};

/// `u ↦ ((1, u), (u, u))`.
pub fn example_structure() -> AffineStructure {
    let base = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let dir = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 1.0]);
    AffineStructure::new(base, vec![dir]).unwrap()
}

pub fn example_instance(theta: f64) -> ProblemInstance {
    ProblemInstance::unweighted(example_structure(), DVector::from_element(1, theta)).unwrap()
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn unit_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    gaussian_vec(rng, n).normalize()
}

/// Checks whether `x x ᵀ` has every `m × m` block symmetric, entry by entry.
pub fn outer_is_block_symmetric(x: &DVector<f64>, m: usize, tol: f64) -> bool {
    let blocks = x.len() / m;
    for a in 0..blocks {
        for b in 0..blocks {
            for p in 0..m {
                for q in 0..m {
                    let lhs = x[a * m + p] * x[b * m + q];
                    let rhs = x[a * m + q] * x[b * m + p];
                    if (lhs - rhs).abs() > tol {
                        return false;
                    }
                }
            }
        }
    }
    true
}

pub fn max_minor(x: &DVector<f64>, m: usize) -> f64 {
    let k = x.len() / m - 1;
    minor_set(k, m)
        .iter()
        .map(|l| l.residual(x).abs())
        .fold(0.0, f64::max)
}

/// Largest of `‖Sym(Sym A) − Sym A‖` and `|⟨Sym A, B⟩ − ⟨A, Sym B⟩|` for a
/// random pair of `N × N` matrices.
pub fn block_sym_defect(rng: &mut ChaCha8Rng, blocks: usize, m: usize) -> f64 {
    let n = blocks * m;
    let a = gaussian_mat(rng, n, n);
    let b = gaussian_mat(rng, n, n);
    let sa = block_sym(&a, m).unwrap();
    let idem = (block_sym(&sa, m).unwrap() - &sa).amax();
    let sb = block_sym(&b, m).unwrap();
    let adj = (sa.dot(&b) - a.dot(&sb)).abs();
    idem.max(adj)
}

/// One Kronecker sample: `x = (1, v) ⊗ z` must have vanishing minors and a
/// block-symmetric outer product. Returns the largest violation.
pub fn kronecker_forward_defect(rng: &mut ChaCha8Rng, k: usize, m: usize) -> f64 {
    let z = gaussian_vec(rng, m);
    let v = gaussian_vec(rng, k);
    let x = kron_point(&v, &z);
    let xx = &x * x.transpose();
    let bs = (block_sym(&xx, m).unwrap() - &xx).amax();
    bs.max(max_minor(&x, m))
}

/// One non-Kronecker sample: a generic `x` whose reshape has rank two.
/// Returns `(max |minor|, outer product is block symmetric)` which should be
/// `(> 0, false)`.
pub fn kronecker_converse_sample(rng: &mut ChaCha8Rng, k: usize, m: usize) -> (f64, bool) {
    let x = gaussian_vec(rng, (k + 1) * m);
    (max_minor(&x, m), outer_is_block_symmetric(&x, m, 1e-9))
}

/// For a rank-one reshape `x = a ⊗ z` with `a₀ ≠ 0`, the point is
/// `(1, a/a₀) ⊗ (a₀ z)`. Returns the reconstruction error.
pub fn minors_imply_kronecker(rng: &mut ChaCha8Rng, k: usize, m: usize) -> f64 {
    let a = gaussian_vec(rng, k + 1);
    let z = gaussian_vec(rng, m);
    let x = DVector::from_fn((k + 1) * m, |idx, _| a[idx / m] * z[idx % m]);
    assert!(max_minor(&x, m) <= 1e-12 * (1.0 + x.amax().powi(2)));
    let (z_rec, v_rec) = recover_from_point(&x, m);
    (kron_point(&v_rec, &z_rec) - x).amax()
}

/// `ψ̃(φ(z, v)) = (z, v)` for a unit `z`. Returns the error.
pub fn round_trip_defect(rng: &mut ChaCha8Rng, k: usize, m: usize) -> f64 {
    let z = unit_vec(rng, m);
    let v = gaussian_vec(rng, k);
    let (z2, v2) = recover_from_point(&kron_point(&v, &z), m);
    (z2 - z).amax().max((v2 - v).amax())
}
