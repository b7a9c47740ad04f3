#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpkam::linalg::eigvalsh;
use qpkam::qp::{Mode, QPOperator};
use qpkam::C64;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Array2<C64> {
    Array2::from_shape_fn((n, n), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale)
}

/// Hermitian family with independent coefficients on `|k|∞ ≤ k_max`,
/// scaled so that mode `k` has size `scale · 2^{-|k|₁}`.
pub fn random_hermitian_family(rng: &mut ChaCha8Rng, n_freq: usize, k_max: usize, dim: usize, scale: f64) -> QPOperator {
    let mut h = QPOperator::zeros(n_freq, k_max, dim);
    for idx in 0..h.n_boxes() {
        let k = h.mode_at(idx);
        if !k.is_zero() && !k.is_canonical() {
            continue;
        }
        let c = random_matrix(rng, dim, scale * 0.5f64.powi(k.l1() as i32));
        h.add_pair(&k, c.view()).unwrap();
    }
    h
}

/// `H(φ) = [[λ₁, a e^{−iφ}], [a e^{iφ}, λ₂]]`.
pub fn rotating_field(l1: f64, l2: f64, a: f64, k_cutoff: usize) -> QPOperator {
    let mut h = QPOperator::diagonal(&[l1, l2], 1, k_cutoff);
    let mut c = Array2::zeros((2, 2));
    c[[1, 0]] = C64::new(a, 0.0);
    h.add_pair(&Mode(vec![1]), c.view()).unwrap();
    h
}

/// Reduced levels of [`rotating_field`]: the frame `diag(1, e^{iφ})` turns it
/// into `[[λ₁, a], [a, λ₂ + ω]]`, whose eigenvalues continue `λ₁` and `λ₂ + ω`.
pub fn rotating_field_levels(l1: f64, l2: f64, a: f64, omega: f64) -> [f64; 2] {
    let m = Array2::from_shape_vec(
        (2, 2),
        vec![C64::new(l1, 0.0), C64::new(a, 0.0), C64::new(a, 0.0), C64::new(l2 + omega, 0.0)],
    )
    .unwrap();
    let e = eigvalsh(m.view()).unwrap();
    let (lo, hi) = (e[0], e[1]);
    if l1 < l2 + omega {
        [lo, hi - omega]
    } else {
        [hi, lo - omega]
    }
}
