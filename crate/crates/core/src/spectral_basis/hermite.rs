//! Galerkin matrices in the scaled Hermite-function basis
//! `χₙ(x) = √α hₙ(αx)`.

use ndarray::Array2;

use super::PotentialSpec;
use crate::{Error, Result};

/// Position operator `(a + a†)/(√2 α)` truncated to `m` functions.
pub fn position(m: usize, alpha: f64) -> Array2<f64> {
    let mut x = Array2::zeros((m, m));
    for n in 0..m.saturating_sub(1) {
        let v = ((n + 1) as f64).sqrt() / (std::f64::consts::SQRT_2 * alpha);
        x[[n, n + 1]] = v;
        x[[n + 1, n]] = v;
    }
    x
}

/// `-d²/dx²`, exact on the truncated space.
pub fn kinetic(m: usize, alpha: f64) -> Array2<f64> {
    let a2 = alpha * alpha;
    let mut t = Array2::zeros((m, m));
    for n in 0..m {
        t[[n, n]] = a2 * (n as f64 + 0.5);
        if n + 2 < m {
            let v = -a2 * (((n + 1) * (n + 2)) as f64).sqrt() / 2.0;
            t[[n, n + 2]] = v;
            t[[n + 2, n]] = v;
        }
    }
    t
}

/// Imaginary part of `-i d/dx`; the operator is `i · this` with this real
/// antisymmetric.
pub fn momentum_imag(m: usize, alpha: f64) -> Array2<f64> {
    let mut p = Array2::zeros((m, m));
    for n in 0..m.saturating_sub(1) {
        let v = alpha * ((n + 1) as f64).sqrt() / std::f64::consts::SQRT_2;
        p[[n + 1, n]] = v;
        p[[n, n + 1]] = -v;
    }
    p
}

/// `V(X)` for polynomial `V`, built in an enlarged space so the retained block is exact.
pub fn potential(spec: &PotentialSpec, m: usize, alpha: f64) -> Result<Array2<f64>> {
    if !spec.is_polynomial() {
        return Err(Error::InvalidDiscretization(
            "the Hermite backend needs even-integer exponents".into(),
        ));
    }
    let deg = (2.0 * spec.ell).round() as usize;
    let big = m + deg;
    let x = position(big, alpha);
    let mut powers = vec![Array2::eye(big)];
    for p in 1..=deg {
        let next = powers[p - 1].dot(&x);
        powers.push(next);
    }
    let mut v = powers[deg].clone();
    for t in &spec.lower_terms {
        let d = t.degree.round() as usize;
        v.scaled_add(t.coefficient, &powers[d]);
    }
    Ok(v.slice(ndarray::s![..m, ..m]).to_owned())
}

/// Values and derivatives of `χ₀..χ_{m-1}` at `x`.
pub fn functions(m: usize, alpha: f64, x: f64) -> (Vec<f64>, Vec<f64>) {
    let y = alpha * x;
    let mut h = vec![0.0; m + 1];
    h[0] = std::f64::consts::PI.powf(-0.25) * (-y * y / 2.0).exp();
    if m >= 1 {
        h[1] = std::f64::consts::SQRT_2 * y * h[0];
    }
    for n in 1..m {
        let nf = n as f64;
        h[n + 1] = (2.0 / (nf + 1.0)).sqrt() * y * h[n] - (nf / (nf + 1.0)).sqrt() * h[n - 1];
    }
    let sa = alpha.sqrt();
    let vals: Vec<f64> = h[..m].iter().map(|v| v * sa).collect();
    let ders = (0..m)
        .map(|n| {
            let nf = n as f64;
            let lower = if n > 0 { (nf / 2.0).sqrt() * h[n - 1] } else { 0.0 };
            (lower - ((nf + 1.0) / 2.0).sqrt() * h[n + 1]) * alpha * sa
        })
        .collect();
    (vals, ders)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_matrix_is_diagonal() {
        let spec = PotentialSpec::pure(1.0, 10.0);
        let h = kinetic(20, 1.0) + potential(&spec, 20, 1.0).unwrap();
        for i in 0..20 {
            for j in 0..20 {
                let want = if i == j { 2.0 * i as f64 + 1.0 } else { 0.0 };
                assert!((h[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn functions_are_orthonormal_by_quadrature() {
        let n = 2001;
        let h = 30.0 / (n - 1) as f64;
        let mut gram = Array2::<f64>::zeros((6, 6));
        for i in 0..n {
            let x = -15.0 + i as f64 * h;
            let (v, _) = functions(6, 1.3, x);
            for a in 0..6 {
                for b in 0..6 {
                    gram[[a, b]] += h * v[a] * v[b];
                }
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((gram[[a, b]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_matches_difference_quotient() {
        let x = 0.37;
        let e = 1e-6;
        let (_, d) = functions(5, 0.8, x);
        let (p, _) = functions(5, 0.8, x + e);
        let (m, _) = functions(5, 0.8, x - e);
        for n in 0..5 {
            assert!((d[n] - (p[n] - m[n]) / (2.0 * e)).abs() < 1e-8);
        }
    }
}
