//! Dense helpers shared by the numerical modules.

use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{Eigh, SVD, UPLO};

use crate::{Error, Result, C64};

pub type CMat = Array2<C64>;
pub type RMat = Array2<f64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn to_complex(a: ArrayView2<f64>) -> CMat {
    a.mapv(|v| C64::new(v, 0.0))
}

pub fn adjoint(a: ArrayView2<C64>) -> CMat {
    a.t().mapv(|z| z.conj())
}

pub fn hermitian_part(a: ArrayView2<C64>) -> CMat {
    let mut out = a.to_owned();
    out += &adjoint(a);
    out.mapv_inplace(|z| z * 0.5);
    out
}

pub fn max_abs(a: ArrayView2<C64>) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn max_abs_real(a: ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn frobenius(a: ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `max |A - A†|` entrywise.
pub fn hermitian_defect(a: ArrayView2<C64>) -> f64 {
    let n = a.nrows();
    let mut d: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            d = d.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    d
}

/// `max |U†U - I|` entrywise.
pub fn unitarity_defect(u: ArrayView2<C64>) -> f64 {
    let g = adjoint(u).dot(&u);
    let mut d: f64 = 0.0;
    for ((i, j), z) in g.indexed_iter() {
        let t = if i == j { *z - 1.0 } else { *z };
        d = d.max(t.norm());
    }
    d
}

/// Largest singular value. Zero matrices short-circuit.
pub fn spectral_norm(a: ArrayView2<C64>) -> f64 {
    if a.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return 0.0;
    }
    match fortran(a).svd(false, false) {
        Ok((_, s, _)) => s.iter().cloned().fold(0.0, f64::max),
        Err(_) => frobenius(a),
    }
}

/// Column-major copy. Row-major input reaches LAPACK as its transpose,
/// which for hermitian matrices is the complex conjugate.
pub fn fortran<T: Clone>(a: ArrayView2<T>) -> Array2<T> {
    let data: Vec<T> = a.t().iter().cloned().collect();
    Array2::from_shape_vec(a.raw_dim().f(), data).expect("shape matches data")
}

/// Eigendecomposition of the hermitian part of `a`.
pub fn eigh_hermitian(a: ArrayView2<C64>) -> Result<(Array1<f64>, CMat)> {
    let h = fortran(hermitian_part(a).view());
    h.eigh(UPLO::Lower).map_err(|e| Error::Eigensolver(e.to_string()))
}

pub fn eigvalsh(a: ArrayView2<C64>) -> Result<Array1<f64>> {
    Ok(eigh_hermitian(a)?.0)
}

/// Apply `f(λ)` spectrally to the hermitian matrix `a`.
pub fn hermitian_function(a: ArrayView2<C64>, f: impl Fn(f64) -> C64) -> Result<CMat> {
    let (w, q) = eigh_hermitian(a)?;
    let fw: Array1<C64> = w.mapv(f);
    let scaled = &q * &fw.insert_axis(Axis(0));
    Ok(scaled.dot(&adjoint(q.view())))
}

/// `exp(-i t A)` for hermitian `A`.
pub fn propagator(a: ArrayView2<C64>, t: f64) -> Result<CMat> {
    hermitian_function(a, |l| C64::from_polar(1.0, -t * l))
}

/// Unitary polar factor `W Vᴴ` of `a = W Σ Vᴴ`, together with the singular values.
pub fn polar_unitary(a: ArrayView2<C64>) -> Result<(CMat, Array1<f64>)> {
    let (u, s, vt) = fortran(a).svd(true, true)?;
    let u = u.ok_or_else(|| Error::Linalg("svd returned no U".into()))?;
    let vt = vt.ok_or_else(|| Error::Linalg("svd returned no Vt".into()))?;
    Ok((u.dot(&vt), s))
}

pub fn identity(n: usize) -> CMat {
    Array2::from_diag_elem(n, C64::new(1.0, 0.0))
}

pub fn diag_complex(d: &[f64]) -> CMat {
    let mut m = CMat::zeros((d.len(), d.len()));
    for (i, v) in d.iter().enumerate() {
        m[[i, i]] = C64::new(*v, 0.0);
    }
    m
}

/// `Vᵀ diag(w) V` for real columns `v` and complex weights `w`.
pub fn weighted_gram(v: ArrayView2<f64>, w: &[C64]) -> CMat {
    let re: Array1<f64> = w.iter().map(|z| z.re).collect();
    let im: Array1<f64> = w.iter().map(|z| z.im).collect();
    let vr = &v * &re.insert_axis(Axis(1));
    let vi = &v * &im.insert_axis(Axis(1));
    let a = v.t().dot(&vr);
    let b = v.t().dot(&vi);
    let mut out = CMat::zeros(a.raw_dim());
    for ((i, j), z) in out.indexed_iter_mut() {
        *z = C64::new(a[[i, j]], b[[i, j]]);
    }
    out
}

/// `Aᵀ diag(w) B` for real `A`, `B` and real weights.
pub fn weighted_cross(a: ArrayView2<f64>, w: &[f64], b: ArrayView2<f64>) -> RMat {
    let wv = Array1::from(w.to_vec());
    let bw = &b * &wv.insert_axis(Axis(1));
    a.t().dot(&bw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn propagator_of_diagonal_is_phase() {
        let a = diag_complex(&[1.0, 2.0]);
        let u = propagator(a.view(), 0.3).unwrap();
        assert!((u[[0, 0]] - C64::from_polar(1.0, -0.3)).norm() < 1e-14);
        assert!((u[[1, 1]] - C64::from_polar(1.0, -0.6)).norm() < 1e-14);
        assert!(u[[0, 1]].norm() < 1e-14);
    }

    #[test]
    fn polar_factor_is_unitary() {
        let a = array![
            [C64::new(1.0, 0.2), C64::new(0.1, 0.0)],
            [C64::new(-0.3, 0.1), C64::new(0.9, -0.4)]
        ];
        let (u, _) = polar_unitary(a.view()).unwrap();
        assert!(unitarity_defect(u.view()) < 1e-13);
    }

    #[test]
    fn spectral_norm_of_rank_one() {
        let a = array![[C64::new(3.0, 0.0), C64::new(4.0, 0.0)], [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]];
        assert!((spectral_norm(a.view()) - 5.0).abs() < 1e-12);
    }

    fn test_matrix(n: usize) -> CMat {
        Array2::from_shape_fn((n, n), |(i, j)| {
            let x = (i * 31 + j * 17) as f64;
            C64::new((0.37 * x).sin(), (0.23 * x + 0.1 * i as f64).cos())
        })
    }

    #[test]
    fn hermitian_eigendecomposition_reconstructs_complex_input() {
        for n in [5, 60, 200] {
            let h = hermitian_part(test_matrix(n).view());
            let (w, q) = eigh_hermitian(h.view()).unwrap();
            let rec = (&q * &w.mapv(|x| C64::new(x, 0.0)).insert_axis(Axis(0))).dot(&adjoint(q.view()));
            assert!(max_abs((&rec - &h).view()) < 1e-10 * n as f64, "n = {n}");
            assert!(unitarity_defect(q.view()) < 1e-10);
        }
    }

    #[test]
    fn polar_factor_reproduces_complex_input() {
        let a = test_matrix(40);
        let (u, _) = polar_unitary(a.view()).unwrap();
        let p = adjoint(u.view()).dot(&a);
        assert!(unitarity_defect(u.view()) < 1e-12);
        // U†A must be hermitian positive semidefinite
        assert!(hermitian_defect(p.view()) < 1e-10);
        assert!(eigvalsh(p.view()).unwrap().iter().all(|&l| l > -1e-10));
    }
}
