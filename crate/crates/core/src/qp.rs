//! Quasi-periodic matrix families `A(φ) = Σₖ Aₖ e^{ik·φ}` over the box
//! `|k|∞ ≤ K`.

use std::fmt;

use ndarray::{Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use serde::{Deserialize, Serialize};

use crate::linalg::{adjoint, frobenius, max_abs, spectral_norm, CMat};
use crate::{Error, Result, C64};

/// Integer frequency vector `k ∈ ℤⁿ`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Mode(pub Vec<i64>);

impl Mode {
    pub fn zero(n: usize) -> Self {
        Mode(vec![0; n])
    }

    pub fn unit(n: usize, d: usize) -> Self {
        let mut k = vec![0; n];
        k[d] = 1;
        Mode(k)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0)
    }

    pub fn l1(&self) -> i64 {
        self.0.iter().map(|v| v.abs()).sum()
    }

    pub fn linf(&self) -> i64 {
        self.0.iter().map(|v| v.abs()).max().unwrap_or(0)
    }

    pub fn neg(&self) -> Self {
        Mode(self.0.iter().map(|v| -v).collect())
    }

    pub fn add(&self, other: &Mode) -> Self {
        Mode(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn dot(&self, omega: &[f64]) -> f64 {
        self.0.iter().zip(omega).map(|(k, w)| *k as f64 * w).sum()
    }

    pub fn phase(&self, phi: &[f64]) -> f64 {
        self.dot(phi)
    }

    /// First nonzero component positive.
    pub fn is_canonical(&self) -> bool {
        self.0.iter().find(|&&v| v != 0).is_some_and(|&v| v > 0)
    }

    /// All modes with `0 < |k|₁ ≤ kmax` and first nonzero component positive,
    /// ordered by `|k|₁` then lexicographically.
    pub fn half_l1_ball(n: usize, kmax: i64) -> Vec<Mode> {
        let mut out = Vec::new();
        for r in 1..=kmax {
            let mut shell: Vec<Mode> = box_modes(n, r).filter(|k| k.l1() == r && k.is_canonical()).collect();
            shell.sort();
            out.extend(shell);
        }
        out
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Iterator over the box `|k|∞ ≤ kmax` in row-major order (last component fastest).
pub fn box_modes(n: usize, kmax: i64) -> impl Iterator<Item = Mode> {
    let side = (2 * kmax + 1) as usize;
    let total = side.pow(n as u32);
    (0..total).map(move |mut idx| {
        let mut k = vec![0i64; n];
        for d in (0..n).rev() {
            k[d] = (idx % side) as i64 - kmax;
            idx /= side;
        }
        Mode(k)
    })
}

/// Dense coefficient storage on the box `|k|∞ ≤ k_cutoff`.
///
/// Hermitian families satisfy `coeff(−k) = coeff(k)†`; general families
/// (unitary Fourier coefficients, generators in transit) share the container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QPOperator {
    pub n_freq: usize,
    pub k_cutoff: usize,
    pub dim: usize,
    pub coeffs: Array3<C64>,
}

impl QPOperator {
    pub fn zeros(n_freq: usize, k_cutoff: usize, dim: usize) -> Self {
        let b = (2 * k_cutoff + 1).pow(n_freq as u32);
        QPOperator {
            n_freq,
            k_cutoff,
            dim,
            coeffs: Array3::zeros((b, dim, dim)),
        }
    }

    pub fn constant(a: ArrayView2<C64>, n_freq: usize, k_cutoff: usize) -> Self {
        let mut op = Self::zeros(n_freq, k_cutoff, a.nrows());
        let z = op.zero_index();
        op.coeffs.index_axis_mut(Axis(0), z).assign(&a);
        op
    }

    pub fn diagonal(values: &[f64], n_freq: usize, k_cutoff: usize) -> Self {
        let mut op = Self::zeros(n_freq, k_cutoff, values.len());
        let z = op.zero_index();
        for (i, v) in values.iter().enumerate() {
            op.coeffs[[z, i, i]] = C64::new(*v, 0.0);
        }
        op
    }

    pub fn n_boxes(&self) -> usize {
        self.coeffs.len_of(Axis(0))
    }

    fn side(&self) -> usize {
        2 * self.k_cutoff + 1
    }

    pub fn index_of(&self, k: &Mode) -> Option<usize> {
        if k.0.len() != self.n_freq || k.linf() > self.k_cutoff as i64 {
            return None;
        }
        let side = self.side();
        let mut idx = 0usize;
        for v in &k.0 {
            idx = idx * side + (v + self.k_cutoff as i64) as usize;
        }
        Some(idx)
    }

    pub fn mode_at(&self, mut idx: usize) -> Mode {
        let side = self.side();
        let mut k = vec![0i64; self.n_freq];
        for d in (0..self.n_freq).rev() {
            k[d] = (idx % side) as i64 - self.k_cutoff as i64;
            idx /= side;
        }
        Mode(k)
    }

    pub fn zero_index(&self) -> usize {
        (self.n_boxes() - 1) / 2
    }

    /// Index of `−k` given the index of `k` (the box is centrally symmetric).
    pub fn mirror_index(&self, idx: usize) -> usize {
        self.n_boxes() - 1 - idx
    }

    pub fn modes(&self) -> Vec<Mode> {
        box_modes(self.n_freq, self.k_cutoff as i64).collect()
    }

    pub fn coeff(&self, k: &Mode) -> Option<ArrayView2<'_, C64>> {
        self.index_of(k).map(|i| self.coeffs.index_axis(Axis(0), i))
    }

    pub fn coeff_at(&self, idx: usize) -> ArrayView2<'_, C64> {
        self.coeffs.index_axis(Axis(0), idx)
    }

    pub fn coeff_at_mut(&mut self, idx: usize) -> ArrayViewMut2<'_, C64> {
        self.coeffs.index_axis_mut(Axis(0), idx)
    }

    pub fn coeff_mut(&mut self, k: &Mode) -> Result<ArrayViewMut2<'_, C64>> {
        let i = self.index_of(k).ok_or_else(|| Error::CutoffOverflow {
            required: k.linf() as usize,
            allowed: self.k_cutoff,
        })?;
        Ok(self.coeffs.index_axis_mut(Axis(0), i))
    }

    /// Add `c` at `k` and `c†` at `−k` (for `k = 0`, add the hermitian part).
    pub fn add_pair(&mut self, k: &Mode, c: ArrayView2<C64>) -> Result<()> {
        let i = self.index_of(k).ok_or_else(|| Error::CutoffOverflow {
            required: k.linf() as usize,
            allowed: self.k_cutoff,
        })?;
        let j = self.mirror_index(i);
        if i == j {
            let h = (&c + &adjoint(c)).mapv(|z| z * 0.5);
            let mut slot = self.coeffs.index_axis_mut(Axis(0), i);
            slot += &h;
        } else {
            {
                let mut slot = self.coeffs.index_axis_mut(Axis(0), i);
                slot += &c;
            }
            let mut slot = self.coeffs.index_axis_mut(Axis(0), j);
            slot += &adjoint(c);
        }
        Ok(())
    }

    /// Indices of coefficients with any nonzero entry.
    pub fn support(&self) -> Vec<usize> {
        (0..self.n_boxes())
            .filter(|&i| self.coeff_at(i).iter().any(|z| z.re != 0.0 || z.im != 0.0))
            .collect()
    }

    /// Largest `|k|∞` with a nonzero coefficient.
    pub fn support_cutoff(&self) -> usize {
        self.support().into_iter().map(|i| self.mode_at(i).linf() as usize).max().unwrap_or(0)
    }

    pub fn eval(&self, phi: &[f64]) -> CMat {
        let mut out = CMat::zeros((self.dim, self.dim));
        for i in self.support() {
            let e = C64::from_polar(1.0, self.mode_at(i).phase(phi));
            out.scaled_add(e, &self.coeff_at(i));
        }
        out
    }

    /// `ω·∂_φ A` as a family: `coeff(k) ↦ i(ω·k) coeff(k)`.
    pub fn phase_derivative(&self, omega: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_boxes() {
            let f = C64::new(0.0, self.mode_at(i).dot(omega));
            out.coeff_at_mut(i).mapv_inplace(|z| z * f);
        }
        out
    }

    /// `max_k max|coeff(−k) − coeff(k)†|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n_boxes() {
            let j = self.mirror_index(i);
            let a = self.coeff_at(i);
            let b = self.coeff_at(j);
            for r in 0..self.dim {
                for c in 0..self.dim {
                    d = d.max((b[[r, c]] - a[[c, r]].conj()).norm());
                }
            }
        }
        d
    }

    /// Replace by the nearest hermitian family.
    pub fn symmetrize(&mut self) {
        for i in 0..=self.zero_index() {
            let j = self.mirror_index(i);
            let a = self.coeff_at(i).to_owned();
            let b = self.coeff_at(j).to_owned();
            let new_a = (&a + &adjoint(b.view())).mapv(|z| z * 0.5);
            self.coeff_at_mut(i).assign(&new_a);
            self.coeff_at_mut(j).assign(&adjoint(new_a.view()));
        }
    }

    /// `Σₖ ‖coeff(k)‖₂ (1 + |k|₁)^p`.
    pub fn weighted_norm(&self, p: f64) -> f64 {
        self.support()
            .into_iter()
            .map(|i| spectral_norm(self.coeff_at(i)) * (1.0 + self.mode_at(i).l1() as f64).powf(p))
            .fold(0.0, |a, b| a + b)
    }

    /// `Σₖ ‖(Cₖ − Cₖᵀ)/2‖₂`: in a real eigenbasis multiplication operators
    /// have transpose-symmetric coefficients, while `ξ`-odd Weyl terms are
    /// transpose-antisymmetric.
    pub fn magnetic_norm(&self) -> f64 {
        self.support()
            .into_iter()
            .map(|i| {
                let c = self.coeff_at(i);
                let a = (&c - &c.t()).mapv(|z| z * 0.5);
                spectral_norm(a.view())
            })
            .fold(0.0, |a, b| a + b)
    }

    pub fn max_abs(&self) -> f64 {
        (0..self.n_boxes()).map(|i| max_abs(self.coeff_at(i))).fold(0.0, f64::max)
    }

    /// Frobenius mass of all coefficients.
    pub fn frobenius(&self) -> f64 {
        (0..self.n_boxes())
            .map(|i| frobenius(self.coeff_at(i)).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Copy into a box of a different cutoff; returns the Frobenius mass dropped.
    pub fn with_cutoff(&self, k_cutoff: usize) -> (Self, f64) {
        let mut out = Self::zeros(self.n_freq, k_cutoff, self.dim);
        let mut tail = 0.0;
        for i in 0..self.n_boxes() {
            let k = self.mode_at(i);
            match out.index_of(&k) {
                Some(j) => out.coeff_at_mut(j).assign(&self.coeff_at(i)),
                None => tail += frobenius(self.coeff_at(i)).powi(2),
            }
        }
        (out, tail.sqrt())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.n_freq != other.n_freq || self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!(
                "families ({}, {}) and ({}, {})",
                self.n_freq, self.dim, other.n_freq, other.dim
            )));
        }
        Ok(())
    }

    /// `self + s · other`, on the larger of the two boxes.
    pub fn add_scaled(&self, s: C64, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let k = self.k_cutoff.max(other.k_cutoff);
        let (mut out, _) = self.with_cutoff(k);
        for i in 0..other.n_boxes() {
            let j = out.index_of(&other.mode_at(i)).expect("box contains smaller box");
            out.coeff_at_mut(j).scaled_add(s, &other.coeff_at(i));
        }
        Ok(out)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        out.coeffs.mapv_inplace(|z| z * s);
        out
    }

    /// Exact Fourier convolution `(A B)(φ) = A(φ) B(φ)` on the box of summed cutoffs.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let k = self.k_cutoff + other.k_cutoff;
        let mut out = Self::zeros(self.n_freq, k, self.dim);
        let sa = self.support();
        let sb = other.support();
        for &i in &sa {
            let ki = self.mode_at(i);
            for &j in &sb {
                let kk = ki.add(&other.mode_at(j));
                let t = out.index_of(&kk).expect("sum of cutoffs");
                let prod = self.coeff_at(i).dot(&other.coeff_at(j));
                let mut slot = out.coeff_at_mut(t);
                slot += &prod;
            }
        }
        Ok(out)
    }

    /// Family of adjoints `A(φ)†`.
    pub fn adjoint(&self) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_boxes() {
            let j = self.mirror_index(i);
            out.coeff_at_mut(i).assign(&adjoint(self.coeff_at(j)));
        }
        out
    }

    /// Maximum deviation of coefficients from `other` (missing boxes count as zero).
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.add_scaled(C64::new(-1.0, 0.0), other)?.max_abs())
    }

    /// Diagonal entries `coeff(k)_{jj}` as an `N × boxes` array.
    pub fn diagonal_series(&self) -> Array2<C64> {
        Array2::from_shape_fn((self.dim, self.n_boxes()), |(j, b)| self.coeffs[[b, j, j]])
    }
}
