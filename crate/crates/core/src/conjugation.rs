//! Quasi-periodic changes of variables `ψ = U(ωt) χ` and the gauge
//! transformation that removes the magnetic coupling.
//!
//! Under `ψ = U(ωt)χ` the generator transforms as
//! `H₊ = U†(H U − i ω·∂_φ U)`.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::linalg::{adjoint, eigh_hermitian, polar_unitary, weighted_gram, CMat, I};
use crate::phase::PhaseGrid;
use crate::qp::QPOperator;
use crate::quadrature::cumulative_from_center;
use crate::spectral_basis::EigenBasis;
use crate::symbols::{apply_grid_hamiltonian, quantize_multiplication_in, Profile, QPSymbol, MAX_CUTOFF};
use crate::{Error, Result, C64};

pub const TOL_TAIL: f64 = 1e-10;
pub const TOL_GAUGE: f64 = 1e-8;

/// A unitary family `U(φ)`.
#[derive(Clone, Debug)]
pub enum QPUnitary {
    Identity { dim: usize, n_freq: usize },
    /// `U = e^{iG(φ)}` for a hermitian family `G`.
    Exponential { generator: QPOperator },
    /// Explicit Fourier coefficients `Uₖ`.
    Fourier { coeffs: QPOperator },
    /// `U₁(φ) U₂(φ) ⋯`.
    Product(Vec<QPUnitary>),
    Adjoint(Box<QPUnitary>),
    /// Polar factor of the Galerkin projection of multiplication by
    /// `e^{iε b(x, φ)}`. Only pointwise evaluation is available.
    ProjectedMultiplication {
        b: QPSymbol,
        eps: f64,
        modes: Arc<Array2<f64>>,
        points: Arc<Vec<f64>>,
    },
}

/// `(e^{ia} − e^{ib})/(a − b)`, continuous at `a = b`.
pub fn exp_divided_difference(a: f64, b: f64) -> C64 {
    let half = 0.5 * (a - b);
    let sinc = if half.abs() < 1e-8 { 1.0 - half * half / 6.0 } else { half.sin() / half };
    I * C64::from_polar(sinc, 0.5 * (a + b))
}

impl QPUnitary {
    pub fn identity(dim: usize, n_freq: usize) -> Self {
        QPUnitary::Identity { dim, n_freq }
    }

    pub fn dim(&self) -> usize {
        match self {
            QPUnitary::Identity { dim, .. } => *dim,
            QPUnitary::Exponential { generator } => generator.dim,
            QPUnitary::Fourier { coeffs } => coeffs.dim,
            QPUnitary::Product(f) => f.first().map_or(0, |u| u.dim()),
            QPUnitary::Adjoint(u) => u.dim(),
            QPUnitary::ProjectedMultiplication { modes, .. } => modes.ncols(),
        }
    }

    pub fn n_freq(&self) -> usize {
        match self {
            QPUnitary::Identity { n_freq, .. } => *n_freq,
            QPUnitary::Exponential { generator } => generator.n_freq,
            QPUnitary::Fourier { coeffs } => coeffs.n_freq,
            QPUnitary::Product(f) => f.first().map_or(0, |u| u.n_freq()),
            QPUnitary::Adjoint(u) => u.n_freq(),
            QPUnitary::ProjectedMultiplication { b, .. } => b.n_freq,
        }
    }

    /// Fourier width used as a starting guess for output boxes.
    pub fn cutoff_hint(&self) -> usize {
        match self {
            QPUnitary::Identity { .. } => 0,
            QPUnitary::Exponential { generator } => generator.support_cutoff(),
            QPUnitary::Fourier { coeffs } => coeffs.k_cutoff,
            QPUnitary::Product(f) => f.iter().map(|u| u.cutoff_hint()).sum(),
            QPUnitary::Adjoint(u) => u.cutoff_hint(),
            QPUnitary::ProjectedMultiplication { b, .. } => b.k_cutoff(),
        }
    }

    pub fn eval(&self, phi: &[f64]) -> Result<CMat> {
        match self {
            QPUnitary::Identity { dim, .. } => Ok(crate::linalg::identity(*dim)),
            QPUnitary::Exponential { generator } => {
                let g = generator.eval(phi);
                crate::linalg::hermitian_function(g.view(), |l| C64::from_polar(1.0, l))
            }
            QPUnitary::Fourier { coeffs } => Ok(coeffs.eval(phi)),
            QPUnitary::Product(factors) => {
                let mut acc = crate::linalg::identity(self.dim());
                for f in factors {
                    acc = acc.dot(&f.eval(phi)?);
                }
                Ok(acc)
            }
            QPUnitary::Adjoint(u) => Ok(adjoint(u.eval(phi)?.view())),
            QPUnitary::ProjectedMultiplication { b, eps, modes, points } => {
                let w: Vec<C64> = points.iter().map(|&x| C64::from_polar(1.0, eps * b.eval(x, phi))).collect();
                let a = weighted_gram(modes.view(), &w);
                Ok(polar_unitary(a.view())?.0)
            }
        }
    }

    /// `(U(φ), ω·∂_φ U(φ))`.
    pub fn eval_with_derivative(&self, phi: &[f64], omega: &[f64]) -> Result<(CMat, CMat)> {
        match self {
            QPUnitary::Identity { dim, .. } => Ok((crate::linalg::identity(*dim), CMat::zeros((*dim, *dim)))),
            QPUnitary::Exponential { generator } => {
                let g = generator.eval(phi);
                let gdot = generator.phase_derivative(omega).eval(phi);
                let (lam, q) = eigh_hermitian(g.view())?;
                let n = lam.len();
                let qh = adjoint(q.view());
                let e: Array1<C64> = lam.mapv(|l| C64::from_polar(1.0, l));
                let u = (&q * &e.view().insert_axis(Axis(0))).dot(&qh);
                let mut inner = qh.dot(&gdot).dot(&q);
                for a in 0..n {
                    for b in 0..n {
                        inner[[a, b]] *= exp_divided_difference(lam[a], lam[b]);
                    }
                }
                Ok((u, q.dot(&inner).dot(&qh)))
            }
            QPUnitary::Fourier { coeffs } => Ok((coeffs.eval(phi), coeffs.phase_derivative(omega).eval(phi))),
            QPUnitary::Product(factors) => {
                let n = self.dim();
                let mut u = crate::linalg::identity(n);
                let mut du = CMat::zeros((n, n));
                for f in factors {
                    let (v, dv) = f.eval_with_derivative(phi, omega)?;
                    du = du.dot(&v) + u.dot(&dv);
                    u = u.dot(&v);
                }
                Ok((u, du))
            }
            QPUnitary::Adjoint(inner) => {
                let (u, du) = inner.eval_with_derivative(phi, omega)?;
                Ok((adjoint(u.view()), adjoint(du.view())))
            }
            QPUnitary::ProjectedMultiplication { .. } => Err(Error::Unsupported(
                "phase derivative of a projected multiplication unitary".into(),
            )),
        }
    }

    /// `U⁻¹`: exponentials negate their generator, products reverse,
    /// Fourier families are resampled from pointwise adjoints.
    pub fn inverse(&self) -> Result<QPUnitary> {
        Ok(match self {
            QPUnitary::Identity { .. } => self.clone(),
            QPUnitary::Exponential { generator } => QPUnitary::Exponential {
                generator: generator.scale(C64::new(-1.0, 0.0)),
            },
            QPUnitary::Product(f) => QPUnitary::Product(f.iter().rev().map(|u| u.inverse()).collect::<Result<_>>()?),
            QPUnitary::Adjoint(u) => (**u).clone(),
            QPUnitary::Fourier { coeffs } => {
                let mut k = coeffs.k_cutoff.max(1);
                loop {
                    let grid = PhaseGrid::for_cutoff(coeffs.n_freq, k.max(coeffs.k_cutoff));
                    let samples: Vec<CMat> = (0..grid.len()).map(|p| adjoint(coeffs.eval(&grid.phase(p)).view())).collect();
                    let (op, tail) = grid.analyze(&samples, k)?;
                    if tail <= TOL_TAIL {
                        break QPUnitary::Fourier { coeffs: op };
                    }
                    if k >= MAX_CUTOFF {
                        return Err(Error::FourierTail { tail, tol: TOL_TAIL, cutoff: k });
                    }
                    k = (2 * k).min(MAX_CUTOFF);
                }
            }
            QPUnitary::ProjectedMultiplication { .. } => QPUnitary::Adjoint(Box::new(self.clone())),
        })
    }

    /// `max |U(φ)†U(φ) − I|` over the given phases.
    pub fn unitarity_defect(&self, phases: &[Vec<f64>]) -> Result<f64> {
        let mut d: f64 = 0.0;
        for phi in phases {
            d = d.max(crate::linalg::unitarity_defect(self.eval(phi)?.view()));
        }
        Ok(d)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugationOptions {
    pub tol_tail: f64,
    pub max_cutoff: usize,
    /// Output box; defaults to the sum of the input widths.
    pub out_cutoff: Option<usize>,
}

impl Default for ConjugationOptions {
    fn default() -> Self {
        ConjugationOptions {
            tol_tail: TOL_TAIL,
            max_cutoff: MAX_CUTOFF,
            out_cutoff: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conjugated {
    pub operator: QPOperator,
    /// Frobenius mass of the Fourier modes outside the output box.
    pub tail: f64,
}

/// `H₊ = U†(H U − i ω·∂_φ U)`, evaluated on a phase grid and re-analyzed;
/// the output box doubles until the discarded tail is below tolerance.
pub fn conjugate(h: &QPOperator, u: &QPUnitary, omega: &[f64], opts: &ConjugationOptions) -> Result<Conjugated> {
    if u.dim() != h.dim || u.n_freq() != h.n_freq || omega.len() != h.n_freq {
        return Err(Error::DimensionMismatch("operator, unitary and frequency disagree".into()));
    }
    let mut kout = opts
        .out_cutoff
        .unwrap_or(h.support_cutoff() + u.cutoff_hint())
        .max(h.support_cutoff())
        .min(opts.max_cutoff);
    loop {
        let grid = PhaseGrid::for_cutoff(h.n_freq, kout.max(h.k_cutoff));
        let hs = grid.synthesize(h)?;
        let mut samples = Vec::with_capacity(grid.len());
        for (p, hp) in hs.iter().enumerate() {
            let (up, dup) = u.eval_with_derivative(&grid.phase(p), omega)?;
            let inner = hp.dot(&up) - dup.mapv(|z| z * I);
            samples.push(adjoint(up.view()).dot(&inner));
        }
        let (mut op, tail) = grid.analyze(&samples, kout)?;
        if tail <= opts.tol_tail {
            op.symmetrize();
            return Ok(Conjugated { operator: op, tail });
        }
        if kout >= opts.max_cutoff {
            return Err(Error::FourierTail {
                tail,
                tol: opts.tol_tail,
                cutoff: kout,
            });
        }
        kout = (2 * kout.max(1)).min(opts.max_cutoff);
    }
}

/// `b(x, φ) = ∫₀ˣ W₁(y, φ) dy`, per Fourier coefficient, tabulated on the grid.
pub fn gauge_b(w1: &QPSymbol, grid: &Grid) -> QPSymbol {
    let mut out = QPSymbol::new(w1.n_freq, (w1.declared_order + 1.0).max(0.0));
    for k in w1.modes() {
        let vals = w1.coefficient_on(&k, &grid.points);
        let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
        let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
        for (part, amp) in [(re, C64::new(1.0, 0.0)), (im, I)] {
            if part.iter().all(|v| *v == 0.0) {
                continue;
            }
            let prim = cumulative_from_center(&part, grid.spacing, grid.center());
            out.push(
                k.clone(),
                amp,
                Profile::Tabulated {
                    points: grid.points.clone(),
                    values: prim,
                },
            );
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct GaugeOutcome {
    /// `H⁽¹⁾` in the eigenbasis.
    pub h1: QPOperator,
    /// The transformation `ψ = U⁽¹⁾χ`, as the polar factor of the projected
    /// multiplication by `e^{iεb}`.
    pub unitary: QPUnitary,
    pub tail: f64,
    pub magnetic_before: f64,
    pub magnetic_after: f64,
    /// `max |H⁽¹⁾ − (diag λ + ε Op(W₀ + ω·∂_φ b))|`.
    pub formula_deviation: f64,
    /// `max |b|` over the outermost grid points and sample phases.
    pub boundary_b: f64,
}

/// Conjugate `H = (−i∂ₓ − εW₁)² + V + εW₀` by multiplication with `e^{iεb}`,
/// `∂ₓb = W₁`. The products are formed on the grid at each phase sample, so
/// no intermediate truncation enters.
#[allow(clippy::too_many_arguments)]
pub fn apply_gauge(
    h: &QPOperator,
    b: &QPSymbol,
    eps: f64,
    omega: &[f64],
    basis: &EigenBasis,
    w0: &QPSymbol,
    w1: &QPSymbol,
    beta1: f64,
) -> Result<GaugeOutcome> {
    if beta1 > basis.ell {
        return Err(Error::Hypothesis(format!(
            "beta1 = {beta1} exceeds ell = {}; the gauge does not preserve the Sobolev scale",
            basis.ell
        )));
    }
    let n_freq = h.n_freq;
    let modes = Arc::new(basis.modes.clone());
    let points = Arc::new(basis.grid.points.clone());
    let unitary = QPUnitary::ProjectedMultiplication {
        b: b.clone(),
        eps,
        modes: modes.clone(),
        points: points.clone(),
    };
    let magnetic_before = h.magnetic_norm();
    let dphi_b = b.phase_derivative(omega);
    if eps == 0.0 || b.is_zero() {
        return Ok(GaugeOutcome {
            h1: h.clone(),
            unitary,
            tail: 0.0,
            magnetic_before,
            magnetic_after: magnetic_before,
            formula_deviation: 0.0,
            boundary_b: 0.0,
        });
    }
    let kout = h.k_cutoff;
    let grid = PhaseGrid::for_cutoff(n_freq, kout);
    let v = basis.modes.mapv(|x| C64::new(x, 0.0));
    let mut samples = Vec::with_capacity(grid.len());
    let mut boundary_b: f64 = 0.0;
    let last = points.len() - 1;
    for p in 0..grid.len() {
        let phi = grid.phase(p);
        let bv = b.eval_on(&points, &phi);
        boundary_b = boundary_b.max(bv[0].abs()).max(bv[last].abs());
        let mut vt = v.clone();
        for (i, mut row) in vt.axis_iter_mut(Axis(0)).enumerate() {
            let g = C64::from_polar(1.0, eps * bv[i]);
            row.mapv_inplace(|z| z * g);
        }
        let w0v = w0.eval_on(&points, &phi);
        let w1v = w1.eval_on(&points, &phi);
        let hv = apply_grid_hamiltonian(basis, eps, &w0v, &w1v, &vt);
        let mut hp = adjoint(vt.view()).dot(&hv);
        let db: Vec<C64> = dphi_b.eval_on(&points, &phi).into_iter().map(|x| C64::new(eps * x, 0.0)).collect();
        hp += &weighted_gram(basis.modes.view(), &db);
        samples.push(hp);
    }
    let (mut h1, tail) = grid.analyze(&samples, kout)?;
    h1.symmetrize();
    let magnetic_after = h1.magnetic_norm();

    let formula_symbol = w0.sum(&dphi_b);
    let formula = QPOperator::diagonal(&basis.eigenvalues, n_freq, kout)
        .add_scaled(C64::new(eps, 0.0), &quantize_multiplication_in(&formula_symbol, basis, kout.max(formula_symbol.k_cutoff()))?)?;
    let formula_deviation = h1.distance(&formula)?;

    if magnetic_after > TOL_GAUGE * magnetic_before.max(f64::MIN_POSITIVE) && magnetic_before > 0.0 {
        return Err(Error::GaugeResidual {
            residual: magnetic_after / magnetic_before,
            tol: TOL_GAUGE,
        });
    }
    Ok(GaugeOutcome {
        h1,
        unitary,
        tail,
        magnetic_before,
        magnetic_after,
        formula_deviation,
        boundary_b,
    })
}

/// `max_φ ‖U(φ) − I‖` measured from `ℋ^{s+β}` to `ℋ^s` on the truncated space.
pub fn sobolev_distance_from_identity(u: &QPUnitary, phases: &[Vec<f64>], weights_s: &[f64], weights_sb: &[f64]) -> Result<f64> {
    let n = u.dim();
    let mut worst: f64 = 0.0;
    for phi in phases {
        let mut d = u.eval(phi)?;
        for i in 0..n {
            d[[i, i]] -= C64::new(1.0, 0.0);
        }
        let scaled = Array2::from_shape_fn((n, n), |(i, j)| d[[i, j]] * weights_s[i] / weights_sb[j]);
        worst = worst.max(crate::linalg::spectral_norm(scaled.view()));
    }
    Ok(worst)
}
