//! Discretized unperturbed operator `H₀ = -∂ₓₓ + V(x)`, its eigenbasis, the
//! Sobolev scale built on it and classical-orbit oracles.
//!
//! Grid backends store eigenvectors as discrete-orthonormal columns
//! (`VᵀV = I`); the sampled wavefunction is `column / √h`.

mod classical;
pub mod hermite;
mod potential;
mod sobolev;

pub use classical::{classical_period, flow_average, turning_point};
pub use potential::{LowerTerm, PotentialSpec};
pub use sobolev::{sobolev_norm, SobolevWeights};

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eigh, UPLO};
use serde::{Deserialize, Serialize};

use crate::grid::{Grid, Stencil, Toeplitz};
use crate::linalg::{hermitian_defect, CMat};
use crate::stats::linear_fit;
use crate::{Error, Result, C64};

/// Relative gap below which two retained eigenvalues count as colliding.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Residual bound `‖H₀v − λv‖ ≤ tol · λ`.
pub const EIG_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Backend {
    #[default]
    Sinc,
    FiniteDifference,
    /// Galerkin in `basis_size` scaled Hermite functions; the grid is used
    /// only to sample the eigenfunctions.
    Hermite { basis_size: usize, scale: f64 },
}


#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationParams {
    pub grid_points: usize,
    pub n_modes: usize,
    #[serde(default)]
    pub backend: Backend,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Representation {
    Grid(Stencil),
    Hermite { scale: f64 },
}

/// Dense real symmetric matrix of `H₀` plus what is needed to interpret it.
#[derive(Clone, Debug)]
pub struct H0Matrix {
    pub matrix: Array2<f64>,
    pub representation: Representation,
    pub grid: Grid,
    pub potential: Vec<f64>,
    pub ell: f64,
}

pub fn build_h0(spec: &PotentialSpec, disc: &DiscretizationParams) -> Result<H0Matrix> {
    let grid = Grid::symmetric(disc.grid_points, spec.domain_halfwidth)?;
    let potential = spec.sample(&grid)?;
    let (matrix, representation) = match disc.backend {
        Backend::Sinc | Backend::FiniteDifference => {
            let stencil = if disc.backend == Backend::Sinc {
                Stencil::Sinc
            } else {
                Stencil::FiniteDifference
            };
            let mut m = Toeplitz::kinetic(&grid, stencil).dense();
            for (i, v) in potential.iter().enumerate() {
                m[[i, i]] += v;
            }
            (m, Representation::Grid(stencil))
        }
        Backend::Hermite { basis_size, scale } => {
            if !(scale > 0.0) || basis_size < 3 {
                return Err(Error::InvalidDiscretization("Hermite basis needs scale > 0 and size >= 3".into()));
            }
            let m = hermite::kinetic(basis_size, scale) + hermite::potential(spec, basis_size, scale)?;
            (m, Representation::Hermite { scale })
        }
    };
    Ok(H0Matrix {
        matrix,
        representation,
        grid,
        potential,
        ell: spec.ell,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenBasis {
    pub n_modes: usize,
    pub eigenvalues: Vec<f64>,
    /// `G × N` discrete-orthonormal eigenvectors on the grid.
    pub modes: Array2<f64>,
    /// Grid derivative of `modes`.
    pub mode_derivatives: Array2<f64>,
    /// `-i∂ₓ` in the eigenbasis.
    pub momentum_matrix: CMat,
    pub grid: Grid,
    pub potential: Vec<f64>,
    pub ell: f64,
    pub d_exponent: f64,
    pub representation: Representation,
    /// `max |VᵀV − I|` of the sampled eigenvectors.
    pub quadrature_defect: f64,
    pub max_relative_residual: f64,
}

impl EigenBasis {
    pub fn dim(&self) -> usize {
        self.n_modes
    }

    pub fn stencil(&self) -> Stencil {
        match self.representation {
            Representation::Grid(s) => s,
            Representation::Hermite { .. } => Stencil::Sinc,
        }
    }

    pub fn kinetic_operator(&self) -> Toeplitz {
        Toeplitz::kinetic(&self.grid, self.stencil())
    }

    pub fn derivative_operator(&self) -> Toeplitz {
        Toeplitz::derivative(&self.grid, self.stencil())
    }

    /// Parity of mode `j` measured from the stored vector.
    pub fn parity_defect(&self, j: usize) -> f64 {
        let col = self.modes.column(j);
        let n = col.len();
        let sign = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
        (0..n).map(|i| (col[i] - sign * col[n - 1 - i]).abs()).fold(0.0, f64::max)
    }
}

fn fix_sign(v: &mut ndarray::ArrayViewMut1<f64>) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if let Some(first) = v.iter().find(|x| x.abs() > 1e-3 * max) {
        if *first < 0.0 {
            v.mapv_inplace(|x| -x);
        }
    }
}

struct Pair {
    value: f64,
    vector: Array1<f64>,
    even: bool,
}

fn grid_parity_pairs(h: &Array2<f64>) -> Result<Vec<Pair>> {
    let g = h.nrows();
    let c = g / 2;
    let ne = c + 1;
    let no = c;
    let r2 = std::f64::consts::SQRT_2;
    let even = Array2::from_shape_fn((ne, ne), |(a, b)| match (a, b) {
        (0, 0) => h[[c, c]],
        (0, b) => r2 * h[[c, c + b]],
        (a, 0) => r2 * h[[c + a, c]],
        (a, b) => h[[c + a, c + b]] + h[[c + a, c - b]],
    });
    let odd = Array2::from_shape_fn((no, no), |(a, b)| h[[c + a + 1, c + b + 1]] - h[[c + a + 1, c - b - 1]]);
    let (we, ve) = even.eigh(UPLO::Lower).map_err(|e| Error::Eigensolver(e.to_string()))?;
    let (wo, vo) = odd.eigh(UPLO::Lower).map_err(|e| Error::Eigensolver(e.to_string()))?;
    let mut out = Vec::with_capacity(g);
    for (k, w) in we.iter().enumerate() {
        let u = ve.column(k);
        let mut v = Array1::zeros(g);
        v[c] = u[0];
        for m in 1..ne {
            v[c + m] = u[m] / r2;
            v[c - m] = u[m] / r2;
        }
        out.push(Pair { value: *w, vector: v, even: true });
    }
    for (k, w) in wo.iter().enumerate() {
        let u = vo.column(k);
        let mut v = Array1::zeros(g);
        for m in 1..=no {
            v[c + m] = u[m - 1] / r2;
            v[c - m] = -u[m - 1] / r2;
        }
        out.push(Pair { value: *w, vector: v, even: false });
    }
    Ok(out)
}

fn hermite_pairs(h: &Array2<f64>) -> Result<Vec<Pair>> {
    let m = h.nrows();
    let mut out = Vec::with_capacity(m);
    for parity in 0..2 {
        let idx: Vec<usize> = (parity..m).step_by(2).collect();
        let block = Array2::from_shape_fn((idx.len(), idx.len()), |(a, b)| h[[idx[a], idx[b]]]);
        let (w, v) = block.eigh(UPLO::Lower).map_err(|e| Error::Eigensolver(e.to_string()))?;
        for (k, val) in w.iter().enumerate() {
            let mut full = Array1::zeros(m);
            for (a, &i) in idx.iter().enumerate() {
                full[i] = v[[a, k]];
            }
            out.push(Pair { value: *val, vector: full, even: parity == 0 });
        }
    }
    Ok(out)
}

/// Lowest `n_keep` eigenpairs of `H₀`, with sign, parity and residual checks.
pub fn eigendecompose(h0: &H0Matrix, n_keep: usize) -> Result<EigenBasis> {
    let dim = h0.matrix.nrows();
    if n_keep == 0 || 3 * n_keep > dim {
        return Err(Error::InvalidDiscretization(format!(
            "n_keep = {n_keep} must be positive and at most a third of the matrix dimension {dim}"
        )));
    }
    let mut pairs = match h0.representation {
        Representation::Grid(_) => grid_parity_pairs(&h0.matrix)?,
        Representation::Hermite { .. } => hermite_pairs(&h0.matrix)?,
    };
    pairs.sort_by(|a, b| a.value.total_cmp(&b.value));
    pairs.truncate(n_keep);

    let eigenvalues: Vec<f64> = pairs.iter().map(|p| p.value).collect();
    if eigenvalues[0] <= 0.0 {
        return Err(Error::InvariantViolation(format!(
            "non-positive ground energy {}",
            eigenvalues[0]
        )));
    }
    for j in 0..n_keep.saturating_sub(1) {
        let gap = (eigenvalues[j + 1] - eigenvalues[j]) / eigenvalues[j + 1].abs();
        if gap < DEGENERACY_TOL {
            return Err(Error::DegenerateSpectrum { first: j, second: j + 1, gap });
        }
    }
    for (j, p) in pairs.iter().enumerate() {
        if p.even != (j % 2 == 0) {
            return Err(Error::InvariantViolation(format!("mode {j} has the wrong parity")));
        }
    }

    // residuals in the native representation
    let coeffs = Array2::from_shape_fn((dim, n_keep), |(i, j)| pairs[j].vector[i]);
    let hv = h0.matrix.dot(&coeffs);
    let mut max_rel: f64 = 0.0;
    for j in 0..n_keep {
        let r = (&hv.column(j) - &(&coeffs.column(j) * eigenvalues[j]))
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        max_rel = max_rel.max(r / eigenvalues[j]);
    }
    if max_rel > EIG_RESIDUAL_TOL {
        return Err(Error::Eigensolver(format!("eigen-residual {max_rel:.3e} above tolerance")));
    }

    let grid = h0.grid.clone();
    let g = grid.len();
    let mut coeffs = coeffs;
    let (modes, ders, momentum_matrix) = match h0.representation {
        Representation::Grid(stencil) => {
            for mut col in coeffs.columns_mut() {
                fix_sign(&mut col);
            }
            let modes = coeffs;
            let ders = Toeplitz::derivative(&grid, stencil).apply_real(modes.view());
            let a = modes.t().dot(&ders);
            (modes, ders, antisymmetric_to_momentum(&a))
        }
        Representation::Hermite { scale } => {
            let m = dim;
            let sh = grid.spacing.sqrt();
            let mut vals = Array2::zeros((g, m));
            let mut dvals = Array2::zeros((g, m));
            for (i, &x) in grid.points.iter().enumerate() {
                let (v, dv) = hermite::functions(m, scale, x);
                for n in 0..m {
                    vals[[i, n]] = v[n] * sh;
                    dvals[[i, n]] = dv[n] * sh;
                }
            }
            let mut modes = vals.dot(&coeffs);
            for j in 0..n_keep {
                let before = modes.column(j).to_owned();
                fix_sign(&mut modes.column_mut(j));
                if before.iter().zip(modes.column(j)).any(|(a, b)| *a != *b) {
                    coeffs.column_mut(j).mapv_inplace(|x| -x);
                }
            }
            let ders = dvals.dot(&coeffs);
            let pm = coeffs.t().dot(&hermite::momentum_imag(m, scale)).dot(&coeffs);
            (modes, ders, pm.mapv(|v| C64::new(0.0, v)))
        }
    };

    let gram = modes.t().dot(&modes);
    let quadrature_defect = gram
        .indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    if hermitian_defect(momentum_matrix.view()) > 1e-10 {
        return Err(Error::InvariantViolation("momentum matrix not hermitian".into()));
    }
    let ell = h0.ell;
    Ok(EigenBasis {
        n_modes: n_keep,
        eigenvalues,
        modes,
        mode_derivatives: ders,
        momentum_matrix,
        grid,
        potential: h0.potential.clone(),
        ell,
        d_exponent: 2.0 * ell / (ell + 1.0),
        representation: h0.representation,
        quadrature_defect,
        max_relative_residual: max_rel,
    })
}

/// `-i · (A − Aᵀ)/2` for `A = Vᵀ D V`.
fn antisymmetric_to_momentum(a: &Array2<f64>) -> CMat {
    let n = a.nrows();
    Array2::from_shape_fn((n, n), |(i, j)| C64::new(0.0, -0.5 * (a[[i, j]] - a[[j, i]])))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub d_est: f64,
    pub c_est: f64,
    pub residual: f64,
}

/// Least-squares fit of `log λⱼ = log c + d log j` over `j_min..=j_max`.
pub fn fit_eigenvalue_exponent(basis: &EigenBasis, j_min: usize, j_max: usize) -> Result<ExponentFit> {
    if j_max >= basis.n_modes {
        return Err(Error::InvalidDiscretization(format!(
            "window end {j_max} outside the {} resolved modes",
            basis.n_modes
        )));
    }
    let lo = j_min.max(1);
    let count = if j_max >= lo { j_max - lo + 1 } else { 0 };
    if count < 8 {
        return Err(Error::TooFewPoints { needed: 8, got: count });
    }
    let x: Vec<f64> = (lo..=j_max).map(|j| (j as f64).ln()).collect();
    let y: Vec<f64> = (lo..=j_max).map(|j| basis.eigenvalues[j].ln()).collect();
    let f = linear_fit(&x, &y)?;
    Ok(ExponentFit {
        d_est: f.slope,
        c_est: f.intercept.exp(),
        residual: f.residual,
    })
}

/// Relative change of the lowest `count` eigenvalues between two bases.
pub fn relative_spectrum_change(a: &EigenBasis, b: &EigenBasis, count: usize) -> f64 {
    (0..count.min(a.n_modes).min(b.n_modes))
        .map(|j| ((a.eigenvalues[j] - b.eigenvalues[j]) / a.eigenvalues[j]).abs())
        .fold(0.0, f64::max)
}

/// Columns of `modes` scaled to sampled wavefunction values.
pub fn wavefunctions(basis: &EigenBasis) -> Array2<f64> {
    let s = 1.0 / basis.grid.spacing.sqrt();
    basis.modes.mapv(|v| v * s)
}
