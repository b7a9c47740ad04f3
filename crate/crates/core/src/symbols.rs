//! Quasi-periodic symbols `W(x, φ) = Σₖ Wₖ(x) e^{ik·φ}`, their growth-class
//! validation and their quantization in the eigenbasis of `H₀`.

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::grid::Grid;
use crate::linalg::{weighted_gram, CMat, I};
use crate::qp::{Mode, QPOperator};
use crate::spectral_basis::EigenBasis;
use crate::{Error, Result, C64};

/// Largest `|xᵀx − I|` tolerated before grid quadrature is considered broken.
pub const QUADRATURE_TOL: f64 = 1e-8;
/// Hard ceiling on automatically widened Fourier boxes.
pub const MAX_CUTOFF: usize = 32;

fn japanese(x: f64) -> f64 {
    (1.0 + x * x).sqrt()
}

/// Closed-form coefficient functions of `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// `⟨x⟩^β`
    JapanesePower { beta: f64 },
    /// `x ⟨x⟩^{β−1}`
    OddJapanesePower { beta: f64 },
    Monomial { power: u32 },
    Sin { frequency: f64 },
    Cos { frequency: f64 },
    Product { factors: Vec<Profile> },
    /// Linear interpolation of sampled values.
    Tabulated { points: Vec<f64>, values: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Constant { value } => *value,
            Profile::JapanesePower { beta } => japanese(x).powf(*beta),
            Profile::OddJapanesePower { beta } => x * japanese(x).powf(beta - 1.0),
            Profile::Monomial { power } => x.powi(*power as i32),
            Profile::Sin { frequency } => (frequency * x).sin(),
            Profile::Cos { frequency } => (frequency * x).cos(),
            Profile::Product { factors } => factors.iter().map(|f| f.eval(x)).product(),
            Profile::Tabulated { points, values } => interpolate(points, values, x),
        }
    }

    pub fn product(a: &Profile, b: &Profile) -> Profile {
        let mut factors = Vec::new();
        for p in [a, b] {
            match p {
                Profile::Product { factors: f } => factors.extend(f.iter().cloned()),
                other => factors.push(other.clone()),
            }
        }
        Profile::Product { factors }
    }
}

fn interpolate(points: &[f64], values: &[f64], x: f64) -> f64 {
    let n = points.len();
    if n == 0 {
        return 0.0;
    }
    if x <= points[0] {
        return values[0];
    }
    if x >= points[n - 1] {
        return values[n - 1];
    }
    let i = points.partition_point(|p| *p <= x);
    let (x0, x1) = (points[i - 1], points[i]);
    if x == x0 {
        return values[i - 1];
    }
    let t = (x - x0) / (x1 - x0);
    values[i - 1] * (1.0 - t) + values[i] * t
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierTerm {
    pub k: Mode,
    pub amplitude: C64,
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QPSymbol {
    pub n_freq: usize,
    pub declared_order: f64,
    pub terms: Vec<FourierTerm>,
}

impl QPSymbol {
    pub fn zero(n_freq: usize) -> Self {
        QPSymbol {
            n_freq,
            declared_order: f64::NEG_INFINITY,
            terms: Vec::new(),
        }
    }

    pub fn new(n_freq: usize, declared_order: f64) -> Self {
        QPSymbol {
            n_freq,
            declared_order,
            terms: Vec::new(),
        }
    }

    pub fn push(&mut self, k: Mode, amplitude: C64, profile: Profile) {
        assert_eq!(k.0.len(), self.n_freq, "mode dimension");
        self.terms.push(FourierTerm { k, amplitude, profile });
    }

    /// `amplitude · profile(x)` independent of `φ`.
    pub fn with_static(mut self, amplitude: f64, profile: Profile) -> Self {
        self.push(Mode::zero(self.n_freq), C64::new(amplitude, 0.0), profile);
        self
    }

    /// `amplitude · profile(x) · cos(k·φ)`.
    pub fn with_cos(mut self, k: Mode, amplitude: f64, profile: Profile) -> Self {
        if k.is_zero() {
            return self.with_static(amplitude, profile);
        }
        self.push(k.neg(), C64::new(amplitude / 2.0, 0.0), profile.clone());
        self.push(k, C64::new(amplitude / 2.0, 0.0), profile);
        self
    }

    /// `amplitude · profile(x) · sin(k·φ)`.
    pub fn with_sin(mut self, k: Mode, amplitude: f64, profile: Profile) -> Self {
        if k.is_zero() {
            return self;
        }
        self.push(k.neg(), C64::new(0.0, amplitude / 2.0), profile.clone());
        self.push(k, C64::new(0.0, -amplitude / 2.0), profile);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == C64::new(0.0, 0.0))
    }

    pub fn k_cutoff(&self) -> usize {
        self.terms.iter().map(|t| t.k.linf() as usize).max().unwrap_or(0)
    }

    pub fn modes(&self) -> Vec<Mode> {
        let mut m: Vec<Mode> = self.terms.iter().map(|t| t.k.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    pub fn coefficient(&self, k: &Mode, x: f64) -> C64 {
        self.terms
            .iter()
            .filter(|t| &t.k == k)
            .map(|t| t.amplitude * t.profile.eval(x))
            .sum()
    }

    pub fn coefficient_on(&self, k: &Mode, points: &[f64]) -> Vec<C64> {
        points.iter().map(|&x| self.coefficient(k, x)).collect()
    }

    /// Real value `W(x, φ)`.
    pub fn eval(&self, x: f64, phi: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| (t.amplitude * C64::from_polar(t.profile.eval(x), t.k.phase(phi))).re)
            .sum()
    }

    pub fn eval_on(&self, points: &[f64], phi: &[f64]) -> Vec<f64> {
        points.iter().map(|&x| self.eval(x, phi)).collect()
    }

    /// `max |W₋ₖ(x) − conj Wₖ(x)|` over the given points.
    pub fn reality_defect(&self, points: &[f64]) -> f64 {
        let mut d: f64 = 0.0;
        for k in self.modes() {
            let a = self.coefficient_on(&k, points);
            let b = self.coefficient_on(&k.neg(), points);
            for (u, v) in a.iter().zip(&b) {
                d = d.max((v - u.conj()).norm());
            }
        }
        d
    }

    /// Pointwise product, with Fourier supports convolved.
    pub fn product(&self, other: &QPSymbol) -> QPSymbol {
        let mut out = QPSymbol::new(self.n_freq, self.declared_order + other.declared_order);
        for a in &self.terms {
            for b in &other.terms {
                out.push(a.k.add(&b.k), a.amplitude * b.amplitude, Profile::product(&a.profile, &b.profile));
            }
        }
        out
    }

    /// Replace every coefficient by its values on `grid` (linear interpolation between).
    pub fn tabulate(&self, grid: &Grid) -> QPSymbol {
        let mut out = QPSymbol::new(self.n_freq, self.declared_order);
        for k in self.modes() {
            let vals = self.coefficient_on(&k, &grid.points);
            let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
            let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
            if re.iter().any(|v| *v != 0.0) {
                out.push(k.clone(), C64::new(1.0, 0.0), Profile::Tabulated { points: grid.points.clone(), values: re });
            }
            if im.iter().any(|v| *v != 0.0) {
                out.push(k, I, Profile::Tabulated { points: grid.points.clone(), values: im });
            }
        }
        out
    }

    /// `ω·∂_φ W`.
    pub fn phase_derivative(&self, omega: &[f64]) -> QPSymbol {
        let mut out = QPSymbol::new(self.n_freq, self.declared_order);
        for t in &self.terms {
            let f = C64::new(0.0, t.k.dot(omega));
            if f.im != 0.0 {
                out.push(t.k.clone(), t.amplitude * f, t.profile.clone());
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> QPSymbol {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.amplitude *= s;
        }
        out
    }

    pub fn sum(&self, other: &QPSymbol) -> QPSymbol {
        let mut out = self.clone();
        out.declared_order = self.declared_order.max(other.declared_order);
        out.terms.extend(other.terms.iter().cloned());
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolFailure {
    pub k: usize,
    pub x: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymbolClassReport {
    pub order: f64,
    pub halfwidth: f64,
    /// `C_k` at the base difference step.
    pub constants: Vec<f64>,
    /// `C_k` at half the step.
    pub refined_constants: Vec<f64>,
    /// Log-growth of `C_k` between the half and the full window.
    pub growth_exponents: Vec<f64>,
    pub pass: bool,
    pub failure: Option<SymbolFailure>,
}

const FD_STEP: f64 = 0.1;
const REFINE_TOL: f64 = 0.05;
const GROWTH_TOL: f64 = 0.25;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn nth_difference(f: impl Fn(f64) -> f64, x: f64, k: usize, h: f64) -> f64 {
    if k == 0 {
        return f(x);
    }
    let mut s = 0.0;
    for i in 0..=k {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        s += sign * binomial(k, i) * f(x + (k as f64 / 2.0 - i as f64) * h);
    }
    s / h.powi(k as i32)
}

fn sample_phases(n: usize) -> Vec<Vec<f64>> {
    let tau = 2.0 * std::f64::consts::PI;
    let primes = [2.0f64, 3.0, 5.0, 7.0, 11.0, 13.0];
    let mut out = vec![vec![0.0; n]];
    for i in 1..=24 {
        out.push(
            (0..n)
                .map(|d| {
                    // van der Corput in base primes[d]
                    let b = primes[d % primes.len()];
                    let (mut q, mut f, mut r) = (i as f64, 1.0 / b, 0.0);
                    while q > 0.0 {
                        r += f * (q % b);
                        q = (q / b).floor();
                        f /= b;
                    }
                    tau * r
                })
                .collect(),
        );
    }
    out
}

struct ClassScan {
    full: f64,
    half: f64,
    argmax: f64,
    finite: bool,
}

fn scan(w: &QPSymbol, m: f64, k: usize, grid: &Grid, h: f64, phases: &[Vec<f64>]) -> ClassScan {
    let half_w = grid.halfwidth / 2.0;
    let mut s = ClassScan {
        full: 0.0,
        half: 0.0,
        argmax: 0.0,
        finite: true,
    };
    for &x in &grid.points {
        let weight = japanese(x).powf(k as f64 - m);
        for phi in phases {
            let d = nth_difference(|y| w.eval(y, phi), x, k, h);
            let v = d.abs() * weight;
            if !v.is_finite() {
                s.finite = false;
                s.argmax = x;
                continue;
            }
            if v > s.full {
                s.full = v;
                s.argmax = x;
            }
            if x.abs() <= half_w && v > s.half {
                s.half = v;
            }
        }
    }
    s
}

/// Estimate `C_k = max |∂ₓᵏW| ⟨x⟩^{k−m}` over the grid and sample phases.
///
/// A constant passes when it is finite, stable when the difference step is
/// halved and does not keep growing between the half and the full window.
pub fn check_symbol_class(w: &QPSymbol, m: f64, k_max: usize, grid: &Grid) -> Result<SymbolClassReport> {
    if k_max > 6 {
        return Err(Error::InvalidDiscretization("k_max above 6 makes difference quotients unstable".into()));
    }
    let phases = sample_phases(w.n_freq);
    let mut report = SymbolClassReport {
        order: m,
        halfwidth: grid.halfwidth,
        constants: Vec::new(),
        refined_constants: Vec::new(),
        growth_exponents: Vec::new(),
        pass: true,
        failure: None,
    };
    let lever = (japanese(grid.halfwidth) / japanese(grid.halfwidth / 2.0)).ln();
    for k in 0..=k_max {
        let a = scan(w, m, k, grid, FD_STEP, &phases);
        let b = scan(w, m, k, grid, FD_STEP / 2.0, &phases);
        let growth = if b.half > 1e-300 && b.full > 1e-300 {
            (b.full / b.half).ln() / lever
        } else {
            0.0
        };
        report.constants.push(a.full);
        report.refined_constants.push(b.full);
        report.growth_exponents.push(growth);
        if report.failure.is_some() {
            continue;
        }
        let reason = if !a.finite || !b.finite {
            Some("non-finite derivative estimate".to_string())
        } else if (a.full - b.full).abs() > REFINE_TOL * b.full.max(1e-12) {
            Some(format!("estimate changes by more than {}% under step refinement", REFINE_TOL * 100.0))
        } else if growth > GROWTH_TOL {
            Some(format!("constant grows like <x>^{growth:.2} toward the grid edge"))
        } else {
            None
        };
        if let Some(reason) = reason {
            report.pass = false;
            report.failure = Some(SymbolFailure { k, x: b.argmax, reason });
        }
    }
    Ok(report)
}

/// Combined order `β = max(β₀, max(β₁ + 1, 0))`, rejected unless
/// `β < 2ℓ − 1` and `β₁ ≤ ℓ`.
pub fn check_hypotheses(ell: f64, beta0: f64, beta1: f64) -> Result<f64> {
    let beta = combined_order(beta0, beta1);
    if !(beta < 2.0 * ell - 1.0) {
        return Err(Error::Hypothesis(format!(
            "beta = max(beta0, [beta1 + 1]) = {beta} must be below 2*ell - 1 = {}",
            2.0 * ell - 1.0
        )));
    }
    if beta1 > ell {
        return Err(Error::Hypothesis(format!("beta1 = {beta1} exceeds ell = {ell}")));
    }
    Ok(beta)
}

pub fn combined_order(beta0: f64, beta1: f64) -> f64 {
    beta0.max((beta1 + 1.0).max(0.0))
}

fn ensure_real(w: &QPSymbol, basis: &EigenBasis) -> Result<()> {
    let d = w.reality_defect(&basis.grid.points);
    if d > 1e-12 {
        return Err(Error::InvariantViolation(format!(
            "symbol is not real: coefficient at -k differs from conj of k by {d:.3e}"
        )));
    }
    if basis.quadrature_defect > QUADRATURE_TOL {
        return Err(Error::QuadratureMismatch {
            defect: basis.quadrature_defect,
        });
    }
    Ok(())
}

fn canonical_modes(w: &QPSymbol) -> Vec<Mode> {
    let mut modes: Vec<Mode> = w.modes().into_iter().map(|k| if k.is_canonical() || k.is_zero() { k } else { k.neg() }).collect();
    modes.sort();
    modes.dedup();
    modes
}

/// `coeff(k)ᵢⱼ = ⟨vᵢ, Wₖ vⱼ⟩` by grid quadrature.
pub fn quantize_multiplication(w: &QPSymbol, basis: &EigenBasis) -> Result<QPOperator> {
    quantize_multiplication_in(w, basis, w.k_cutoff())
}

pub fn quantize_multiplication_in(w: &QPSymbol, basis: &EigenBasis, k_cutoff: usize) -> Result<QPOperator> {
    ensure_real(w, basis)?;
    if w.k_cutoff() > k_cutoff {
        return Err(Error::CutoffOverflow {
            required: w.k_cutoff(),
            allowed: k_cutoff,
        });
    }
    let mut op = QPOperator::zeros(w.n_freq, k_cutoff, basis.n_modes);
    for k in canonical_modes(w) {
        let vals = w.coefficient_on(&k, &basis.grid.points);
        let c = weighted_gram(basis.modes.view(), &vals);
        op.add_pair(&k, c.view())?;
    }
    Ok(op)
}

/// Symmetrized product `Op(ξ W₁) = (P W₁ + W₁ P)/2`, with both products
/// formed on the grid before projection.
pub fn quantize_magnetic(w1: &QPSymbol, basis: &EigenBasis) -> Result<QPOperator> {
    quantize_magnetic_in(w1, basis, w1.k_cutoff())
}

pub fn quantize_magnetic_in(w1: &QPSymbol, basis: &EigenBasis, k_cutoff: usize) -> Result<QPOperator> {
    ensure_real(w1, basis)?;
    let mut op = QPOperator::zeros(w1.n_freq, k_cutoff.max(w1.k_cutoff()), basis.n_modes);
    let n = basis.n_modes;
    for k in canonical_modes(w1) {
        let vals = w1.coefficient_on(&k, &basis.grid.points);
        let re: Vec<f64> = vals.iter().map(|z| z.re).collect();
        let im: Vec<f64> = vals.iter().map(|z| z.im).collect();
        let ar = crate::linalg::weighted_cross(basis.modes.view(), &re, basis.mode_derivatives.view());
        let ai = crate::linalg::weighted_cross(basis.modes.view(), &im, basis.mode_derivatives.view());
        let c = Array2::from_shape_fn((n, n), |(i, j)| {
            let a = C64::new(ar[[i, j]] - ar[[j, i]], ai[[i, j]] - ai[[j, i]]);
            a * C64::new(0.0, -0.5)
        });
        op.add_pair(&k, c.view())?;
    }
    Ok(op)
}

/// `H = diag(λ) − 2ε Op(ξW₁) + ε² W₁² + ε W₀` in the eigenbasis.
///
/// The box is widened to hold the support of `W₁²`, up to [`MAX_CUTOFF`].
pub fn assemble_hamiltonian(eps: f64, w0: &QPSymbol, w1: &QPSymbol, basis: &EigenBasis, k_cutoff: usize) -> Result<QPOperator> {
    let n_freq = w0.n_freq;
    if w1.n_freq != n_freq {
        return Err(Error::DimensionMismatch("W0 and W1 use different torus dimensions".into()));
    }
    let needed = w0.k_cutoff().max(2 * w1.k_cutoff());
    if needed > MAX_CUTOFF {
        return Err(Error::CutoffOverflow {
            required: needed,
            allowed: MAX_CUTOFF,
        });
    }
    let kc = k_cutoff.max(needed);
    let mut h = QPOperator::diagonal(&basis.eigenvalues, n_freq, kc);
    if eps == 0.0 {
        return Ok(h);
    }
    if !w0.is_zero() {
        h = h.add_scaled(C64::new(eps, 0.0), &quantize_multiplication_in(w0, basis, kc)?)?;
    }
    if !w1.is_zero() {
        h = h.add_scaled(C64::new(-2.0 * eps, 0.0), &quantize_magnetic_in(w1, basis, kc)?)?;
        let sq = w1.product(w1);
        h = h.add_scaled(C64::new(eps * eps, 0.0), &quantize_multiplication_in(&sq, basis, kc)?)?;
    }
    Ok(h)
}

/// Apply `(−i∂ₓ − εW₁)² + V + εW₀` at a fixed phase to grid columns `y`,
/// with `W₀`, `W₁` given by their values on the grid.
pub fn apply_grid_hamiltonian(basis: &EigenBasis, eps: f64, w0: &[f64], w1: &[f64], y: &CMat) -> CMat {
    let t = basis.kinetic_operator();
    let d = basis.derivative_operator();
    let mut out = t.apply(y.view());
    let g = y.nrows();
    let mut wy = y.clone();
    for i in 0..g {
        let f = w1[i];
        wy.row_mut(i).mapv_inplace(|z| z * f);
    }
    let dwy = d.apply(wy.view());
    let dy = d.apply(y.view());
    for i in 0..g {
        let diag = eps * eps * w1[i] * w1[i] + basis.potential[i] + eps * w0[i];
        for c in 0..y.ncols() {
            out[[i, c]] += I * eps * (dwy[[i, c]] + w1[i] * dy[[i, c]]) + y[[i, c]] * diag;
        }
    }
    out
}

/// Grid samples of the symbol's coefficients, keyed by mode.
pub fn grid_coefficients(w: &QPSymbol, grid: &Grid) -> BTreeMap<Mode, Vec<C64>> {
    w.modes().into_iter().map(|k| {
        let v = w.coefficient_on(&k, &grid.points);
        (k, v)
    }).collect()
}
