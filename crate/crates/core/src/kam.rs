//! Matrix-level reducibility iteration.
//!
//! Each step solves the homological equation for the current perturbation
//! `P` of `Λ = diag(λ)`, conjugates by `U = e^{−iX}` and keeps the remainder.
//! With `Z` the unsolved part of `P` (resonant diagonal plus skipped
//! entries), the conjugated family is `Λ + Z + R` with
//! `R = Σ_{m≥1} iᵐ/(m+1)! ad_Xᵐ(Z + mP)`, evaluated pointwise in the
//! eigenbasis of `X(φ)` so that nothing cancels against `Λ`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::conjugation::QPUnitary;
use crate::diophantine::melnikov_bound;
use crate::linalg::{adjoint, eigh_hermitian, eigvalsh, CMat, I};
use crate::phase::PhaseGrid;
use crate::qp::{Mode, QPOperator};
use crate::stats::{least_squares, linear_fit};
use crate::{Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeElimination {
    /// Diagonal time dependence is removed inside every step.
    PerStep,
    /// Diagonal time dependence is carried along and removed once at the end.
    Final,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KamParams {
    pub gamma: f64,
    pub tau: f64,
    /// Growth exponent `d` of the eigenvalue gaps used in the divisor floor.
    pub d_exponent: f64,
    pub tol_final: f64,
    pub max_steps: usize,
    /// Fourier box of every intermediate family.
    pub k_cutoff: usize,
    /// Phase samples per dimension; defaults to `max(4K, 2K+1)`.
    pub phase_points: Option<usize>,
    /// Exponent `p` of the residual norm `Σ‖Pₖ‖(1+|k|)^p`; defaults to `τ + 1`.
    pub norm_power: Option<f64>,
    pub time_elimination: TimeElimination,
    /// Entries below `skip_factor · tol_final / (N · #boxes)` are left unsolved.
    pub skip_factor: f64,
    /// Phases at which each step's conjugation is checked; zero disables it.
    pub spectrum_checks: usize,
}

impl Default for KamParams {
    fn default() -> Self {
        KamParams {
            gamma: 1e-3,
            tau: 2.0,
            d_exponent: 1.0,
            tol_final: 1e-10,
            max_steps: 12,
            k_cutoff: 5,
            phase_points: None,
            norm_power: None,
            time_elimination: TimeElimination::PerStep,
            skip_factor: 1e-3,
            spectrum_checks: 5,
        }
    }
}

impl KamParams {
    pub fn norm_power(&self) -> f64 {
        self.norm_power.unwrap_or(self.tau + 1.0)
    }

    fn phase_grid(&self, n_freq: usize) -> PhaseGrid {
        match self.phase_points {
            Some(m) => PhaseGrid::new(n_freq, m.max(2 * self.k_cutoff + 1)),
            None => PhaseGrid::for_cutoff(n_freq, self.k_cutoff),
        }
    }

    /// `γ/2 · (1 + |iᵈ − jᵈ|)/(1 + |k|^τ)`.
    pub fn divisor_floor(&self, i: usize, j: usize, k: &Mode) -> f64 {
        0.5 * melnikov_bound(self.gamma, self.tau, self.d_exponent, i, j, k)
    }

    /// Per-entry threshold, scaled so that the skipped entries together stay
    /// well below `tol_final`.
    pub fn skip_below(&self, dim: usize, n_boxes: usize) -> f64 {
        self.skip_factor * self.tol_final / (dim * n_boxes) as f64
    }
}

#[derive(Clone, Debug)]
pub struct KAMState {
    pub step_index: usize,
    pub diag_part: Vec<f64>,
    /// Perturbation with zero diagonal at `k = 0`.
    pub pert: QPOperator,
    pub accum_unitary: QPUnitary,
    pub eps_history: Vec<f64>,
}

impl KAMState {
    pub fn from_operator(h: &QPOperator, params: &KamParams) -> Result<Self> {
        let (h, _) = h.with_cutoff(params.k_cutoff);
        let z = h.zero_index();
        let diag: Vec<f64> = (0..h.dim).map(|i| h.coeffs[[z, i, i]].re).collect();
        let mut pert = h;
        for i in 0..pert.dim {
            pert.coeffs[[z, i, i]] = C64::new(0.0, 0.0);
        }
        pert.symmetrize();
        let eps = residual_norm(&pert, params);
        Ok(KAMState {
            step_index: 0,
            accum_unitary: QPUnitary::identity(pert.dim, pert.n_freq),
            diag_part: diag,
            pert,
            eps_history: vec![eps],
        })
    }

    pub fn eps(&self) -> f64 {
        *self.eps_history.last().expect("history starts non-empty")
    }

    /// `diag(λ) + P` as a family.
    pub fn hamiltonian(&self) -> QPOperator {
        let mut h = self.pert.clone();
        let z = h.zero_index();
        for (i, l) in self.diag_part.iter().enumerate() {
            h.coeffs[[z, i, i]] += C64::new(*l, 0.0);
        }
        h
    }
}

/// Norm that drives convergence; in `Final` mode the diagonal time
/// dependence is excluded because it is removed only at the end.
fn residual_norm(pert: &QPOperator, params: &KamParams) -> f64 {
    match params.time_elimination {
        TimeElimination::PerStep => pert.weighted_norm(params.norm_power()),
        TimeElimination::Final => {
            let mut p = pert.clone();
            for b in 0..p.n_boxes() {
                for i in 0..p.dim {
                    p.coeffs[[b, i, i]] = C64::new(0.0, 0.0);
                }
            }
            p.weighted_norm(params.norm_power())
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub eps: f64,
    /// `log εₙ₊₁ / log εₙ`.
    pub theta: Option<f64>,
    pub min_divisor: f64,
    /// `min (|divisor| − floor)` over solved entries.
    pub min_margin: f64,
    /// `max_j |λⱼ⁽ⁿ⁺¹⁾ − λⱼ⁽ⁿ⁾|`.
    pub max_shift: f64,
    pub tail: f64,
    pub generator_norm: f64,
    pub hermitian_defect: f64,
    /// Largest eigenvalue mismatch between `U†HU` and `H` at sample phases.
    pub spectrum_defect: f64,
    pub skipped: usize,
}

#[derive(Clone, Debug)]
pub struct Homological {
    pub x: QPOperator,
    /// Entries left in place: resonant diagonal and skipped tiny entries.
    pub z: QPOperator,
    pub min_divisor: f64,
    pub min_margin: f64,
    pub skipped: usize,
}

/// Solve `i(ω·k + λᵢ − λⱼ) X_{ij,k} = P_{ij,k}` outside the resonant set.
///
/// With `include_diagonal = false` the entries `i = j, k ≠ 0` go to `Z`.
pub fn homological_split(
    diag: &[f64],
    pert: &QPOperator,
    omega: &[f64],
    params: &KamParams,
    include_diagonal: bool,
) -> Result<Homological> {
    let n = pert.dim;
    let mut x = QPOperator::zeros(pert.n_freq, pert.k_cutoff, n);
    let mut z = QPOperator::zeros(pert.n_freq, pert.k_cutoff, n);
    let mut min_divisor = f64::INFINITY;
    let mut min_margin = f64::INFINITY;
    let mut skipped = 0;
    let skip = params.skip_below(n, pert.n_boxes());
    for b in 0..pert.n_boxes() {
        let k = pert.mode_at(b);
        let wk = k.dot(omega);
        for i in 0..n {
            for j in 0..n {
                let p = pert.coeffs[[b, i, j]];
                if p == C64::new(0.0, 0.0) {
                    continue;
                }
                let resonant = i == j && (k.is_zero() || !include_diagonal);
                if resonant {
                    z.coeffs[[b, i, j]] = p;
                    continue;
                }
                if p.norm() <= skip {
                    z.coeffs[[b, i, j]] = p;
                    skipped += 1;
                    continue;
                }
                let div = wk + diag[i] - diag[j];
                let floor = params.divisor_floor(i, j, &k);
                if div.abs() < floor {
                    return Err(Error::SmallDivisor {
                        i,
                        j,
                        k,
                        divisor: div.abs(),
                        floor,
                    });
                }
                min_divisor = min_divisor.min(div.abs());
                min_margin = min_margin.min(div.abs() - floor);
                x.coeffs[[b, i, j]] = p / (I * div);
            }
        }
    }
    Ok(Homological {
        x,
        z,
        min_divisor,
        min_margin,
        skipped,
    })
}

/// `X_{ij,k} = P_{ij,k} / (i(ω·k + λᵢ − λⱼ))`, zero on `{k = 0, i = j}`.
pub fn homological_solve(diag: &[f64], pert: &QPOperator, omega: &[f64], params: &KamParams) -> Result<QPOperator> {
    Ok(homological_split(diag, pert, omega, params, true)?.x)
}

/// `(e^{iδ} − 1)/(iδ) − 1`
fn g1(d: f64) -> C64 {
    let z = I * d;
    if d.abs() < 0.5 {
        let mut term = C64::new(1.0, 0.0);
        let mut sum = C64::new(0.0, 0.0);
        for m in 1..30 {
            term = term * z / (m as f64 + 1.0);
            sum += term;
        }
        sum
    } else {
        (z.exp() - 1.0) / z - 1.0
    }
}

/// `e^{iδ} − (e^{iδ} − 1)/(iδ)`
fn g2(d: f64) -> C64 {
    let z = I * d;
    if d.abs() < 0.5 {
        let mut term = C64::new(1.0, 0.0);
        let mut sum = C64::new(0.0, 0.0);
        for m in 1..30 {
            term = term * z / (m as f64 + 1.0);
            sum += term * m as f64;
        }
        sum
    } else {
        z.exp() - (z.exp() - 1.0) / z
    }
}

/// Remainder `R(φ)` at one phase point.
fn remainder_at(x: &CMat, z: &CMat, p: &CMat) -> Result<CMat> {
    let (d, q) = eigh_hermitian(x.view())?;
    let qh = adjoint(q.view());
    let zt = qh.dot(z).dot(&q);
    let pt = qh.dot(p).dot(&q);
    let n = d.len();
    let inner = Array2::from_shape_fn((n, n), |(a, b)| {
        let delta = d[a] - d[b];
        g1(delta) * zt[[a, b]] + g2(delta) * pt[[a, b]]
    });
    Ok(q.dot(&inner).dot(&qh))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagonalTimeSeries {
    pub n_freq: usize,
    pub k_cutoff: usize,
    /// Unperturbed levels the series is attached to.
    pub base: Vec<f64>,
    /// `μ_{j,k}` as an `N × boxes` array in the box order of [`QPOperator`].
    pub mu: Array2<C64>,
}

impl DiagonalTimeSeries {
    pub fn from_operator(op: &QPOperator, base: &[f64]) -> Self {
        DiagonalTimeSeries {
            n_freq: op.n_freq,
            k_cutoff: op.k_cutoff,
            base: base.to_vec(),
            mu: op.diagonal_series(),
        }
    }

    /// Diagonal of `H − diag(base)` for a family `H`.
    pub fn from_hamiltonian(h: &QPOperator, base: &[f64]) -> Self {
        let mut s = Self::from_operator(h, base);
        let z = (s.mu.ncols() - 1) / 2;
        for (j, b) in base.iter().enumerate() {
            s.mu[[j, z]] -= C64::new(*b, 0.0);
        }
        s
    }

    pub fn n_modes(&self) -> usize {
        self.mu.nrows()
    }

    fn layout(&self) -> QPOperator {
        QPOperator::zeros(self.n_freq, self.k_cutoff, 1)
    }

    pub fn mode(&self, b: usize) -> Mode {
        self.layout().mode_at(b)
    }

    /// `μⱼ(φ)`.
    pub fn eval(&self, j: usize, phi: &[f64]) -> C64 {
        let lay = self.layout();
        (0..self.mu.ncols())
            .map(|b| self.mu[[j, b]] * C64::from_polar(1.0, lay.mode_at(b).phase(phi)))
            .sum()
    }

    /// As a diagonal family.
    pub fn to_operator(&self) -> QPOperator {
        let n = self.n_modes();
        let mut op = QPOperator::zeros(self.n_freq, self.k_cutoff, n);
        for b in 0..self.mu.ncols() {
            for j in 0..n {
                op.coeffs[[b, j, j]] = self.mu[[j, b]];
            }
        }
        op
    }
}

#[derive(Clone, Debug)]
pub struct TimeEliminationResult {
    /// `cⱼ(φ) = Σ_{k≠0} μ_{j,k}/(iω·k) e^{ik·φ}`.
    pub c: DiagonalTimeSeries,
    /// `λⱼ⁽⁰⁾ = base_j + μ_{j,0}`.
    pub lambda0: Vec<f64>,
    /// `ψⱼ ↦ e^{−icⱼ(φ)} ψⱼ`.
    pub unitary: QPUnitary,
    pub min_divisor: f64,
}

/// Remove the time dependence of a diagonal family by a diagonal phase.
/// Coefficients with `|μ| ≤ skip_below` are left in place.
pub fn eliminate_diagonal_time(
    mu: &DiagonalTimeSeries,
    omega: &[f64],
    gamma: f64,
    tau: f64,
    skip_below: f64,
) -> Result<TimeEliminationResult> {
    let n = mu.n_modes();
    let lay = mu.layout();
    let zb = lay.zero_index();
    let mut c = DiagonalTimeSeries {
        n_freq: mu.n_freq,
        k_cutoff: mu.k_cutoff,
        base: vec![0.0; n],
        mu: Array2::zeros(mu.mu.raw_dim()),
    };
    let mut min_divisor = f64::INFINITY;
    for b in 0..mu.mu.ncols() {
        if b == zb {
            continue;
        }
        let k = lay.mode_at(b);
        let wk = k.dot(omega);
        let floor = 0.5 * gamma / (1.0 + (k.l1() as f64).powf(tau));
        for j in 0..n {
            let m = mu.mu[[j, b]];
            if m.norm() <= skip_below {
                continue;
            }
            if wk.abs() < floor {
                return Err(Error::SmallDivisor {
                    i: j,
                    j,
                    k,
                    divisor: wk.abs(),
                    floor,
                });
            }
            min_divisor = min_divisor.min(wk.abs());
            c.mu[[j, b]] = m / (I * wk);
        }
    }
    let lambda0 = (0..n).map(|j| mu.base.get(j).copied().unwrap_or(0.0) + mu.mu[[j, zb]].re).collect();
    let unitary = QPUnitary::Exponential {
        generator: c.to_operator().scale(C64::new(-1.0, 0.0)),
    };
    Ok(TimeEliminationResult {
        c,
        lambda0,
        unitary,
        min_divisor,
    })
}

/// `max |iω·∂_φ cⱼ − (μⱼ − ⟨μⱼ⟩)|` on a phase grid.
pub fn time_elimination_residual(mu: &DiagonalTimeSeries, c: &DiagonalTimeSeries, omega: &[f64], grid: &PhaseGrid) -> Result<f64> {
    let mut centered = mu.to_operator();
    let z = centered.zero_index();
    centered.coeff_at_mut(z).fill(C64::new(0.0, 0.0));
    let dc = c.to_operator().phase_derivative(omega);
    let a = grid.synthesize(&dc)?;
    let b = grid.synthesize(&centered)?;
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| crate::linalg::max_abs((x - y).view()))
        .fold(0.0, f64::max))
}

/// One reducibility step.
pub fn kam_step(state: &KAMState, omega: &[f64], params: &KamParams) -> Result<(KAMState, StepRecord)> {
    let pert = &state.pert;
    let n = pert.dim;
    let per_step = params.time_elimination == TimeElimination::PerStep;
    let mut hom = homological_split(&state.diag_part, pert, omega, params, false)?;
    let mut min_divisor = hom.min_divisor;
    if per_step {
        let mu = DiagonalTimeSeries::from_operator(&hom.z, &[]);
        let mut mu_t = mu.clone();
        let zb = hom.z.zero_index();
        mu_t.mu.column_mut(zb).fill(C64::new(0.0, 0.0));
        let elim = eliminate_diagonal_time(&mu_t, omega, params.gamma, params.tau, params.skip_below(n, pert.n_boxes()))?;
        for b in 0..hom.x.n_boxes() {
            if b == zb {
                continue;
            }
            for j in 0..n {
                let cj = elim.c.mu[[j, b]];
                if cj != C64::new(0.0, 0.0) {
                    hom.x.coeffs[[b, j, j]] = cj;
                    hom.z.coeffs[[b, j, j]] = C64::new(0.0, 0.0);
                }
            }
        }
        min_divisor = min_divisor.min(elim.min_divisor);
    }
    let x = hom.x;
    let z = hom.z;

    let grid = params.phase_grid(pert.n_freq);
    let samples = grid.map_pointwise(&[&x, &z, pert], |_, at| remainder_at(&at[0], &at[1], &at[2]))?;
    let (r, tail) = grid.analyze(&samples, params.k_cutoff)?;

    let mut new_pert = z.add_scaled(C64::new(1.0, 0.0), &r)?;
    new_pert.symmetrize();
    let zb = new_pert.zero_index();
    let mut new_diag = state.diag_part.clone();
    let mut max_shift: f64 = 0.0;
    for j in 0..n {
        let shift = new_pert.coeffs[[zb, j, j]].re;
        new_diag[j] += shift;
        max_shift = max_shift.max(shift.abs());
        new_pert.coeffs[[zb, j, j]] = C64::new(0.0, 0.0);
    }
    let eps_prev = state.eps();
    let eps = residual_norm(&new_pert, params);
    let theta = if eps_prev < 1.0 && eps_prev > 0.0 && eps > 0.0 {
        Some(eps.ln() / eps_prev.ln())
    } else {
        None
    };
    let step_unitary = QPUnitary::Exponential {
        generator: x.scale(C64::new(-1.0, 0.0)),
    };

    let mut next_state = KAMState {
        step_index: state.step_index + 1,
        diag_part: new_diag,
        pert: new_pert,
        accum_unitary: QPUnitary::identity(n, pert.n_freq),
        eps_history: state.eps_history.clone(),
    };
    next_state.eps_history.push(eps);
    let spectrum_defect = if params.spectrum_checks > 0 {
        spectrum_check(&state.hamiltonian(), &next_state.hamiltonian(), &step_unitary, omega, params.spectrum_checks)?
    } else {
        0.0
    };
    next_state.accum_unitary = compose(&state.accum_unitary, step_unitary);
    let record = StepRecord {
        step: next_state.step_index,
        eps,
        theta,
        min_divisor,
        min_margin: hom.min_margin,
        max_shift,
        tail,
        generator_norm: x.weighted_norm(0.0),
        hermitian_defect: x.hermitian_defect().max(next_state.pert.hermitian_defect()),
        spectrum_defect,
        skipped: hom.skipped,
    };
    Ok((next_state, record))
}

fn compose(acc: &QPUnitary, next: QPUnitary) -> QPUnitary {
    match acc {
        QPUnitary::Identity { .. } => next,
        QPUnitary::Product(f) => {
            let mut f = f.clone();
            f.push(next);
            QPUnitary::Product(f)
        }
        other => QPUnitary::Product(vec![other.clone(), next]),
    }
}

/// Eigenvalues of `U†HU = H₊ + iU†(ω·∂U)` against those of `H` at a few phases.
fn spectrum_check(h: &QPOperator, h_plus: &QPOperator, u: &QPUnitary, omega: &[f64], count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for s in 0..count {
        let phi: Vec<f64> = (0..h.n_freq)
            .map(|d| 2.0 * std::f64::consts::PI * (((s + 1) as f64) * (0.618_033_988_75 + 0.137 * d as f64)).fract())
            .collect();
        let (uu, du) = u.eval_with_derivative(&phi, omega)?;
        let rec = h_plus.eval(&phi) + adjoint(uu.view()).dot(&du).mapv(|z| z * I);
        let a = eigvalsh(rec.view())?;
        let b = eigvalsh(h.eval(&phi).view())?;
        for (x, y) in a.iter().zip(b.iter()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct KamOutcome {
    pub lambda_inf: Vec<f64>,
    pub unitary: QPUnitary,
    pub records: Vec<StepRecord>,
    pub states: Vec<KAMState>,
    /// `‖H₊ − diag(λ^∞)‖` in the weighted norm.
    pub final_residual: f64,
    pub converged: bool,
}

impl KamOutcome {
    pub fn eps_history(&self) -> Vec<f64> {
        self.states.last().map(|s| s.eps_history.clone()).unwrap_or_default()
    }

    pub fn final_state(&self) -> &KAMState {
        self.states.last().expect("at least the initial state")
    }
}

/// Iterate until the residual drops below `tol_final`.
pub fn kam_iterate(h1: &QPOperator, omega: &[f64], params: &KamParams) -> Result<KamOutcome> {
    if omega.len() != h1.n_freq {
        return Err(Error::DimensionMismatch("frequency vector and family disagree".into()));
    }
    let mut state = KAMState::from_operator(h1, params)?;
    let mut states = vec![state.clone()];
    let mut records: Vec<StepRecord> = Vec::new();
    let fail = |step: usize, reason: String, records: &[StepRecord]| Error::KamFailure {
        step,
        reason,
        trace: records.to_vec(),
    };
    while state.eps() >= params.tol_final {
        if state.step_index >= params.max_steps {
            return Err(fail(
                state.step_index,
                format!("no convergence after {} steps (eps = {:.3e})", params.max_steps, state.eps()),
                &records,
            ));
        }
        let (next, rec) = match kam_step(&state, omega, params) {
            Ok(v) => v,
            Err(e) => return Err(fail(state.step_index + 1, e.to_string(), &records)),
        };
        let diverged = rec.eps >= state.eps();
        records.push(rec);
        if diverged {
            return Err(fail(
                next.step_index,
                format!("residual grew from {:.3e} to {:.3e}", state.eps(), next.eps()),
                &records,
            ));
        }
        state = next;
        states.push(state.clone());
    }
    if params.time_elimination == TimeElimination::Final && state.step_index > 0 {
        state = final_time_elimination(&state, omega, params)?;
        states.push(state.clone());
    }
    let final_residual = state.pert.weighted_norm(params.norm_power());
    Ok(KamOutcome {
        lambda_inf: state.diag_part.clone(),
        unitary: state.accum_unitary.clone(),
        records,
        states,
        final_residual,
        converged: true,
    })
}

fn final_time_elimination(state: &KAMState, omega: &[f64], params: &KamParams) -> Result<KAMState> {
    let mut mu = DiagonalTimeSeries::from_operator(&state.pert, &state.diag_part);
    let zb = state.pert.zero_index();
    mu.mu.column_mut(zb).fill(C64::new(0.0, 0.0));
    let elim = eliminate_diagonal_time(&mu, omega, params.gamma, params.tau, params.skip_below(state.pert.dim, state.pert.n_boxes()))?;
    let opts = crate::conjugation::ConjugationOptions {
        out_cutoff: Some(params.k_cutoff),
        tol_tail: f64::INFINITY,
        ..Default::default()
    };
    let h = crate::conjugation::conjugate(&state.hamiltonian(), &elim.unitary, omega, &opts)?.operator;
    let mut next = KAMState::from_operator(&h, params)?;
    next.step_index = state.step_index + 1;
    next.accum_unitary = compose(&state.accum_unitary, elim.unitary);
    let mut hist = state.eps_history.clone();
    hist.push(next.pert.weighted_norm(params.norm_power()));
    next.eps_history = hist;
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitBasis {
    /// `1, u, …, u^degree`.
    Polynomial { degree: usize },
    /// `u^{β−2m}`, `m = 0..terms`, the shape of an orbit average of `⟨x⟩^β`.
    Classical { beta: f64, terms: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeFit {
    pub k: Mode,
    pub coefficients_re: Vec<f64>,
    pub coefficients_im: Vec<f64>,
    /// `|μ_{j,k} − fit(λⱼ)|` over the window.
    pub residuals: Vec<f64>,
    /// `−slope` of `log δⱼ` against `log j`.
    pub decay_exponent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessFit {
    pub basis: FitBasis,
    pub ell: f64,
    pub window: (usize, usize),
    pub modes: Vec<ModeFit>,
}

fn basis_row(basis: &FitBasis, u: f64) -> Vec<f64> {
    match basis {
        FitBasis::Polynomial { degree } => (0..=*degree).map(|p| u.powi(p as i32)).collect(),
        FitBasis::Classical { beta, terms } => (0..*terms).map(|m| u.powf(beta - 2.0 * m as f64)).collect(),
    }
}

impl SmoothnessFit {
    /// Fitted `⟨z⟩(E)` for mode `k` (real and imaginary parts).
    pub fn value_at(&self, k: &Mode, energy: f64) -> Option<C64> {
        let m = self.modes.iter().find(|m| &m.k == k)?;
        let row = basis_row(&self.basis, energy.powf(1.0 / (2.0 * self.ell)));
        let re: f64 = row.iter().zip(&m.coefficients_re).map(|(a, b)| a * b).sum();
        let im: f64 = row.iter().zip(&m.coefficients_im).map(|(a, b)| a * b).sum();
        Some(C64::new(re, im))
    }
}

/// Least-squares fit of `μ_{j,k}` as a smooth function of
/// `u = λⱼ^{1/(2ℓ)}` over `window = (j_min, j_max)`, per Fourier mode.
pub fn fit_diagonal_smoothness(
    mu: &DiagonalTimeSeries,
    lambdas: &[f64],
    ell: f64,
    basis: &FitBasis,
    window: (usize, usize),
) -> Result<SmoothnessFit> {
    let (lo, hi) = window;
    let hi = hi.min(lambdas.len().saturating_sub(1));
    let count = if hi >= lo { hi - lo + 1 } else { 0 };
    if count < 12 {
        return Err(Error::TooFewPoints { needed: 12, got: count });
    }
    let us: Vec<f64> = (lo..=hi).map(|j| lambdas[j].powf(1.0 / (2.0 * ell))).collect();
    let rows: Vec<Vec<f64>> = us.iter().map(|u| basis_row(basis, *u)).collect();
    let p = rows[0].len();
    let a = Array2::from_shape_fn((count, p), |(r, c)| rows[r][c]);
    let lay = QPOperator::zeros(mu.n_freq, mu.k_cutoff, 1);
    let mut modes = Vec::new();
    for b in 0..mu.mu.ncols() {
        let k = lay.mode_at(b);
        if !(k.is_zero() || k.is_canonical()) {
            continue;
        }
        let vals: Vec<C64> = (lo..=hi).map(|j| mu.mu[[j, b]]).collect();
        if vals.iter().all(|v| v.norm() == 0.0) {
            continue;
        }
        let re: Vec<f64> = vals.iter().map(|v| v.re).collect();
        let im: Vec<f64> = vals.iter().map(|v| v.im).collect();
        let cre = least_squares(&a, &re)?;
        let cim = least_squares(&a, &im)?;
        let fit_re: Array1<f64> = a.dot(&cre);
        let fit_im: Array1<f64> = a.dot(&cim);
        let residuals: Vec<f64> = (0..count)
            .map(|r| C64::new(re[r] - fit_re[r], im[r] - fit_im[r]).norm())
            .collect();
        let pts: Vec<(f64, f64)> = (0..count)
            .filter(|&r| residuals[r] > 0.0 && lo + r > 0)
            .map(|r| (((lo + r) as f64).ln(), residuals[r].ln()))
            .collect();
        let decay_exponent = if pts.len() >= 2 {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            -linear_fit(&x, &y)?.slope
        } else {
            f64::INFINITY
        };
        modes.push(ModeFit {
            k,
            coefficients_re: cre.to_vec(),
            coefficients_im: cim.to_vec(),
            residuals,
            decay_exponent,
        });
    }
    Ok(SmoothnessFit {
        basis: basis.clone(),
        ell,
        window: (lo, hi),
        modes,
    })
}
