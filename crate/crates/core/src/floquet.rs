//! Direct simulation of `iψ̇ = H(ωt)ψ` in the truncated eigenbasis.

use std::f64::consts::PI;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::conjugation::QPUnitary;
use crate::linalg::{adjoint, eigvalsh, hermitian_function, propagator, unitarity_defect, CMat};
use crate::qp::QPOperator;
use crate::spectral_basis::SobolevWeights;
use crate::stats::{linear_fit, LineFit};
use crate::{Error, Result, C64};

pub const NORM_DRIFT_TOL: f64 = 1e-8;
pub const TAIL_POPULATION_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// `exp(−i dt H(t + dt/2))`.
    #[default]
    Midpoint,
    /// Fourth-order commutator-free Magnus step on two Gauss points.
    Magnus4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagateOptions {
    pub integrator: Integrator,
    /// Step size; derived from `dt_safety / λ_max` when absent.
    pub dt: Option<f64>,
    pub dt_safety: f64,
    /// Number of stored states besides the initial one.
    pub stored_samples: usize,
    /// Fraction of top modes watched for leakage.
    pub tail_fraction: f64,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            integrator: Integrator::Midpoint,
            dt: None,
            dt_safety: 0.5,
            stored_samples: 2000,
            tail_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Array1<C64>>,
    pub dt_used: f64,
    pub steps: usize,
    pub norm_drift: f64,
    pub max_tail_population: f64,
    /// Leakage into the top modes exceeded the tolerance.
    pub flagged: bool,
}

/// Largest `|eigenvalue|` of `H` over a few phases.
fn spectral_radius(h: &QPOperator) -> Result<f64> {
    let mut r: f64 = 0.0;
    for s in 0..4 {
        let phi = vec![0.5 * PI * s as f64; h.n_freq];
        let e = eigvalsh(h.eval(&phi).view())?;
        r = r.max(e.iter().fold(0.0, |m: f64, v| m.max(v.abs())));
    }
    Ok(r)
}

/// Evaluates `H(ωt)` over the nonzero coefficients only.
struct Sampler<'a> {
    h: &'a QPOperator,
    omega: &'a [f64],
    support: Vec<usize>,
}

impl<'a> Sampler<'a> {
    fn new(h: &'a QPOperator, omega: &'a [f64]) -> Self {
        Sampler {
            h,
            omega,
            support: h.support(),
        }
    }

    fn at(&self, t: f64) -> CMat {
        let mut out = Array2::zeros((self.h.dim, self.h.dim));
        for &b in &self.support {
            let k = self.h.mode_at(b);
            let ph = C64::from_polar(1.0, t * k.dot(self.omega));
            out.scaled_add(ph, &self.h.coeff_at(b));
        }
        out
    }
}

const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // √3/6

fn step_propagator(s: &Sampler, t: f64, dt: f64, integrator: Integrator) -> Result<CMat> {
    match integrator {
        Integrator::Midpoint => propagator(s.at(t + 0.5 * dt).view(), dt),
        Integrator::Magnus4 => {
            let h1 = s.at(t + (0.5 - GAUSS_OFFSET) * dt);
            let h2 = s.at(t + (0.5 + GAUSS_OFFSET) * dt);
            let (a1, a2) = magnus_weights();
            let first = &h1 * C64::new(a2, 0.0) + &h2 * C64::new(a1, 0.0);
            let second = &h1 * C64::new(a1, 0.0) + &h2 * C64::new(a2, 0.0);
            let u1 = propagator(first.view(), dt)?;
            let u2 = propagator(second.view(), dt)?;
            Ok(u2.dot(&u1))
        }
    }
}

/// `exp(−i dt A) ψ` by a Taylor series summed to machine precision;
/// `‖dt A‖` is kept small by the step-size rule.
fn exp_apply(a: &CMat, dt: f64, psi: &Array1<C64>) -> Array1<C64> {
    let scale = psi.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut term = psi.clone();
    let mut out = psi.clone();
    for m in 1..60 {
        term = a.dot(&term).mapv(|z| z * C64::new(0.0, -dt / m as f64));
        out += &term;
        if term.iter().map(|c| c.norm()).fold(0.0, f64::max) <= 1e-17 * scale {
            break;
        }
    }
    out
}

fn step_state(s: &Sampler, t: f64, dt: f64, integrator: Integrator, psi: &Array1<C64>) -> Array1<C64> {
    match integrator {
        Integrator::Midpoint => exp_apply(&s.at(t + 0.5 * dt), dt, psi),
        Integrator::Magnus4 => {
            let h1 = s.at(t + (0.5 - GAUSS_OFFSET) * dt);
            let h2 = s.at(t + (0.5 + GAUSS_OFFSET) * dt);
            let (a1, a2) = magnus_weights();
            let first = &h1 * C64::new(a2, 0.0) + &h2 * C64::new(a1, 0.0);
            let second = &h1 * C64::new(a1, 0.0) + &h2 * C64::new(a2, 0.0);
            exp_apply(&second, dt, &exp_apply(&first, dt, psi))
        }
    }
}

fn magnus_weights() -> (f64, f64) {
    let r = 3f64.sqrt();
    ((3.0 - 2.0 * r) / 12.0, (3.0 + 2.0 * r) / 12.0)
}

fn tail_population(psi: &Array1<C64>, from: usize) -> f64 {
    psi.iter().skip(from).map(|c| c.norm_sqr()).sum()
}

fn run(h: &QPOperator, omega: &[f64], psi0: &Array1<C64>, t_end: f64, dt: f64, opts: &PropagateOptions) -> Result<Trajectory> {
    let steps = ((t_end / dt).ceil() as usize).max(1);
    let dt = t_end / steps as f64;
    let stride = (steps / opts.stored_samples.max(1)).max(1);
    let sampler = Sampler::new(h, omega);
    let n0 = psi0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let tail_from = h.dim - ((h.dim as f64 * opts.tail_fraction).ceil() as usize).min(h.dim);
    let mut psi = psi0.clone();
    let mut times = vec![0.0];
    let mut states = vec![psi.clone()];
    let mut drift: f64 = 0.0;
    let mut tail = tail_population(&psi, tail_from);
    for m in 0..steps {
        let t = m as f64 * dt;
        psi = step_state(&sampler, t, dt, opts.integrator, &psi);
        let norm = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        drift = drift.max((norm - n0).abs());
        tail = tail.max(tail_population(&psi, tail_from));
        if (m + 1) % stride == 0 || m + 1 == steps {
            times.push((m + 1) as f64 * dt);
            states.push(psi.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        dt_used: dt,
        steps,
        norm_drift: drift,
        max_tail_population: tail,
        flagged: tail > TAIL_POPULATION_TOL,
    })
}

/// Integrate from `t = 0` to `t_end`. A run whose norm drifts by more than
/// `NORM_DRIFT_TOL` is repeated once with half the step.
pub fn propagate(h: &QPOperator, omega: &[f64], psi0: &Array1<C64>, t_end: f64, opts: &PropagateOptions) -> Result<Trajectory> {
    if psi0.len() != h.dim || omega.len() != h.n_freq {
        return Err(Error::DimensionMismatch("state, family and frequency disagree".into()));
    }
    if !(t_end > 0.0) {
        return Err(Error::InvalidDiscretization("final time must be positive".into()));
    }
    let lmax = spectral_radius(h)?;
    let dt = match opts.dt {
        Some(dt) => {
            if dt * lmax > opts.dt_safety {
                return Err(Error::InvalidDiscretization(format!(
                    "step {dt} does not resolve the spectrum (dt·λ_max = {:.3})",
                    dt * lmax
                )));
            }
            dt
        }
        None => opts.dt_safety / lmax.max(1.0),
    };
    let traj = run(h, omega, psi0, t_end, dt, opts)?;
    if traj.norm_drift <= NORM_DRIFT_TOL {
        return Ok(traj);
    }
    let retry = run(h, omega, psi0, t_end, 0.5 * dt, opts)?;
    if retry.norm_drift <= NORM_DRIFT_TOL {
        Ok(retry)
    } else {
        Err(Error::NormDrift {
            drift: retry.norm_drift,
            tol: NORM_DRIFT_TOL,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormSeries {
    pub s: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: LineFit,
}

impl NormSeries {
    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    /// `slope · t_end`.
    pub fn trend(&self) -> f64 {
        self.fit.slope * self.times.last().copied().unwrap_or(0.0)
    }

    pub fn relative_trend(&self) -> f64 {
        self.trend() / self.initial()
    }

    pub fn max_ratio(&self) -> f64 {
        self.values.iter().fold(0.0, |m: f64, v| m.max(*v)) / self.initial()
    }
}

/// `‖ψ(t)‖_{𝓗^s}` at every stored time, one series per entry of `weights`.
pub fn track_norms(traj: &Trajectory, weights: &[SobolevWeights]) -> Result<Vec<NormSeries>> {
    weights
        .iter()
        .map(|w| {
            let values: Vec<f64> = traj.states.iter().map(|psi| w.norm(psi.as_slice().expect("contiguous"))).collect();
            let fit = linear_fit(&traj.times, &values)?;
            Ok(NormSeries {
                s: w.s,
                times: traj.times.clone(),
                values,
                fit,
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReducedComparison {
    pub max_deviation: f64,
    pub argmax_time: f64,
    pub deviations: Vec<f64>,
}

/// `max_t ‖ψ(t) − U(ωt) e^{−iΛt} U(0)⁻¹ ψ₀‖₂` over the stored samples,
/// visiting every `stride`-th sample.
pub fn compare_reduced(traj: &Trajectory, lambda_inf: &[f64], u: &QPUnitary, omega: &[f64], stride: usize) -> Result<ReducedComparison> {
    let zero = vec![0.0; omega.len()];
    let u0 = u.eval(&zero)?;
    let a0 = adjoint(u0.view()).dot(&traj.states[0]);
    let stride = stride.max(1);
    let mut deviations = Vec::new();
    let mut worst = (0.0, 0.0);
    for (idx, (t, psi)) in traj.times.iter().zip(&traj.states).enumerate() {
        if idx % stride != 0 && idx + 1 != traj.times.len() {
            continue;
        }
        let phi: Vec<f64> = omega.iter().map(|w| w * t).collect();
        let rotated: Array1<C64> = a0
            .iter()
            .zip(lambda_inf)
            .map(|(c, l)| c * C64::from_polar(1.0, -l * t))
            .collect();
        let red = u.eval(&phi)?.dot(&rotated);
        let dev = (psi - &red).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if dev > worst.0 {
            worst = (dev, *t);
        }
        deviations.push(dev);
    }
    Ok(ReducedComparison {
        max_deviation: worst.0,
        argmax_time: worst.1,
        deviations,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Monodromy {
    pub period: f64,
    /// `−arg(μ)/T` in `(−ω/2, ω/2]`, sorted.
    pub quasi_energies: Vec<f64>,
    pub unitarity_defect: f64,
    pub steps: usize,
}

/// One-period propagator of a single-frequency family and its quasi-energies.
pub fn monodromy_quasienergies(h: &QPOperator, omega: &[f64], steps: usize, integrator: Integrator) -> Result<Monodromy> {
    if h.n_freq != 1 || omega.len() != 1 {
        return Err(Error::Unsupported("monodromy needs a single frequency".into()));
    }
    let period = 2.0 * PI / omega[0];
    let steps = steps.max(1);
    let dt = period / steps as f64;
    let sampler = Sampler::new(h, omega);
    let mut m = crate::linalg::identity(h.dim);
    for s in 0..steps {
        m = step_propagator(&sampler, s as f64 * dt, dt, integrator)?.dot(&m);
    }
    let defect = unitarity_defect(m.view());
    if defect > 1e-8 {
        return Err(Error::NormDrift { drift: defect, tol: 1e-8 });
    }
    let eig = unitary_eigenphases(&m)?;
    let mut q: Vec<f64> = eig.iter().map(|a| wrap(-a / period, omega[0])).collect();
    q.sort_by(f64::total_cmp);
    Ok(Monodromy {
        period,
        quasi_energies: q,
        unitarity_defect: defect,
        steps,
    })
}

/// Eigenphases of a unitary.
fn unitary_eigenphases(m: &CMat) -> Result<Vec<f64>> {
    use ndarray_linalg::Eig;
    let (vals, _) = crate::linalg::fortran(m.view()).eig()?;
    Ok(vals.iter().map(|z| z.arg()).collect())
}

/// Representative of `x` modulo `ω` in `(−ω/2, ω/2]`.
pub fn wrap(x: f64, omega: f64) -> f64 {
    let mut r = x.rem_euclid(omega);
    if r > 0.5 * omega {
        r -= omega;
    }
    r
}

/// Largest distance, modulo `ω`, between each target and its nearest quasi-energy.
pub fn match_quasienergies(quasi: &[f64], targets: &[f64], omega: f64) -> f64 {
    targets
        .iter()
        .map(|t| {
            quasi
                .iter()
                .map(|q| wrap(q - t, omega).abs())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// `exp(−iHt)ψ₀` for a constant family, the reference for time-independent runs.
pub fn exact_constant_evolution(h: &CMat, psi0: &Array1<C64>, t: f64) -> Result<Array1<C64>> {
    Ok(hermitian_function(h.view(), |e| C64::from_polar(1.0, -e * t))?.dot(psi0))
}
