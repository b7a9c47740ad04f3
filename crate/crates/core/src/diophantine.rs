//! Frequency arithmetic: Diophantine certificates, excluded-measure
//! estimates and second Melnikov scans. `|k|` is the ℓ¹ norm throughout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::qp::Mode;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub gamma: f64,
    pub tau: f64,
    pub k_checked: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub omega: Vec<f64>,
    pub certificate: Option<Certificate>,
}

impl FrequencyVector {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() {
            return Err(Error::Hypothesis("empty frequency vector".into()));
        }
        if let Some(w) = omega.iter().find(|w| !(**w >= 1.0 && **w <= 2.0)) {
            return Err(Error::Hypothesis(format!("frequency component {w} outside [1, 2]")));
        }
        Ok(FrequencyVector { omega, certificate: None })
    }

    pub fn n(&self) -> usize {
        self.omega.len()
    }

    /// Attach a certificate after a successful scan.
    pub fn certify(&mut self, gamma: f64, tau: f64, k: usize) -> Result<DiophantineScan> {
        let scan = check_diophantine(&self.omega, gamma, tau, k)?;
        if scan.certified {
            self.certificate = Some(Certificate { gamma, tau, k_checked: k });
        }
        Ok(scan)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: Mode,
    /// `|ω·k|`
    pub value: f64,
    /// `γ / |k|^τ`
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineScan {
    /// `min_k |ω·k| |k|^τ` over the scanned shell.
    pub gamma_max: f64,
    pub argmin: Mode,
    pub certified: bool,
    pub first_violation: Option<Violation>,
    pub k_checked: usize,
}

/// Exhaustive scan over `0 < |k|₁ ≤ K` (one of each `±k`).
pub fn check_diophantine(omega: &[f64], gamma: f64, tau: f64, k: usize) -> Result<DiophantineScan> {
    let n = omega.len();
    if !(tau > n as f64 - 1.0) {
        return Err(Error::Hypothesis(format!("tau = {tau} must exceed n - 1 = {}", n - 1)));
    }
    if k < 1 {
        return Err(Error::Hypothesis("scan radius K must be at least 1".into()));
    }
    let mut gamma_max = f64::INFINITY;
    let mut argmin = Mode::zero(n);
    let mut first = None;
    for m in Mode::half_l1_ball(n, k as i64) {
        let v = m.dot(omega).abs();
        let q = (m.l1() as f64).powf(tau);
        let g = v * q;
        if g < gamma_max {
            gamma_max = g;
            argmin = m.clone();
        }
        if first.is_none() && g < gamma {
            first = Some(Violation {
                k: m,
                value: v,
                bound: gamma / q,
            });
        }
    }
    Ok(DiophantineScan {
        gamma_max,
        argmin,
        certified: first.is_none(),
        first_violation: first,
        k_checked: k,
    })
}

/// `γ_max(ω)` for uniform samples in `[1, 2]ⁿ`; deterministic given the seed.
pub fn sample_gamma_max(tau: f64, n: usize, k: usize, n_samples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shell: Vec<(Vec<f64>, f64)> = Mode::half_l1_ball(n, k as i64)
        .into_iter()
        .map(|m| (m.0.iter().map(|v| *v as f64).collect(), (m.l1() as f64).powf(tau)))
        .collect();
    (0..n_samples)
        .map(|_| {
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
            shell
                .iter()
                .map(|(kv, q)| kv.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().abs() * q)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Monte Carlo fraction of `[1, 2]ⁿ` failing the `(γ, τ)` condition up to `K`.
pub fn measure_estimate(gamma: f64, tau: f64, n: usize, k: usize, n_samples: usize, seed: u64) -> f64 {
    measure_curve(&[gamma], tau, n, k, n_samples, seed)[0]
}

/// Excluded fractions for several `γ` from a single sample set.
pub fn measure_curve(gammas: &[f64], tau: f64, n: usize, k: usize, n_samples: usize, seed: u64) -> Vec<f64> {
    if n_samples == 0 {
        return vec![0.0; gammas.len()];
    }
    let g = sample_gamma_max(tau, n, k, n_samples, seed);
    gammas
        .iter()
        .map(|&gamma| g.iter().filter(|&&v| v < gamma).count() as f64 / n_samples as f64)
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelnikovViolation {
    pub i: usize,
    pub j: usize,
    pub k: Mode,
    pub divisor: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelnikovReport {
    pub violations: Vec<MelnikovViolation>,
    /// `min (|λᵢ − λⱼ + ω·k| − bound)` over the scan.
    pub min_margin: f64,
    pub min_divisor: f64,
    pub scanned: usize,
}

pub fn melnikov_bound(gamma: f64, tau: f64, d: f64, i: usize, j: usize, k: &Mode) -> f64 {
    gamma * (1.0 + ((i as f64).powf(d) - (j as f64).powf(d)).abs()) / (1.0 + (k.l1() as f64).powf(tau))
}

/// Scan `|λᵢ − λⱼ + ω·k| ≥ γ(1 + |iᵈ − jᵈ|)/(1 + |k|^τ)` over `i, j < N`,
/// `|k|₁ ≤ K`, excluding `i = j, k = 0`.
pub fn check_second_melnikov(lambdas: &[f64], omega: &[f64], gamma: f64, tau: f64, d: f64, k: usize) -> MelnikovReport {
    let n = omega.len();
    let mut ks = vec![Mode::zero(n)];
    for m in Mode::half_l1_ball(n, k as i64) {
        ks.push(m.neg());
        ks.push(m);
    }
    ks.sort_by_key(|m| (m.l1(), m.clone()));
    let mut report = MelnikovReport {
        violations: Vec::new(),
        min_margin: f64::INFINITY,
        min_divisor: f64::INFINITY,
        scanned: 0,
    };
    for i in 0..lambdas.len() {
        for j in 0..lambdas.len() {
            for m in &ks {
                if i == j && m.is_zero() {
                    continue;
                }
                let div = (lambdas[i] - lambdas[j] + m.dot(omega)).abs();
                let bound = melnikov_bound(gamma, tau, d, i, j, m);
                report.scanned += 1;
                report.min_divisor = report.min_divisor.min(div);
                report.min_margin = report.min_margin.min(div - bound);
                if div < bound {
                    report.violations.push(MelnikovViolation {
                        i,
                        j,
                        k: m.clone(),
                        divisor: div,
                        bound,
                    });
                }
            }
        }
    }
    report
}

/// A posteriori checks on a diagonal normal form `λ⁽⁰⁾`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalFormChecks {
    /// `max_j |λ⁽⁰⁾ⱼ − λᵛⱼ| / j^{β/(ℓ+1)}` over `j ≥ 1`.
    pub shift_ratio: f64,
    /// `min_{i≠j} |λ⁽⁰⁾ᵢ − λ⁽⁰⁾ⱼ| / |iᵈ − jᵈ|`.
    pub gap_ratio: f64,
}

pub fn normal_form_checks(lambda0: &[f64], lambda_v: &[f64], beta: f64, ell: f64) -> NormalFormChecks {
    let d = 2.0 * ell / (ell + 1.0);
    let p = beta / (ell + 1.0);
    let n = lambda0.len().min(lambda_v.len());
    let shift_ratio = (1..n)
        .map(|j| (lambda0[j] - lambda_v[j]).abs() / (j as f64).powf(p))
        .fold(0.0, f64::max);
    let mut gap_ratio = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let den = ((i as f64).powf(d) - (j as f64).powf(d)).abs();
            gap_ratio = gap_ratio.min((lambda0[i] - lambda0[j]).abs() / den);
        }
    }
    NormalFormChecks { shift_ratio, gap_ratio }
}

/// Largest `|Δ(λᵢ − λⱼ)| / (|Δω| ε |iᵈ − jᵈ|)` for a step along each axis.
pub fn lipschitz_check(
    lambdas_at: impl Fn(&[f64]) -> Result<Vec<f64>>,
    omega: &[f64],
    step: f64,
    eps: f64,
    d: f64,
) -> Result<f64> {
    let base = lambdas_at(omega)?;
    let mut worst: f64 = 0.0;
    for axis in 0..omega.len() {
        let mut w = omega.to_vec();
        w[axis] += step;
        let moved = lambdas_at(&w)?;
        for i in 0..base.len() {
            for j in (i + 1)..base.len() {
                let delta = ((moved[i] - moved[j]) - (base[i] - base[j])).abs() / step;
                let den = eps * ((i as f64).powf(d) - (j as f64).powf(d)).abs();
                worst = worst.max(delta / den);
            }
        }
    }
    Ok(worst)
}
