//! Stage-by-stage execution of one experiment.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qpkam::conjugation::{apply_gauge, gauge_b, QPUnitary};
use qpkam::diophantine::{check_diophantine, check_second_melnikov, DiophantineScan, FrequencyVector};
use qpkam::floquet::{
    compare_reduced, match_quasienergies, monodromy_quasienergies, propagate, track_norms, NormSeries, PropagateOptions,
};
use qpkam::kam::{kam_iterate, StepRecord};
use qpkam::qp::QPOperator;
use qpkam::spectral_basis::{build_h0, eigendecompose, fit_eigenvalue_exponent, EigenBasis, ExponentFit, SobolevWeights};
use qpkam::stats::{linear_fit, LineFit};
use qpkam::symbols::{assemble_hamiltonian, check_symbol_class, quantize_multiplication_in, SymbolClassReport};
use qpkam::C64;

use crate::config::{ExperimentConfig, InitialState, OmegaSpec};
use crate::exit::{AtStage, Stage, StageError};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub n_modes: usize,
    pub eigenvalues: Vec<f64>,
    pub d_exponent: f64,
    pub exponent_fit: Option<ExponentFit>,
    pub max_relative_residual: f64,
    pub quadrature_defect: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AssemblySummary {
    pub k_cutoff: usize,
    pub hermitian_defect: f64,
    pub magnetic_norm: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaugeSummary {
    pub magnetic_before: f64,
    pub magnetic_after: f64,
    pub magnetic_ratio: f64,
    pub formula_deviation: f64,
    pub tail: f64,
    pub boundary_b: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FrequencySummary {
    pub omega: Vec<f64>,
    pub diophantine: DiophantineScan,
    pub melnikov_violations: usize,
    pub melnikov_min_margin: f64,
    pub melnikov_min_divisor: f64,
    pub melnikov_scanned: usize,
    /// First-order levels `λᵛ + ε⟨W₀⟩₀` the scan was run on.
    pub first_order_levels: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KamSummary {
    pub steps: usize,
    pub eps_history: Vec<f64>,
    pub records: Vec<StepRecord>,
    pub lambda_v: Vec<f64>,
    pub lambda_inf: Vec<f64>,
    /// `|λⱼ^∞ − λⱼᵛ|`.
    pub shifts: Vec<f64>,
    pub final_residual: f64,
    /// `log |shift|` against `log j` over `j ∈ [10, 0.8N]`, when that window exists.
    pub shift_fit: Option<LineFit>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormSummary {
    pub s: f64,
    pub initial: f64,
    pub trend: f64,
    pub relative_trend: f64,
    pub max_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub max_deviation: f64,
    pub argmax_time: f64,
    pub budget: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MonodromySummary {
    pub period: f64,
    pub steps: usize,
    pub unitarity_defect: f64,
    pub quasi_energies: Vec<f64>,
    pub compared_modes: usize,
    /// Largest distance modulo `ω` between `λⱼ^∞` and the nearest quasi-energy.
    pub max_mismatch: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub dt: f64,
    pub steps: usize,
    pub norm_drift: f64,
    pub max_tail_population: f64,
    pub flagged: bool,
    pub norms: Vec<NormSummary>,
    pub comparison: Option<ComparisonSummary>,
    pub monodromy: Option<MonodromySummary>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FailureRecord {
    pub stage: Stage,
    pub exit_code: i32,
    pub message: String,
    /// Step records up to the failure, for reducibility failures.
    pub kam_trace: Vec<StepRecord>,
}

impl FailureRecord {
    fn from_error(err: &StageError) -> Self {
        let kam_trace = match &err.source {
            Some(qpkam::Error::KamFailure { trace, .. }) => trace.clone(),
            _ => Vec::new(),
        };
        FailureRecord {
            stage: err.stage,
            exit_code: err.exit_code(),
            message: err.message.clone(),
            kam_trace,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub config_sha256: String,
    pub seed: u64,
    pub eps: f64,
    pub spectrum: Option<SpectrumSummary>,
    pub symbols: BTreeMap<String, SymbolClassReport>,
    pub assembly: Option<AssemblySummary>,
    pub frequency: Option<FrequencySummary>,
    pub gauge: Option<GaugeSummary>,
    pub kam: Option<KamSummary>,
    pub simulation: Option<SimulationSummary>,
    pub failure: Option<FailureRecord>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.failure.as_ref().map(|f| f.exit_code).unwrap_or(0)
    }
}

/// Report plus the series written to CSV.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub report: RunReport,
    pub norms: Vec<NormSeries>,
}

#[derive(Clone, Copy, Debug)]
pub struct PipelineOptions {
    pub simulate: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { simulate: true }
    }
}

/// SHA-256 of the canonical JSON form of the configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

pub fn build_basis(cfg: &ExperimentConfig) -> Result<EigenBasis, StageError> {
    cfg.potential.validate().at(Stage::Spectrum)?;
    let h0 = build_h0(&cfg.potential, &cfg.discretization).at(Stage::Spectrum)?;
    eigendecompose(&h0, cfg.discretization.n_modes).at(Stage::Spectrum)
}

pub fn spectrum_summary(basis: &EigenBasis) -> SpectrumSummary {
    let n = basis.n_modes;
    let exponent_fit = if n >= 20 {
        fit_eigenvalue_exponent(basis, n / 4, (4 * n) / 5).ok()
    } else {
        None
    };
    SpectrumSummary {
        n_modes: n,
        eigenvalues: basis.eigenvalues.clone(),
        d_exponent: basis.d_exponent,
        exponent_fit,
        max_relative_residual: basis.max_relative_residual,
        quadrature_defect: basis.quadrature_defect,
    }
}

/// `λᵛ + ε · diag ⟨W₀⟩₀`.
pub fn first_order_levels(cfg: &ExperimentConfig, basis: &EigenBasis) -> Result<Vec<f64>, StageError> {
    let w0 = cfg.w0()?;
    let eps = cfg.perturbation.eps;
    if eps == 0.0 || w0.is_zero() {
        return Ok(basis.eigenvalues.clone());
    }
    let op = quantize_multiplication_in(&w0, basis, w0.k_cutoff()).at(Stage::Assembly)?;
    let z = op.zero_index();
    Ok((0..basis.n_modes).map(|j| basis.eigenvalues[j] + eps * op.coeffs[[z, j, j]].re).collect())
}

pub fn resolve_omega(spec: &OmegaSpec, levels: &[f64]) -> Result<Vec<f64>, StageError> {
    match spec {
        OmegaSpec::Fixed { omega } => Ok(omega.clone()),
        OmegaSpec::Resonant { leading, i, j, k } => {
            if *i >= levels.len() || *j >= levels.len() {
                return Err(StageError::new(Stage::Usage, "resonant levels outside the basis"));
            }
            let last = *k.last().expect("validated length");
            if last == 0 {
                return Err(StageError::new(Stage::Usage, "resonant mode needs a nonzero last component"));
            }
            let partial: f64 = leading.iter().zip(k).map(|(w, kk)| w * *kk as f64).sum();
            let mut omega = leading.clone();
            omega.push((levels[*j] - levels[*i] - partial) / last as f64);
            Ok(omega)
        }
    }
}

fn initial_state(init: &InitialState, dim: usize) -> Array1<C64> {
    let mut psi = Array1::zeros(dim);
    match init {
        InitialState::Mode { index } => psi[*index] = C64::new(1.0, 0.0),
        InitialState::Modes { indices } => {
            let a = 1.0 / (indices.len() as f64).sqrt();
            for i in indices {
                psi[*i] += C64::new(a, 0.0);
            }
        }
    }
    psi
}

/// `log |shift_j|` against `log j` over `j ∈ [lo, hi]`.
pub fn shift_fit(shifts: &[f64], lo: usize, hi: usize) -> Option<LineFit> {
    let hi = hi.min(shifts.len().saturating_sub(1));
    let pts: Vec<(f64, f64)> = (lo.max(1)..=hi)
        .filter(|&j| shifts[j] > 0.0)
        .map(|j| ((j as f64).ln(), shifts[j].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    linear_fit(&x, &y).ok()
}

/// Run every stage; the first failure ends the run unless the simulation is
/// configured to proceed without a reduction.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: PipelineOptions) -> RunArtifacts {
    let mut report = RunReport {
        name: cfg.name.clone(),
        config_sha256: config_hash(cfg),
        seed: cfg.seed,
        eps: cfg.perturbation.eps,
        spectrum: None,
        symbols: BTreeMap::new(),
        assembly: None,
        frequency: None,
        gauge: None,
        kam: None,
        simulation: None,
        failure: None,
    };
    let mut norms = Vec::new();
    if let Err(e) = stages(cfg, opts, &mut report, &mut norms) {
        report.failure = Some(FailureRecord::from_error(&e));
    }
    RunArtifacts { report, norms }
}

struct Reduction {
    lambda_inf: Vec<f64>,
    unitary: QPUnitary,
}

fn stages(cfg: &ExperimentConfig, opts: PipelineOptions, report: &mut RunReport, norms: &mut Vec<NormSeries>) -> Result<(), StageError> {
    cfg.validate()?;
    let basis = build_basis(cfg)?;
    report.spectrum = Some(spectrum_summary(&basis));

    let w0 = cfg.w0()?;
    let w1 = cfg.w1()?;
    let p = &cfg.perturbation;
    for (name, w, order) in [("w0", &w0, p.beta0), ("w1", &w1, p.beta1)] {
        if w.is_zero() {
            continue;
        }
        let r = check_symbol_class(w, order, p.symbol_check_order, &basis.grid).at(Stage::Symbol)?;
        let pass = r.pass;
        let failure = r.failure.clone();
        report.symbols.insert(name.to_string(), r);
        if !pass {
            let why = failure.map(|f| format!("k = {}, x = {:.3}: {}", f.k, f.x, f.reason)).unwrap_or_default();
            return Err(StageError::new(Stage::Symbol, format!("{name} is not in the declared class ({why})")));
        }
    }

    let h = assemble_hamiltonian(p.eps, &w0, &w1, &basis, p.k_cutoff).at(Stage::Assembly)?;
    report.assembly = Some(AssemblySummary {
        k_cutoff: h.k_cutoff,
        hermitian_defect: h.hermitian_defect(),
        magnetic_norm: h.magnetic_norm(),
    });

    let levels = first_order_levels(cfg, &basis)?;
    let omega = resolve_omega(&cfg.frequency.omega, &levels)?;
    let fv = FrequencyVector::new(omega.clone()).at(Stage::Frequency)?;
    let f = &cfg.frequency;
    let scan = check_diophantine(&fv.omega, f.gamma, f.tau, f.k_check).at(Stage::Frequency)?;
    let kam_params = cfg.kam_params(basis.d_exponent);
    let mel = check_second_melnikov(&levels, &omega, f.gamma, f.tau, basis.d_exponent, kam_params.k_cutoff * p.n_freq);
    let certified = scan.certified;
    report.frequency = Some(FrequencySummary {
        omega: omega.clone(),
        diophantine: scan,
        melnikov_violations: mel.violations.len(),
        melnikov_min_margin: mel.min_margin,
        melnikov_min_divisor: mel.min_divisor,
        melnikov_scanned: mel.scanned,
        first_order_levels: levels,
    });
    if f.require_certificate && !certified {
        return Err(StageError::new(Stage::Frequency, "frequency vector fails the Diophantine scan"));
    }

    let b = gauge_b(&w1, &basis.grid);
    let gauge = apply_gauge(&h, &b, p.eps, &omega, &basis, &w0, &w1, p.beta1).at(Stage::Gauge)?;
    report.gauge = Some(GaugeSummary {
        magnetic_before: gauge.magnetic_before,
        magnetic_after: gauge.magnetic_after,
        magnetic_ratio: if gauge.magnetic_before > 0.0 {
            gauge.magnetic_after / gauge.magnetic_before
        } else {
            0.0
        },
        formula_deviation: gauge.formula_deviation,
        tail: gauge.tail,
        boundary_b: gauge.boundary_b,
    });

    let reduction = match kam_iterate(&gauge.h1, &omega, &kam_params) {
        Ok(out) => {
            let lambda_v = basis.eigenvalues.clone();
            let shifts: Vec<f64> = out.lambda_inf.iter().zip(&lambda_v).map(|(a, b)| (a - b).abs()).collect();
            let n = shifts.len();
            report.kam = Some(KamSummary {
                steps: out.records.len(),
                eps_history: out.eps_history(),
                records: out.records.clone(),
                lambda_v,
                lambda_inf: out.lambda_inf.clone(),
                shift_fit: if n >= 20 { shift_fit(&shifts, 10, (4 * n) / 5) } else { None },
                shifts,
                final_residual: out.final_residual,
            });
            Ok(Reduction {
                lambda_inf: out.lambda_inf,
                unitary: QPUnitary::Product(vec![gauge.unitary.clone(), out.unitary]),
            })
        }
        Err(e) => Err(StageError::from_core(Stage::Kam, e)),
    };

    let sim = match (&cfg.simulation, opts.simulate) {
        (Some(sim), true) => sim,
        _ => return reduction.map(|_| ()),
    };
    let reduction = match reduction {
        Ok(r) => Some(r),
        Err(e) if sim.run_without_reduction => {
            report.failure = Some(FailureRecord::from_error(&e));
            None
        }
        Err(e) => return Err(e),
    };
    let result = simulate(cfg, &basis, &h, &omega, reduction.as_ref(), report, norms);
    match (result, report.failure.is_some()) {
        (Err(e), true) => {
            // keep the reducibility failure as the primary record
            report.failure.as_mut().expect("checked").message += &format!("; simulation: {}", e.message);
            Ok(())
        }
        (Err(e), false) => Err(e),
        (Ok(()), _) => Ok(()),
    }
}

fn simulate(
    cfg: &ExperimentConfig,
    basis: &EigenBasis,
    h: &QPOperator,
    omega: &[f64],
    reduction: Option<&Reduction>,
    report: &mut RunReport,
    norms: &mut Vec<NormSeries>,
) -> Result<(), StageError> {
    let sim = cfg.simulation.as_ref().expect("caller checked");
    let psi0 = initial_state(&sim.initial, basis.n_modes);
    let popts = PropagateOptions {
        integrator: sim.integrator,
        dt: sim.dt,
        stored_samples: sim.stored_samples,
        ..Default::default()
    };
    let traj = propagate(h, omega, &psi0, sim.t_end, &popts).at(Stage::Simulation)?;
    let weights: Vec<SobolevWeights> = sim.s_list.iter().map(|s| SobolevWeights::for_basis(basis, *s)).collect();
    let series = track_norms(&traj, &weights).at(Stage::Simulation)?;
    let mut summary = SimulationSummary {
        dt: traj.dt_used,
        steps: traj.steps,
        norm_drift: traj.norm_drift,
        max_tail_population: traj.max_tail_population,
        flagged: traj.flagged,
        norms: series
            .iter()
            .map(|s| NormSummary {
                s: s.s,
                initial: s.initial(),
                trend: s.trend(),
                relative_trend: s.relative_trend(),
                max_ratio: s.max_ratio(),
            })
            .collect(),
        comparison: None,
        monodromy: None,
    };
    *norms = series;

    let mut failure = None;
    if let Some(red) = reduction {
        let budget = (10.0 * cfg.kam.tol_final).max(1e-4);
        let cmp = compare_reduced(&traj, &red.lambda_inf, &red.unitary, omega, sim.compare_stride).at(Stage::Comparison)?;
        if cmp.max_deviation > budget {
            failure = Some(StageError::new(
                Stage::Comparison,
                format!("reduced and direct dynamics differ by {:.3e} (budget {budget:.1e})", cmp.max_deviation),
            ));
        }
        summary.comparison = Some(ComparisonSummary {
            max_deviation: cmp.max_deviation,
            argmax_time: cmp.argmax_time,
            budget,
        });
        if let (Some(m), 1) = (&sim.monodromy, omega.len()) {
            let mono = monodromy_quasienergies(h, omega, m.steps, m.integrator).at(Stage::Simulation)?;
            let count = m.compared_modes.min(red.lambda_inf.len());
            let mismatch = match_quasienergies(&mono.quasi_energies, &red.lambda_inf[..count], omega[0]);
            if mismatch > 1e-6 && failure.is_none() {
                failure = Some(StageError::new(
                    Stage::Comparison,
                    format!("monodromy quasi-energies differ from the reduced levels by {mismatch:.3e}"),
                ));
            }
            summary.monodromy = Some(MonodromySummary {
                period: mono.period,
                steps: mono.steps,
                unitarity_defect: mono.unitarity_defect,
                quasi_energies: mono.quasi_energies,
                compared_modes: count,
                max_mismatch: mismatch,
            });
        }
    }
    report.simulation = Some(summary);
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonant_completion_closes_the_divisor() {
        let levels = [1.0, 3.8, 7.4];
        let spec = OmegaSpec::Resonant {
            leading: vec![1.2],
            i: 0,
            j: 1,
            k: vec![1, 1],
        };
        let omega = resolve_omega(&spec, &levels).unwrap();
        assert!((omega[0] + omega[1] + levels[0] - levels[1]).abs() < 1e-14);
        let zero_last = OmegaSpec::Resonant {
            leading: vec![1.2],
            i: 0,
            j: 1,
            k: vec![1, 0],
        };
        assert_eq!(resolve_omega(&zero_last, &levels).unwrap_err().stage, Stage::Usage);
    }

    #[test]
    fn shift_fit_recovers_a_power_law() {
        let shifts: Vec<f64> = (0..50).map(|j| 3e-3 * (j as f64).powf(0.7)).collect();
        let fit = shift_fit(&shifts, 10, 40).unwrap();
        assert!((fit.slope - 0.7).abs() < 1e-12);
        assert!(shift_fit(&shifts, 10, 11).is_none());
    }

    #[test]
    fn hashes_ignore_formatting_but_not_content() {
        let a = crate::presets::load("zero-eps").unwrap();
        let reparsed = ExperimentConfig::from_toml_str(&a.to_toml_string()).unwrap();
        assert_eq!(config_hash(&a), config_hash(&reparsed));
        let mut b = a.clone();
        b.seed += 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
