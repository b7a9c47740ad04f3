//! Experiment configuration, read from TOML.
//!
//! Every field not marked as required has a default, listed next to it.

use serde::{Deserialize, Serialize};

use qpkam::floquet::Integrator;
use qpkam::kam::{KamParams, TimeElimination};
use qpkam::qp::Mode;
use qpkam::spectral_basis::{DiscretizationParams, PotentialSpec};
use qpkam::symbols::{check_hypotheses, Profile, QPSymbol};

use crate::exit::{Stage, StageError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seed for every random draw; default 0.
    #[serde(default)]
    pub seed: u64,
    /// Run even when β₀ ≥ 2ℓ−1 or β₁ > ℓ; default false.
    #[serde(default)]
    pub allow_hypothesis_violation: bool,
    pub potential: PotentialSpec,
    pub discretization: DiscretizationParams,
    pub perturbation: PerturbationConfig,
    pub frequency: FrequencyConfig,
    #[serde(default)]
    pub kam: KamConfig,
    /// Direct simulation; skipped when absent.
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    /// `a · f(x)` at `k = 0`.
    Static,
    /// `a · f(x) cos(k·φ)`.
    Cos,
    /// `a · f(x) sin(k·φ)`.
    Sin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub kind: TermKind,
    /// Fourier mode; ignored for static terms.
    #[serde(default)]
    pub k: Vec<i64>,
    pub amplitude: f64,
    pub profile: Profile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub eps: f64,
    pub n_freq: usize,
    /// Declared symbol orders of `W₀` and `W₁`.
    pub beta0: f64,
    pub beta1: f64,
    /// Fourier box of the assembled family; default 5.
    #[serde(default = "default_k_cutoff")]
    pub k_cutoff: usize,
    #[serde(default)]
    pub w0: Vec<TermConfig>,
    #[serde(default)]
    pub w1: Vec<TermConfig>,
    /// Highest `x`-derivative checked in the symbol-class test; default 2.
    #[serde(default = "default_symbol_order")]
    pub symbol_check_order: usize,
}

fn default_k_cutoff() -> usize {
    5
}

fn default_symbol_order() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OmegaSpec {
    Fixed { omega: Vec<f64> },
    /// Completes the last component so that `ω·k + λᵢ − λⱼ = 0` for the
    /// first-order levels `λ = λᵛ + ε⟨W₀⟩₀`.
    Resonant { leading: Vec<f64>, i: usize, j: usize, k: Vec<i64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyConfig {
    pub omega: OmegaSpec,
    pub gamma: f64,
    pub tau: f64,
    /// Shell `|k|₁ ≤ k_check` of the Diophantine scan; default 20.
    #[serde(default = "default_k_check")]
    pub k_check: usize,
    /// Abort when the Diophantine scan fails; default true.
    #[serde(default = "default_true")]
    pub require_certificate: bool,
}

fn default_k_check() -> usize {
    20
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KamConfig {
    /// Default 1e-10.
    #[serde(default = "default_tol")]
    pub tol_final: f64,
    /// Default 12.
    #[serde(default = "default_steps")]
    pub max_steps: usize,
    /// Defaults to the perturbation box.
    #[serde(default)]
    pub k_cutoff: Option<usize>,
    /// Default per-step.
    #[serde(default = "default_elimination")]
    pub time_elimination: TimeElimination,
    /// Default 1e-3.
    #[serde(default = "default_skip")]
    pub skip_factor: f64,
    /// Defaults to `max(4K, 2K+1)`.
    #[serde(default)]
    pub phase_points: Option<usize>,
    /// Default 5.
    #[serde(default = "default_checks")]
    pub spectrum_checks: usize,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_steps() -> usize {
    12
}
fn default_elimination() -> TimeElimination {
    TimeElimination::PerStep
}
fn default_skip() -> f64 {
    1e-3
}
fn default_checks() -> usize {
    5
}

impl Default for KamConfig {
    fn default() -> Self {
        KamConfig {
            tol_final: default_tol(),
            max_steps: default_steps(),
            k_cutoff: None,
            time_elimination: default_elimination(),
            skip_factor: default_skip(),
            phase_points: None,
            spectrum_checks: default_checks(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// A single eigenmode.
    Mode { index: usize },
    /// Equal-weight superposition of eigenmodes.
    Modes { indices: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonodromyConfig {
    /// Steps per period; default 4000.
    #[serde(default = "default_period_steps")]
    pub steps: usize,
    /// Default fourth-order Magnus.
    #[serde(default = "default_monodromy_integrator")]
    pub integrator: Integrator,
    /// Number of low modes compared; default 10.
    #[serde(default = "default_compared")]
    pub compared_modes: usize,
}

fn default_period_steps() -> usize {
    4000
}
fn default_monodromy_integrator() -> Integrator {
    Integrator::Magnus4
}
fn default_compared() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Default 100.
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    /// Default exponential midpoint.
    #[serde(default)]
    pub integrator: Integrator,
    /// Derived from `0.5 / λ_max` when absent.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Stored states; default 2000.
    #[serde(default = "default_samples")]
    pub stored_samples: usize,
    pub initial: InitialState,
    /// Sobolev indices tracked along the run; default [0, 2].
    #[serde(default = "default_s_list")]
    pub s_list: Vec<f64>,
    /// Every how many stored states the reduced solution is compared; default 1.
    #[serde(default = "default_stride")]
    pub compare_stride: usize,
    /// Simulate even when the reduction fails; default false.
    #[serde(default)]
    pub run_without_reduction: bool,
    #[serde(default)]
    pub monodromy: Option<MonodromyConfig>,
}

fn default_t_end() -> f64 {
    100.0
}
fn default_samples() -> usize {
    2000
}
fn default_s_list() -> Vec<f64> {
    vec![0.0, 2.0]
}
fn default_stride() -> usize {
    1
}

fn usage(msg: impl Into<String>) -> StageError {
    StageError::new(Stage::Usage, msg)
}

fn build_symbol(n: usize, order: f64, terms: &[TermConfig]) -> Result<QPSymbol, StageError> {
    let mut w = QPSymbol::new(n, order);
    for t in terms {
        match t.kind {
            TermKind::Static => w = w.with_static(t.amplitude, t.profile.clone()),
            TermKind::Cos | TermKind::Sin => {
                if t.k.len() != n {
                    return Err(usage(format!("mode {:?} does not have {n} components", t.k)));
                }
                let k = Mode(t.k.clone());
                if k.is_zero() {
                    return Err(usage("oscillating term with k = 0; use a static term"));
                }
                w = if t.kind == TermKind::Cos {
                    w.with_cos(k, t.amplitude, t.profile.clone())
                } else {
                    w.with_sin(k, t.amplitude, t.profile.clone())
                };
            }
        }
    }
    Ok(w)
}

impl ExperimentConfig {
    /// Parse and validate, including the hypothesis gate.
    pub fn from_toml_str(text: &str) -> Result<Self, StageError> {
        Self::from_toml_str_with(text, false)
    }

    /// As [`Self::from_toml_str`], optionally forcing the hypothesis override
    /// on before validation.
    pub fn from_toml_str_with(text: &str, allow_hypothesis_violation: bool) -> Result<Self, StageError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| usage(format!("config: {e}")))?;
        cfg.allow_hypothesis_violation |= allow_hypothesis_violation;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), StageError> {
        let p = &self.perturbation;
        if !(p.eps >= 0.0) || !p.eps.is_finite() {
            return Err(usage("eps must be a finite non-negative number"));
        }
        if p.n_freq == 0 {
            return Err(usage("n_freq must be at least 1"));
        }
        match &self.frequency.omega {
            OmegaSpec::Fixed { omega } if omega.len() != p.n_freq => {
                return Err(usage(format!("omega has {} components, n_freq is {}", omega.len(), p.n_freq)))
            }
            OmegaSpec::Resonant { leading, k, .. } if leading.len() + 1 != p.n_freq || k.len() != p.n_freq => {
                return Err(usage("resonant frequency needs n_freq − 1 leading components and an n_freq-component mode"))
            }
            _ => {}
        }
        if let Some(sim) = &self.simulation {
            if !(sim.t_end > 0.0) {
                return Err(usage("t_end must be positive"));
            }
            let bad = match &sim.initial {
                InitialState::Mode { index } => *index >= self.discretization.n_modes,
                InitialState::Modes { indices } => indices.is_empty() || indices.iter().any(|i| *i >= self.discretization.n_modes),
            };
            if bad {
                return Err(usage("initial state refers to a mode outside the basis"));
            }
        }
        self.w0()?;
        self.w1()?;
        if !self.allow_hypothesis_violation {
            check_hypotheses(self.potential.ell, p.beta0, p.beta1)
                .map_err(|e| StageError::from_core(Stage::Hypothesis, e))?;
        }
        Ok(())
    }

    pub fn w0(&self) -> Result<QPSymbol, StageError> {
        build_symbol(self.perturbation.n_freq, self.perturbation.beta0, &self.perturbation.w0)
    }

    pub fn w1(&self) -> Result<QPSymbol, StageError> {
        build_symbol(self.perturbation.n_freq, self.perturbation.beta1, &self.perturbation.w1)
    }

    pub fn kam_params(&self, d_exponent: f64) -> KamParams {
        KamParams {
            gamma: self.frequency.gamma,
            tau: self.frequency.tau,
            d_exponent,
            tol_final: self.kam.tol_final,
            max_steps: self.kam.max_steps,
            k_cutoff: self.kam.k_cutoff.unwrap_or(self.perturbation.k_cutoff),
            phase_points: self.kam.phase_points,
            norm_power: None,
            time_elimination: self.kam.time_elimination,
            skip_factor: self.kam.skip_factor,
            spectrum_checks: self.kam.spectrum_checks,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "minimal"

[potential]
ell = 2.0
domain_halfwidth = 8.0

[discretization]
grid_points = 257
n_modes = 10

[perturbation]
eps = 1e-3
n_freq = 1
beta0 = 1.0
beta1 = 0.5

[frequency]
omega = { kind = "fixed", omega = [1.5] }
gamma = 1e-3
tau = 2.0
"#;

    #[test]
    fn defaults_fill_optional_fields() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.perturbation.k_cutoff, 5);
        assert_eq!(cfg.frequency.k_check, 20);
        assert!(cfg.frequency.require_certificate);
        assert_eq!(cfg.kam, KamConfig::default());
        assert!(cfg.simulation.is_none());
        let p = cfg.kam_params(4.0 / 3.0);
        assert_eq!(p.k_cutoff, 5);
        assert_eq!(p.tol_final, 1e-10);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = MINIMAL.replace("name = \"minimal\"", "name = \"minimal\"\ncolour = 3");
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap_err().stage, Stage::Usage);
    }

    #[test]
    fn inconsistent_shapes_are_usage_errors() {
        let wrong_len = MINIMAL.replace("omega = [1.5]", "omega = [1.5, 1.2]");
        assert_eq!(ExperimentConfig::from_toml_str(&wrong_len).unwrap_err().stage, Stage::Usage);
        let bad_mode = format!("{MINIMAL}\n[[perturbation.w0]]\nkind = \"cos\"\nk = [1, 1]\namplitude = 1.0\nprofile = {{ kind = \"constant\", value = 1.0 }}\n");
        assert_eq!(ExperimentConfig::from_toml_str(&bad_mode).unwrap_err().stage, Stage::Usage);
        let negative = MINIMAL.replace("eps = 1e-3", "eps = -1e-3");
        assert_eq!(ExperimentConfig::from_toml_str(&negative).unwrap_err().stage, Stage::Usage);
    }

    #[test]
    fn hypothesis_gate_and_override() {
        let rough = MINIMAL.replace("beta0 = 1.0", "beta0 = 3.0");
        assert_eq!(ExperimentConfig::from_toml_str(&rough).unwrap_err().stage, Stage::Hypothesis);
        let cfg = ExperimentConfig::from_toml_str_with(&rough, true).unwrap();
        assert!(cfg.allow_hypothesis_violation);
    }

    #[test]
    fn terms_become_symbols() {
        let text = format!("{MINIMAL}\n[[perturbation.w1]]\nkind = \"sin\"\nk = [2]\namplitude = 0.5\nprofile = {{ kind = \"japanese_power\", beta = 0.5 }}\n");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let w1 = cfg.w1().unwrap();
        assert_eq!(w1.k_cutoff(), 2);
        assert!(cfg.w0().unwrap().is_zero());
        // 0.5 sin(2φ) at φ = π/4
        assert!((w1.eval(0.0, &[std::f64::consts::FRAC_PI_4]) - 0.5).abs() < 1e-14);
    }
}
