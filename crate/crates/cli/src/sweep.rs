//! One-parameter sweeps. Rows are independent and run on a small worker pool;
//! the output order is the input order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use qpkam::diophantine::{check_diophantine, check_second_melnikov, measure_curve};
use qpkam::stats::{proportional_fit, LineFit};

use crate::artifacts::fmt;
use crate::config::{ExperimentConfig, OmegaSpec};
use crate::exit::{AtStage, Stage, StageError};
use crate::pipeline::{build_basis, first_order_levels, run_pipeline, shift_fit, PipelineOptions, RunReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepAxis {
    /// Perturbation size; each row runs the pipeline without simulation.
    Eps,
    /// Diophantine constant; each row is a Monte Carlo excluded fraction.
    Gamma,
    /// A single value: how many random frequency vectors to screen.
    OmegaSamples,
    /// `lo:hi` index windows for the shift-law fit of one run.
    JWindow,
}

impl FromStr for SweepAxis {
    type Err = StageError;
    fn from_str(s: &str) -> Result<Self, StageError> {
        match s {
            "eps" => Ok(SweepAxis::Eps),
            "gamma" => Ok(SweepAxis::Gamma),
            "omega-samples" => Ok(SweepAxis::OmegaSamples),
            "j-window" => Ok(SweepAxis::JWindow),
            other => Err(StageError::new(
                Stage::Usage,
                format!("unknown axis '{other}' (eps, gamma, omega-samples, j-window)"),
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Monte Carlo samples per `γ`.
    pub measure_samples: usize,
    /// Attempt the reduction for every screened frequency vector.
    pub with_kam: bool,
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            measure_samples: 100_000,
            with_kam: false,
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub exit_code: i32,
    pub fields: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub summary: BTreeMap<String, f64>,
    /// Full reports for axes that run the pipeline.
    pub reports: Vec<RunReport>,
}

impl SweepOutcome {
    pub fn to_csv(&self, config_sha256: &str) -> String {
        let keys: BTreeSet<&String> = self.rows.iter().flat_map(|r| r.fields.keys()).collect();
        let mut out = format!("# config_sha256={config_sha256}\nvalue,exit_code");
        for k in &keys {
            let _ = write!(out, ",{k}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{}", r.value, r.exit_code);
            for k in &keys {
                out.push(',');
                if let Some(v) = r.fields.get(*k) {
                    out.push_str(&fmt(*v));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Evaluate `f` on every item with up to `workers` threads, keeping order.
fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn parse_f64(values: &[String]) -> Result<Vec<f64>, StageError> {
    values
        .iter()
        .map(|v| v.trim().parse::<f64>().map_err(|_| StageError::new(Stage::Usage, format!("'{v}' is not a number"))))
        .collect()
}

fn fit_fields(prefix: &str, fit: Option<LineFit>, fields: &mut BTreeMap<String, f64>) {
    if let Some(f) = fit {
        fields.insert(format!("{prefix}_slope"), f.slope);
        fields.insert(format!("{prefix}_r2"), f.r_squared);
    }
}

fn report_row(value: String, report: &RunReport) -> SweepRow {
    let mut fields = BTreeMap::new();
    fields.insert("eps".into(), report.eps);
    if let Some(k) = &report.kam {
        fields.insert("kam_steps".into(), k.steps as f64);
        fields.insert("final_residual".into(), k.final_residual);
        fields.insert("max_shift".into(), k.shifts.iter().cloned().fold(0.0, f64::max));
        fit_fields("shift", k.shift_fit, &mut fields);
    }
    if let Some(g) = &report.gauge {
        fields.insert("magnetic_ratio".into(), g.magnetic_ratio);
    }
    SweepRow {
        value,
        exit_code: report.exit_code(),
        fields,
    }
}

pub fn run_sweep(cfg: &ExperimentConfig, axis: SweepAxis, values: &[String], opts: &SweepOptions) -> Result<SweepOutcome, StageError> {
    if values.is_empty() {
        return Err(StageError::new(Stage::Usage, "sweep needs at least one value"));
    }
    let mut summary = BTreeMap::new();
    let mut reports = Vec::new();
    let rows = match axis {
        SweepAxis::Eps => {
            let eps = parse_f64(values)?;
            if eps.iter().any(|e| !(*e >= 0.0)) {
                return Err(StageError::new(Stage::Usage, "eps values must be non-negative"));
            }
            let cfgs: Vec<ExperimentConfig> = eps
                .iter()
                .map(|e| {
                    let mut c = cfg.clone();
                    c.perturbation.eps = *e;
                    c
                })
                .collect();
            reports = par_map(&cfgs, opts.workers, |c| run_pipeline(c, PipelineOptions { simulate: false }).report);
            values.iter().zip(&reports).map(|(v, r)| report_row(v.clone(), r)).collect()
        }
        SweepAxis::Gamma => {
            let gammas = parse_f64(values)?;
            if gammas.iter().any(|g| !(*g > 0.0)) {
                return Err(StageError::new(Stage::Usage, "gamma values must be positive"));
            }
            let f = &cfg.frequency;
            let n = cfg.perturbation.n_freq;
            let fractions = measure_curve(&gammas, f.tau, n, f.k_check, opts.measure_samples, cfg.seed);
            if gammas.len() >= 2 {
                let fit = proportional_fit(&gammas, &fractions).at(Stage::Frequency)?;
                summary.insert("slope".into(), fit.slope);
                summary.insert("r2".into(), fit.r_squared);
            }
            summary.insert("samples".into(), opts.measure_samples as f64);
            values
                .iter()
                .zip(gammas.iter().zip(&fractions))
                .map(|(v, (g, frac))| SweepRow {
                    value: v.clone(),
                    exit_code: 0,
                    fields: BTreeMap::from([("gamma".to_string(), *g), ("excluded_fraction".to_string(), *frac)]),
                })
                .collect()
        }
        SweepAxis::OmegaSamples => {
            if values.len() != 1 {
                return Err(StageError::new(Stage::Usage, "omega-samples takes a single sample count"));
            }
            let count: usize = values[0]
                .trim()
                .parse()
                .map_err(|_| StageError::new(Stage::Usage, "sample count must be a non-negative integer"))?;
            screen_omegas(cfg, count, opts, &mut summary)?
        }
        SweepAxis::JWindow => {
            let mut windows = Vec::new();
            for v in values {
                let (lo, hi) = v
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?)))
                    .filter(|(a, b)| a < b)
                    .ok_or_else(|| StageError::new(Stage::Usage, format!("window '{v}' is not lo:hi with lo < hi")))?;
                windows.push((lo, hi));
            }
            let report = run_pipeline(cfg, PipelineOptions { simulate: false }).report;
            let rows = windows
                .iter()
                .zip(values)
                .map(|((lo, hi), v)| {
                    let mut fields = BTreeMap::from([("lo".to_string(), *lo as f64), ("hi".to_string(), *hi as f64)]);
                    if let Some(k) = &report.kam {
                        fit_fields("shift", shift_fit(&k.shifts, *lo, *hi), &mut fields);
                    }
                    SweepRow {
                        value: v.clone(),
                        exit_code: report.exit_code(),
                        fields,
                    }
                })
                .collect();
            reports.push(report);
            rows
        }
    };
    Ok(SweepOutcome {
        axis,
        rows,
        summary,
        reports,
    })
}

fn screen_omegas(
    cfg: &ExperimentConfig,
    count: usize,
    opts: &SweepOptions,
    summary: &mut BTreeMap<String, f64>,
) -> Result<Vec<SweepRow>, StageError> {
    let n = cfg.perturbation.n_freq;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omegas: Vec<Vec<f64>> = (0..count).map(|_| (0..n).map(|_| rng.random_range(1.0..2.0)).collect()).collect();
    let basis = build_basis(cfg)?;
    let levels = first_order_levels(cfg, &basis)?;
    let f = &cfg.frequency;
    let k_mel = cfg.kam.k_cutoff.unwrap_or(cfg.perturbation.k_cutoff) * n;
    let rows = par_map(&omegas, opts.workers, |omega| {
        let mut fields = BTreeMap::new();
        for (d, w) in omega.iter().enumerate() {
            fields.insert(format!("omega_{d}"), *w);
        }
        let mut exit_code = 0;
        match check_diophantine(omega, f.gamma, f.tau, f.k_check) {
            Ok(scan) => {
                fields.insert("gamma_max".into(), scan.gamma_max);
                fields.insert("certified".into(), if scan.certified { 1.0 } else { 0.0 });
            }
            Err(_) => exit_code = Stage::Frequency.exit_code(),
        }
        let mel = check_second_melnikov(&levels, omega, f.gamma, f.tau, basis.d_exponent, k_mel);
        fields.insert("melnikov_violations".into(), mel.violations.len() as f64);
        fields.insert("melnikov_min_margin".into(), mel.min_margin);
        if opts.with_kam && exit_code == 0 {
            let mut c = cfg.clone();
            c.frequency.omega = OmegaSpec::Fixed { omega: omega.clone() };
            let report = run_pipeline(&c, PipelineOptions { simulate: false }).report;
            exit_code = report.exit_code();
            if let Some(k) = &report.kam {
                fields.insert("kam_steps".into(), k.steps as f64);
                fields.insert("final_residual".into(), k.final_residual);
            }
        }
        SweepRow {
            value: omega.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(" "),
            exit_code,
            fields,
        }
    });
    let certified = rows.iter().filter(|r| r.fields.get("certified") == Some(&1.0)).count();
    summary.insert("certified_fraction".into(), certified as f64 / count.max(1) as f64);
    Ok(rows)
}
