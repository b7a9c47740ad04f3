use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qpkam::diophantine::check_diophantine;
use qpkam_cli::artifacts::{read_report, spectrum_csv, write_files, write_run};
use qpkam_cli::config::ExperimentConfig;
use qpkam_cli::exit::{AtStage, Stage, StageError};
use qpkam_cli::pipeline::{build_basis, config_hash, run_pipeline, spectrum_summary, PipelineOptions, RunReport};
use qpkam_cli::presets;
use qpkam_cli::sweep::{run_sweep, SweepAxis, SweepOptions};

/// Kernel selection that gives correct dense eigensolvers with the system
/// OpenBLAS; it is read when the library loads, so it has to be in the
/// environment before the process starts.
const BLAS_ENV: (&str, &str) = ("OPENBLAS_CORETYPE", "Haswell");

#[derive(Parser)]
#[command(name = "qpkam", version, about = "Reducibility experiments for quasi-periodically driven anharmonic oscillators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Source {
    /// TOML experiment file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration name.
    #[arg(long)]
    preset: Option<String>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run outside the admissible symbol orders.
    #[arg(long)]
    allow_hypothesis_violation: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Stop after the reduction.
        #[arg(long)]
        no_simulate: bool,
    },
    /// Vary one parameter and tabulate the outcome.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// eps, gamma, omega-samples or j-window.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Monte Carlo samples per gamma.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Attempt the reduction for every screened frequency vector.
        #[arg(long)]
        with_kam: bool,
    },
    /// Scan a frequency vector for small divisors.
    CertifyOmega {
        #[arg(long, value_delimiter = ',', required = true)]
        omega: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        gamma: f64,
        #[arg(long, default_value_t = 2.0)]
        tau: f64,
        /// Largest |k|₁ scanned.
        #[arg(long, default_value_t = 20)]
        k: usize,
    },
    /// Compute the unperturbed spectrum only.
    Spectrum {
        #[command(flatten)]
        source: Source,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Summarize the results of a previous run.
    Report {
        #[arg(long, default_value = "out")]
        dir: PathBuf,
    },
}

fn load(source: &Source) -> Result<ExperimentConfig, StageError> {
    let text = match (&source.config, &source.preset) {
        (Some(path), None) => std::fs::read_to_string(path)
            .map_err(|e| StageError::new(Stage::Io, format!("{}: {e}", path.display())))?,
        (None, Some(name)) => presets::text(name)
            .ok_or_else(|| {
                StageError::new(
                    Stage::Usage,
                    format!("unknown preset '{name}' (known: {})", presets::names().join(", ")),
                )
            })?
            .to_string(),
        _ => return Err(StageError::new(Stage::Usage, "give exactly one of --config or --preset")),
    };
    let mut cfg = ExperimentConfig::from_toml_str_with(&text, source.allow_hypothesis_violation)?;
    if let Some(seed) = source.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn print_report(r: &RunReport) {
    println!("run {} (config {})", r.name, &r.config_sha256[..12]);
    if let Some(s) = &r.spectrum {
        let head: Vec<String> = s.eigenvalues.iter().take(4).map(|v| format!("{v:.6}")).collect();
        println!("  spectrum: {} modes, lowest [{}], d = {:.4}", s.n_modes, head.join(", "), s.d_exponent);
        if let Some(f) = &s.exponent_fit {
            println!("  fitted exponent {:.4}", f.d_est);
        }
    }
    if let Some(f) = &r.frequency {
        println!(
            "  omega = {:?}: gamma_max {:.3e}, certified {}, Melnikov violations {}",
            f.omega, f.diophantine.gamma_max, f.diophantine.certified, f.melnikov_violations
        );
    }
    if let Some(g) = &r.gauge {
        println!("  gauge: magnetic norm {:.3e} -> {:.3e}", g.magnetic_before, g.magnetic_after);
    }
    if let Some(k) = &r.kam {
        let hist: Vec<String> = k.eps_history.iter().map(|e| format!("{e:.2e}")).collect();
        println!("  reduction: {} steps, eps [{}], residual {:.2e}", k.steps, hist.join(", "), k.final_residual);
    }
    if let Some(s) = &r.simulation {
        println!("  simulation: dt {:.3e}, {} steps, norm drift {:.1e}", s.dt, s.steps, s.norm_drift);
        for n in &s.norms {
            println!("    H^{}: initial {:.4e}, trend {:+.3e}, max ratio {:.4}", n.s, n.initial, n.trend, n.max_ratio);
        }
        if let Some(c) = &s.comparison {
            println!("    reduced vs direct: {:.3e} (budget {:.1e})", c.max_deviation, c.budget);
        }
        if let Some(m) = &s.monodromy {
            println!("    monodromy mismatch on {} modes: {:.3e}", m.compared_modes, m.max_mismatch);
        }
    }
    if let Some(f) = &r.failure {
        println!("  FAILED at {:?} (exit {}): {}", f.stage, f.exit_code, f.message);
    }
}

fn execute(cli: Cli) -> Result<i32, StageError> {
    match cli.command {
        Command::Run { source, out, no_simulate } => {
            let cfg = load(&source)?;
            let arts = run_pipeline(&cfg, PipelineOptions { simulate: !no_simulate });
            write_run(&out, &cfg, &arts)?;
            print_report(&arts.report);
            Ok(arts.report.exit_code())
        }
        Command::Sweep {
            source,
            out,
            axis,
            values,
            samples,
            with_kam,
        } => {
            let cfg = load(&source)?;
            let axis: SweepAxis = axis.parse()?;
            let opts = SweepOptions {
                measure_samples: samples,
                with_kam,
                ..Default::default()
            };
            let outcome = run_sweep(&cfg, axis, &values, &opts)?;
            let hash = config_hash(&cfg);
            let mut files = BTreeMap::new();
            files.insert("config.toml".to_string(), cfg.to_toml_string());
            files.insert("sweep.csv".to_string(), outcome.to_csv(&hash));
            let mut json = serde_json::to_string_pretty(&serde_json::to_value(&outcome).expect("serializable"))
                .expect("serializable");
            json.push('\n');
            files.insert("sweep.json".to_string(), json);
            write_files(&out, &cfg.name, &hash, cfg.seed, 0, files)?;
            for row in &outcome.rows {
                let fields: Vec<String> = row.fields.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
                println!("{} [exit {}] {}", row.value, row.exit_code, fields.join(" "));
            }
            for (k, v) in &outcome.summary {
                println!("{k} = {v:.6}");
            }
            Ok(0)
        }
        Command::CertifyOmega { omega, gamma, tau, k } => {
            let scan = check_diophantine(&omega, gamma, tau, k).at(Stage::Frequency)?;
            println!("{}", serde_json::to_string_pretty(&scan).expect("serializable"));
            Ok(if scan.certified { 0 } else { Stage::Frequency.exit_code() })
        }
        Command::Spectrum { source, out } => {
            let cfg = load(&source)?;
            let basis = build_basis(&cfg)?;
            let report = RunReport {
                name: cfg.name.clone(),
                config_sha256: config_hash(&cfg),
                seed: cfg.seed,
                eps: cfg.perturbation.eps,
                spectrum: Some(spectrum_summary(&basis)),
                symbols: BTreeMap::new(),
                assembly: None,
                frequency: None,
                gauge: None,
                kam: None,
                simulation: None,
                failure: None,
            };
            let mut files = BTreeMap::new();
            files.insert("config.toml".to_string(), cfg.to_toml_string());
            files.insert("spectrum.csv".to_string(), spectrum_csv(&report).expect("spectrum present"));
            write_files(&out, &cfg.name, &report.config_sha256, cfg.seed, 0, files)?;
            print_report(&report);
            Ok(0)
        }
        Command::Report { dir } => {
            print_report(&read_report(Path::new(&dir))?);
            Ok(0)
        }
    }
}

/// Re-run the current executable with the BLAS kernel pinned, if needed.
fn reexec_with_blas_env() -> Option<i32> {
    if std::env::var_os(BLAS_ENV.0).is_some() {
        return None;
    }
    let exe = std::env::current_exe().ok()?;
    let status = std::process::Command::new(exe)
        .args(std::env::args_os().skip(1))
        .env(BLAS_ENV.0, BLAS_ENV.1)
        .status()
        .ok()?;
    Some(status.code().unwrap_or(1))
}

fn main() -> ExitCode {
    if let Some(code) = reexec_with_blas_env() {
        return ExitCode::from(code as u8);
    }
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { Stage::Usage.exit_code() } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
