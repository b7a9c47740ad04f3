//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any fails.

use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qpkam::conjugation::{conjugate, ConjugationOptions, QPUnitary};
use qpkam::diophantine::measure_curve;
use qpkam::kam::{
    eliminate_diagonal_time, kam_iterate, time_elimination_residual, DiagonalTimeSeries, KamParams,
};
use qpkam::linalg::eigvalsh;
use qpkam::phase::PhaseGrid;
use qpkam::qp::{Mode, QPOperator};
use qpkam::spectral_basis::{
    build_h0, eigendecompose, fit_eigenvalue_exponent, Backend, DiscretizationParams, PotentialSpec,
};
use qpkam::stats::proportional_fit;
use qpkam::symbols::combined_order;
use qpkam::C64;

use qpkam_cli::config::ExperimentConfig;
use qpkam_cli::exit::Stage;
use qpkam_cli::pipeline::{run_pipeline, PipelineOptions, RunReport};
use qpkam_cli::presets;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn spectral_scaling() -> Verdict {
    let start = Instant::now();
    let harmonic = {
        let spec = PotentialSpec::pure(1.0, 12.0);
        let disc = DiscretizationParams {
            grid_points: 2049,
            n_modes: 120,
            backend: Backend::Hermite { basis_size: 360, scale: 1.0 },
        };
        eigendecompose(&build_h0(&spec, &disc).unwrap(), 120).unwrap()
    };
    let harmonic_err = (0..60)
        .map(|j| (harmonic.eigenvalues[j] - (2 * j + 1) as f64).abs())
        .fold(0.0, f64::max);
    let mut pass = harmonic_err <= 1e-8;
    let mut detail = format!("harmonic max error {harmonic_err:.1e}");
    for (ell, halfwidth) in [(2.0, 8.0), (3.0, 6.0)] {
        let spec = PotentialSpec::pure(ell, halfwidth);
        let disc = DiscretizationParams {
            grid_points: 769,
            n_modes: 60,
            backend: Backend::Sinc,
        };
        let b = eigendecompose(&build_h0(&spec, &disc).unwrap(), 60).unwrap();
        let fit = fit_eigenvalue_exponent(&b, 15, 48).unwrap();
        let expected = 2.0 * ell / (ell + 1.0);
        let rel = (fit.d_est - expected).abs() / expected;
        pass &= rel <= 0.05;
        detail += &format!("; ell={ell} exponent {:.4} vs {expected:.4}", fit.d_est);
    }
    let secs = start.elapsed().as_secs_f64();
    pass &= secs <= 30.0;
    verdict(pass, format!("{detail}; {secs:.1} s"))
}

fn gauge_removal(r: &RunReport) -> Verdict {
    match &r.gauge {
        Some(g) => verdict(g.magnetic_ratio <= 1e-8, format!("magnetic norm ratio {:.2e}", g.magnetic_ratio)),
        None => verdict(false, "no gauge result"),
    }
}

fn kam_convergence(r: &RunReport) -> Verdict {
    let Some(k) = &r.kam else {
        return verdict(false, "reduction did not complete");
    };
    let thetas: Vec<f64> = k.records.iter().filter_map(|s| s.theta).collect();
    let consecutive = thetas.windows(2).any(|w| w[0] >= 1.5 && w[1] >= 1.5);
    verdict(
        consecutive && k.final_residual <= 1e-10,
        format!("theta {:?}, final residual {:.2e}", thetas.iter().map(|t| format!("{t:.2}")).collect::<Vec<_>>(), k.final_residual),
    )
}

fn shift_law(base: &RunReport, cfg: &ExperimentConfig) -> Verdict {
    let mut reports = vec![base.clone()];
    for eps in [3e-4, 1e-4] {
        let mut c = cfg.clone();
        c.perturbation.eps = eps;
        reports.push(run_pipeline(&c, PipelineOptions { simulate: false }).report);
    }
    if reports.iter().any(|r| r.kam.is_none()) {
        return verdict(false, "reduction failed for part of the sweep");
    }
    let p = &cfg.perturbation;
    let bound = combined_order(p.beta0, p.beta1) / (cfg.potential.ell + 1.0) + 0.1;
    let slope = base.kam.as_ref().unwrap().shift_fit.map(|f| f.slope).unwrap_or(f64::INFINITY);
    let n = cfg.discretization.n_modes;
    let mut spread: f64 = 1.0;
    for j in 10..=(4 * n) / 5 {
        let per_eps: Vec<f64> = reports.iter().map(|r| r.kam.as_ref().unwrap().shifts[j] / r.eps).collect();
        let max = per_eps.iter().cloned().fold(0.0, f64::max);
        let min = per_eps.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = spread.max(max / min);
    }
    verdict(
        slope <= bound && spread <= 1.15,
        format!("slope {slope:.3} (bound {bound:.3}), shift/eps spread {:.2}%", 100.0 * (spread - 1.0)),
    )
}

fn reduced_dynamics(r: &RunReport, n1: &RunReport) -> Verdict {
    let cmp = r.simulation.as_ref().and_then(|s| s.comparison.as_ref());
    let mono = n1.simulation.as_ref().and_then(|s| s.monodromy.as_ref());
    match (cmp, mono) {
        (Some(c), Some(m)) => verdict(
            c.max_deviation <= c.budget && m.max_mismatch <= 1e-6 && n1.failure.is_none(),
            format!(
                "max deviation {:.2e} (budget {:.0e}); single-frequency quasi-energy mismatch {:.2e}",
                c.max_deviation, c.budget, m.max_mismatch
            ),
        ),
        _ => verdict(false, "comparison or monodromy missing"),
    }
}

fn h2_trend(r: &RunReport) -> Option<(f64, f64)> {
    let n = r.simulation.as_ref()?.norms.iter().find(|n| n.s == 2.0)?;
    Some((n.trend, n.initial))
}

fn sobolev_growth(certified: &RunReport, resonant: &RunReport) -> Verdict {
    let (Some((tc, ic)), Some((tr, _))) = (h2_trend(certified), h2_trend(resonant)) else {
        return verdict(false, "missing norm series");
    };
    let reduction_failed = resonant.failure.as_ref().map(|f| f.stage) == Some(Stage::Kam);
    verdict(
        tc.abs() <= 0.02 * ic && tr > 0.0 && tr >= 10.0 * tc.abs() && reduction_failed,
        format!(
            "certified trend {tc:+.2e} (limit {:.2e}); resonant trend {tr:+.2e} ({:.0}x), reduction failed: {reduction_failed}",
            0.02 * ic,
            tr / tc.abs()
        ),
    )
}

fn measure_estimate(cfg: &ExperimentConfig) -> Verdict {
    let gammas = [0.002, 0.005, 0.01, 0.02, 0.05];
    let f = &cfg.frequency;
    let fractions = measure_curve(&gammas, f.tau, cfg.perturbation.n_freq, f.k_check, 100_000, cfg.seed);
    let fit = proportional_fit(&gammas, &fractions).unwrap();
    verdict(fit.r_squared >= 0.9, format!("slope {:.3}, R^2 {:.4}", fit.slope, fit.r_squared))
}

fn random_family(rng: &mut ChaCha8Rng, n_freq: usize, k_max: usize, dim: usize, scale: f64) -> QPOperator {
    let mut h = QPOperator::zeros(n_freq, k_max, dim);
    for idx in 0..h.n_boxes() {
        let k = h.mode_at(idx);
        if k.is_zero() || k.is_canonical() {
            let c = Array2::from_shape_fn((dim, dim), |_| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
            });
            h.add_pair(&k, c.view()).unwrap();
        }
    }
    h
}

fn conjugation_oracles() -> Verdict {
    // two-level rotating field: exactly reducible through the frame diag(1, e^{iφ})
    let (l1, l2, a, w) = (1.0, 2.7, 0.02, 1.3);
    let mut h = QPOperator::diagonal(&[l1, l2], 1, 8);
    let mut c = Array2::zeros((2, 2));
    c[[1, 0]] = C64::new(a, 0.0);
    h.add_pair(&Mode(vec![1]), c.view()).unwrap();
    let params = KamParams {
        k_cutoff: 8,
        tol_final: 1e-13,
        ..Default::default()
    };
    let out = kam_iterate(&h, &[w], &params).unwrap();
    let k = Array2::from_shape_vec(
        (2, 2),
        vec![C64::new(l1, 0.0), C64::new(a, 0.0), C64::new(a, 0.0), C64::new(l2 + w, 0.0)],
    )
    .unwrap();
    let e = eigvalsh(k.view()).unwrap();
    let oracle_err = (out.lambda_inf[0] - e[0]).abs().max((out.lambda_inf[1] - (e[1] - w)).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let fam = random_family(&mut rng, 2, 2, 6, 1.0);
    let u = QPUnitary::Exponential {
        generator: random_family(&mut rng, 2, 1, 6, 0.2),
    };
    let omega = [1.21, 1.73];
    let opts = ConjugationOptions::default();
    let there = conjugate(&fam, &u, &omega, &opts).unwrap().operator;
    let back = conjugate(&there, &u.inverse().unwrap(), &omega, &opts).unwrap().operator;
    let round_trip = back.distance(&fam).unwrap();

    let mut diag = random_family(&mut rng, 2, 3, 5, 0.05);
    for b in 0..diag.n_boxes() {
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    diag.coeffs[[b, i, j]] = C64::new(0.0, 0.0);
                }
            }
        }
    }
    let mu = DiagonalTimeSeries::from_operator(&diag, &[1.0, 2.0, 3.0, 4.0, 5.0]);
    let elim = eliminate_diagonal_time(&mu, &omega, 1e-3, 2.0, 0.0).unwrap();
    let identity = time_elimination_residual(&mu, &elim.c, &omega, &PhaseGrid::for_cutoff(2, 3)).unwrap();

    verdict(
        oracle_err <= 1e-10 && round_trip <= 1e-8 && identity <= 1e-12,
        format!("two-level oracle {oracle_err:.1e}, round trip {round_trip:.1e}, time elimination {identity:.1e}"),
    )
}

fn hypothesis_gate() -> Verdict {
    let base = presets::text("duffing-l2").unwrap();
    let too_rough = base.replacen("beta0 = 2.5", "beta0 = 3.5", 1);
    let too_strong = base.replacen("beta1 = 1.0", "beta1 = 2.5", 1);
    let rejected = [&too_rough, &too_strong]
        .iter()
        .all(|t| ExperimentConfig::from_toml_str(t).map_err(|e| e.stage) == Err(Stage::Hypothesis));
    let overridden = ExperimentConfig::from_toml_str_with(&too_rough, true).is_ok();
    let exit = Stage::Hypothesis.exit_code();
    verdict(
        rejected && overridden && exit == 3,
        format!("violations rejected: {rejected}, override honoured: {overridden}, exit code {exit}"),
    )
}

fn main() {
    let start = Instant::now();
    let cfg = presets::load("duffing-l2").unwrap();
    let certified = run_pipeline(&cfg, PipelineOptions::default()).report;
    let resonant = run_pipeline(&presets::load("resonant-control").unwrap(), PipelineOptions::default()).report;
    let single = run_pipeline(&presets::load("duffing-l2-n1").unwrap(), PipelineOptions::default()).report;

    let results = [
        ("spectral scaling", spectral_scaling()),
        ("gauge removal", gauge_removal(&certified)),
        ("superexponential convergence", kam_convergence(&certified)),
        ("eigenvalue shift law", shift_law(&certified, &cfg)),
        ("reduced dynamics", reduced_dynamics(&certified, &single)),
        ("bounded Sobolev norms", sobolev_growth(&certified, &resonant)),
        ("frequency measure", measure_estimate(&cfg)),
        ("conjugation oracles", conjugation_oracles()),
        ("hypothesis gate", hypothesis_gate()),
    ];
    let mut failed = 0;
    for (i, (name, v)) in results.iter().enumerate() {
        println!("criterion {} {name}: {} ({})", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} of {} passed in {:.0} s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
