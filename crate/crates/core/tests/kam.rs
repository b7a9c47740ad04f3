mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use qpkam::conjugation::{conjugate, ConjugationOptions};
use qpkam::kam::{
    eliminate_diagonal_time, homological_solve, kam_iterate, time_elimination_residual, DiagonalTimeSeries, KamParams,
    TimeElimination,
};
use qpkam::linalg::I;
use qpkam::phase::PhaseGrid;
use qpkam::qp::QPOperator;
use qpkam::{Error, C64};

use common::*;

fn params(k_cutoff: usize, tol: f64) -> KamParams {
    KamParams {
        k_cutoff,
        tol_final: tol,
        ..Default::default()
    }
}

#[test]
fn two_level_rotating_field_matches_closed_form() {
    let (l1, l2, a, omega) = (1.0, 2.7, 0.02, 1.3);
    let h = rotating_field(l1, l2, a, 8);
    let out = kam_iterate(&h, &[omega], &params(8, 1e-13)).unwrap();
    let exact = rotating_field_levels(l1, l2, a, omega);
    assert!(out.converged);
    for (got, want) in out.lambda_inf.iter().zip(exact) {
        assert_abs_diff_eq!(*got, want, epsilon = 1e-10);
    }
}

#[test]
fn reduced_family_is_constant_and_diagonal() {
    let mut r = rng(11);
    let mut h = random_hermitian_family(&mut r, 2, 2, 5, 1e-3);
    let levels = [1.0, 2.6, 4.5, 6.9, 9.7];
    for (j, l) in levels.iter().enumerate() {
        let z = h.zero_index();
        h.coeffs[[z, j, j]] += C64::new(*l, 0.0);
    }
    let omega = [1.324_717_957_244_746, 1.7548776662466927];
    let out = kam_iterate(&h, &omega, &params(8, 1e-11)).unwrap();
    let reduced = conjugate(&h, &out.unitary, &omega, &ConjugationOptions::default()).unwrap().operator;
    let target = QPOperator::diagonal(&out.lambda_inf, 2, reduced.k_cutoff);
    let dist = reduced.distance(&target).unwrap();
    assert!(dist < 1e-9, "{dist:e}");
    let thetas: Vec<f64> = out.records.iter().filter_map(|r| r.theta).collect();
    assert!(thetas.iter().all(|t| *t > 1.0), "{thetas:?}");
}

#[test]
fn per_step_and_final_time_elimination_agree() {
    let mut r = rng(3);
    let mut h = random_hermitian_family(&mut r, 1, 2, 4, 0.01);
    for (j, l) in [1.0, 3.1, 5.9, 9.4].iter().enumerate() {
        let z = h.zero_index();
        h.coeffs[[z, j, j]] += C64::new(*l, 0.0);
    }
    let omega = [std::f64::consts::SQRT_2];
    let a = kam_iterate(&h, &omega, &params(6, 1e-11)).unwrap();
    let mut p = params(6, 1e-11);
    p.time_elimination = TimeElimination::Final;
    let b = kam_iterate(&h, &omega, &p).unwrap();
    for (x, y) in a.lambda_inf.iter().zip(&b.lambda_inf) {
        assert_abs_diff_eq!(x, y, epsilon = 1e-9);
    }
}

#[test]
fn unperturbed_family_needs_no_step() {
    let h = QPOperator::diagonal(&[1.0, 2.5, 4.0], 2, 3);
    let out = kam_iterate(&h, &[1.2, 1.7], &KamParams::default()).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.lambda_inf, vec![1.0, 2.5, 4.0]);
    assert_eq!(out.final_residual, 0.0);
}

#[test]
fn exact_resonance_is_reported_with_its_location() {
    // λ₁ − λ₂ = ω: the coupling at k = −1 cannot be removed
    let h = rotating_field(2.0, 1.0, 0.01, 4);
    match kam_iterate(&h, &[1.0], &params(4, 1e-10)) {
        Err(Error::KamFailure { step, reason, .. }) => {
            assert_eq!(step, 1);
            assert!(reason.contains("small divisor"), "{reason}");
        }
        other => panic!("expected a reducibility failure, got {other:?}"),
    }
}

#[test]
fn diagonal_time_elimination_identity() {
    let mut r = rng(5);
    let mut h = random_hermitian_family(&mut r, 2, 3, 4, 0.05);
    // keep only the diagonal
    for b in 0..h.n_boxes() {
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    h.coeffs[[b, i, j]] = C64::new(0.0, 0.0);
                }
            }
        }
    }
    let base = [1.0, 2.0, 3.5, 5.0];
    let mu = DiagonalTimeSeries::from_operator(&h, &base);
    let omega = [1.1, 1.618_033_988_749_895];
    let res = eliminate_diagonal_time(&mu, &omega, 1e-3, 2.0, 0.0).unwrap();
    let grid = PhaseGrid::for_cutoff(2, 3);
    assert!(time_elimination_residual(&mu, &res.c, &omega, &grid).unwrap() < 1e-13);

    // conjugating diag(base) + μ by e^{−ic} leaves the constant diag(λ⁽⁰⁾)
    let mut full = h.clone();
    let z = full.zero_index();
    for (j, b) in base.iter().enumerate() {
        full.coeffs[[z, j, j]] += C64::new(*b, 0.0);
    }
    let flat = conjugate(&full, &res.unitary, &omega, &ConjugationOptions::default()).unwrap().operator;
    let target = QPOperator::diagonal(&res.lambda0, 2, flat.k_cutoff);
    assert!(flat.distance(&target).unwrap() < 1e-10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn homological_equation_holds_entrywise(seed in 0u64..1000, w in 1.0f64..2.0) {
        let mut r = rng(seed);
        let p = random_hermitian_family(&mut r, 1, 3, 4, 1e-2);
        let diag = [0.3, 1.9, 4.2, 7.7];
        let omega = [w];
        let prm = KamParams { gamma: 1e-6, ..Default::default() };
        match homological_solve(&diag, &p, &omega, &prm) {
            Ok(x) => {
                for b in 0..p.n_boxes() {
                    let wk = p.mode_at(b).dot(&omega);
                    for i in 0..4 {
                        for j in 0..4 {
                            if i == j && b == p.zero_index() {
                                prop_assert_eq!(x.coeffs[[b, i, j]], C64::new(0.0, 0.0));
                                continue;
                            }
                            let lhs = I * (wk + diag[i] - diag[j]) * x.coeffs[[b, i, j]];
                            prop_assert!((lhs - p.coeffs[[b, i, j]]).norm() < 1e-12);
                        }
                    }
                }
                // the generator of a hermitian perturbation is hermitian
                prop_assert!(x.hermitian_defect() < 1e-12);
            }
            Err(Error::SmallDivisor { divisor, floor, .. }) => prop_assert!(divisor < floor),
            Err(e) => return Err(TestCaseError::fail(format!("{e}"))),
        }
    }
}

#[test]
fn smoothness_fit_recovers_a_classical_profile() {
    use qpkam::kam::{fit_diagonal_smoothness, FitBasis};
    // μ_{j,k} = a u^β + b u^{β−2} with u = λ^{1/(2ℓ)}
    let ell = 2.0;
    let beta = 2.5;
    let lambdas: Vec<f64> = (0..40).map(|j| (j as f64 + 0.5).powf(4.0 / 3.0) * 1.37).collect();
    let h = QPOperator::zeros(1, 1, 40);
    let mut mu = DiagonalTimeSeries::from_operator(&h, &lambdas);
    let plus = h.index_of(&qpkam::qp::Mode(vec![1])).unwrap();
    for (j, l) in lambdas.iter().enumerate() {
        let u = l.powf(1.0 / (2.0 * ell));
        mu.mu[[j, plus]] = C64::new(0.3 * u.powf(beta) - 0.8 * u.powf(beta - 2.0), 0.1 * u.powf(beta));
    }
    let fit = fit_diagonal_smoothness(&mu, &lambdas, ell, &FitBasis::Classical { beta, terms: 2 }, (5, 35)).unwrap();
    let k = qpkam::qp::Mode(vec![1]);
    let m = fit.modes.iter().find(|m| m.k == k).unwrap();
    assert_abs_diff_eq!(m.coefficients_re[0], 0.3, epsilon = 1e-10);
    assert_abs_diff_eq!(m.coefficients_re[1], -0.8, epsilon = 1e-10);
    assert_abs_diff_eq!(m.coefficients_im[0], 0.1, epsilon = 1e-10);
    let e = lambdas[20];
    let u = e.powf(0.25);
    assert_abs_diff_eq!(fit.value_at(&k, e).unwrap().re, 0.3 * u.powf(beta) - 0.8 * u.powf(beta - 2.0), epsilon = 1e-9);
    assert!(fit_diagonal_smoothness(&mu, &lambdas, ell, &FitBasis::Polynomial { degree: 2 }, (5, 10)).is_err());
}
