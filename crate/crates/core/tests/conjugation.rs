mod common;

use ndarray::Array2;
use proptest::prelude::*;

use qpkam::conjugation::{conjugate, exp_divided_difference, ConjugationOptions, QPUnitary};
use qpkam::linalg::{adjoint, max_abs, propagator};
use qpkam::qp::{Mode, QPOperator};
use qpkam::C64;

use common::*;

#[test]
fn rotating_frame_removes_the_phase_dependence() {
    let (l1, l2, a, w) = (0.7, 1.9, 0.3, 1.25);
    let h = rotating_field(l1, l2, a, 1);
    let mut coeffs = QPOperator::zeros(1, 1, 2);
    let z = coeffs.zero_index();
    coeffs.coeffs[[z, 0, 0]] = C64::new(1.0, 0.0);
    let one = coeffs.index_of(&Mode(vec![1])).unwrap();
    coeffs.coeffs[[one, 1, 1]] = C64::new(1.0, 0.0);
    let u = QPUnitary::Fourier { coeffs };
    let out = conjugate(&h, &u, &[w], &ConjugationOptions::default()).unwrap().operator;
    let mut expected = QPOperator::zeros(1, out.k_cutoff, 2);
    let z = expected.zero_index();
    expected.coeffs[[z, 0, 0]] = C64::new(l1, 0.0);
    expected.coeffs[[z, 1, 1]] = C64::new(l2 + w, 0.0);
    expected.coeffs[[z, 0, 1]] = C64::new(a, 0.0);
    expected.coeffs[[z, 1, 0]] = C64::new(a, 0.0);
    assert!(out.distance(&expected).unwrap() < 1e-13);
}

#[test]
fn constant_unitary_acts_by_similarity() {
    let mut r = rng(1);
    let g = random_hermitian_family(&mut r, 2, 0, 4, 0.4);
    let h = random_hermitian_family(&mut r, 2, 2, 4, 1.0);
    let u = QPUnitary::Exponential { generator: g.clone() };
    let out = conjugate(&h, &u, &[1.1, 1.7], &ConjugationOptions::default()).unwrap().operator;
    // U = e^{iG}, built independently from the constant coefficient
    let uc = propagator(g.coeff_at(g.zero_index()), -1.0).unwrap();
    for idx in 0..h.n_boxes() {
        let k = h.mode_at(idx);
        let expected = adjoint(uc.view()).dot(&h.coeff_at(idx)).dot(&uc);
        let got = out.coeff(&k).unwrap();
        assert!(max_abs((&got - &expected).view()) < 1e-12);
    }
}

#[test]
fn divided_difference_is_continuous_on_the_diagonal() {
    let a = 0.37;
    let exact = C64::new(0.0, 1.0) * C64::from_polar(1.0, a);
    for h in [1e-3, 1e-6, 1e-9, 0.0] {
        assert!((exp_divided_difference(a + h, a) - exact).norm() < 2e-3 * h.max(1e-12) / 1e-3 + 1e-12);
    }
    let (x, y) = (1.3, -0.4);
    let direct = (C64::from_polar(1.0, x) - C64::from_polar(1.0, y)) / (x - y);
    assert!((exp_divided_difference(x, y) - direct).norm() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn conjugation_round_trip_restores_the_family(seed in 0u64..10_000, w1 in 1.0f64..2.0, w2 in 1.0f64..2.0) {
        let mut r = rng(seed);
        let h = random_hermitian_family(&mut r, 2, 2, 5, 1.0);
        let g = random_hermitian_family(&mut r, 2, 1, 5, 0.2);
        let u = QPUnitary::Exponential { generator: g };
        let omega = [w1, w2];
        let opts = ConjugationOptions::default();
        let there = conjugate(&h, &u, &omega, &opts).unwrap();
        let back = conjugate(&there.operator, &u.inverse().unwrap(), &omega, &opts).unwrap().operator;
        prop_assert!(back.distance(&h).unwrap() < 1e-8);
        prop_assert!(there.operator.hermitian_defect() < 1e-10);
    }

    #[test]
    fn unitaries_stay_unitary(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let g = random_hermitian_family(&mut r, 2, 2, 6, 0.5);
        let u = QPUnitary::Product(vec![
            QPUnitary::Exponential { generator: g.clone() },
            QPUnitary::Exponential { generator: g.scale(C64::new(0.5, 0.0)) }.inverse().unwrap(),
        ]);
        let phases: Vec<Vec<f64>> = (0..5).map(|p| vec![0.7 * p as f64, 1.3 * p as f64]).collect();
        prop_assert!(u.unitarity_defect(&phases).unwrap() < 1e-12);
    }
}

#[test]
fn identity_conjugation_is_exact() {
    let mut r = rng(9);
    let h = random_hermitian_family(&mut r, 1, 3, 3, 1.0);
    let out = conjugate(&h, &QPUnitary::identity(3, 1), &[1.5], &ConjugationOptions::default()).unwrap().operator;
    assert!(out.distance(&h).unwrap() < 1e-14);
    let zero: Array2<C64> = Array2::zeros((3, 3));
    assert_eq!(out.coeff(&Mode(vec![4])).map(|c| c.to_owned()).unwrap_or(zero.clone()), zero);
}
