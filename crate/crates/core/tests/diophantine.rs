use proptest::prelude::*;

use qpkam::diophantine::{
    check_diophantine, check_second_melnikov, measure_curve, melnikov_bound, sample_gamma_max, FrequencyVector,
};
use qpkam::qp::Mode;
use qpkam::stats::proportional_fit;

#[test]
fn badly_approximable_vector_is_certified() {
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let scan = check_diophantine(&[1.0, golden], 0.1, 2.0, 40).unwrap();
    assert!(scan.certified);
    assert!(scan.gamma_max >= 0.1);
}

#[test]
fn rational_relation_is_found() {
    let scan = check_diophantine(&[1.2, 1.8], 1e-3, 2.0, 10).unwrap();
    assert!(!scan.certified);
    assert!(scan.gamma_max < 1e-12);
    let v = scan.first_violation.unwrap();
    assert_eq!(v.k.l1(), 5);
}

#[test]
fn frequency_vectors_live_in_the_unit_cube_shifted_by_one() {
    assert!(FrequencyVector::new(vec![1.5, 1.9]).is_ok());
    assert!(FrequencyVector::new(vec![0.5, 1.9]).is_err());
    assert!(FrequencyVector::new(vec![]).is_err());
}

#[test]
fn excluded_measure_is_linear_in_gamma() {
    let gammas = [0.002, 0.005, 0.01, 0.02, 0.05];
    let fractions = measure_curve(&gammas, 2.0, 2, 20, 100_000, 7);
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    let fit = proportional_fit(&gammas, &fractions).unwrap();
    assert!(fit.r_squared >= 0.9, "{fit:?}");
}

#[test]
fn sampling_is_reproducible() {
    assert_eq!(sample_gamma_max(2.0, 2, 10, 50, 3), sample_gamma_max(2.0, 2, 10, 50, 3));
    assert_ne!(sample_gamma_max(2.0, 2, 10, 50, 3), sample_gamma_max(2.0, 2, 10, 50, 4));
}

#[test]
fn planted_second_order_resonance_is_reported() {
    let omega = [1.3, 1.7];
    // λ₁ − λ₀ = ω·(1, 1)
    let lambdas = [1.0, 4.0, 7.3];
    let report = check_second_melnikov(&lambdas, &omega, 1e-3, 2.0, 4.0 / 3.0, 3);
    assert!(report.violations.iter().any(|v| v.i == 0 && v.j == 1 && v.k == Mode(vec![1, 1])));
    assert!(report.min_margin < 0.0);
    assert!(report.min_divisor < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diophantine_constant_scales_with_the_vector(w1 in 1.0f64..2.0, w2 in 1.0f64..2.0, c in 1.0f64..1.9) {
        prop_assume!(w1 * c <= 2.0 && w2 * c <= 2.0);
        let a = check_diophantine(&[w1, w2], 1e-3, 2.0, 12).unwrap().gamma_max;
        let b = check_diophantine(&[c * w1, c * w2], 1e-3, 2.0, 12).unwrap().gamma_max;
        prop_assert!((b - c * a).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn melnikov_bound_is_symmetric_and_decreasing(i in 0usize..50, j in 0usize..50, k in 0i64..6) {
        let m = Mode(vec![k, 1]);
        let wider = Mode(vec![k + 1, 1]);
        let b = melnikov_bound(1e-3, 2.0, 1.3, i, j, &m);
        prop_assert_eq!(b, melnikov_bound(1e-3, 2.0, 1.3, j, i, &m));
        prop_assert!(melnikov_bound(1e-3, 2.0, 1.3, i, j, &wider) < b);
    }
}
