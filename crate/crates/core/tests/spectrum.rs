use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use qpkam::spectral_basis::{
    build_h0, eigendecompose, fit_eigenvalue_exponent, relative_spectrum_change, Backend, DiscretizationParams,
    EigenBasis, LowerTerm, PotentialSpec, SobolevWeights,
};
use qpkam::C64;

fn basis(ell: f64, halfwidth: f64, grid_points: usize, n_modes: usize, backend: Backend) -> EigenBasis {
    let spec = PotentialSpec::pure(ell, halfwidth);
    let disc = DiscretizationParams {
        grid_points,
        n_modes,
        backend,
    };
    eigendecompose(&build_h0(&spec, &disc).unwrap(), n_modes).unwrap()
}

#[test]
fn hermite_backend_reproduces_harmonic_levels() {
    let b = basis(1.0, 12.0, 2049, 120, Backend::Hermite { basis_size: 360, scale: 1.0 });
    for j in 0..60 {
        assert_abs_diff_eq!(b.eigenvalues[j], 2.0 * j as f64 + 1.0, epsilon = 1e-8);
    }
    assert_eq!(b.d_exponent, 1.0);
}

#[test]
fn sinc_grid_reproduces_harmonic_levels() {
    let b = basis(1.0, 10.0, 401, 20, Backend::Sinc);
    for j in 0..20 {
        assert_abs_diff_eq!(b.eigenvalues[j], 2.0 * j as f64 + 1.0, epsilon = 1e-8);
    }
    assert!(b.quadrature_defect < 1e-10);
    assert!(b.max_relative_residual < 1e-10);
}

#[test]
fn quartic_levels_agree_across_backends() {
    let grid = basis(2.0, 8.0, 769, 30, Backend::Sinc);
    let herm = basis(2.0, 8.0, 769, 30, Backend::Hermite { basis_size: 300, scale: 2.0 });
    for j in 0..30 {
        assert_abs_diff_eq!(grid.eigenvalues[j], herm.eigenvalues[j], epsilon = 1e-8 * herm.eigenvalues[j]);
    }
    // ground state of −∂² + x⁴
    assert_abs_diff_eq!(grid.eigenvalues[0], 1.0603620904841829, epsilon = 1e-10);
}

#[test]
fn finite_differences_converge_at_second_order() {
    let exact = 1.0603620904841829;
    let e1 = basis(2.0, 6.0, 241, 1, Backend::FiniteDifference).eigenvalues[0] - exact;
    let e2 = basis(2.0, 6.0, 481, 1, Backend::FiniteDifference).eigenvalues[0] - exact;
    let ratio = e1 / e2;
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn eigenvalue_growth_exponents() {
    for (ell, halfwidth) in [(2.0, 8.0), (3.0, 6.0)] {
        let b = basis(ell, halfwidth, 769, 60, Backend::Sinc);
        let fit = fit_eigenvalue_exponent(&b, 15, 48).unwrap();
        let expected = 2.0 * ell / (ell + 1.0);
        assert!((fit.d_est - expected).abs() <= 0.05 * expected, "ell {ell}: {}", fit.d_est);
        assert_eq!(b.d_exponent, expected);
    }
}

#[test]
fn modes_are_orthonormal_with_alternating_parity() {
    let b = basis(2.0, 8.0, 769, 40, Backend::Sinc);
    let gram = b.modes.t().dot(&b.modes);
    for i in 0..40 {
        for j in 0..40 {
            let target = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(gram[[i, j]], target, epsilon = 1e-12);
        }
        assert!(b.parity_defect(i) < 1e-8);
    }
    assert!(b.eigenvalues.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn lower_order_terms_shift_the_spectrum() {
    let mut spec = PotentialSpec::pure(2.0, 8.0);
    spec.lower_terms.push(LowerTerm {
        degree: 2.0,
        coefficient: 1.0,
    });
    let disc = DiscretizationParams {
        grid_points: 769,
        n_modes: 20,
        backend: Backend::Sinc,
    };
    let shifted = eigendecompose(&build_h0(&spec, &disc).unwrap(), 20).unwrap();
    let pure = basis(2.0, 8.0, 769, 20, Backend::Sinc);
    assert!(shifted.eigenvalues.iter().zip(&pure.eigenvalues).all(|(a, b)| a > b));
    assert!(relative_spectrum_change(&shifted, &pure, 20) > 0.0);
}

#[test]
fn invalid_discretizations_are_rejected() {
    let spec = PotentialSpec::pure(2.0, 8.0);
    let too_many = DiscretizationParams {
        grid_points: 33,
        n_modes: 40,
        backend: Backend::Sinc,
    };
    assert!(build_h0(&spec, &too_many).and_then(|h| eigendecompose(&h, 40)).is_err());
    let bad_scale = DiscretizationParams {
        grid_points: 129,
        n_modes: 4,
        backend: Backend::Hermite { basis_size: 40, scale: 0.0 },
    };
    assert!(build_h0(&spec, &bad_scale).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sobolev_norms_increase_with_the_index(
        coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 6),
        s in 0.0f64..3.0,
        ds in 0.01f64..2.0,
    ) {
        let lambdas = [1.06, 3.8, 7.46, 11.6, 16.26, 21.24];
        let c: Vec<C64> = coeffs.iter().map(|(a, b)| C64::new(*a, *b)).collect();
        let lo = SobolevWeights::new(&lambdas, 2.0, s).norm(&c);
        let hi = SobolevWeights::new(&lambdas, 2.0, s + ds).norm(&c);
        prop_assert!(hi >= lo);
        let l2: f64 = c.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assert!((SobolevWeights::new(&lambdas, 2.0, 0.0).norm(&c) - l2).abs() <= 1e-14 * (1.0 + l2));
    }
}
