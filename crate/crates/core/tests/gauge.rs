use approx::assert_abs_diff_eq;

use qpkam::conjugation::{apply_gauge, gauge_b};
use qpkam::qp::Mode;
use qpkam::spectral_basis::{build_h0, eigendecompose, Backend, DiscretizationParams, EigenBasis, PotentialSpec};
use qpkam::symbols::{assemble_hamiltonian, Profile, QPSymbol};
use qpkam::Error;

fn quartic(n: usize) -> EigenBasis {
    let spec = PotentialSpec::pure(2.0, 8.0);
    let disc = DiscretizationParams {
        grid_points: 769,
        n_modes: n,
        backend: Backend::Sinc,
    };
    eigendecompose(&build_h0(&spec, &disc).unwrap(), n).unwrap()
}

fn symbols() -> (QPSymbol, QPSymbol) {
    let w0 = QPSymbol::new(1, 2.5)
        .with_static(0.5, Profile::JapanesePower { beta: 2.5 })
        .with_cos(Mode(vec![1]), 1.0, Profile::JapanesePower { beta: 2.5 });
    let w1 = QPSymbol::new(1, 1.0).with_cos(Mode(vec![1]), 1.0, Profile::JapanesePower { beta: 1.0 });
    (w0, w1)
}

#[test]
fn primitive_matches_the_closed_form_antiderivative() {
    let b = quartic(4);
    let (_, w1) = symbols();
    let prim = gauge_b(&w1, &b.grid);
    let k = Mode(vec![1]);
    // each of cos φ = (e^{iφ} + e^{−iφ})/2 carries half of ∫₀ˣ ⟨y⟩ dy
    let exact = |x: f64| 0.25 * (x * (1.0 + x * x).sqrt() + x.asinh());
    for &x in b.grid.points.iter().step_by(37) {
        assert_abs_diff_eq!(prim.coefficient(&k, x).re, exact(x), epsilon = 1e-6 * (1.0 + exact(x).abs()));
        assert_abs_diff_eq!(prim.coefficient(&k, x).im, 0.0, epsilon = 1e-15);
    }
}

#[test]
fn gauge_removes_the_magnetic_term() {
    let basis = quartic(30);
    let (w0, w1) = symbols();
    let eps = 1e-3;
    let omega = [1.37];
    let h = assemble_hamiltonian(eps, &w0, &w1, &basis, 5).unwrap();
    assert!(h.hermitian_defect() < 1e-12);
    let b = gauge_b(&w1, &basis.grid);
    let g = apply_gauge(&h, &b, eps, &omega, &basis, &w0, &w1, 1.0).unwrap();
    assert!(g.magnetic_before > 1e-3);
    assert!(g.magnetic_after / g.magnetic_before < 1e-8, "{:e}", g.magnetic_after / g.magnetic_before);
    assert!(g.formula_deviation < 1e-9);
    assert!(g.h1.hermitian_defect() < 1e-12);
}

#[test]
fn gauge_refuses_fields_above_the_admissible_order() {
    let basis = quartic(6);
    let (w0, w1) = symbols();
    let h = assemble_hamiltonian(1e-3, &w0, &w1, &basis, 5).unwrap();
    let b = gauge_b(&w1, &basis.grid);
    let err = apply_gauge(&h, &b, 1e-3, &[1.3], &basis, &w0, &w1, 2.5).unwrap_err();
    assert!(matches!(err, Error::Hypothesis(_)));
}
