mod common;

use ndarray::{array, Array1};

use qpkam::floquet::{
    exact_constant_evolution, match_quasienergies, monodromy_quasienergies, propagate, wrap, Integrator,
    PropagateOptions,
};
use qpkam::linalg::propagator;
use qpkam::qp::QPOperator;
use qpkam::C64;

use common::*;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Exact solution of the rotating field: `ψ(t) = diag(1, e^{iωt}) e^{−iK t} ψ₀`
/// with `K = [[λ₁, a], [a, λ₂ + ω]]`.
fn rotating_field_state(l1: f64, l2: f64, a: f64, w: f64, psi0: &Array1<C64>, t: f64) -> Array1<C64> {
    let k = array![[c(l1), c(a)], [c(a), c(l2 + w)]];
    let chi = propagator(k.view(), t).unwrap().dot(psi0);
    array![chi[0], chi[1] * C64::from_polar(1.0, w * t)]
}

fn final_error(integrator: Integrator, dt: f64) -> f64 {
    let (l1, l2, a, w) = (0.5, 1.7, 0.4, 1.3);
    let h = rotating_field(l1, l2, a, 1);
    let psi0 = array![c(0.6), C64::new(0.0, 0.8)];
    let t = 3.0;
    let opts = PropagateOptions {
        integrator,
        dt: Some(dt),
        stored_samples: 1,
        ..Default::default()
    };
    let traj = propagate(&h, &[w], &psi0, t, &opts).unwrap();
    let exact = rotating_field_state(l1, l2, a, w, &psi0, t);
    let last = traj.states.last().unwrap();
    (last - &exact).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn midpoint_rule_is_second_order() {
    let ratio = final_error(Integrator::Midpoint, 0.02) / final_error(Integrator::Midpoint, 0.01);
    assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn magnus_rule_is_fourth_order() {
    let ratio = final_error(Integrator::Magnus4, 0.04) / final_error(Integrator::Magnus4, 0.02);
    assert!((14.0..=18.0).contains(&ratio), "ratio {ratio}");
    assert!(final_error(Integrator::Magnus4, 0.01) < 1e-8);
}

#[test]
fn constant_family_follows_the_exact_exponential() {
    let mut r = rng(4);
    let hc = random_hermitian_family(&mut r, 1, 0, 6, 1.0);
    let psi0 = Array1::from_shape_fn(6, |j| c(if j == 2 { 1.0 } else { 0.0 }));
    let traj = propagate(&hc, &[1.0], &psi0, 7.5, &PropagateOptions::default()).unwrap();
    let exact = exact_constant_evolution(&hc.coeff_at(hc.zero_index()).to_owned(), &psi0, 7.5).unwrap();
    let err = (traj.states.last().unwrap() - &exact).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err < 1e-12, "{err:e}");
    assert!(traj.norm_drift < 1e-12);
    assert_eq!(*traj.times.last().unwrap(), 7.5);
}

#[test]
fn monodromy_recovers_rotating_field_quasi_energies() {
    let (l1, l2, a, w) = (0.5, 1.7, 0.2, 1.3);
    let h = rotating_field(l1, l2, a, 1);
    let m = monodromy_quasienergies(&h, &[w], 400, Integrator::Magnus4).unwrap();
    let exact = rotating_field_levels(l1, l2, a, w);
    assert!(match_quasienergies(&m.quasi_energies, &exact, w) < 1e-9);
    assert!(m.unitarity_defect < 1e-12);
}

#[test]
fn wrapping_lands_in_the_half_open_window() {
    let w = 1.5;
    for x in [-4.0, -0.75, 0.0, 0.74, 0.75, 0.76, 9.1] {
        let r = wrap(x, w);
        assert!(r > -0.75 - 1e-15 && r <= 0.75 + 1e-15, "{x} -> {r}");
        let m = ((x - r) / w).round();
        assert!((x - r - m * w).abs() < 1e-12);
    }
}

#[test]
fn leakage_into_the_top_modes_is_flagged() {
    // strong coupling from mode 0 straight into the watched top mode
    let mut h = QPOperator::diagonal(&[0.0; 10], 1, 1);
    let z = h.zero_index();
    h.coeffs[[z, 0, 9]] = c(1.0);
    h.coeffs[[z, 9, 0]] = c(1.0);
    let psi0 = Array1::from_shape_fn(10, |j| c(if j == 0 { 1.0 } else { 0.0 }));
    let traj = propagate(&h, &[1.0], &psi0, 1.0, &PropagateOptions::default()).unwrap();
    assert!(traj.flagged);
    assert!(traj.max_tail_population > 0.5);
}
