mod common;

use bifurcat_core::equilibria::coexistence_equilibria;
use bifurcat_core::integrator::{
    flow, flow_with_sensitivity, integrate, integrate_system, IntegrationConfig, ModelSystem,
};
use bifurcat_core::{ParamName, State};
use common::p1;
use proptest::prelude::*;

fn near_equilibrium(kappa1: f64, rel: f64) -> (bifurcat_core::ModelParams, State, State) {
    let p = p1().with(ParamName::Kappa1, kappa1);
    let eq = coexistence_equilibria(&p).remove(0).state;
    let s0 = State::new(eq.e1 * (1.0 + rel), eq.e2 * (1.0 - rel), eq.m * (1.0 + rel));
    (p, eq, s0)
}

#[test]
fn settles_on_stable_equilibrium_before_hopf() {
    let (p, eq, s0) = near_equilibrium(23.0, 1e-3);
    let tr = integrate(&p, &s0, &IntegrationConfig::span(0.0, 300.0)).unwrap();
    assert!(tr.completed());
    let end = State::from_vector(&tr.y_final());
    assert!((end.e2 - eq.e2).abs() < 1e-6);
    assert!((end.m - eq.m).abs() < 1e-5);
    assert!(!tr.stats.stiffness_warning);
}

#[test]
fn forward_then_backward_returns() {
    // the fast eigenvalue (about -109) amplifies backward errors by
    // exp(109 t), so the span stays short
    let (p, _, s0) = near_equilibrium(23.2197961461739, 1e-2);
    let cfg = IntegrationConfig::span(0.0, 0.1).with_tolerances(1e-13, 1e-14);
    let x1 = flow(&p, &s0.to_vector(), 0.1, &cfg).unwrap();
    let back = IntegrationConfig::span(0.1, 0.0).with_tolerances(1e-13, 1e-14);
    let tr = integrate(&p, &State::from_vector(&x1), &back).unwrap();
    assert!((tr.y_final() - s0.to_vector()).amax() < 1e-6);
}

#[test]
fn zero_span_returns_initial_state() {
    let (p, _, s0) = near_equilibrium(23.0, 0.1);
    let tr = integrate(&p, &s0, &IntegrationConfig::span(3.0, 3.0)).unwrap();
    assert_eq!(State::from_vector(&tr.y_final()), s0);
}

#[test]
fn singular_start_is_rejected() {
    let p = p1();
    assert!(integrate(&p, &State::new(1.0, -p.a, 1.0), &IntegrationConfig::default()).is_err());
}

fn endpoint_error(h: f64) -> f64 {
    let (p, _, s0) = near_equilibrium(23.2197961461739, 0.05);
    let x0 = s0.to_vector();
    let reference = flow(
        &p,
        &x0,
        1.0,
        &IntegrationConfig::default().with_tolerances(1e-14, 1e-15),
    )
    .unwrap();
    // tolerances this loose never reject, so every step has length h
    let cfg = IntegrationConfig {
        rtol: 1e3,
        atol: 1e3,
        max_step: Some(h),
        t_span: (0.0, 1.0),
        max_steps: 1_000_000,
    };
    let tr = integrate_system(&ModelSystem(&p), x0, &cfg, &[]).unwrap();
    assert_eq!(tr.stats.rejected, 0);
    (tr.y_final() - reference).amax()
}

#[test]
fn fifth_order_convergence() {
    let e1 = endpoint_error(0.01);
    let e2 = endpoint_error(0.005);
    let e3 = endpoint_error(0.0025);
    for ratio in [e1 / e2, e2 / e3] {
        let order = ratio.log2();
        assert!((4.6..7.5).contains(&order), "ratios {} {}", e1 / e2, e2 / e3);
    }
}

#[test]
fn tighter_tolerance_reduces_error() {
    let (p, _, s0) = near_equilibrium(23.2197961461739, 0.05);
    let x0 = s0.to_vector();
    let reference = flow(
        &p,
        &x0,
        10.0,
        &IntegrationConfig::default().with_tolerances(1e-14, 1e-15),
    )
    .unwrap();
    let err = |tol: f64| {
        let cfg = IntegrationConfig::default().with_tolerances(tol, tol * 1e-2);
        (flow(&p, &x0, 10.0, &cfg).unwrap() - reference).amax()
    };
    let (a, b, c) = (err(1e-6), err(5e-7), err(2.5e-7));
    assert!(b < a && c < b, "{a} {b} {c}");
    assert!(a / c > 2.0, "{a} {b} {c}");
}

#[test]
fn monodromy_matches_finite_differences() {
    let (p, _, s0) = near_equilibrium(23.2197961461739, 0.05);
    let x0 = s0.to_vector();
    let cfg = IntegrationConfig::default().with_tolerances(1e-12, 1e-13);
    let (end, m) = flow_with_sensitivity(&p, &x0, 2.0, &cfg).unwrap();
    assert!((end - flow(&p, &x0, 2.0, &cfg).unwrap()).amax() < 1e-9);
    for k in 0..3 {
        let h = 1e-5 * (1.0 + x0[k].abs());
        let mut xp = x0;
        xp[k] += h;
        let mut xm = x0;
        xm[k] -= h;
        let col = (flow(&p, &xp, 2.0, &cfg).unwrap() - flow(&p, &xm, 2.0, &cfg).unwrap()) / (2.0 * h);
        let want = m.column(k);
        assert!((col - want).amax() < 1e-5 * (1.0 + want.amax()), "column {k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn trajectories_stay_in_positive_octant(
        e1 in 0.0f64..5.0,
        e2 in 1e-3f64..5.0,
        m in 0.0f64..150.0,
        kappa1 in 15.0f64..30.0,
    ) {
        let p = p1().with(ParamName::Kappa1, kappa1);
        let cfg = IntegrationConfig::span(0.0, 5.0);
        let tr = integrate(&p, &State::new(e1, e2, m), &cfg).unwrap();
        prop_assert!(tr.completed());
        for y in &tr.states {
            prop_assert!(y.iter().all(|v| *v >= -10.0 * cfg.atol), "{y:?}");
        }
        let mid = tr.eval(2.5).unwrap();
        prop_assert!(mid.iter().all(|v| *v >= -10.0 * cfg.atol));
    }
}
