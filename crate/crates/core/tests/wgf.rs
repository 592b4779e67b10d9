mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use common::*;
use mfl_core::functionals::{minimize_fixed_point, FixedPointOptions, Functional, Objective};
use mfl_core::grid::{entropy, fisher_information, w1_circle, GridDensity, GridFunction};
use mfl_core::wgf::{bernoulli, burn_in_time, dissipation, run_flow, stable_dt, step, step_with_drift, FlowConfig};
use mfl_core::Error;

fn cosine_density(n: usize, k: f64, a: f64) -> GridDensity<f64> {
    GridDensity::from_fn(line(n), |x: &[f64]| 1.0 + a * (2.0 * PI * k * x[0]).cos()).unwrap()
}

fn interaction(n: usize, kappa: f64, tau: f64) -> Objective<f64> {
    Objective::new(vec![Functional::interaction(neg_cos(line(n), kappa)).unwrap()], tau)
}

#[test]
fn bernoulli_function_limits() {
    assert_eq!(bernoulli(0.0), 1.0);
    assert_relative_eq!(bernoulli(1e-9), 1.0 - 0.5e-9, epsilon = 1e-15);
    assert_relative_eq!(bernoulli(1.0), 1.0 / (1f64.exp() - 1.0), epsilon = 1e-15);
    assert_relative_eq!(bernoulli(-1.0) - bernoulli(1.0), 1.0, epsilon = 1e-15);
    assert!(bernoulli(800.0) >= 0.0 && bernoulli(800.0) < 1e-300);
}

#[test]
fn heat_step_matches_von_neumann_symbol() {
    let n = 64;
    let tau = 0.7;
    let h = 1.0 / n as f64;
    let obj = Objective::new(vec![], tau);
    for k in [1.0, 3.0, 10.0] {
        let mu = cosine_density(n, k, 0.4);
        let dt = 0.9 * h * h / (2.0 * tau);
        let next = step(&mu, &obj, dt).unwrap();
        let factor = 1.0 - 4.0 * tau * dt * (PI * k * h).sin().powi(2) / (h * h);
        for (i, v) in next.values().iter().enumerate() {
            let want = 1.0 + 0.4 * factor * (2.0 * PI * k * i as f64 * h).cos();
            assert!((v - want).abs() < 1e-14, "k = {k}");
        }
    }
}

#[test]
fn gibbs_state_of_a_potential_is_stationary() {
    for n in [64, 128, 256] {
        let g = line(n);
        let tau = 0.3;
        let v = GridFunction::from_fn(g, |x: &[f64]| (2.0 * PI * x[0]).cos() + 0.4 * (6.0 * PI * x[0]).sin());
        let mu = GridDensity::gibbs(&v.clone().scaled(1.0 / tau));
        let obj = Objective::new(vec![Functional::potential(v)], tau);
        let dt = 0.9 * stable_dt(&obj.g_first_variation(&mu).unwrap(), tau);
        let next = step(&mu, &obj, dt).unwrap();
        let change = next.values().iter().zip(mu.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change <= 1e-12 * dt.max(1.0), "n = {n}: {change}");
    }
}

#[test]
fn uniform_is_fixed_under_symmetric_interaction() {
    let obj = interaction(64, 1.0, 0.5);
    let u = GridDensity::uniform(line(64));
    let next = step(&u, &obj, 1e-5).unwrap();
    assert!(next.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
}

#[test]
fn oversized_step_is_refused() {
    let obj = Objective::new(vec![], 1.0);
    let mu = cosine_density(32, 1.0, 0.5);
    let bound = stable_dt(&GridFunction::zeros(line(32)), 1.0);
    assert_relative_eq!(bound, (1.0 / 32.0f64).powi(2) / 2.0, max_relative = 1e-14);
    assert!(matches!(step(&mu, &obj, 2.0 * bound), Err(Error::CflViolation { .. })));
    assert!(matches!(step(&mu, &obj, 0.0), Err(Error::CflViolation { .. })));
}

#[test]
fn mass_is_conserved_over_many_steps() {
    let g = line(32);
    let tau = 0.2;
    let obj = Objective::new(
        vec![Functional::potential(random_function(g, 3)), Functional::interaction(neg_cos(g, 0.3)).unwrap()],
        tau,
    );
    let mut mu = random_density(g, 3);
    for _ in 0..100_000 {
        let gfv = obj.g_first_variation(&mu).unwrap();
        let dt = 0.9 * stable_dt(&gfv, tau);
        mu = step_with_drift(&mu, &gfv, tau, dt).unwrap();
    }
    assert!((mu.mass() - 1.0).abs() <= 1e-13, "{}", mu.mass() - 1.0);
}

#[test]
fn positivity_is_restored_after_one_step() {
    // The three-point stencil reaches one neighbour per step, so every empty
    // cell sits next to an occupied one.
    let g = line(32);
    let mu = GridDensity::new(g, (0..32).map(|i| if i % 2 == 0 { 2.0 } else { 0.0 }).collect()).unwrap();
    let obj = Objective::new(vec![Functional::potential(random_function(g, 1))], 0.1);
    let gfv = obj.g_first_variation(&mu).unwrap();
    let next = step_with_drift(&mu, &gfv, 0.1, 0.5 * stable_dt(&gfv, 0.1)).unwrap();
    assert!(next.min() > 0.0);
}

#[test]
fn heat_flow_mode_decays_at_the_exact_rate() {
    let tau = 1.0;
    let mu0 = cosine_density(128, 1.0, 0.5);
    let cfg = FlowConfig { t_end: 0.05, record_every: 0.01, keep_snapshots: true, ..FlowConfig::default() };
    let trace = run_flow(&mu0, &Objective::new(vec![], tau), &cfg, None).unwrap();
    let last = trace.snapshots.last().unwrap();
    let amp = 2.0 * last.values().iter().enumerate().map(|(i, v)| v * (2.0 * PI * i as f64 / 128.0).cos()).sum::<f64>() / 128.0;
    let exact = 0.5 * (-4.0 * PI * PI * 0.05f64).exp();
    assert!((amp - exact).abs() / exact < 1e-3, "{amp} vs {exact}");
    for w in trace.times.windows(2) {
        assert!(w[1] > w[0]);
    }
    let cfg = FlowConfig { t_end: 0.6, record_every: 0.1, ..FlowConfig::default() };
    let long = run_flow(&mu0, &Objective::new(vec![], tau), &cfg, None).unwrap();
    assert!(entropy(long.final_density.as_ref().unwrap()) < 1e-9);
    for w in long.values.windows(2) {
        assert!(w[1] <= w[0] + 1e-15);
    }
}

#[test]
fn interaction_flow_above_threshold_reaches_the_minimizer() {
    let obj = interaction(64, 0.2, 1.0);
    let fp = minimize_fixed_point(&obj, line(64), FixedPointOptions::default()).unwrap();
    let mu0 = cosine_density(64, 1.0, 0.6);
    let cfg = FlowConfig { t_end: 2.0, record_every: 0.1, ..FlowConfig::default() };
    let trace = run_flow(&mu0, &obj, &cfg, Some(fp.value)).unwrap();
    let gaps = trace.gaps.unwrap();
    assert!(*gaps.last().unwrap() < 1e-8);
    assert!(w1_circle(trace.final_density.as_ref().unwrap(), &fp.density).unwrap() < 1e-6);
    assert_relative_eq!(trace.burn_in, burn_in_time(1.0, trace.lipschitz), epsilon = 1e-15);
}

#[test]
fn flow_started_at_the_minimizer_stays_there() {
    let g = line(64);
    let obj = Objective::new(
        vec![Functional::potential(GridFunction::from_fn(g, |x: &[f64]| 0.5 * (2.0 * PI * x[0]).sin())), Functional::interaction(neg_cos(g, 0.2)).unwrap()],
        1.0,
    );
    let fp = minimize_fixed_point(&obj, g, FixedPointOptions::default()).unwrap();
    let cfg = FlowConfig { t_end: 0.2, record_every: 0.05, ..FlowConfig::default() };
    let trace = run_flow(&fp.density, &obj, &cfg, Some(fp.value)).unwrap();
    assert!(trace.gaps.unwrap().iter().all(|g| g.abs() <= 1e-9));
}

#[test]
fn dissipation_vanishes_at_the_minimizer() {
    let g = line(64);
    let obj = Objective::new(vec![Functional::potential(random_function(g, 5))], 0.5);
    let fp = minimize_fixed_point(&obj, g, FixedPointOptions::default()).unwrap();
    assert!(dissipation(&fp.density, &obj).unwrap() < 1e-16);
}

#[test]
fn heat_dissipation_is_scaled_fisher_information() {
    let g = line(128);
    for (tau, seed) in [(0.3, 1), (1.0, 2), (2.5, 3)] {
        let mu = random_density(g, seed);
        let d = dissipation(&mu, &Objective::new(vec![], tau)).unwrap();
        assert_relative_eq!(d, tau * tau * fisher_information(&mu).unwrap(), max_relative = 1e-8);
    }
}

#[test]
fn energy_identity_on_the_heat_benchmark() {
    let tau = 1.0;
    let mu0 = cosine_density(256, 1.0, 0.5);
    let cfg = FlowConfig { t_end: 0.05, record_every: 0.0005, ..FlowConfig::default() };
    let trace = run_flow(&mu0, &Objective::new(vec![], tau), &cfg, None).unwrap();
    let drop = trace.values[0] - trace.values.last().unwrap();
    let integral: f64 = trace.times.windows(2).zip(trace.dissipation.windows(2)).map(|(t, d)| 0.5 * (t[1] - t[0]) * (d[0] + d[1])).sum();
    assert!((drop - integral).abs() / drop < 0.05, "{drop} vs {integral}");
}

#[test]
fn invalid_flow_config_is_rejected() {
    let cfg = FlowConfig { dt_safety: 1.5, ..FlowConfig::default() };
    let u = GridDensity::uniform(line(16));
    assert!(matches!(run_flow(&u, &Objective::new(vec![], 1.0), &cfg, None), Err(Error::InvalidParameter(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn steps_conserve_mass_and_positivity(seed in 0u64..10_000, tau in 0.01f64..2.0, kappa in 0.0f64..2.0, safety in 0.1f64..1.0) {
        let g = line(32);
        let obj = Objective::new(
            vec![Functional::potential(random_function(g, seed)), Functional::interaction(neg_cos(g, kappa)).unwrap()],
            tau,
        );
        let mut mu = random_density(g, seed);
        for _ in 0..20 {
            let gfv = obj.g_first_variation(&mu).unwrap();
            mu = step_with_drift(&mu, &gfv, tau, safety * stable_dt(&gfv, tau)).unwrap();
            prop_assert!(mu.min() > 0.0);
        }
        prop_assert!((mu.mass() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dissipation_is_nonnegative(seed in 0u64..10_000, tau in 0.01f64..2.0) {
        let obj = interaction(32, 0.7, tau);
        prop_assert!(dissipation(&random_density(line(32), seed), &obj).unwrap() >= 0.0);
    }
}
