mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use common::*;
use mfl_core::functionals::{
    fit_value_and_fv, interaction_value_and_fv, minimize_fixed_point, objective_first_variation, potential_value_and_fv,
    proximal_gibbs, FixedPointOptions, Functional, Objective,
};
use mfl_core::grid::{entropy, w1_circle, GridDensity, GridFunction};
use mfl_core::wgf::{run_flow, FlowConfig};
use mfl_core::Error;

fn cosine_density(n: usize, a: f64) -> GridDensity<f64> {
    GridDensity::from_fn(line(n), |x: &[f64]| 1.0 + a * (2.0 * PI * x[0]).cos()).unwrap()
}

#[test]
fn zero_potential_gives_zero_value_and_variation() {
    let g = line(32);
    let (v, fv) = potential_value_and_fv(&GridFunction::zeros(g), &random_density(g, 1)).unwrap();
    assert_eq!(v, 0.0);
    assert!(fv.values().iter().all(|&x| x == 0.0));
}

#[test]
fn cosine_potential_against_uniform() {
    let g = line(64);
    let v = GridFunction::from_fn(g, |x: &[f64]| (2.0 * PI * x[0]).cos());
    let (val, fv) = potential_value_and_fv(&v, &GridDensity::uniform(g)).unwrap();
    assert!(val.abs() < 1e-15);
    for (a, b) in fv.values().iter().zip(v.values()) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn potential_directional_derivative() {
    let g = line(64);
    for seed in 0..4 {
        let v = random_function(g, seed);
        let mu = random_density(g, seed);
        let sigma = random_direction(g, seed);
        let (_, fv) = potential_value_and_fv(&v, &mu).unwrap();
        let (errors, d) = fd_errors(|m| potential_value_and_fv(&v, m).unwrap().0, &fv, &mu, &sigma);
        assert_first_order(&errors, d, "potential");
    }
}

#[test]
fn zero_interaction_gives_zero() {
    let g = line(32);
    let (v, fv) = interaction_value_and_fv(&GridFunction::zeros(g), &random_density(g, 2)).unwrap();
    assert_eq!(v, 0.0);
    assert!(fv.values().iter().all(|&x| x.abs() < 1e-16));
}

#[test]
fn negative_cosine_interaction_vanishes_on_uniform() {
    let g = line(64);
    let (v, fv) = interaction_value_and_fv(&neg_cos(g, 1.0), &GridDensity::uniform(g)).unwrap();
    assert!(v.abs() < 1e-15);
    assert!(fv.max_abs() < 1e-15);
}

#[test]
fn interaction_matches_direct_double_sum() {
    let n = 64;
    let g = line(n);
    let w = neg_cos(g, 1.0);
    let mu = cosine_density(n, 0.2);
    let (v, fv) = interaction_value_and_fv(&w, &mu).unwrap();
    let h = 1.0 / n as f64;
    let m = mu.values();
    let mut direct = 0.0;
    let mut conv = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            direct += w.values()[(j + n - i) % n] * m[i] * m[j] * h * h;
            conv[i] += 2.0 * w.values()[(i + n - j) % n] * m[j] * h;
        }
    }
    assert!((v - direct).abs() < 1e-10);
    // Fourier value: -(1/2)·(0.1² + 0.1²).
    assert!((v + 0.01).abs() < 1e-12);
    let mean = conv.iter().sum::<f64>() / n as f64;
    for (a, b) in fv.values().iter().zip(&conv) {
        assert!((a - (b - mean)).abs() < 1e-10);
    }
}

#[test]
fn interaction_rejects_odd_kernels() {
    let g = line(32);
    let odd = GridFunction::from_fn(g, |z: &[f64]| (2.0 * PI * z[0]).sin());
    assert!(matches!(Functional::interaction(odd), Err(Error::NotEven(_))));
}

#[test]
fn interaction_directional_derivative() {
    let g = line(64);
    let w = GridFunction::from_fn(g, |z: &[f64]| -0.7 * (2.0 * PI * z[0]).cos() + 0.3 * (6.0 * PI * z[0]).cos());
    for seed in 0..3 {
        let mu = random_density(g, seed);
        let sigma = random_direction(g, seed);
        let (_, fv) = interaction_value_and_fv(&w, &mu).unwrap();
        let (errors, d) = fd_errors(|m| interaction_value_and_fv(&w, m).unwrap().0, &fv, &mu, &sigma);
        assert_first_order(&errors, d, "interaction");
    }
}

#[test]
fn fit_vanishes_at_uniform() {
    let g = line(64);
    let (v, fv) = fit_value_and_fv(&random_density(g, 5), 0.05, &GridDensity::uniform(g)).unwrap();
    assert!(v.abs() < 1e-12);
    assert!(fv.is_mean_zero(1e-12));
}

#[test]
fn fit_rejects_nonpositive_sigma() {
    let g = line(16);
    let u = GridDensity::uniform(g);
    assert!(matches!(fit_value_and_fv(&u, 0.0, &u), Err(Error::InvalidSigma(_))));
}

#[test]
fn fit_directional_derivative() {
    let g = line(64);
    let obs = random_density(g, 11);
    for seed in 0..3 {
        let mu = random_density(g, seed + 40);
        let sigma = random_direction(g, seed);
        let (_, fv) = fit_value_and_fv(&obs, 0.02, &mu).unwrap();
        let (errors, d) = fd_errors(|m| fit_value_and_fv(&obs, 0.02, m).unwrap().0, &fv, &mu, &sigma);
        assert_first_order(&errors, d, "fit");
    }
}

#[test]
fn quadratic_fit_value_and_derivative() {
    let g = line(64);
    let target = random_density(g, 3);
    let mu = random_density(g, 4);
    let f = Functional::quadratic_fit(target.clone());
    let (v, fv) = f.value_and_fv(&mu).unwrap();
    let direct: f64 = mu.values().iter().zip(target.values()).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum::<f64>() / 64.0;
    assert_relative_eq!(v, direct, max_relative = 1e-13);
    let sigma = random_direction(g, 9);
    let (errors, d) = fd_errors(|m| f.value(m).unwrap(), &fv, &mu, &sigma);
    assert_first_order(&errors, d, "quadratic fit");
}

#[test]
fn objective_variation_without_g_is_centered_log() {
    let g = line(32);
    let mu = random_density(g, 6);
    let tau = 0.3;
    let fv = objective_first_variation(&Objective::new(vec![], tau), &mu).unwrap();
    let logs: Vec<f64> = mu.values().iter().map(|v| v.ln()).collect();
    let mean = logs.iter().sum::<f64>() / 32.0;
    for (a, b) in fv.values().iter().zip(&logs) {
        assert!((a - tau * (b - mean)).abs() < 1e-14);
    }
}

#[test]
fn gibbs_density_of_potential_is_stationary() {
    let g = line(64);
    let tau = 0.4;
    let v = random_function(g, 7);
    let mu = GridDensity::gibbs(&v.clone().scaled(1.0 / tau));
    let fv = objective_first_variation(&Objective::new(vec![Functional::potential(v)], tau), &mu).unwrap();
    assert!(fv.max_abs() < 1e-12);
}

#[test]
fn objective_variation_refuses_vanishing_density() {
    let g = line(16);
    let mu = GridDensity::new(g, (0..16).map(|i| if i < 8 { 2.0 } else { 0.0 }).collect()).unwrap();
    let r = objective_first_variation(&Objective::new(vec![], 0.1), &mu);
    assert!(matches!(r, Err(Error::DegenerateDensity { .. })));
}

#[test]
fn composite_objective_directional_derivative() {
    let g = line(64);
    let obj = Objective::new(
        vec![Functional::potential(random_function(g, 1)), Functional::interaction(neg_cos(g, 0.5)).unwrap(), Functional::entropy().with_weight(0.3)],
        0.2,
    );
    let mu = random_density(g, 8);
    let sigma = random_direction(g, 8);
    let fv = objective_first_variation(&obj, &mu).unwrap();
    let (errors, d) = fd_errors(|m| obj.value(m).unwrap(), &fv, &mu, &sigma);
    assert_first_order(&errors, d, "composite");
}

#[test]
fn proximal_gibbs_of_linear_objective_is_its_minimizer() {
    let g = line(64);
    let tau = 0.25;
    let v = random_function(g, 12);
    let obj = Objective::new(vec![Functional::potential(v.clone())], tau);
    let nu = proximal_gibbs(&obj, &random_density(g, 13)).unwrap();
    let z: f64 = v.values().iter().map(|x| (-x / tau).exp()).sum::<f64>() / 64.0;
    for (a, x) in nu.values().iter().zip(v.values()) {
        assert_relative_eq!(*a, (-x / tau).exp() / z, max_relative = 1e-12);
    }
    let opts = FixedPointOptions { theta: 1.0, ..FixedPointOptions::default() };
    let fp = minimize_fixed_point(&obj, g, opts).unwrap();
    assert_eq!(fp.iterations, 1);
}

#[test]
fn proximal_gibbs_without_g_is_uniform() {
    let g = line(32);
    let nu = proximal_gibbs(&Objective::new(vec![], 1.0), &random_density(g, 14)).unwrap();
    assert!(nu.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
}

#[test]
fn heat_objective_minimizer_is_uniform_with_zero_value() {
    let fp = minimize_fixed_point(&Objective::<f64>::new(vec![], 0.5), line(32), FixedPointOptions::default()).unwrap();
    assert!(fp.value.abs() < 1e-15);
    assert!(fp.density.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
}

fn interaction_objective(kappa: f64, tau: f64) -> Objective<f64> {
    let g = line(64);
    let tilt = GridFunction::from_fn(g, |x: &[f64]| 0.3 * (2.0 * PI * x[0]).cos() + 0.1 * (4.0 * PI * x[0]).sin());
    Objective::new(vec![Functional::potential(tilt), Functional::interaction(neg_cos(g, kappa)).unwrap()], tau)
}

#[test]
fn fixed_point_converges_above_threshold() {
    let obj = interaction_objective(0.5, 1.5 * 2.0);
    let opts = FixedPointOptions { tol: 1e-10, max_iter: 500, theta: 0.5, ..FixedPointOptions::default() };
    let fp = minimize_fixed_point(&obj, line(64), opts).unwrap();
    assert!(fp.residual < 1e-10);
    assert!(fp.iterations <= 500);
    assert!((fp.density.mass() - 1.0).abs() < 1e-12);
}

#[test]
fn fixed_point_agrees_with_long_run_flow() {
    let obj = interaction_objective(0.5, 3.0);
    let fp = minimize_fixed_point(&obj, line(64), FixedPointOptions::default()).unwrap();
    let start = random_density(line(64), 21);
    let cfg = FlowConfig { t_end: 0.5, record_every: 0.05, ..FlowConfig::default() };
    let trace = run_flow(&start, &obj, &cfg, Some(fp.value)).unwrap();
    let limit = trace.final_density.unwrap();
    assert!(w1_circle(&limit, &fp.density).unwrap() < 1e-4);
    assert!(*trace.gaps.unwrap().last().unwrap() < 1e-8);
}

#[test]
fn fixed_point_reports_nonconvergence() {
    let obj = interaction_objective(0.5, 3.0);
    let opts = FixedPointOptions { tol: 1e-14, max_iter: 2, ..FixedPointOptions::default() };
    assert!(matches!(minimize_fixed_point(&obj, line(64), opts), Err(Error::NoConvergence { .. })));
}

#[test]
fn entropy_component_matches_grid_entropy() {
    let mu = random_density(line(32), 30);
    assert_eq!(Functional::entropy().value(&mu).unwrap(), entropy(&mu));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn first_variations_are_mean_zero(seed in 0u64..10_000, w in 0.1f64..3.0) {
        let g = line(32);
        let mu = random_density(g, seed);
        let comps = [
            Functional::potential(random_function(g, seed)).with_weight(w),
            Functional::interaction(neg_cos(g, w)).unwrap(),
            Functional::fit(random_density(g, seed + 1), 0.03).unwrap(),
            Functional::quadratic_fit(random_density(g, seed + 2)),
            Functional::entropy().with_weight(w),
        ];
        for c in comps {
            let fv = c.first_variation(&mu).unwrap();
            prop_assert!(fv.is_mean_zero(1e-12), "{} mean {}", c.tag(), fv.mean());
        }
    }

    #[test]
    fn convexity_witness_above_threshold(seed in 0u64..10_000, kappa in 0.05f64..1.0, excess in 1.0f64..2.0) {
        let obj = interaction_objective(kappa, 4.0 * kappa * excess);
        let a = random_density(line(64), seed);
        let b = random_density(line(64), seed + 7919);
        let fa = obj.value(&a).unwrap();
        let fb = obj.value(&b).unwrap();
        let fv = objective_first_variation(&obj, &a).unwrap();
        let diff = GridFunction::new(*b.grid(), b.values().iter().zip(a.values()).map(|(x, y)| x - y).collect()).unwrap();
        prop_assert!(fb >= fa + fv.dot(&diff) - 1e-9);
    }

    #[test]
    fn proximal_gibbs_is_a_density(seed in 0u64..10_000, tau in 0.01f64..5.0) {
        let obj = interaction_objective(1.0, tau);
        let nu = proximal_gibbs(&obj, &random_density(line(64), seed)).unwrap();
        prop_assert!((nu.mass() - 1.0).abs() < 1e-12);
        prop_assert!(nu.min() > 0.0);
    }
}
