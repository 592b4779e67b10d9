mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use common::*;
use mfl_core::eot::{afi_sandwich, eot_cost, self_transport_fv, sinkhorn, EotResult, SinkhornOptions};
use mfl_core::grid::{entropy, wrapped_gaussian_1d, GridDensity, GridFunction};
use mfl_core::Error;

fn tight() -> SinkhornOptions<f64> {
    SinkhornOptions { tol: 1e-13, max_iter: 200_000 }
}

/// Explicit plan `γ_ij = exp((φ_i + ψ_j)/τ) q_ij μ_i ν_j` with its two
/// marginal TV errors and its primal objective `∫ c dγ + τ KL(γ | μ⊗ν)`.
struct Plan {
    tv_mu: f64,
    tv_nu: f64,
    primal: f64,
}

fn explicit_plan(phi: &[f64], psi: &[f64], mu: &GridDensity<f64>, nu: &GridDensity<f64>, tau: f64) -> Plan {
    let n = phi.len();
    let h = 1.0 / n as f64;
    let cost = eot_cost(tau, *mu.grid()).unwrap();
    let (m, v) = (mu.values(), nu.values());
    let mut row = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut primal = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = cost.values()[(i + n - j) % n];
            let log_ratio = (phi[i] + psi[j] - c) / tau;
            let g = log_ratio.exp() * m[i] * v[j];
            row[i] += g * h;
            col[j] += g * h;
            primal += g * (c + tau * log_ratio) * h * h;
        }
    }
    let tv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * h;
    Plan { tv_mu: tv(&row, m), tv_nu: tv(&col, v), primal }
}

fn plan_of(r: &EotResult<f64>, mu: &GridDensity<f64>, nu: &GridDensity<f64>, tau: f64) -> Plan {
    explicit_plan(r.phi.values(), r.psi.values(), mu, nu, tau)
}

#[test]
fn cost_on_diagonal_is_negative_for_small_tau() {
    let g = line(128);
    let tau = 0.05;
    let c = eot_cost(tau, g).unwrap();
    let oracle = -tau * wrapped_gaussian_1d(tau, 0.0);
    let direct: f64 = (-20i32..=20).map(|k| (2.0 * PI * tau).powf(-0.5) * (-(k * k) as f64 / (2.0 * tau)).exp()).sum();
    assert!(c.values()[0] < 0.0);
    assert_relative_eq!(c.values()[0], -tau * direct.ln(), max_relative = 1e-9);
    assert!(oracle < 0.0);
}

#[test]
fn cost_is_symmetric_and_vanishes_for_large_tau() {
    let g = line(64);
    let c = eot_cost::<f64>(0.1, g).unwrap();
    for j in 1..64 {
        assert!((c.values()[j] - c.values()[64 - j]).abs() < 1e-14);
    }
    let flat = eot_cost(60.0, g).unwrap();
    assert!(flat.max_abs() < 1e-10);
    assert!(matches!(eot_cost(0.0, g), Err(Error::InvalidTau(_))));
}

#[test]
fn uniform_to_uniform_costs_nothing() {
    let g = line(64);
    let u = GridDensity::uniform(g);
    let r = sinkhorn(&u, &u, 0.1, tight()).unwrap();
    assert!(r.value.abs() < 1e-12);
    assert!((r.value + 0.1 * entropy(&u)).abs() < 1e-12);
    assert!(r.phi.max_abs() < 1e-12);
    assert!(r.psi.max_abs() < 1e-12);
}

#[test]
fn equal_marginals_give_equal_potentials() {
    let g = line(64);
    let mu = random_density(g, 3);
    let r = sinkhorn(&mu, &mu, 0.08, tight()).unwrap();
    let diff: Vec<f64> = r.phi.values().iter().zip(r.psi.values()).map(|(a, b)| a - b).collect();
    let mean = diff.iter().sum::<f64>() / diff.len() as f64;
    assert!(diff.iter().all(|d| (d - mean).abs() < 1e-8));
}

#[test]
fn plan_marginals_match_at_small_tau() {
    let g = line(128);
    let mu = random_density(g, 7);
    let nu = random_density(g, 8);
    let tau = 0.05;
    let r = sinkhorn(&mu, &nu, tau, SinkhornOptions { tol: 1e-9, max_iter: 100_000 }).unwrap();
    assert!(r.residuals.0 <= 1e-9 && r.residuals.1 <= 1e-9);
    let plan = plan_of(&r, &mu, &nu, tau);
    assert!(plan.tv_mu <= 1e-9, "{}", plan.tv_mu);
    assert!(plan.tv_nu <= 1e-9, "{}", plan.tv_nu);
    assert!(r.phi.is_mean_zero(1e-12));
}

#[test]
fn dual_value_matches_primal_plan_objective() {
    let g = line(64);
    let mu = random_density(g, 9);
    let nu = random_density(g, 10);
    let tau = 0.1;
    let r = sinkhorn(&mu, &nu, tau, tight()).unwrap();
    let plan = plan_of(&r, &mu, &nu, tau);
    assert_relative_eq!(r.value, plan.primal, epsilon = 1e-10);
}

#[test]
fn sinkhorn_reports_nonconvergence() {
    let g = line(64);
    let r = sinkhorn(&random_density(g, 1), &random_density(g, 2), 0.05, SinkhornOptions { tol: 1e-14, max_iter: 2 });
    assert!(matches!(r, Err(Error::NoConvergence { .. })));
}

#[test]
fn self_transport_of_uniform_vanishes() {
    let (v, fv) = self_transport_fv(&GridDensity::uniform(line(32)), 0.1, tight()).unwrap();
    assert!(v.abs() < 1e-13);
    assert!(fv.max_abs() < 1e-12);
}

#[test]
fn self_transport_matches_two_sided_solve() {
    let g = line(64);
    let mu = random_density(g, 4);
    let (v, fv) = self_transport_fv(&mu, 0.1, tight()).unwrap();
    let r = sinkhorn(&mu, &mu, 0.1, tight()).unwrap();
    assert_relative_eq!(v, r.value, epsilon = 1e-11);
    let two_sided = r.phi.clone().axpy(1.0, &r.psi).centered();
    for (a, b) in fv.values().iter().zip(two_sided.values()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn self_transport_directional_derivative() {
    let g = line(32);
    let tau = 0.05;
    for seed in 0..2 {
        let mu = random_density(g, seed + 100);
        let sigma = random_direction(g, seed + 100);
        let (_, fv) = self_transport_fv(&mu, tau, tight()).unwrap();
        let (errors, d) = fd_errors(|m| self_transport_fv(m, tau, tight()).unwrap().0, &fv, &mu, &sigma);
        assert!(errors[1] <= 1e-4 * d.abs().max(1.0), "{errors:?}");
        assert_first_order(&errors, d, "self-transport");
    }
}

#[test]
fn sandwich_for_cosine_density() {
    let g = line(256);
    let tau = 0.1;
    let mu = GridDensity::from_fn(g, |x: &[f64]| 1.0 + 0.1 * (2.0 * PI * x[0]).cos()).unwrap();
    let sw = afi_sandwich(&mu, tau, SinkhornOptions { tol: 1e-12, max_iter: 100_000 }).unwrap();
    let (d, _) = self_transport_fv(&mu, tau, SinkhornOptions { tol: 1e-12, max_iter: 100_000 }).unwrap();
    let mid = d + tau * entropy(&mu);
    // Fisher information of 1 + a cos(2πx) by fine quadrature.
    let m = 8192;
    let fisher: f64 = (0..m)
        .map(|i| {
            let x = (i as f64 + 0.5) / m as f64;
            let dm = -0.2 * PI * (2.0 * PI * x).sin();
            dm * dm / (1.0 + 0.1 * (2.0 * PI * x).cos())
        })
        .sum::<f64>()
        / m as f64;
    let upper = tau * tau * fisher / 8.0;
    assert!(mid >= -1e-10);
    assert!(mid <= upper);
    assert_relative_eq!(sw.mid, mid, epsilon = 1e-12);
    assert_relative_eq!(sw.upper, upper, max_relative = 1e-3);
}

#[test]
fn sandwich_of_uniform_is_zero() {
    let sw = afi_sandwich(&GridDensity::uniform(line(64)), 0.1, tight()).unwrap();
    assert!(sw.mid.abs() < 1e-12);
    assert_eq!(sw.upper, 0.0);
}

#[test]
fn sandwich_ratio_grows_as_tau_shrinks() {
    let g = line(256);
    let mu = random_density(g, 17);
    let opts = SinkhornOptions { tol: 1e-12, max_iter: 200_000 };
    let ratios: Vec<f64> = [0.2, 0.1, 0.05, 0.025].iter().map(|&t| afi_sandwich(&mu, t, opts).unwrap().ratio()).collect();
    for w in ratios.windows(2) {
        assert!(w[1] > w[0], "{ratios:?}");
    }
    assert!(ratios.iter().all(|&r| r <= 1.0 + 1e-8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn marginals_and_gauge(seed in 0u64..10_000, tau in 0.05f64..0.5, shift in -3.0f64..3.0) {
        let g = line(32);
        let mu = random_density(g, seed);
        let nu = random_density(g, seed + 1);
        let r = sinkhorn(&mu, &nu, tau, SinkhornOptions { tol: 1e-11, max_iter: 100_000 }).unwrap();
        let plan = plan_of(&r, &mu, &nu, tau);
        prop_assert!(plan.tv_mu <= 1e-10 && plan.tv_nu <= 1e-10);
        let phi: Vec<f64> = r.phi.values().iter().map(|v| v + shift).collect();
        let psi: Vec<f64> = r.psi.values().iter().map(|v| v - shift).collect();
        let shifted = explicit_plan(&phi, &psi, &mu, &nu, tau);
        prop_assert!((shifted.primal - plan.primal).abs() <= 1e-12 * (1.0 + plan.primal.abs()));
        let value = GridFunction::new(g, phi).unwrap().integrate_against(&mu) + GridFunction::new(g, psi).unwrap().integrate_against(&nu);
        let unshifted = r.phi.integrate_against(&mu) + r.psi.integrate_against(&nu);
        prop_assert!((value - unshifted).abs() <= 1e-12);
    }

    #[test]
    fn sandwich_holds(seed in 0u64..10_000, tau in 0.03f64..0.4) {
        let mu = random_density(line(64), seed);
        let sw = afi_sandwich(&mu, tau, SinkhornOptions { tol: 1e-11, max_iter: 200_000 }).unwrap();
        prop_assert!(sw.mid >= -1e-10);
        prop_assert!(sw.mid <= sw.upper + 1e-8);
    }
}
