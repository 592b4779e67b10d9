use std::f64::consts::PI;

use approx::assert_relative_eq;
use proptest::prelude::*;

use mfl_core::bounds::{
    compact_rates, confined_kernel_bounds, gaussian_sandwich_params, kernel_bounds_rd, kernel_bounds_td, noncompact_burn_in,
    ou_transition_density, poly_constant, power_regime_epsilon, torus_density_envelope, torus_poincare, variance_change_constant,
    NoncompactReduction, Regime, ScalingTransform,
};
use mfl_core::Error;

const REL: f64 = 1e-9;

#[test]
fn driftless_kernel_bounds_bracket_the_heat_kernel() {
    let env = kernel_bounds_rd(0.0, 1).unwrap();
    for (t, x, y) in [(0.1f64, 0.0f64, 0.3f64), (1.0, -1.0, 2.0), (3.0, 0.5, 0.5)] {
        let g = (2.0 * PI * t).powf(-0.5) * (-(x - y) * (x - y) / (2.0 * t)).exp();
        let (lo, hi) = env.bounds(t, &[x], &[y]);
        assert_relative_eq!(lo, g / 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(hi, g * 2f64.sqrt(), max_relative = 1e-14);
    }
}

#[test]
fn kernel_lower_bound_on_the_diagonal() {
    let env = kernel_bounds_rd(1.0, 1).unwrap();
    let oracle = 2f64.powf(-0.5) * (PI / 2.0).powf(-0.5) * (-1.0f64 - 0.25).exp();
    assert_relative_eq!(env.lower(0.25, &[0.3], &[0.3]), oracle, max_relative = REL);
    assert_relative_eq!(oracle, 0.161_643, max_relative = 1e-5);
}

#[test]
fn torus_kernel_constants() {
    let b = kernel_bounds_td(1.0, 1).unwrap();
    assert_relative_eq!(b.t_star, 0.125, max_relative = REL);
    assert_relative_eq!(b.lower, (-1.5f64).exp() / 15.0, max_relative = REL);
    assert_relative_eq!(b.lower, 0.014_875, max_relative = 1e-4);
    assert_relative_eq!(b.upper, 8.0, max_relative = REL);
    assert_eq!(kernel_bounds_td(0.3, 1).unwrap().t_star, 1.0);
    let m = 0.7f64;
    assert_relative_eq!(kernel_bounds_td(m, 2).unwrap().lower, (-3.0 * m * m).exp() / 45.0, max_relative = REL);
    assert_relative_eq!(kernel_bounds_td(m, 2).unwrap().upper, 16.0, max_relative = REL);
}

#[test]
fn density_envelope_values() {
    let tau = 0.5;
    let env = torus_density_envelope(1.0, tau, 1).unwrap();
    let m = 0.2 * (-1.5f64).exp() * 2.0 * 2f64.sqrt() / 3.0;
    let big_m = 4.0 * 2.0 * 2f64.sqrt() * 2.0;
    assert_relative_eq!(env.m, m, max_relative = REL);
    assert_relative_eq!(env.m, 0.042_074, max_relative = 1e-4);
    assert_relative_eq!(env.big_m, big_m, max_relative = REL);
    assert_relative_eq!(env.big_m, 22.6274, max_relative = 1e-5);
    assert_relative_eq!(env.t0, tau / 4.0, max_relative = REL);
    assert!(matches!(torus_density_envelope(0.4, tau, 1), Err(Error::HypothesisViolated(_))));
}

#[test]
fn compact_rate_constants() {
    let env = torus_density_envelope(1.0, 0.5, 1).unwrap();
    let cert = env.certificate(0.25).unwrap();
    let c1 = 8.0 * env.m * PI * PI / env.big_m;
    let c2 = env.m * PI * PI / (env.big_m * env.big_m);
    assert_relative_eq!(cert.constant("c1").unwrap(), c1, max_relative = REL);
    assert_relative_eq!(cert.constant("c1").unwrap(), 0.146_81, max_relative = 1e-4);
    assert_relative_eq!(cert.reciprocal_slope, c2, max_relative = REL);
    assert_relative_eq!(cert.reciprocal_slope, 8.11e-4, max_relative = 1e-3);
    let cp = torus_poincare::<f64>();
    assert_relative_eq!(2.0 * env.m / (env.big_m * cp * cp), c1, max_relative = 1e-12);
    assert_relative_eq!(env.m / (4.0 * env.big_m * env.big_m * cp * cp), c2, max_relative = 1e-12);
    assert_eq!(cert.regime, Regime::Exponential);
    assert_relative_eq!(cert.rate, c1 * 0.25, max_relative = REL);
    assert_eq!(cert.burn_in, env.t0);
}

#[test]
fn critical_diffusivity_switches_to_the_reciprocal_regime() {
    let cert = compact_rates(0.1, 2.0, 0.8, 0.8, 0.0).unwrap();
    assert_eq!(cert.regime, Regime::Reciprocal);
    assert!(cert.exponential_rate.is_none());
    assert_eq!(cert.rate, cert.reciprocal_slope);
    assert!(matches!(compact_rates(0.1, 2.0, 0.7, 0.8, 0.0), Err(Error::InvalidRegime(_))));
}

#[test]
fn exponential_rate_is_linear_in_the_margin() {
    let a = compact_rates(0.1, 2.0, 1.1, 1.0, 0.0).unwrap().rate;
    let b = compact_rates(0.1, 2.0, 1.2, 1.0, 0.0).unwrap().rate;
    assert_relative_eq!(b, 2.0 * a, max_relative = 1e-9);
}

#[test]
fn variance_change_constants() {
    assert_relative_eq!(variance_change_constant(1.3, 1.3, 3.0, 2).unwrap(), 1.0, max_relative = 1e-14);
    let sigma2 = 1.0;
    let sigma1 = 0.75f64.sqrt();
    let oracle = 0.75f64.sqrt() * 2f64.powf(0.25);
    assert_relative_eq!(variance_change_constant(sigma1, sigma2, 2.0, 1).unwrap(), oracle, max_relative = REL);
    assert_relative_eq!(oracle, 1.0299, max_relative = 1e-4);
    assert!(matches!(variance_change_constant(0.5, 1.0, 2.0, 1), Err(Error::HypothesisViolated(_))));
    assert!(matches!(variance_change_constant(1.0, 1.0, 1.0, 1), Err(Error::HypothesisViolated(_))));
}

#[test]
fn variance_change_inequality_for_monomials() {
    // Gaussian moments: E Z² = 1, E Z⁴ = 3, E (Z² - 1)⁴ = 60.
    let (s1, s2, p) = (0.75f64.sqrt(), 1.0f64, 2.0);
    let c = variance_change_constant(s1, s2, p, 1).unwrap();
    let lhs_x = s2 * s2;
    let rhs_x = c * (3.0 * s1.powi(4)).sqrt();
    assert!(lhs_x <= rhs_x);
    let lhs_x2 = 2.0 * s2.powi(4);
    let rhs_x2 = c * (60.0 * s1.powi(8)).sqrt();
    assert!(lhs_x2 <= rhs_x2);
}

#[test]
fn poly_constants() {
    assert_relative_eq!(poly_constant(1.0, 1.0, 3).unwrap(), 1.0, max_relative = 1e-14);
    assert_relative_eq!(poly_constant(1.0, 1.5f64.sqrt(), 2).unwrap(), 4.0 / 3.0, max_relative = REL);
    assert!(matches!(poly_constant(1.0, 2f64.sqrt(), 1), Err(Error::HypothesisViolated(_))));
    assert!(matches!(poly_constant(1.0, 0.9, 1), Err(Error::HypothesisViolated(_))));
    let values: Vec<f64> = (0..50).map(|i| poly_constant(1.0, (1.0 + 0.0199 * i as f64).sqrt(), 1).unwrap()).collect();
    for w in values.windows(2) {
        assert!(w[1] > w[0]);
    }
    assert!(values[49] > 4.0);
}

#[test]
fn gaussian_sandwich_threshold() {
    let s = gaussian_sandwich_params(0.1, 2.0, 1.5).unwrap();
    let oracle = (40.0 * 4.0 / 0.1f64).ln() + 0.1 / 16.0;
    assert_relative_eq!(s.t_eps, oracle, max_relative = REL);
    assert_relative_eq!(s.t_eps, 7.3841, max_relative = 1e-4);
    assert_relative_eq!(gaussian_sandwich_params(0.2, 2.0, 1.5).unwrap().t_eps, 6.697_112, max_relative = 1e-6);
    let t: Vec<f64> = [0.2, 0.1, 0.05, 0.01].iter().map(|&e| gaussian_sandwich_params(e, 2.0, 1.5).unwrap().t_eps).collect();
    for w in t.windows(2) {
        assert!(w[1] > w[0]);
    }
    assert!(s.admits(1.0) && s.admits(0.95) && !s.admits(1.2));
    assert!(matches!(gaussian_sandwich_params(0.3, 2.0, 1.5), Err(Error::HypothesisViolated(_))));
    assert!(matches!(gaussian_sandwich_params(0.1, 1.5, 1.5), Err(Error::HypothesisViolated(_))));
    assert!(matches!(gaussian_sandwich_params(0.1, 2.0, 1.0), Err(Error::HypothesisViolated(_))));
}

#[test]
fn noncompact_burn_in_value() {
    let t0 = noncompact_burn_in(1.0, 2.0, 1.0, 1.0).unwrap();
    assert_relative_eq!(t0, 5.0 + 4f64.ln(), max_relative = REL);
    assert_relative_eq!(t0, 6.3863, max_relative = 1e-4);
    assert_relative_eq!(power_regime_epsilon(3.0), 0.125, max_relative = 1e-15);
}

#[test]
fn noncompact_reduction_parameters() {
    let r = NoncompactReduction::new(2.0, 0.5, 1.0, 3.0, 1).unwrap();
    let b = (2.0f64 * 0.5 / 2.0).sqrt();
    assert_relative_eq!(r.b, b, max_relative = 1e-15);
    assert_relative_eq!(r.drift_bound, 1.0 / (2.0f64 * 2.0 * 0.5).sqrt(), max_relative = 1e-14);
    assert_relative_eq!(r.m_star, 3.0 * (2.0f64 / (2.0 * 0.5)).sqrt(), max_relative = 1e-14);
    assert_relative_eq!(r.original_time(4.0), 2.0, max_relative = 1e-15);
}

#[test]
fn scaling_transform_identity_at_time_zero() {
    let tr = ScalingTransform::new(2);
    let m = tr.forward(0.0, &[0.3, -1.2]).unwrap();
    assert_eq!(m.time, 0.0);
    assert_eq!(m.position, vec![0.3, -1.2]);
    assert_eq!(m.factor, 1.0);
    assert!(matches!(tr.forward(-1.0, &[0.0, 0.0]), Err(Error::InvalidTime(_))));
}

#[test]
fn driftless_confined_bounds_bracket_the_ou_kernel() {
    let b = confined_kernel_bounds(0.0, 1).unwrap();
    for (t, x1, x2) in [(0.1f64, 0.0f64, 0.2f64), (0.5, 1.0, -0.4), (1.0, -2.0, 0.0), (3.0, 0.7, 0.1)] {
        let ou = ou_transition_density(t, &[x1], &[x2]);
        let var = (1.0 - (-2.0 * t).exp()) / 2.0;
        let direct = (2.0 * PI * var).powf(-0.5) * (-(x2 - (-t).exp() * x1).powi(2) / (2.0 * var)).exp();
        assert_relative_eq!(ou, direct, max_relative = 1e-13);
        let (lo, hi) = b.exact(t, &[x1], &[x2]);
        assert_relative_eq!(lo, ou / 2f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(hi, ou * 2f64.sqrt(), max_relative = 1e-12);
        if t <= 1.0 {
            assert!(b.simplified_lower(t, &[x1], &[x2]) <= ou);
            assert!(b.simplified_upper(t, &[x1], &[x2]) >= ou);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn kernel_envelopes_are_ordered(mbar in 0.0f64..3.0, t in 1e-3f64..5.0, x in -3.0f64..3.0, y in -3.0f64..3.0, d in 1usize..3) {
        let env = kernel_bounds_rd(mbar, d).unwrap();
        let xs = vec![x; d];
        let ys = vec![y; d];
        let (lo, hi) = env.bounds(t, &xs, &ys);
        prop_assert!(lo <= hi);
        let conf = confined_kernel_bounds(mbar, d).unwrap();
        let (clo, chi) = conf.exact(t, &xs, &ys);
        prop_assert!(clo <= chi);
        if t <= 1.0 {
            prop_assert!(conf.simplified_lower(t, &xs, &ys) <= conf.simplified_upper(t, &xs, &ys));
        }
    }

    #[test]
    fn density_envelope_contains_the_uniform_density(ratio in 1.0f64..20.0, tau in 0.01f64..5.0, d in 1usize..3) {
        let env = torus_density_envelope(ratio * tau, tau, d).unwrap();
        prop_assert!(env.m <= 1.0 && env.big_m >= 1.0);
        prop_assert!(env.contains(1.0, 1.0));
        let cert = env.certificate(0.0).unwrap();
        prop_assert!(cert.rate > 0.0 && cert.burn_in >= 0.0);
    }

    #[test]
    fn scaling_transform_round_trips(t in 0.0f64..5.0, x in -10.0f64..10.0, y in -10.0f64..10.0) {
        let tr = ScalingTransform::new(2);
        let f = tr.forward(t, &[x, y]).unwrap();
        let b = tr.inverse(f.time, &f.position).unwrap();
        prop_assert!((b.time - t).abs() <= 1e-14 * (1.0 + t));
        prop_assert!((b.position[0] - x).abs() <= 1e-14 * (1.0 + x.abs()));
        prop_assert!((b.position[1] - y).abs() <= 1e-14 * (1.0 + y.abs()));
        prop_assert!((f.factor * b.factor - 1.0).abs() <= 1e-14);
    }
}
