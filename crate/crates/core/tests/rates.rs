use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use mfl_core::bounds::Regime;
use mfl_core::rates::{decay_window, linear_fit, rate_fit, rate_fit_series, MIN_SAMPLES};
use mfl_core::wgf::FlowTrace;
use mfl_core::Error;

fn times(n: usize, dt: f64) -> Vec<f64> {
    (0..n).map(|i| i as f64 * dt).collect()
}

#[test]
fn least_squares_recovers_a_line() {
    let x = times(10, 0.5);
    let y: Vec<f64> = x.iter().map(|t| 2.0 - 3.0 * t).collect();
    let (a, b, r2) = linear_fit(&x, &y);
    assert!((a - 2.0).abs() < 1e-13 && (b + 3.0).abs() < 1e-13);
    assert_eq!(r2, 1.0);
    let (_, b, r2) = linear_fit(&x, &[4.0; 10]);
    assert_eq!((b, r2), (0.0, 1.0));
}

#[test]
fn exponential_decay_gives_its_rate() {
    let t = times(50, 0.1);
    let g: Vec<f64> = t.iter().map(|t| 3.0 * (-2.0 * t).exp()).collect();
    let fit = rate_fit_series(&t, &g, Regime::Exponential, (0.0, f64::INFINITY)).unwrap();
    assert!((fit.rate - 2.0).abs() < 1e-9);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-9);
    assert_eq!(fit.samples, 50);
}

#[test]
fn reciprocal_decay_gives_its_slope() {
    let t = times(40, 0.25);
    let g: Vec<f64> = t.iter().map(|t| 1.0 / (1.0 + 3.0 * t)).collect();
    let fit = rate_fit_series(&t, &g, Regime::Reciprocal, (0.0, f64::INFINITY)).unwrap();
    assert!((fit.rate - 3.0).abs() < 1e-10);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);
    let power = rate_fit_series(&t, &g, Regime::Power { kappa: 1.0 }, (0.0, f64::INFINITY)).unwrap();
    assert!((power.rate - fit.rate).abs() < 1e-12);
}

#[test]
fn noisy_exponential_rate_is_stable() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let t = times(100, 0.05);
    let g: Vec<f64> = t.iter().map(|t| (-1.5 * t).exp() * (1.0 + noise.sample(&mut rng))).collect();
    let fit = rate_fit_series(&t, &g, Regime::Exponential, (0.0, f64::INFINITY)).unwrap();
    assert!((fit.rate - 1.5).abs() < 0.05 * 1.5, "{}", fit.rate);
    assert!(fit.r_squared > 0.99);
}

#[test]
fn window_restricts_the_fit() {
    let t = times(60, 0.1);
    let g: Vec<f64> = t.iter().map(|&t| if t < 1.0 { 5.0 } else { (-t).exp() }).collect();
    let fit = rate_fit_series(&t, &g, Regime::Exponential, (1.0, f64::INFINITY)).unwrap();
    assert!((fit.rate - 1.0).abs() < 1e-9);
    assert!((fit.window.0 - 1.0).abs() < 1e-12);
}

#[test]
fn short_or_nonpositive_series_are_refused() {
    let t = times(MIN_SAMPLES - 1, 0.1);
    let g = vec![1.0; t.len()];
    assert!(matches!(
        rate_fit_series(&t, &g, Regime::Exponential, (0.0, 10.0)),
        Err(Error::InsufficientData { got, needed }) if got == MIN_SAMPLES - 1 && needed == MIN_SAMPLES
    ));
    let t = times(30, 0.1);
    let mut g = vec![1.0; 30];
    g[7] = 0.0;
    assert!(matches!(rate_fit_series(&t, &g, Regime::Reciprocal, (0.0, 10.0)), Err(Error::NonPositiveGap { .. })));
    assert!(rate_fit_series(&t, &g, Regime::Reciprocal, (0.75, 10.0)).is_ok());
}

#[test]
fn decay_window_stops_at_the_floor() {
    let t = times(10, 1.0);
    let g = [1.0, 0.1, 1e-2, 1e-3, 1e-4, 1e-12, 1e-5, 1e-13, 1e-14, 1e-15];
    assert_eq!(decay_window(&t, &g, 1.0, 1e-11), (1.0, 4.0));
    assert_eq!(decay_window(&t, &[1.0; 10], 2.0, 1e-11), (2.0, 9.0));
}

#[test]
fn trace_fit_needs_gaps() {
    let trace = FlowTrace::<f64> { times: times(30, 0.1), values: vec![0.0; 30], ..Default::default() };
    assert!(matches!(rate_fit(&trace, Regime::Exponential, 0.0), Err(Error::InvalidParameter(_))));
    let gaps: Vec<f64> = trace.times.iter().map(|t| (-4.0 * t).exp()).collect();
    let trace = FlowTrace { gaps: Some(gaps), ..trace };
    let fit = rate_fit(&trace, Regime::Exponential, 0.5).unwrap();
    assert!((fit.rate - 4.0).abs() < 1e-9);
    assert_eq!(fit.samples, 25);
}
