#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfl_core::grid::{GridDensity, GridFunction};
use mfl_core::TorusGrid;

pub fn line(n: usize) -> TorusGrid {
    TorusGrid::new(1, n).unwrap()
}

/// Smooth positive density built from a few random Fourier modes.
pub fn random_density(g: TorusGrid, seed: u64) -> GridDensity<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64)> =
        (1..=3).map(|k| (k as f64, rng.gen_range(-0.25..0.25), rng.gen_range(0.0..1.0))).collect();
    GridDensity::from_fn(g, |x: &[f64]| {
        let mut v = 1.0;
        for &(k, a, p) in &modes {
            v += a * (2.0 * PI * (k * x[0] + p)).cos();
            if x.len() > 1 {
                v += 0.5 * a * (2.0 * PI * (k * x[1] - p)).sin();
            }
        }
        v
    })
    .unwrap()
}

/// Mean-zero direction with entries of order one.
pub fn random_direction(g: TorusGrid, seed: u64) -> GridFunction<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    GridFunction::new(g, (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap().centered()
}

/// Random function, not centered.
pub fn random_function(g: TorusGrid, seed: u64) -> GridFunction<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51_7cc1);
    GridFunction::new(g, (0..g.len()).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

pub fn perturb(mu: &GridDensity<f64>, sigma: &GridFunction<f64>, eps: f64) -> GridDensity<f64> {
    let v = mu.values().iter().zip(sigma.values()).map(|(m, s)| m + eps * s).collect();
    GridDensity::new(*mu.grid(), v).unwrap()
}

pub const STEPS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Finite-difference errors `|(F(μ+εσ) - F(μ))/ε - ∫ fv σ|` over [`STEPS`]
/// and the predicted derivative.
pub fn fd_errors(
    value: impl Fn(&GridDensity<f64>) -> f64,
    fv: &GridFunction<f64>,
    mu: &GridDensity<f64>,
    sigma: &GridFunction<f64>,
) -> (Vec<f64>, f64) {
    let base = value(mu);
    let predicted = fv.dot(sigma);
    let errors = STEPS.iter().map(|&e| ((value(&perturb(mu, sigma, e)) - base) / e - predicted).abs()).collect();
    (errors, predicted)
}

/// Least-squares slope of `log error` against `log ε`.
pub fn observed_order(errors: &[f64]) -> f64 {
    let xs: Vec<f64> = STEPS.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(1e-300).ln()).collect();
    let mx = xs.iter().sum::<f64>() / 3.0;
    let my = ys.iter().sum::<f64>() / 3.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// First-order consistency: either the errors shrink at order one, or they
/// are already at rounding level (linear functionals).
pub fn assert_first_order(errors: &[f64], predicted: f64, what: &str) {
    let exact = errors.iter().all(|&e| e <= 1e-9 * (1.0 + predicted.abs()));
    let order = observed_order(errors);
    assert!(exact || order >= 0.95, "{what}: errors {errors:?}, order {order}");
    assert!(errors[2] <= 1e-5 * predicted.abs().max(1.0), "{what}: error at 1e-6 is {}", errors[2]);
}

pub fn neg_cos(g: TorusGrid, kappa: f64) -> GridFunction<f64> {
    GridFunction::from_fn(g, |z: &[f64]| -kappa * (2.0 * PI * z[0]).cos())
}
