//! Finite-difference checks of first variations along mixture directions.
//!
//! For densities `μ, ν` the direction `σ = ν - μ` keeps `μ + εσ` a density
//! for `ε ∈ [0, 1]`, and the forward quotient error
//! `|(F(μ + εσ) - F(μ))/ε - ∫ F'[μ] σ|` must shrink at least linearly in `ε`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mfl_core::eot::SinkhornOptions;
use mfl_core::functionals::{Functional, Objective};
use mfl_core::grid::{GridDensity, GridFunction};
use mfl_core::trajectory::{build_objective, ChainCache, TrajectoryProblem, Variant};
use mfl_core::{Result, TorusGrid};

/// Step sizes of every check.
pub const EPSILONS: [f64; 3] = [1e-4, 1e-5, 1e-6];

/// Smallest accepted observed order (first order up to rounding of the
/// least-squares slope).
pub const MIN_ORDER: f64 = 0.95;

/// Outcome of one directional check.
#[derive(Clone, Debug)]
pub struct DirectionalCheck {
    pub name: String,
    pub sample: usize,
    /// `∫ F'[μ] σ`.
    pub derivative: f64,
    /// Quotient errors at [`EPSILONS`].
    pub errors: [f64; 3],
    /// Least-squares slope of `log error` against `log ε`.
    pub order: f64,
}

impl DirectionalCheck {
    /// First order observed, or the quotient exact to rounding at every step
    /// (linear functionals have no truncation error to measure).
    pub fn passed(&self) -> bool {
        self.exact() || self.order >= MIN_ORDER
    }

    /// Every quotient error is at rounding level.
    pub fn exact(&self) -> bool {
        self.errors.iter().all(|&e| e <= 1e-9 * (1.0 + self.derivative.abs()))
    }
}

/// Smooth positive density `exp(Σ_k a_k cos 2πkx + b_k sin 2πkx)` with
/// `k ≤ 4` and coefficients uniform in `[-0.3, 0.3]` (one-dimensional).
pub fn random_density(grid: TorusGrid, seed: u64) -> Result<GridDensity<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3))).collect();
    GridDensity::from_fn(grid, |x: &[f64]| {
        coef.iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let w = 2.0 * PI * (k + 1) as f64 * x[0];
                a * w.cos() + b * w.sin()
            })
            .sum::<f64>()
            .exp()
    })
}

/// Random smooth grid function with unit-scale values.
pub fn random_function(grid: TorusGrid, seed: u64) -> GridFunction<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    GridFunction::from_fn(grid, |x: &[f64]| {
        coef.iter()
            .enumerate()
            .map(|(k, (a, b))| {
                let w = 2.0 * PI * (k + 1) as f64 * x[0];
                a * w.cos() + b * w.sin()
            })
            .sum()
    })
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    mfl_core::rates::linear_fit(xs, ys).1
}

/// Checks `fv` against forward quotients of `value` along `ν - μ`.
pub fn directional_check(
    name: &str,
    sample: usize,
    value: &dyn Fn(&GridDensity<f64>) -> Result<f64>,
    fv: &GridFunction<f64>,
    mu: &GridDensity<f64>,
    nu: &GridDensity<f64>,
) -> Result<DirectionalCheck> {
    let base = value(mu)?;
    let h = mu.grid().cell_volume::<f64>();
    let derivative: f64 = fv.values().iter().zip(nu.values().iter().zip(mu.values())).map(|(f, (n, m))| f * (n - m)).sum::<f64>() * h;
    let mut errors = [0.0; 3];
    for (e, &eps) in errors.iter_mut().zip(&EPSILONS) {
        let moved = mu.mix(nu, eps)?;
        *e = ((value(&moved)? - base) / eps - derivative).abs();
    }
    let lx: Vec<f64> = EPSILONS.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|v| v.max(f64::MIN_POSITIVE).ln()).collect();
    Ok(DirectionalCheck { name: name.to_string(), sample, derivative, errors, order: slope(&lx, &ly) })
}

/// Checks a single functional at `μ` along `ν - μ`.
pub fn functional_check(
    name: &str,
    sample: usize,
    f: &Functional<f64>,
    mu: &GridDensity<f64>,
    nu: &GridDensity<f64>,
) -> Result<DirectionalCheck> {
    let (_, fv) = f.value_and_fv(mu)?;
    directional_check(name, sample, &|m| f.value(m), &fv, mu, nu)
}

/// Tight Sinkhorn settings for derivative checks.
pub fn tight_sinkhorn() -> SinkhornOptions<f64> {
    SinkhornOptions { tol: 1e-13, max_iter: 200_000 }
}

/// Runs the directional check for every functional kind, a composite
/// objective, and each marginal of a trajectory chain, on `samples` random
/// density pairs.
pub fn all_functional_checks(samples: usize, seed: u64) -> Result<Vec<DirectionalCheck>> {
    let grid = TorusGrid::new(1, 32)?;
    let mut out = Vec::new();
    for s in 0..samples {
        let base = seed.wrapping_add(16 * s as u64);
        let mu = random_density(grid, base)?;
        let nu = random_density(grid, base + 1)?;
        let v = random_function(grid, base + 2);
        let w = GridFunction::from_fn(grid, |z: &[f64]| -0.5 * (2.0 * PI * z[0]).cos() + 0.2 * (4.0 * PI * z[0]).cos());
        let obs = random_density(grid, base + 3)?;
        let functionals: Vec<(&str, Functional<f64>)> = vec![
            ("potential", Functional::potential(v.clone())),
            ("interaction", Functional::interaction(w.clone())?),
            ("fit", Functional::fit(obs.clone(), 0.02)?),
            ("quadratic-fit", Functional::quadratic_fit(obs.clone()).with_weight(0.7)),
            ("entropy", Functional::entropy()),
            ("self-transport", Functional::self_transport(0.05, grid, tight_sinkhorn())?),
        ];
        for (name, f) in &functionals {
            out.push(functional_check(name, s, f, &mu, &nu)?);
        }
        let obj = Objective::new(
            vec![Functional::potential(v), Functional::interaction(w)?, Functional::self_transport(0.05, grid, tight_sinkhorn())?],
            0.3,
        );
        let ev = obj.evaluate(&mu, &mut Default::default())?;
        let fv = ev.objective_fv(&mu, obj.tau);
        out.push(directional_check("objective", s, &|m| obj.value(m), &fv, &mu, &nu)?);
        out.extend(chain_checks(grid, base + 4, s, &mu, &nu)?);
    }
    Ok(out)
}

/// Marginal-wise checks of a `T = 2` chain objective under both variants.
pub fn chain_checks(
    grid: TorusGrid,
    seed: u64,
    sample: usize,
    mu: &GridDensity<f64>,
    nu: &GridDensity<f64>,
) -> Result<Vec<DirectionalCheck>> {
    let observations = (0..3).map(|k| random_density(grid, seed + 10 + k)).collect::<Result<Vec<_>>>()?;
    let chain: Vec<GridDensity<f64>> = (0..3).map(|k| random_density(grid, seed + 20 + k)).collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for variant in [Variant::Standard, Variant::Debiased] {
        let problem = TrajectoryProblem::new(observations.clone(), 0.02, 0.2, variant)?;
        let obj = build_objective(&problem, tight_sinkhorn())?;
        let ev = obj.evaluate(&chain, &mut ChainCache::new())?;
        for i in 0..chain.len() {
            let fv = obj.marginal_fv(&ev, &chain, i);
            let value = |m: &GridDensity<f64>| {
                let mut c = chain.clone();
                c[i] = m.clone();
                obj.value(&c)
            };
            // Perturb marginal i from its own state toward a mixture of μ and ν.
            let target = mu.mix(nu, 0.5)?;
            let name = format!("trajectory-{}-marginal-{i}", variant.name());
            out.push(directional_check(&name, sample, &value, &fv, &chain[i], &target)?);
        }
    }
    Ok(out)
}
