//! Objective components, their first variations, composite objectives
//! `F = G + τH`, proximal Gibbs measures and the fixed-point minimizer.
//!
//! Every first variation is returned in the mean-zero gauge.

use std::sync::Arc;

use crate::eot::{self_transport, SinkhornOptions};
use crate::error::{Error, Result};
use crate::fourier::Convolver;
use crate::grid::{entropy, weighted_gradient_energy, GridDensity, GridFunction, TorusGrid};
use crate::heat::HeatKernel;
use crate::real::{floored_ln, Real};

/// Parameters of one objective component.
#[derive(Clone, Debug)]
pub enum Kind<S: Real> {
    /// `∫ V dμ`.
    Potential { potential: GridFunction<S> },
    /// `∫∫ W(y - x) dμ(x) dμ(y)` for an even kernel `W`.
    Interaction { kernel: GridFunction<S>, conv: Arc<Convolver<S>> },
    /// `-∫ log(μ * q_σ) dρ̂` with `q_σ` the heat kernel at time `σ`.
    Fit { observation: GridDensity<S>, sigma: S, heat: Arc<HeatKernel<S>> },
    /// `½ ∫ (μ - ρ)² dx`.
    QuadraticFit { target: GridDensity<S> },
    /// `H(μ) = ∫ μ log μ`.
    Entropy,
    /// `D_τ(μ) = T_τ(μ, μ)` with the heat-kernel cost.
    SelfTransport { heat: Arc<HeatKernel<S>>, options: SinkhornOptions<S> },
    /// Sum of components.
    Sum(Vec<Functional<S>>),
}

/// Weighted objective component.
#[derive(Clone, Debug)]
pub struct Functional<S: Real> {
    kind: Kind<S>,
    weight: S,
}

/// Warm-start storage for components solved iteratively (self-transport).
///
/// Slots are assigned in traversal order, so one cache must only be used
/// with one objective.
#[derive(Clone, Debug, Default)]
pub struct EvalCache<S> {
    slots: Vec<Option<Vec<S>>>,
    /// Evaluations since the last hard refresh.
    pub evaluations: usize,
    /// Drop warm starts every `refresh_every` evaluations (0 disables).
    pub refresh_every: usize,
}

impl<S: Real> EvalCache<S> {
    pub fn new() -> Self {
        Self { slots: Vec::new(), evaluations: 0, refresh_every: 0 }
    }

    /// Cache that discards its warm starts every `every` evaluations.
    pub fn with_refresh(every: usize) -> Self {
        Self { slots: Vec::new(), evaluations: 0, refresh_every: every }
    }

    fn slot(&mut self, i: usize) -> &mut Option<Vec<S>> {
        if self.slots.len() <= i {
            self.slots.resize(i + 1, None);
        }
        &mut self.slots[i]
    }

    fn tick(&mut self) {
        self.evaluations += 1;
        if self.refresh_every > 0 && self.evaluations.is_multiple_of(self.refresh_every) {
            self.slots.iter_mut().for_each(|s| *s = None);
        }
    }
}

/// Errors unless the kernel is even in every coordinate within `1e-12`
/// relative to its magnitude.
pub fn check_even<S: Real>(w: &GridFunction<S>) -> Result<()> {
    let grid = *w.grid();
    let n = grid.n();
    let scale = S::one().max(w.max_abs());
    let mut worst = S::zero();
    for idx in 0..grid.len() {
        let [i, j] = grid.split(idx);
        let flips: &[[usize; 2]] = if grid.dim() == 1 {
            &[[(n - i) % n, 0]]
        } else {
            &[[(n - i) % n, j], [i, (n - j) % n]]
        };
        for f in flips {
            worst = worst.max((w.values()[idx] - w.values()[grid.join(*f)]).abs());
        }
    }
    if worst > S::tolerance(1e-12, 16.0) * scale {
        Err(Error::NotEven(worst.to_f64_lossy()))
    } else {
        Ok(())
    }
}

impl<S: Real> Functional<S> {
    fn new(kind: Kind<S>) -> Self {
        Self { kind, weight: S::one() }
    }

    /// Linear potential energy `∫ V dμ`.
    pub fn potential(v: GridFunction<S>) -> Self {
        Self::new(Kind::Potential { potential: v })
    }

    /// Pairwise interaction energy with an even kernel slice `W(z_j)`.
    pub fn interaction(w: GridFunction<S>) -> Result<Self> {
        check_even(&w)?;
        let conv = Arc::new(Convolver::new(&w));
        Ok(Self::new(Kind::Interaction { kernel: w, conv }))
    }

    /// Smoothed log-likelihood of an observed density.
    pub fn fit(observation: GridDensity<S>, sigma: S) -> Result<Self> {
        if !(sigma > S::zero()) {
            return Err(Error::InvalidSigma(sigma.to_f64_lossy()));
        }
        let heat = Arc::new(HeatKernel::new(sigma, *observation.grid())?);
        Ok(Self::new(Kind::Fit { observation, sigma, heat }))
    }

    /// Squared L² distance `½ ∫ (μ - ρ)²` to a target density.
    pub fn quadratic_fit(target: GridDensity<S>) -> Self {
        Self::new(Kind::QuadraticFit { target })
    }

    /// Negative entropy as a component.
    pub fn entropy() -> Self {
        Self::new(Kind::Entropy)
    }

    /// Self-transport `D_τ` on `grid`.
    pub fn self_transport(tau: S, grid: TorusGrid, options: SinkhornOptions<S>) -> Result<Self> {
        if !(tau > S::zero()) {
            return Err(Error::InvalidTau(tau.to_f64_lossy()));
        }
        let heat = Arc::new(HeatKernel::new(tau, grid)?);
        Ok(Self::new(Kind::SelfTransport { heat, options }))
    }

    /// Sum of components.
    pub fn sum(parts: Vec<Functional<S>>) -> Self {
        Self::new(Kind::Sum(parts))
    }

    /// Same component with weight `w`.
    pub fn with_weight(mut self, w: S) -> Self {
        self.weight = w;
        self
    }

    pub fn weight(&self) -> S {
        self.weight
    }

    pub fn kind(&self) -> &Kind<S> {
        &self.kind
    }

    /// Short kind tag.
    pub fn tag(&self) -> &'static str {
        match self.kind {
            Kind::Potential { .. } => "potential",
            Kind::Interaction { .. } => "interaction",
            Kind::Fit { .. } => "fit",
            Kind::QuadraticFit { .. } => "quadratic-fit",
            Kind::Entropy => "entropy",
            Kind::SelfTransport { .. } => "self-transport",
            Kind::Sum(_) => "sum",
        }
    }

    /// Weighted value.
    pub fn value(&self, mu: &GridDensity<S>) -> Result<S> {
        Ok(self.value_and_fv(mu)?.0)
    }

    /// Weighted first variation, mean-zero.
    pub fn first_variation(&self, mu: &GridDensity<S>) -> Result<GridFunction<S>> {
        Ok(self.value_and_fv(mu)?.1)
    }

    /// Weighted value and mean-zero first variation.
    pub fn value_and_fv(&self, mu: &GridDensity<S>) -> Result<(S, GridFunction<S>)> {
        let mut cache = EvalCache::new();
        self.eval(mu, &mut cache, &mut 0)
    }

    /// As [`Self::value_and_fv`], reusing warm starts from `cache`.
    pub fn value_and_fv_cached(&self, mu: &GridDensity<S>, cache: &mut EvalCache<S>) -> Result<(S, GridFunction<S>)> {
        let r = self.eval(mu, cache, &mut 0);
        cache.tick();
        r
    }

    fn eval(&self, mu: &GridDensity<S>, cache: &mut EvalCache<S>, slot: &mut usize) -> Result<(S, GridFunction<S>)> {
        let grid = *mu.grid();
        let (value, fv) = match &self.kind {
            Kind::Potential { potential } => {
                grid.ensure_same(potential.grid())?;
                (potential.integrate_against(mu), potential.clone())
            }
            Kind::Interaction { conv, .. } => {
                grid.ensure_same(conv.grid())?;
                let wmu = conv.apply(mu.values());
                let value = wmu.integrate_against(mu);
                (value, wmu.scaled(S::c(2.0)))
            }
            Kind::Fit { observation, heat, .. } => {
                grid.ensure_same(observation.grid())?;
                let smooth = heat.apply(mu.values());
                let hd = grid.cell_volume::<S>();
                let value = -observation
                    .values()
                    .iter()
                    .zip(&smooth)
                    .map(|(&r, &s)| if r > S::zero() { r * floored_ln(s) } else { S::zero() })
                    .sum::<S>()
                    * hd;
                let ratio: Vec<S> = observation
                    .values()
                    .iter()
                    .zip(&smooth)
                    .map(|(&r, &s)| if r > S::zero() { r / s.max(S::positivity_floor()) } else { S::zero() })
                    .collect();
                let fv = heat.apply(&ratio).into_iter().map(|v| -v).collect();
                (value, GridFunction::from_raw(grid, fv))
            }
            Kind::QuadraticFit { target } => {
                grid.ensure_same(target.grid())?;
                let diff: Vec<S> = mu.values().iter().zip(target.values()).map(|(&a, &b)| a - b).collect();
                let d = GridFunction::from_raw(grid, diff);
                (S::c(0.5) * d.dot(&d), d)
            }
            Kind::Entropy => (entropy(mu), mu.ln()),
            Kind::SelfTransport { heat, options } => {
                grid.ensure_same(heat.grid())?;
                let my_slot = *slot;
                *slot += 1;
                let warm = cache.slot(my_slot).take();
                let st = self_transport(heat, mu, *options, warm.as_deref())?;
                *cache.slot(my_slot) = Some(st.potential.values().to_vec());
                (st.value, st.first_variation())
            }
            Kind::Sum(parts) => {
                let mut value = S::zero();
                let mut fv = GridFunction::zeros(grid);
                for p in parts {
                    let (v, f) = p.eval(mu, cache, slot)?;
                    value += v;
                    fv = fv.axpy(S::one(), &f);
                }
                (value, fv)
            }
        };
        Ok((self.weight * value, fv.scaled(self.weight).centered()))
    }
}

/// `∫ V dμ` and `V` (mean-zero).
pub fn potential_value_and_fv<S: Real>(v: &GridFunction<S>, mu: &GridDensity<S>) -> Result<(S, GridFunction<S>)> {
    Functional::potential(v.clone()).value_and_fv(mu)
}

/// `∫∫ W(y - x) dμ dμ` and `2 W * μ` (mean-zero).
pub fn interaction_value_and_fv<S: Real>(w: &GridFunction<S>, mu: &GridDensity<S>) -> Result<(S, GridFunction<S>)> {
    Functional::interaction(w.clone())?.value_and_fv(mu)
}

/// `-∫ log(μ * q_σ) dρ̂` and `-q_σ * (ρ̂ / (μ * q_σ))` (mean-zero).
pub fn fit_value_and_fv<S: Real>(
    observation: &GridDensity<S>,
    sigma: S,
    mu: &GridDensity<S>,
) -> Result<(S, GridFunction<S>)> {
    Functional::fit(observation.clone(), sigma)?.value_and_fv(mu)
}

/// Composite objective `F = Σ components + τ H`.
#[derive(Clone, Debug)]
pub struct Objective<S: Real> {
    pub components: Vec<Functional<S>>,
    pub tau: S,
}

/// Value and first variations of an objective at one density.
#[derive(Clone, Debug)]
pub struct Evaluation<S> {
    /// `F(μ)`.
    pub value: S,
    /// `G(μ)`.
    pub g_value: S,
    /// `H(μ)`.
    pub entropy: S,
    /// `G'[μ]`, mean-zero.
    pub g_fv: GridFunction<S>,
}

impl<S: Real> Evaluation<S> {
    /// `F'[μ] = G'[μ] + τ log μ`, mean-zero.
    pub fn objective_fv(&self, mu: &GridDensity<S>, tau: S) -> GridFunction<S> {
        self.g_fv.clone().axpy(tau, &mu.ln()).centered()
    }
}

impl<S: Real> Objective<S> {
    pub fn new(components: Vec<Functional<S>>, tau: S) -> Self {
        Self { components, tau }
    }

    /// Value and `G'` with warm starts.
    pub fn evaluate(&self, mu: &GridDensity<S>, cache: &mut EvalCache<S>) -> Result<Evaluation<S>> {
        let grid = *mu.grid();
        let mut g_value = S::zero();
        let mut g_fv = GridFunction::zeros(grid);
        let mut slot = 0usize;
        for c in &self.components {
            let (v, f) = c.eval(mu, cache, &mut slot)?;
            g_value += v;
            g_fv = g_fv.axpy(S::one(), &f);
        }
        cache.tick();
        let h = entropy(mu);
        Ok(Evaluation { value: g_value + self.tau * h, g_value, entropy: h, g_fv: g_fv.centered() })
    }

    /// `F(μ)`.
    pub fn value(&self, mu: &GridDensity<S>) -> Result<S> {
        Ok(self.evaluate(mu, &mut EvalCache::new())?.value)
    }

    /// `G'[μ]`, mean-zero.
    pub fn g_first_variation(&self, mu: &GridDensity<S>) -> Result<GridFunction<S>> {
        Ok(self.evaluate(mu, &mut EvalCache::new())?.g_fv)
    }
}

/// `F'[μ] = G'[μ] + τ log μ` in the mean-zero gauge.
///
/// Fails with [`Error::DegenerateDensity`] if `τ > 0` and a cell vanishes.
pub fn objective_first_variation<S: Real>(obj: &Objective<S>, mu: &GridDensity<S>) -> Result<GridFunction<S>> {
    if obj.tau > S::zero() {
        mu.ensure_floor(S::positivity_floor())?;
    }
    let ev = obj.evaluate(mu, &mut EvalCache::new())?;
    Ok(ev.objective_fv(mu, obj.tau))
}

/// Gibbs density `∝ exp(-G'[μ]/τ)` of a first variation.
pub fn gibbs_of<S: Real>(g_fv: &GridFunction<S>, tau: S) -> GridDensity<S> {
    GridDensity::gibbs(&g_fv.clone().scaled(S::one() / tau))
}

/// Proximal Gibbs measure `ν ∝ exp(-G'[μ]/τ)`.
pub fn proximal_gibbs<S: Real>(obj: &Objective<S>, mu: &GridDensity<S>) -> Result<GridDensity<S>> {
    if !(obj.tau > S::zero()) {
        return Err(Error::InvalidTau(obj.tau.to_f64_lossy()));
    }
    Ok(gibbs_of(&obj.g_first_variation(mu)?, obj.tau))
}

/// Settings of the damped proximal Gibbs iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions<S> {
    /// Target for `‖∇F'[μ]‖_{L²(μ)}`.
    pub tol: S,
    pub max_iter: usize,
    /// Initial damping `θ` in `μ ← (1 - θ) μ + θ proxGibbs(μ)`.
    pub theta: S,
    /// Smallest damping before giving up on back-off.
    pub min_theta: S,
}

impl<S: Real> Default for FixedPointOptions<S> {
    fn default() -> Self {
        Self { tol: S::tolerance(1e-11, 1e4), max_iter: 5_000, theta: S::c(0.5), min_theta: S::c(1e-4) }
    }
}

/// Output of [`minimize_fixed_point`].
#[derive(Clone, Debug)]
pub struct FixedPoint<S> {
    pub density: GridDensity<S>,
    /// `F(μ*)`, the reference infimum for suboptimality gaps.
    pub value: S,
    /// `‖∇F'[μ*]‖_{L²(μ*)}`.
    pub residual: S,
    pub iterations: usize,
    /// Damping in force at exit.
    pub theta: S,
}

/// `‖∇_h f‖_{L²(μ)}` with centered differences.
pub fn gradient_residual<S: Real>(f: &GridFunction<S>, mu: &GridDensity<S>) -> S {
    weighted_gradient_energy(f, mu.values()).sqrt()
}

/// Minimizes a convex objective by damped proximal Gibbs iteration.
///
/// The step direction `proxGibbs(μ) - μ` is a descent direction for `F`, so
/// a step that raises `F` halves `θ` and is retried. Starts from uniform.
pub fn minimize_fixed_point<S: Real>(obj: &Objective<S>, grid: TorusGrid, opts: FixedPointOptions<S>) -> Result<FixedPoint<S>> {
    minimize_fixed_point_from(obj, GridDensity::uniform(grid), opts)
}

/// As [`minimize_fixed_point`], from a given start.
pub fn minimize_fixed_point_from<S: Real>(
    obj: &Objective<S>,
    start: GridDensity<S>,
    opts: FixedPointOptions<S>,
) -> Result<FixedPoint<S>> {
    if !(obj.tau > S::zero()) {
        return Err(Error::InvalidTau(obj.tau.to_f64_lossy()));
    }
    let mut cache = EvalCache::new();
    let mut mu = start;
    let mut ev = obj.evaluate(&mu, &mut cache)?;
    let mut theta = opts.theta;
    let mut residual = gradient_residual(&ev.objective_fv(&mu, obj.tau), &mu);
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: residual.to_f64_lossy() });
        }
        iterations += 1;
        let target = gibbs_of(&ev.g_fv, obj.tau);
        loop {
            let trial = mu.mix(&target, theta)?;
            let trial_ev = obj.evaluate(&trial, &mut cache)?;
            let slack = S::tolerance(1e-14, 64.0) * (S::one() + ev.value.abs());
            if trial_ev.value <= ev.value + slack {
                mu = trial;
                ev = trial_ev;
                break;
            }
            theta *= S::c(0.5);
            if theta < opts.min_theta {
                return Err(Error::NoConvergence { iterations, residual: residual.to_f64_lossy() });
            }
        }
        residual = gradient_residual(&ev.objective_fv(&mu, obj.tau), &mu);
    }
    Ok(FixedPoint { value: ev.value, density: mu, residual, iterations, theta })
}
