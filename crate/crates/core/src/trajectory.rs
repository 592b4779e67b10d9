//! Trajectory inference over `T + 1` marginals coupled by entropic transport.
//!
//! The standard objective is
//!
//! ```text
//! F(μ) = 1/(T+1) Σ_i Fit(μ_i | ρ̂_i) + T Σ_i T_{τ/T}(μ_i, μ_{i+1}) + τ Σ_i H(μ_i)
//! ```
//!
//! and the debiased variant lowers the endpoint entropy weights to `τ/2`,
//! i.e. `F̃ = F - (τ/2)(H(μ_0) + H(μ_T))`.

use std::io::{BufRead, Write};
use std::sync::Arc;

use rayon::prelude::*;

use crate::eot::{sinkhorn_with, SinkhornOptions};
use crate::error::{Error, Result};
use crate::functionals::{gibbs_of, gradient_residual, FixedPointOptions, Functional};
use crate::grid::{entropy, GridDensity, GridFunction, TorusGrid};
use crate::heat::HeatKernel;
use crate::io::{read_grid_block, write_grid};
use crate::real::Real;
use crate::wgf::{burn_in_time, drift_sup, stable_dt, step_with_drift, FlowConfig, FlowTrace};

/// Entropy weighting of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Weight `τ` on every marginal.
    Standard,
    /// Weight `τ/2` on the endpoints and `τ` on interior marginals.
    Debiased,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::Debiased => "debiased",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Variant::Standard),
            "debiased" => Ok(Variant::Debiased),
            other => Err(Error::Parse(format!("unknown variant `{other}`"))),
        }
    }
}

/// Observations and hyperparameters of one inference problem.
#[derive(Clone, Debug)]
pub struct TrajectoryProblem<S> {
    pub observations: Vec<GridDensity<S>>,
    pub sigma: S,
    pub tau: S,
    pub variant: Variant,
}

impl<S: Real> TrajectoryProblem<S> {
    pub fn new(observations: Vec<GridDensity<S>>, sigma: S, tau: S, variant: Variant) -> Result<Self> {
        if observations.len() < 2 {
            return Err(Error::InvalidParameter(format!("need at least 2 observations, got {}", observations.len())));
        }
        let grid = *observations[0].grid();
        for o in &observations[1..] {
            grid.ensure_same(o.grid())?;
        }
        if !(tau > S::zero()) {
            return Err(Error::InvalidTau(tau.to_f64_lossy()));
        }
        if !(sigma > S::zero()) {
            return Err(Error::InvalidSigma(sigma.to_f64_lossy()));
        }
        Ok(Self { observations, sigma, tau, variant })
    }

    /// Number of intervals `T`.
    pub fn intervals(&self) -> usize {
        self.observations.len() - 1
    }

    pub fn grid(&self) -> &TorusGrid {
        self.observations[0].grid()
    }

    /// Same observations under another variant.
    pub fn with_variant(&self, variant: Variant) -> Self {
        Self { variant, ..self.clone() }
    }

    /// Writes the problem file: a header
    /// `trajectory T=<T> n=<n> sigma=<σ> tau=<τ> variant=<v>` and `T + 1`
    /// grid blocks.
    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "trajectory T={} n={} sigma={:.16e} tau={:.16e} variant={}",
            self.intervals(),
            self.grid().n(),
            self.sigma.to_f64_lossy(),
            self.tau.to_f64_lossy(),
            self.variant.name()
        )?;
        for o in &self.observations {
            write_grid(out, o.grid(), o.values())?;
        }
        Ok(())
    }

    /// Reads a problem file written by [`Self::write`].
    pub fn read<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = loop {
            match lines.next() {
                Some(l) => {
                    let l = l?;
                    if !l.trim().is_empty() {
                        break l;
                    }
                }
                None => return Err(Error::Parse("empty problem file".into())),
            }
        };
        let mut it = header.split_whitespace();
        if it.next() != Some("trajectory") {
            return Err(Error::Parse(format!("expected trajectory header, found `{header}`")));
        }
        let mut t = None;
        let mut n = None;
        let mut sigma = None;
        let mut tau = None;
        let mut variant = None;
        for tok in it {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse(format!("bad header field `{tok}`")))?;
            let bad = || Error::Parse(format!("bad value in `{tok}`"));
            match k {
                "T" => t = Some(v.parse::<usize>().map_err(|_| bad())?),
                "n" => n = Some(v.parse::<usize>().map_err(|_| bad())?),
                "sigma" => sigma = Some(v.parse::<f64>().map_err(|_| bad())?),
                "tau" => tau = Some(v.parse::<f64>().map_err(|_| bad())?),
                "variant" => variant = Some(Variant::parse(v)?),
                _ => return Err(Error::Parse(format!("unknown header field `{k}`"))),
            }
        }
        let missing = |k: &str| Error::Parse(format!("header lacks `{k}`"));
        let t = t.ok_or_else(|| missing("T"))?;
        let n = n.ok_or_else(|| missing("n"))?;
        let mut observations = Vec::with_capacity(t + 1);
        for _ in 0..=t {
            let (grid, values) = read_grid_block::<S, _>(&mut lines)?;
            if grid.n() != n {
                return Err(Error::GridMismatch(format!("block has n = {}, header says {n}", grid.n())));
            }
            observations.push(GridDensity::new(grid, values)?);
        }
        Self::new(
            observations,
            S::c(sigma.ok_or_else(|| missing("sigma"))?),
            S::c(tau.ok_or_else(|| missing("tau"))?),
            variant.ok_or_else(|| missing("variant"))?,
        )
    }
}

/// Coupled objective over a chain of marginals.
#[derive(Clone, Debug)]
pub struct ChainObjective<S: Real> {
    pub problem: TrajectoryProblem<S>,
    /// `Fit(· | ρ̂_i) / (T + 1)`.
    fits: Vec<Functional<S>>,
    /// Heat kernel at time `τ/T`.
    heat: Arc<HeatKernel<S>>,
    pub options: SinkhornOptions<S>,
}

/// Warm starts of the coupling potentials.
#[derive(Clone, Debug, Default)]
pub struct ChainCache<S> {
    psi: Vec<Option<Vec<S>>>,
    pub evaluations: usize,
    pub refresh_every: usize,
}

impl<S: Real> ChainCache<S> {
    pub fn new() -> Self {
        Self { psi: Vec::new(), evaluations: 0, refresh_every: 0 }
    }

    pub fn with_refresh(every: usize) -> Self {
        Self { psi: Vec::new(), evaluations: 0, refresh_every: every }
    }
}

/// Value and first variations of a chain.
#[derive(Clone, Debug)]
pub struct ChainEvaluation<S> {
    /// `F(μ)` (or `F̃(μ)` for the debiased variant).
    pub value: S,
    pub g_value: S,
    pub entropies: Vec<S>,
    /// `T · T_{τ/T}(μ_i, μ_{i+1})` per coupling.
    pub couplings: Vec<S>,
    /// `∂G/∂μ_i`, mean-zero.
    pub g_fv: Vec<GridFunction<S>>,
}

/// Densities of a chain with their first variations and objective value.
#[derive(Clone, Debug)]
pub struct MarginalChain<S> {
    pub densities: Vec<GridDensity<S>>,
    /// `∂F/∂μ_i`, mean-zero.
    pub first_variations: Vec<GridFunction<S>>,
    pub value: S,
}

impl<S: Real> ChainObjective<S> {
    /// Entropy weight `w_i` of marginal `i` (the diffusivity is `w_i τ`).
    pub fn entropy_weight(&self, i: usize) -> S {
        let t = self.problem.intervals();
        match self.problem.variant {
            Variant::Debiased if i == 0 || i == t => S::c(0.5),
            _ => S::one(),
        }
    }

    pub fn diffusivity(&self, i: usize) -> S {
        self.entropy_weight(i) * self.problem.tau
    }

    pub fn grid(&self) -> &TorusGrid {
        self.problem.grid()
    }

    pub fn len(&self) -> usize {
        self.problem.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn check_chain(&self, chain: &[GridDensity<S>]) -> Result<()> {
        if chain.len() != self.len() {
            return Err(Error::InvalidParameter(format!("chain has {} marginals, expected {}", chain.len(), self.len())));
        }
        for mu in chain {
            self.grid().ensure_same(mu.grid())?;
        }
        Ok(())
    }

    /// Evaluates the chain, solving the `T` couplings in parallel.
    pub fn evaluate(&self, chain: &[GridDensity<S>], cache: &mut ChainCache<S>) -> Result<ChainEvaluation<S>> {
        self.check_chain(chain)?;
        let t = self.problem.intervals();
        let tf = S::from_usize_exact(t);
        if cache.psi.len() != t {
            cache.psi = vec![None; t];
        }
        let warm = std::mem::take(&mut cache.psi);
        let solved: Vec<_> = (0..t)
            .into_par_iter()
            .zip(warm.into_par_iter())
            .map(|(i, w)| sinkhorn_with(&self.heat, &chain[i], &chain[i + 1], self.options, w.as_deref()))
            .collect();
        let mut g_fv: Vec<GridFunction<S>> = Vec::with_capacity(t + 1);
        let mut g_value = S::zero();
        for (mu, fit) in chain.iter().zip(&self.fits) {
            let (v, f) = fit.value_and_fv(mu)?;
            g_value += v;
            g_fv.push(f);
        }
        let mut couplings = Vec::with_capacity(t);
        let mut psi = Vec::with_capacity(t);
        for (i, r) in solved.into_iter().enumerate() {
            let r = r?;
            couplings.push(tf * r.value);
            g_value += tf * r.value;
            g_fv[i] = g_fv[i].clone().axpy(tf, &r.phi);
            g_fv[i + 1] = g_fv[i + 1].clone().axpy(tf, &r.psi);
            psi.push(Some(r.psi.into_values()));
        }
        cache.evaluations += 1;
        cache.psi = if cache.refresh_every > 0 && cache.evaluations.is_multiple_of(cache.refresh_every) { vec![None; t] } else { psi };
        let entropies: Vec<S> = chain.iter().map(entropy).collect();
        let mut value = g_value;
        for (i, h) in entropies.iter().enumerate() {
            value += self.diffusivity(i) * *h;
        }
        let g_fv = g_fv.into_iter().map(|f| f.centered()).collect();
        Ok(ChainEvaluation { value, g_value, entropies, couplings, g_fv })
    }

    /// `F(μ)`.
    pub fn value(&self, chain: &[GridDensity<S>]) -> Result<S> {
        Ok(self.evaluate(chain, &mut ChainCache::new())?.value)
    }

    /// `∂F/∂μ_i = ∂G/∂μ_i + w_i τ log μ_i`, mean-zero.
    pub fn marginal_fv(&self, ev: &ChainEvaluation<S>, chain: &[GridDensity<S>], i: usize) -> GridFunction<S> {
        ev.g_fv[i].clone().axpy(self.diffusivity(i), &chain[i].ln()).centered()
    }

    /// Evaluated chain with all first variations.
    pub fn chain(&self, densities: Vec<GridDensity<S>>) -> Result<MarginalChain<S>> {
        let ev = self.evaluate(&densities, &mut ChainCache::new())?;
        let first_variations = (0..densities.len()).map(|i| self.marginal_fv(&ev, &densities, i)).collect();
        Ok(MarginalChain { densities, first_variations, value: ev.value })
    }

    /// `(Σ_i ‖∇ ∂F/∂μ_i‖²_{L²(μ_i)})^{1/2}`.
    pub fn residual(&self, ev: &ChainEvaluation<S>, chain: &[GridDensity<S>]) -> S {
        (0..chain.len())
            .map(|i| {
                let r = gradient_residual(&self.marginal_fv(ev, chain, i), &chain[i]);
                r * r
            })
            .sum::<S>()
            .sqrt()
    }
}

/// Builds the coupled objective of a problem.
pub fn build_objective<S: Real>(problem: &TrajectoryProblem<S>, options: SinkhornOptions<S>) -> Result<ChainObjective<S>> {
    let t = problem.intervals();
    let weight = S::one() / S::from_usize_exact(t + 1);
    let fits = problem
        .observations
        .iter()
        .map(|o| Functional::fit(o.clone(), problem.sigma).map(|f| f.with_weight(weight)))
        .collect::<Result<Vec<_>>>()?;
    let heat = Arc::new(HeatKernel::new(problem.tau / S::from_usize_exact(t), *problem.grid())?);
    Ok(ChainObjective { problem: problem.clone(), fits, heat, options })
}

/// Chain minimizer output.
#[derive(Clone, Debug)]
pub struct ChainFixedPoint<S> {
    pub densities: Vec<GridDensity<S>>,
    pub value: S,
    pub residual: S,
    pub iterations: usize,
}

/// Damped proximal Gibbs iteration on every marginal at once,
/// `μ_i ← (1-θ) μ_i + θ Gibbs(∂G/∂μ_i / (w_i τ))`, with `θ` halved whenever
/// a step raises `F`. Starts from uniform marginals.
pub fn minimize_chain<S: Real>(obj: &ChainObjective<S>, opts: FixedPointOptions<S>) -> Result<ChainFixedPoint<S>> {
    let mut chain: Vec<GridDensity<S>> = (0..obj.len()).map(|_| GridDensity::uniform(*obj.grid())).collect();
    let mut cache = ChainCache::new();
    let mut ev = obj.evaluate(&chain, &mut cache)?;
    let mut theta = opts.theta;
    let mut residual = obj.residual(&ev, &chain);
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: residual.to_f64_lossy() });
        }
        iterations += 1;
        let targets: Vec<GridDensity<S>> = (0..chain.len()).map(|i| gibbs_of(&ev.g_fv[i], obj.diffusivity(i))).collect();
        loop {
            let trial = chain.iter().zip(&targets).map(|(m, g)| m.mix(g, theta)).collect::<Result<Vec<_>>>()?;
            let trial_ev = obj.evaluate(&trial, &mut cache)?;
            let slack = S::tolerance(1e-14, 64.0) * (S::one() + ev.value.abs());
            if trial_ev.value <= ev.value + slack {
                chain = trial;
                ev = trial_ev;
                break;
            }
            theta *= S::c(0.5);
            if theta < opts.min_theta {
                return Err(Error::NoConvergence { iterations, residual: residual.to_f64_lossy() });
            }
        }
        residual = obj.residual(&ev, &chain);
    }
    Ok(ChainFixedPoint { densities: chain, value: ev.value, residual, iterations })
}

/// Trace and final state of a chain flow.
#[derive(Clone, Debug)]
pub struct ChainFlow<S> {
    pub trace: FlowTrace<S>,
    pub chain: Vec<GridDensity<S>>,
    /// Standard-variant value at every record (equal to `trace.values` for
    /// the standard variant).
    pub standard_values: Vec<S>,
    /// Debiased-variant value at every record.
    pub debiased_values: Vec<S>,
    /// Chain at every record when `cfg.keep_snapshots` is set.
    pub snapshots: Vec<Vec<GridDensity<S>>>,
}

/// Simultaneous explicit flow of every marginal under its own first
/// variation, with a common time step.
///
/// `trace.min_density`/`max_density` hold the extremes over all marginals.
/// Fails with [`crate::Error::EnergyIncrease`] if `F` rises between records
/// beyond `cfg.energy_slack`.
pub fn coupled_flow<S: Real>(
    obj: &ChainObjective<S>,
    chain0: Vec<GridDensity<S>>,
    cfg: &FlowConfig<S>,
    reference: Option<S>,
) -> Result<ChainFlow<S>> {
    cfg.validate()?;
    obj.check_chain(&chain0)?;
    let mut cache = ChainCache::with_refresh(cfg.refresh_every);
    let mut chain = chain0;
    let mut t = S::zero();
    let t_int = obj.problem.intervals();
    let half_tau = S::c(0.5) * obj.problem.tau;
    let mut out = ChainFlow {
        trace: FlowTrace { gaps: reference.map(|_| Vec::new()), ..Default::default() },
        chain: Vec::new(),
        standard_values: Vec::new(),
        debiased_values: Vec::new(),
        snapshots: Vec::new(),
    };
    let mut ev = obj.evaluate(&chain, &mut cache)?;
    let record = |out: &mut ChainFlow<S>, t: S, chain: &[GridDensity<S>], ev: &ChainEvaluation<S>| -> Result<()> {
        let tr = &mut out.trace;
        if let Some(&prev) = tr.values.last() {
            if ev.value > prev + cfg.energy_slack * (S::one() + prev.abs()) {
                return Err(Error::EnergyIncrease { t: t.to_f64_lossy(), increase: (ev.value - prev).to_f64_lossy() });
            }
        }
        let r = obj.residual(ev, chain);
        tr.times.push(t);
        tr.values.push(ev.value);
        tr.dissipation.push(r * r);
        if let (Some(g), Some(f)) = (tr.gaps.as_mut(), reference) {
            g.push(ev.value - f);
        }
        tr.min_density.push(chain.iter().map(|m| m.min()).fold(S::infinity(), S::min));
        tr.max_density.push(chain.iter().map(|m| m.max()).fold(S::neg_infinity(), S::max));
        let endpoint = half_tau * (ev.entropies[0] + ev.entropies[t_int]);
        let (std_v, deb_v) = match obj.problem.variant {
            Variant::Standard => (ev.value, ev.value - endpoint),
            Variant::Debiased => (ev.value + endpoint, ev.value),
        };
        out.standard_values.push(std_v);
        out.debiased_values.push(deb_v);
        if cfg.keep_snapshots {
            out.snapshots.push(chain.to_vec());
        }
        Ok(())
    };
    record(&mut out, t, &chain, &ev)?;
    let mut k = 1usize;
    let eps = S::tolerance(1e-12, 16.0);
    loop {
        let next_record = (S::from_usize_exact(k) * cfg.record_every).min(cfg.t_end);
        let mut dt_max = S::infinity();
        for (i, g) in ev.g_fv.iter().enumerate() {
            out.trace.lipschitz = out.trace.lipschitz.max(drift_sup(g));
            dt_max = dt_max.min(stable_dt(g, obj.diffusivity(i)));
        }
        let mut dt = cfg.dt_safety * dt_max;
        let hits = t + dt >= next_record - eps * next_record;
        if hits {
            dt = next_record - t;
        }
        chain = chain
            .iter()
            .enumerate()
            .map(|(i, mu)| step_with_drift(mu, &ev.g_fv[i], obj.diffusivity(i), dt))
            .collect::<Result<Vec<_>>>()?;
        out.trace.steps += 1;
        ev = obj.evaluate(&chain, &mut cache)?;
        if hits {
            t = next_record;
            record(&mut out, t, &chain, &ev)?;
            k += 1;
            if t >= cfg.t_end - eps * cfg.t_end {
                break;
            }
        } else {
            t += dt;
        }
    }
    let min_tau = (0..chain.len()).map(|i| obj.diffusivity(i)).fold(S::infinity(), S::min);
    out.trace.burn_in = burn_in_time(min_tau, out.trace.lipschitz);
    out.chain = chain;
    Ok(out)
}

/// Ground-truth settings for [`generate_synthetic`].
#[derive(Clone, Debug)]
pub struct SyntheticSpec {
    /// Confining potential `V` of the true process.
    pub potential: GridFunction<f64>,
    pub tau_true: f64,
    pub intervals: usize,
    pub samples: usize,
    /// Fit bandwidth of the generated problem.
    pub sigma: f64,
    /// Diffusivity of the generated problem.
    pub tau: f64,
    pub variant: Variant,
    pub seed: u64,
    /// Euler-Maruyama step; `1/T` must be a multiple of it.
    pub dt: f64,
}

/// Simulates Langevin particles in `V` at diffusivity `τ_true` from a
/// uniform start and histograms `samples` positions at times `i/T`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TrajectoryProblem<f64>> {
    use crate::functionals::Objective;
    use crate::particles::{histogram_density, simulate_mfl_torus, MflConfig};
    if spec.samples < 100 {
        return Err(Error::InvalidParameter(format!("need at least 100 samples, got {}", spec.samples)));
    }
    if spec.intervals == 0 {
        return Err(Error::InvalidParameter("need at least one interval".into()));
    }
    let grid = *spec.potential.grid();
    let obj = Objective::new(vec![Functional::potential(spec.potential.clone())], spec.tau_true);
    let snapshot_times: Vec<f64> = (0..=spec.intervals).map(|i| i as f64 / spec.intervals as f64).collect();
    let cfg = MflConfig {
        particles: spec.samples,
        dt: spec.dt,
        t_end: 1.0,
        record_every: 1.0,
        seed: spec.seed,
        snapshot_times,
    };
    let run = simulate_mfl_torus(&obj, grid, &cfg, None, None)?;
    let observations = run.snapshots.iter().map(|e| histogram_density(e, &grid)).collect::<Result<Vec<_>>>()?;
    TrajectoryProblem::new(observations, spec.sigma, spec.tau, spec.variant)
}
