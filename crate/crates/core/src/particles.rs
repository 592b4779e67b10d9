//! Euler-Maruyama particle simulators on the line and on the torus.
//!
//! Every particle draws from its own ChaCha8 stream selected by
//! `(seed, particle index)`. Line simulations consume that stream in order;
//! synchronized torus runs start each step at a fixed word offset. Either
//! way the results do not depend on thread scheduling.
//! This module works in `f64` only.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::{gradient_residual, EvalCache, Objective};
use crate::grid::{GridDensity, GridFunction, TorusGrid};
use crate::heat::HeatKernel;
use crate::wgf::FlowTrace;

/// Ambient space of an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Line,
    Torus,
}

/// `N × d` particle positions at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    /// Row-major positions, `dim` coordinates per particle.
    pub positions: Vec<f64>,
    pub dim: usize,
    pub time: f64,
    pub seed: u64,
    pub domain: Domain,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-coordinate sample mean.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.len() as f64;
        (0..self.dim)
            .map(|k| self.positions.iter().skip(k).step_by(self.dim).sum::<f64>() / n)
            .collect()
    }

    /// Per-coordinate unbiased sample variance.
    pub fn variance(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.mean()
            .iter()
            .enumerate()
            .map(|(k, m)| self.positions.iter().skip(k).step_by(self.dim).map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
            .collect()
    }
}

/// Bounded vector field `v(t, x)` with a declared bound on `|v|_∞`.
pub trait Drift: Sync {
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);
}

/// `v ≡ 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroDrift;

impl Drift for ZeroDrift {
    fn eval(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// `v_k(x) = amplitude · sin(2π x_k)`.
#[derive(Clone, Copy, Debug)]
pub struct SineDrift {
    pub amplitude: f64,
}

impl Drift for SineDrift {
    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = self.amplitude * (2.0 * std::f64::consts::PI * xi).sin();
        }
    }
}

/// Drift given by a closure.
pub struct FnDrift<F>(pub F);

impl<F: Fn(f64, &[f64], &mut [f64]) + Sync> Drift for FnDrift<F> {
    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.0)(t, x, out)
    }
}

/// Law of the starting points.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw {
    /// Every particle at the same point.
    Point(Vec<f64>),
    /// Independent coordinates `N(mean_k, std²)`.
    Gaussian { mean: Vec<f64>, std: f64 },
    /// Explicit starting positions, row-major.
    Positions(Vec<f64>),
}

impl InitialLaw {
    fn dim(&self, n: usize) -> Result<usize> {
        match self {
            InitialLaw::Point(p) => Ok(p.len()),
            InitialLaw::Gaussian { mean, .. } => Ok(mean.len()),
            InitialLaw::Positions(p) => {
                if n == 0 || p.len() % n != 0 {
                    Err(Error::InvalidParameter(format!("{} coordinates for {n} particles", p.len())))
                } else {
                    Ok(p.len() / n)
                }
            }
        }
    }

    fn sample(&self, i: usize, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        match self {
            InitialLaw::Point(p) => out.copy_from_slice(p),
            InitialLaw::Gaussian { mean, std } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    let z: f64 = StandardNormal.sample(rng);
                    *o = m + std * z;
                }
            }
            InitialLaw::Positions(p) => out.copy_from_slice(&p[i * out.len()..(i + 1) * out.len()]),
        }
    }
}

/// Words of the stream reserved for one time step of a synchronized run.
const WORDS_PER_STEP: u128 = 1 << 16;

/// Random stream of particle `i`, positioned at step `step` (step 0 is the
/// initial draw).
pub fn particle_rng(seed: u64, i: usize, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    rng
}

/// Number of `dt` steps in `t`, requiring `t` to be a multiple of `dt`.
fn steps_in(t: f64, dt: f64) -> Result<u64> {
    let k = (t / dt).round();
    if (k * dt - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidParameter(format!("time {t} is not a multiple of dt = {dt}")));
    }
    Ok(k as u64)
}

/// Euler-Maruyama settings for `dX = (v(t, X) - c X) dt + s dB` on the line.
#[derive(Clone, Debug, PartialEq)]
pub struct LineSde {
    /// Confinement `c` (1 for the Ornstein-Uhlenbeck-type equation, 0 for a
    /// pure bounded drift).
    pub confinement: f64,
    /// Noise scale `s`.
    pub noise: f64,
    pub dt: f64,
    pub particles: usize,
    pub seed: u64,
}

/// Samples `|v|_∞` on a lattice of `[-R, R]^d` at a few times and errors if it
/// exceeds the declared bound.
fn check_drift_bound(drift: &dyn Drift, bound: f64, dim: usize, t_end: f64) -> Result<()> {
    let pts: usize = if dim == 1 { 2001 } else { 101 };
    let mut x = vec![0.0; dim];
    let mut v = vec![0.0; dim];
    for tk in 0..5 {
        let t = t_end * tk as f64 / 4.0;
        for flat in 0..pts.pow(dim as u32) {
            let mut r = flat;
            for xk in x.iter_mut() {
                *xk = -10.0 + 20.0 * (r % pts) as f64 / (pts - 1) as f64;
                r /= pts;
            }
            drift.eval(t, &x, &mut v);
            for &vk in &v {
                if !(vk.abs() <= bound * (1.0 + 1e-12)) {
                    return Err(Error::DriftBoundViolation { value: vk.abs(), bound });
                }
            }
        }
    }
    Ok(())
}

/// Simulates the line SDE and returns one ensemble per record time.
///
/// Record times must be multiples of `dt` and nondecreasing. The drift is
/// checked against `bound` by sampling before the run.
pub fn simulate_line_sde(
    drift: &dyn Drift,
    bound: f64,
    init: &InitialLaw,
    record_times: &[f64],
    sde: &LineSde,
) -> Result<Vec<ParticleEnsemble>> {
    if !(sde.dt > 0.0) || !(sde.noise >= 0.0) {
        return Err(Error::InvalidParameter("dt must be positive and noise nonnegative".into()));
    }
    if sde.particles == 0 {
        return Err(Error::InvalidParameter("no particles".into()));
    }
    let dim = init.dim(sde.particles)?;
    let t_end = record_times.last().copied().unwrap_or(0.0);
    check_drift_bound(drift, bound, dim, t_end)?;
    let mut record_steps = Vec::with_capacity(record_times.len());
    for &t in record_times {
        let k = steps_in(t, sde.dt)?;
        if record_steps.last().is_some_and(|&p| k < p) {
            return Err(Error::InvalidParameter("record times must be nondecreasing".into()));
        }
        record_steps.push(k);
    }
    let n_rec = record_steps.len();
    let mut out = vec![vec![0.0; sde.particles * dim]; n_rec];
    // Each particle fills its own row of every record.
    let rows: Vec<Vec<f64>> = (0..sde.particles)
        .into_par_iter()
        .map(|i| {
            let mut rng = particle_rng(sde.seed, i, 0);
            let mut x = vec![0.0; dim];
            init.sample(i, &mut rng, &mut x);
            let mut v = vec![0.0; dim];
            let mut row = Vec::with_capacity(n_rec * dim);
            let sq = sde.dt.sqrt() * sde.noise;
            let mut step = 0u64;
            for &target in &record_steps {
                while step < target {
                    drift.eval(step as f64 * sde.dt, &x, &mut v);
                    for k in 0..dim {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        x[k] += (v[k] - sde.confinement * x[k]) * sde.dt + sq * z;
                    }
                    step += 1;
                }
                row.extend_from_slice(&x);
            }
            row
        })
        .collect();
    for (i, row) in rows.iter().enumerate() {
        for r in 0..n_rec {
            out[r][i * dim..(i + 1) * dim].copy_from_slice(&row[r * dim..(r + 1) * dim]);
        }
    }
    Ok(out
        .into_iter()
        .zip(record_times)
        .map(|(positions, &time)| ParticleEnsemble { positions, dim, time, seed: sde.seed, domain: Domain::Line })
        .collect())
}

/// Euler-Maruyama for `dX = (v(t, X) - X) dt + dB` up to `t_end`.
///
/// Requires `dt ≤ 1e-3` and a drift bounded by `mbar` (checked by sampling,
/// [`Error::DriftBoundViolation`] otherwise).
pub fn simulate_confined_sde(
    drift: &dyn Drift,
    mbar: f64,
    init: &InitialLaw,
    t_end: f64,
    dt: f64,
    particles: usize,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if !(dt > 0.0 && dt <= 1e-3) {
        return Err(Error::InvalidParameter(format!("dt = {dt} must lie in (0, 1e-3]")));
    }
    let sde = LineSde { confinement: 1.0, noise: 1.0, dt, particles, seed };
    Ok(simulate_line_sde(drift, mbar, init, &[t_end], &sde)?.remove(0))
}

/// Nearest-grid-point histogram `counts / (N h^d)` of a torus ensemble.
pub fn histogram_density(ens: &ParticleEnsemble, grid: &TorusGrid) -> Result<GridDensity<f64>> {
    if ens.domain != Domain::Torus {
        return Err(Error::DomainMismatch("histogram_density needs a torus ensemble".into()));
    }
    if ens.dim != grid.dim() {
        return Err(Error::GridMismatch(format!("ensemble dim {} vs grid dim {}", ens.dim, grid.dim())));
    }
    if ens.is_empty() {
        return Err(Error::InvalidParameter("empty ensemble".into()));
    }
    let mut counts = vec![0u64; grid.len()];
    for p in ens.positions.chunks(ens.dim) {
        counts[grid.nearest_index(p)] += 1;
    }
    let scale = 1.0 / (ens.len() as f64 * grid.cell_volume::<f64>());
    Ok(GridDensity::from_raw(*grid, counts.into_iter().map(|c| c as f64 * scale).collect()))
}

/// Histogram smoothed by the heat kernel at time `h²`.
pub fn smoothed_density(ens: &ParticleEnsemble, heat: &HeatKernel<f64>) -> Result<GridDensity<f64>> {
    let raw = histogram_density(ens, heat.grid())?;
    GridDensity::normalized(*heat.grid(), heat.apply(raw.values()))
}

/// One bin of a line histogram.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// `count / (N (hi - lo))`.
    pub density: f64,
}

impl Bin {
    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Equal-width histogram of the first coordinate over `[lo, hi)`, normalized
/// by the total number of samples (including those outside the range).
pub fn line_histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<Bin> {
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        if v >= lo && v < hi {
            let k = (((v - lo) / w) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    let n = values.len() as f64;
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| Bin { lo: lo + k as f64 * w, hi: lo + (k + 1) as f64 * w, count: c, density: c as f64 / (n * w) })
        .collect()
}

/// Wilson score interval for a binomial proportion `k/n` at `z` standard
/// deviations.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Empirical `(1/N) Σ e^{|x|²/M₀²}`, with `|x|²/M₀²` clipped at 700.
pub fn subgaussian_check(ens: &ParticleEnsemble, m0: f64) -> Result<f64> {
    if ens.domain != Domain::Line {
        return Err(Error::DomainMismatch("subgaussian_check needs a line ensemble".into()));
    }
    if !(m0 > 0.0) {
        return Err(Error::InvalidParameter(format!("M0 = {m0} must be positive")));
    }
    let s: f64 = ens
        .positions
        .chunks(ens.dim)
        .map(|p| (p.iter().map(|v| v * v).sum::<f64>() / (m0 * m0)).min(700.0).exp())
        .sum();
    Ok(s / ens.len() as f64)
}

/// Settings of a mean-field Langevin run on the torus.
#[derive(Clone, Debug, PartialEq)]
pub struct MflConfig {
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Trace record interval (a multiple of `dt`).
    pub record_every: f64,
    pub seed: u64,
    /// Times (multiples of `dt`) at which full ensembles are kept.
    pub snapshot_times: Vec<f64>,
}

/// Output of [`simulate_mfl_torus`].
#[derive(Clone, Debug)]
pub struct MflRun {
    pub ensemble: ParticleEnsemble,
    /// Trace of `F` at the smoothed empirical density.
    pub trace: FlowTrace<f64>,
    pub snapshots: Vec<ParticleEnsemble>,
}

/// Linear interpolation of the centered-difference gradient of `g` at `x`.
fn interpolate_gradient(g: &GridFunction<f64>, grad: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    let grid = g.grid();
    let n = grid.n();
    let nf = n as f64;
    let mut base = [0usize; 2];
    let mut frac = [0.0f64; 2];
    for k in 0..grid.dim() {
        let u = x[k] * nf;
        let f = u.floor();
        base[k] = (f as i64).rem_euclid(n as i64) as usize;
        frac[k] = u - f;
    }
    for (axis, o) in out.iter_mut().enumerate().take(grid.dim()) {
        let gv = &grad[axis];
        *o = if grid.dim() == 1 {
            let (i0, i1) = (base[0], (base[0] + 1) % n);
            (1.0 - frac[0]) * gv[i0] + frac[0] * gv[i1]
        } else {
            let (i0, i1) = (base[0], (base[0] + 1) % n);
            let (j0, j1) = (base[1], (base[1] + 1) % n);
            let at = |i: usize, j: usize| gv[grid.join([i, j])];
            (1.0 - frac[0]) * ((1.0 - frac[1]) * at(i0, j0) + frac[1] * at(i0, j1))
                + frac[0] * ((1.0 - frac[1]) * at(i1, j0) + frac[1] * at(i1, j1))
        };
    }
}

fn centered_gradient(g: &GridFunction<f64>) -> Vec<Vec<f64>> {
    let grid = *g.grid();
    let inv = 0.5 * grid.n() as f64;
    (0..grid.dim())
        .map(|axis| {
            (0..grid.len())
                .map(|idx| (g.values()[grid.shift(idx, axis, 1)] - g.values()[grid.shift(idx, axis, -1)]) * inv)
                .collect()
        })
        .collect()
}

/// Mean-field Langevin particles `dX = -∇G'[μ̂](X) dt + √(2τ) dB` on the
/// torus, with `μ̂` the nearest-grid-point histogram smoothed by the heat
/// kernel at time `h²`. Particles start uniform unless `init` is given.
pub fn simulate_mfl_torus(
    obj: &Objective<f64>,
    grid: TorusGrid,
    cfg: &MflConfig,
    init: Option<&InitialLaw>,
    reference: Option<f64>,
) -> Result<MflRun> {
    if !(cfg.dt > 0.0) || !(cfg.t_end > 0.0) || cfg.particles == 0 {
        return Err(Error::InvalidParameter("dt, t_end and particle count must be positive".into()));
    }
    let tau = obj.tau;
    let dim = grid.dim();
    let n_steps = steps_in(cfg.t_end, cfg.dt)?;
    let rec = steps_in(cfg.record_every, cfg.dt)?.max(1);
    let snap_steps = cfg.snapshot_times.iter().map(|&t| steps_in(t, cfg.dt)).collect::<Result<Vec<_>>>()?;
    let h = grid.h::<f64>();
    let heat = HeatKernel::new(h * h, grid)?;
    let mut pos = vec![0.0; cfg.particles * dim];
    pos.par_chunks_mut(dim).enumerate().for_each(|(i, p)| {
        let mut rng = particle_rng(cfg.seed, i, 0);
        match init {
            Some(law) => {
                law.sample(i, &mut rng, p);
                p.iter_mut().for_each(|v| *v = v.rem_euclid(1.0));
            }
            None => {
                use rand::Rng;
                p.iter_mut().for_each(|v| *v = rng.gen::<f64>());
            }
        }
    });
    let mut ens = ParticleEnsemble { positions: pos, dim, time: 0.0, seed: cfg.seed, domain: Domain::Torus };
    let mut trace = FlowTrace { gaps: reference.map(|_| Vec::new()), ..Default::default() };
    let mut snapshots = Vec::new();
    let mut cache = EvalCache::new();
    let noise = (2.0 * tau * cfg.dt).sqrt();
    for step in 0..=n_steps {
        ens.time = step as f64 * cfg.dt;
        let mu = smoothed_density(&ens, &heat)?;
        let ev = obj.evaluate(&mu, &mut cache)?;
        if snap_steps.contains(&step) {
            snapshots.push(ens.clone());
        }
        if step % rec == 0 || step == n_steps {
            let r = gradient_residual(&ev.objective_fv(&mu, tau), &mu);
            trace.times.push(ens.time);
            trace.values.push(ev.value);
            trace.dissipation.push(r * r);
            if let (Some(g), Some(f)) = (trace.gaps.as_mut(), reference) {
                g.push(ev.value - f);
            }
            trace.min_density.push(mu.min());
            trace.max_density.push(mu.max());
        }
        if step == n_steps {
            break;
        }
        let grad = centered_gradient(&ev.g_fv);
        let sup = grad.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        trace.lipschitz = trace.lipschitz.max(sup);
        let g_fv = &ev.g_fv;
        ens.positions.par_chunks_mut(dim).enumerate().for_each(|(i, p)| {
            let mut v = [0.0f64; 2];
            interpolate_gradient(g_fv, &grad, p, &mut v[..dim]);
            let mut rng = particle_rng(cfg.seed, i, step + 1);
            for k in 0..dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                p[k] = (p[k] - v[k] * cfg.dt + noise * z).rem_euclid(1.0);
            }
        });
        trace.steps += 1;
    }
    trace.burn_in = crate::wgf::burn_in_time(tau, trace.lipschitz);
    trace.final_density = Some(smoothed_density(&ens, &heat)?);
    Ok(MflRun { ensemble: ens, trace, snapshots })
}
