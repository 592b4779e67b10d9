//! The ten acceptance experiments, each returning a pass/fail outcome with
//! the measured numbers.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use mfl_core::bounds::{
    compact_rates, gaussian_sandwich_params, kernel_bounds_rd, kernel_bounds_td, noncompact_burn_in, poly_constant,
    torus_density_envelope, variance_change_constant, Regime,
};
use mfl_core::eot::{afi_sandwich, SinkhornOptions};
use mfl_core::functionals::{minimize_fixed_point, FixedPointOptions, Functional, Objective};
use mfl_core::grid::{entropy, fisher_information, GridDensity, GridFunction};
use mfl_core::particles::{line_histogram, simulate_confined_sde, simulate_line_sde, wilson_interval, InitialLaw, LineSde, SineDrift};
use mfl_core::rates::{decay_window, linear_fit, rate_fit_series, RateFit};
use mfl_core::spectrum::{interaction_tau_threshold, kernel_spectrum};
use mfl_core::trajectory::{build_objective, coupled_flow, generate_synthetic, minimize_chain, ChainObjective, SyntheticSpec, Variant};
use mfl_core::wgf::{run_flow, FlowConfig, FlowTrace};
use mfl_core::{Result, TorusGrid};

/// Measured result of one criterion.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub id: u32,
    pub title: &'static str,
    pub passed: bool,
    /// `(name, value)` pairs of everything measured.
    pub metrics: Vec<(String, String)>,
    /// Names of the sub-checks that failed.
    pub failures: Vec<String>,
    pub elapsed: Duration,
}

impl Outcome {
    /// `criterion <id> PASS|FAIL <title> (<seconds>s) [failed: ...]`.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("criterion {:>2} {status} {} ({:.1}s)", self.id, self.title, self.elapsed.as_secs_f64());
        if !self.failures.is_empty() {
            s.push_str(&format!(" failed: {}", self.failures.join("; ")));
        }
        s
    }
}

struct Recorder {
    id: u32,
    title: &'static str,
    start: Instant,
    metrics: Vec<(String, String)>,
    failures: Vec<String>,
}

impl Recorder {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, start: Instant::now(), metrics: Vec::new(), failures: Vec::new() }
    }

    fn metric(&mut self, name: impl Into<String>, value: impl std::fmt::Display) {
        self.metrics.push((name.into(), value.to_string()));
    }

    fn check(&mut self, name: impl Into<String>, ok: bool) {
        if !ok {
            self.failures.push(name.into());
        }
    }

    fn finish(mut self, budget: Duration) -> Outcome {
        let elapsed = self.start.elapsed();
        self.metric("runtime_s", format!("{:.2}", elapsed.as_secs_f64()));
        self.check(format!("runtime {:.1}s over {}s", elapsed.as_secs_f64(), budget.as_secs()), elapsed < budget);
        Outcome {
            id: self.id,
            title: self.title,
            passed: self.failures.is_empty(),
            metrics: self.metrics,
            failures: self.failures,
            elapsed,
        }
    }
}

/// Coefficient of `cos(2π k x)` in a one-dimensional grid profile.
pub fn cosine_mode(values: &[f64], k: usize) -> f64 {
    let n = values.len();
    let h = 1.0 / n as f64;
    2.0 * h * values.iter().enumerate().map(|(i, v)| v * (2.0 * PI * (k * i) as f64 * h).cos()).sum::<f64>()
}

/// Heat flow of `1 + ½cos(2πx)` at `τ = 1` on 256 cells.
pub fn heat_flow() -> Result<Outcome> {
    let mut rec = Recorder::new(1, "heat-flow benchmark");
    let grid = TorusGrid::new(1, 256)?;
    let mu0 = GridDensity::from_fn(grid, |x: &[f64]| 1.0 + 0.5 * (2.0 * PI * x[0]).cos())?;
    let obj = Objective::new(Vec::new(), 1.0);
    let cfg = FlowConfig { t_end: 0.05, record_every: 1e-3, ..FlowConfig::default() };
    let trace = run_flow(&mu0, &obj, &cfg, None)?;
    let mu = trace.final_density.clone().expect("final density");
    let amp = cosine_mode(mu.values(), 1);
    let exact = 0.5 * (-4.0 * PI * PI * 0.05).exp();
    let rel = (amp - exact).abs() / exact;
    let monotone = trace.values.windows(2).all(|w| w[1] <= w[0]);
    let drift = (mu.mass() - mu0.mass()).abs();
    rec.metric("mode1_amplitude", format!("{amp:.10e}"));
    rec.metric("mode1_exact", format!("{exact:.10e}"));
    rec.metric("relative_error", format!("{rel:.3e}"));
    rec.metric("mass_drift", format!("{drift:.3e}"));
    rec.metric("steps", trace.steps);
    rec.check(format!("mode-1 relative error {rel:.2e} above 5e-3"), rel <= 5e-3);
    rec.check("F not monotone", monotone);
    rec.check(format!("mass drift {drift:.2e} above 1e-13"), drift <= 1e-13);
    Ok(rec.finish(Duration::from_secs(10)))
}

/// `W(z) = -κ cos(2πz)` on a one-dimensional grid.
pub fn neg_cosine_kernel(grid: TorusGrid, kappa: f64) -> GridFunction<f64> {
    GridFunction::from_fn(grid, |z: &[f64]| -kappa * (2.0 * PI * z[0]).cos())
}

/// Interaction flow with a fixed-point reference and the fitted decay.
#[derive(Clone, Debug)]
pub struct InteractionRun {
    pub tau: f64,
    pub threshold: f64,
    pub reference: f64,
    pub trace: FlowTrace<f64>,
    pub fit: RateFit,
    pub window: (f64, f64),
}

/// Smallest gap kept in a rate-fit window; below it the fixed-point
/// reference and the rounding of `F` dominate.
pub const GAP_FLOOR: f64 = 1e-11;

/// Runs the `-κ cos` interaction flow from `1 + 0.9 cos(2πx)` and fits
/// `regime` on `[burn-in, first gap below GAP_FLOOR]`.
pub fn interaction_run(kappa: f64, tau: f64, n: usize, t_end: f64, record_every: f64, regime: Regime) -> Result<InteractionRun> {
    let grid = TorusGrid::new(1, n)?;
    let w = neg_cosine_kernel(grid, kappa);
    let threshold = interaction_tau_threshold(&kernel_spectrum(&w)?);
    let obj = Objective::new(vec![Functional::interaction(w)?], tau);
    let fp = minimize_fixed_point(&obj, grid, FixedPointOptions::default())?;
    let mu0 = GridDensity::from_fn(grid, |x: &[f64]| 1.0 + 0.9 * (2.0 * PI * x[0]).cos())?;
    let cfg = FlowConfig { t_end, record_every, ..FlowConfig::default() };
    let trace = run_flow(&mu0, &obj, &cfg, Some(fp.value))?;
    let times: Vec<f64> = trace.times.clone();
    let gaps: Vec<f64> = trace.gaps.clone().expect("gaps");
    let window = decay_window(&times, &gaps, trace.burn_in, GAP_FLOOR);
    let fit = rate_fit_series(&times, &gaps, regime, window)?;
    Ok(InteractionRun { tau, threshold, reference: fp.value, trace, fit, window })
}

/// Exponential regime above the certified threshold.
pub fn exponential_regime() -> Result<Outcome> {
    let mut rec = Recorder::new(2, "exponential regime above tau_c");
    let kappa = 0.2;
    let runs = [1.2, 1.6]
        .iter()
        .map(|&tau| interaction_run(kappa, tau, 64, 0.6, 2e-3, Regime::Exponential))
        .collect::<Result<Vec<_>>>()?;
    let r = &runs[0];
    let l = r.trace.lipschitz.max(r.tau);
    let env = torus_density_envelope(l, r.tau, 1)?;
    let cert = compact_rates(env.m, env.big_m, r.tau, r.threshold, env.t0)?;
    let certified = cert.exponential_rate.expect("strictly above threshold");
    rec.metric("threshold", format!("{:.6}", r.threshold));
    rec.metric("measured_L", format!("{:.6e}", r.trace.lipschitz));
    rec.metric("envelope_m", format!("{:.6e}", env.m));
    rec.metric("envelope_M", format!("{:.6e}", env.big_m));
    rec.metric("burn_in", format!("{:.6e}", r.trace.burn_in));
    rec.metric("certified_rate", format!("{certified:.6e}"));
    for run in &runs {
        rec.metric(format!("rate_tau_{}", run.tau), format!("{:.6e}", run.fit.rate));
        rec.metric(format!("r2_tau_{}", run.tau), format!("{:.6}", run.fit.r_squared));
        rec.metric(format!("window_tau_{}", run.tau), format!("[{:.4}, {:.4}] ({} samples)", run.window.0, run.window.1, run.fit.samples));
    }
    let ratio = r.fit.rate / certified;
    rec.metric("measured_over_certified", format!("{ratio:.3e}"));
    rec.check(format!("measured rate {:.3e} below 0.9 x certificate {certified:.3e}", r.fit.rate), r.fit.rate >= 0.9 * certified);
    rec.check(
        format!("rate at tau=1.6 ({:.3e}) not above rate at tau=1.2 ({:.3e})", runs[1].fit.rate, runs[0].fit.rate),
        runs[1].fit.rate > runs[0].fit.rate,
    );
    Ok(rec.finish(Duration::from_secs(120)))
}

/// Reciprocal regime at the certified threshold.
pub fn reciprocal_regime() -> Result<Outcome> {
    let mut rec = Recorder::new(3, "reciprocal regime at tau_c");
    let run = interaction_run(0.2, 0.8, 64, 1.0, 2e-3, Regime::Reciprocal)?;
    let l = run.trace.lipschitz.max(run.tau);
    let env = torus_density_envelope(l, run.tau, 1)?;
    let cert = compact_rates(env.m, env.big_m, run.tau, run.threshold, env.t0)?;
    let exp_fit = rate_fit_series(&run.trace.times, run.trace.gaps.as_ref().expect("gaps"), Regime::Exponential, run.window)?;
    rec.metric("threshold", format!("{:.6}", run.threshold));
    rec.metric("certificate_regime", format!("{:?}", cert.regime));
    rec.metric("certified_slope_c2", format!("{:.6e}", cert.reciprocal_slope));
    rec.metric("reciprocal_slope", format!("{:.6e}", run.fit.rate));
    rec.metric("reciprocal_r2", format!("{:.6}", run.fit.r_squared));
    rec.metric("window", format!("[{:.4}, {:.4}] ({} samples)", run.window.0, run.window.1, run.fit.samples));
    rec.metric("exponential_rate_same_window", format!("{:.6e}", exp_fit.rate));
    rec.metric("exponential_r2_same_window", format!("{:.6}", exp_fit.r_squared));
    rec.check(
        format!("slope {:.3e} below c2 {:.3e}", run.fit.rate, cert.reciprocal_slope),
        run.fit.rate >= cert.reciprocal_slope,
    );
    rec.check(format!("reciprocal R^2 {:.4} below 0.98", run.fit.r_squared), run.fit.r_squared >= 0.98);
    Ok(rec.finish(Duration::from_secs(120)))
}

/// Per-bucket comparison of an empirical transition density with the
/// pure-drift kernel bounds.
#[derive(Clone, Debug)]
pub struct BucketCheck {
    pub mbar: f64,
    pub t: f64,
    pub x: f64,
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    pub lower_prob: f64,
    pub upper_prob: f64,
    pub wilson: (f64, f64),
    pub passed: bool,
}

/// Integrates `f` over `[a, b]` with composite Simpson on `k` panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, k: usize) -> f64 {
    let k = k + k % 2;
    let h = (b - a) / k as f64;
    let mut s = f(a) + f(b);
    for i in 1..k {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Simulates `dY = M̄ sin(2πY) dt + dB` from each start and compares the
/// bucket probabilities with the kernel bounds integrated over each bucket,
/// the empirical side widened to a Wilson interval at `z = 3`.
pub fn kernel_buckets(
    mbar: f64,
    starts: &[f64],
    times: &[f64],
    particles: usize,
    dt: f64,
    bins: usize,
    seed: u64,
) -> Result<Vec<BucketCheck>> {
    let env = kernel_bounds_rd(mbar, 1)?;
    let drift = SineDrift { amplitude: mbar };
    let mut out = Vec::new();
    for (si, &x) in starts.iter().enumerate() {
        let sde = LineSde { confinement: 0.0, noise: 1.0, dt, particles, seed: seed.wrapping_add(si as u64) };
        let ens = simulate_line_sde(&drift, mbar, &InitialLaw::Point(vec![x]), times, &sde)?;
        for e in &ens {
            let t = e.time;
            let half = 4.0 * t.sqrt();
            for b in line_histogram(&e.positions, x - half, x + half, bins) {
                let lower_prob = simpson(|y| env.lower(t, &[x], &[y]), b.lo, b.hi, 16);
                let upper_prob = simpson(|y| env.upper(t, &[x], &[y]), b.lo, b.hi, 16);
                let wilson = wilson_interval(b.count, particles as u64, 3.0);
                let passed = wilson.1 >= lower_prob && wilson.0 <= upper_prob;
                out.push(BucketCheck { mbar, t, x, lo: b.lo, hi: b.hi, count: b.count, lower_prob, upper_prob, wilson, passed });
            }
        }
    }
    Ok(out)
}

/// Empirical transition densities against the bounded-drift kernel bounds.
pub fn kernel_bounds() -> Result<Outcome> {
    let mut rec = Recorder::new(4, "kernel bounds for bounded drift");
    let mut all = Vec::new();
    for (k, &mbar) in [0.5, 1.0].iter().enumerate() {
        all.extend(kernel_buckets(mbar, &[0.0, 0.3], &[0.1, 0.25, 0.5], 200_000, 1e-3, 32, 40 + 10 * k as u64)?);
    }
    let passed = all.iter().filter(|b| b.passed).count();
    let frac = passed as f64 / all.len() as f64;
    rec.metric("buckets", all.len());
    rec.metric("buckets_passed", passed);
    rec.metric("pass_fraction", format!("{frac:.4}"));
    rec.check(format!("pass fraction {frac:.4} below 0.99"), frac >= 0.99);
    Ok(rec.finish(Duration::from_secs(180)))
}

/// Fit of `-log(histogram) ≈ a + b x²` on `[-r, r]`.
#[derive(Clone, Debug)]
pub struct QuadraticLogFit {
    pub coefficient: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub bins: usize,
}

/// Histograms `values` on `[-r, r]` and fits `-log density` against `x²`
/// over the nonempty bins.
pub fn quadratic_log_fit(values: &[f64], r: f64, bins: usize) -> QuadraticLogFit {
    let n = values.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for b in line_histogram(values, -r, r, bins) {
        if b.count > 0 {
            let c = b.center();
            xs.push(c * c);
            ys.push(-(b.count as f64 / (n * (b.hi - b.lo))).ln());
        }
    }
    let (a, s, r2) = linear_fit(&xs, &ys);
    QuadraticLogFit { coefficient: s, intercept: a, r_squared: r2, bins: xs.len() }
}

/// Quadratic exponent of the confined density at `T_ε`.
pub fn gaussian_sandwich() -> Result<Outcome> {
    let mut rec = Recorder::new(5, "Gaussian sandwich at T_eps");
    let (eps, m_star, m): (f64, f64, f64) = (0.2, 2.0, 1.5);
    let amplitude = 0.25;
    let params = gaussian_sandwich_params(eps, m_star, m)?;
    let dt = 1e-3;
    let t_end = (params.t_eps / dt).ceil() * dt;
    let init = InitialLaw::Gaussian { mean: vec![0.0], std: 0.5 };
    let ens = simulate_confined_sde(&SineDrift { amplitude }, m, &init, t_end, dt, 200_000, 5)?;
    let fit = quadratic_log_fit(&ens.positions, 2.0, 80);
    rec.metric("T_eps", format!("{:.6}", params.t_eps));
    rec.metric("t_simulated", format!("{t_end:.3}"));
    rec.metric("coefficient", format!("{:.6}", fit.coefficient));
    rec.metric("r2", format!("{:.6}", fit.r_squared));
    rec.metric("fitted_log_c_eps", format!("{:.6}", -fit.intercept));
    rec.check(
        format!("coefficient {:.4} outside [{}, {}]", fit.coefficient, 1.0 - eps, 1.0 + eps),
        params.admits(fit.coefficient),
    );
    rec.check(format!("R^2 {:.4} below 0.99", fit.r_squared), fit.r_squared >= 0.99);
    Ok(rec.finish(Duration::from_secs(120)))
}

/// The approximate-Fisher-information sandwich for `1 + 0.1 cos(2πx)`.
pub fn afi_sandwich_sweep() -> Result<Outcome> {
    let mut rec = Recorder::new(6, "AFI sandwich and tau -> 0 ratio");
    let grid = TorusGrid::new(1, 256)?;
    let mu = GridDensity::from_fn(grid, |x: &[f64]| 1.0 + 0.1 * (2.0 * PI * x[0]).cos())?;
    let opts = SinkhornOptions { tol: 1e-12, max_iter: 100_000 };
    let mut ratios = Vec::new();
    for &tau in &[0.2, 0.1, 0.05, 0.025] {
        match afi_sandwich(&mu, tau, opts) {
            Ok(sw) => {
                rec.metric(format!("tau_{tau}"), format!("mid {:.6e} upper {:.6e} ratio {:.6}", sw.mid, sw.upper, sw.ratio()));
                ratios.push(sw.ratio());
            }
            Err(e) => {
                rec.check(format!("sandwich at tau={tau}: {e}"), false);
                ratios.push(f64::NAN);
            }
        }
    }
    let nondecreasing = ratios.windows(2).all(|w| w[1] >= w[0]);
    rec.check("ratio not nondecreasing as tau decreases", nondecreasing);
    let last = *ratios.last().expect("four taus");
    rec.check(format!("ratio {last:.4} at tau=0.025 below 0.8"), last >= 0.8);
    Ok(rec.finish(Duration::from_secs(60)))
}

/// Smooth positive target `ρ ∝ exp(cos 2πx)`.
pub fn smooth_target(grid: TorusGrid) -> Result<GridDensity<f64>> {
    GridDensity::from_fn(grid, |x: &[f64]| (2.0 * PI * x[0]).cos().exp())
}

/// Weight of the quadratic fit in the approximation-error experiment.
pub const FIT_WEIGHT: f64 = 0.05;

/// Suboptimality `G₀(μ_τ) - inf G₀` of the minimizer of `G₀ + R_τ` with
/// `R_τ` either `τH` or `D_τ + τH`.
pub fn regularized_gap(grid: TorusGrid, tau: f64, afi: bool) -> Result<f64> {
    let target = smooth_target(grid)?;
    let g0 = Functional::quadratic_fit(target).with_weight(FIT_WEIGHT);
    let mut comps = vec![g0.clone()];
    if afi {
        comps.push(Functional::self_transport(tau, grid, SinkhornOptions { tol: 1e-13, max_iter: 100_000 })?);
    }
    let obj = Objective::new(comps, tau);
    let opts = FixedPointOptions { tol: 1e-10, max_iter: 20_000, ..FixedPointOptions::default() };
    let fp = minimize_fixed_point(&obj, grid, opts)?;
    g0.value(&fp.density)
}

/// Approximation error of entropic and AFI regularization as `τ → 0`.
pub fn approximation_scaling() -> Result<Outcome> {
    let mut rec = Recorder::new(7, "approximation-error scaling");
    let grid = TorusGrid::new(1, 64)?;
    let taus = [0.1, 0.05, 0.025];
    let fisher = fisher_information(&smooth_target(grid)?)?;
    let mut afi_gaps = Vec::new();
    let mut ent_gaps = Vec::new();
    for &tau in &taus {
        let a = regularized_gap(grid, tau, true)?;
        let e = regularized_gap(grid, tau, false)?;
        let bound = tau * tau * fisher / 8.0;
        rec.metric(format!("tau_{tau}"), format!("afi_gap {a:.6e} entropy_gap {e:.6e} bound {bound:.6e}"));
        rec.check(format!("AFI gap {a:.3e} above tau^2 I/8 = {bound:.3e} at tau={tau}"), a <= bound);
        afi_gaps.push(a);
        ent_gaps.push(e);
    }
    let lt: Vec<f64> = taus.iter().map(|t| t.ln()).collect();
    let slope = |g: &[f64]| linear_fit(&lt, &g.iter().map(|v| v.ln()).collect::<Vec<_>>()).1;
    let (sa, se) = (slope(&afi_gaps), slope(&ent_gaps));
    rec.metric("afi_slope", format!("{sa:.4}"));
    rec.metric("entropy_slope", format!("{se:.4}"));
    rec.check(format!("AFI log-log slope {sa:.3} below 1.7"), sa >= 1.7);
    rec.check(format!("entropy log-log slope {se:.3} above 1.3"), se <= 1.3);
    Ok(rec.finish(Duration::from_secs(300)))
}

/// Synthetic trajectory problem of the acceptance run.
pub fn synthetic_problem(variant: Variant) -> Result<mfl_core::trajectory::TrajectoryProblem<f64>> {
    let grid = TorusGrid::new(1, 64)?;
    let potential = GridFunction::from_fn(grid, |x: &[f64]| 0.05 * (2.0 * PI * x[0]).cos());
    generate_synthetic(&SyntheticSpec {
        potential,
        tau_true: 0.05,
        intervals: 4,
        samples: 10_000,
        sigma: 0.01,
        tau: 0.05,
        variant,
        seed: 8,
        dt: 1e-3,
    })
}

/// Chain flow of one variant with its fit on the principled window.
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub reference: f64,
    pub flow: mfl_core::trajectory::ChainFlow<f64>,
    pub fit: RateFit,
    pub window: (f64, f64),
}

/// Smallest chain gap kept in a rate-fit window.
pub const CHAIN_GAP_FLOOR: f64 = 1e-9;

/// Runs the coupled flow from uniform marginals against the chain
/// fixed-point reference, keeping every recorded chain.
pub fn chain_run(obj: &ChainObjective<f64>, regime: Regime, t_end: f64, record_every: f64) -> Result<ChainRun> {
    let opts = FixedPointOptions { tol: 1e-10, max_iter: 50_000, ..FixedPointOptions::default() };
    let fp = minimize_chain(obj, opts)?;
    let chain0 = (0..obj.len()).map(|_| GridDensity::uniform(*obj.grid())).collect();
    let cfg = FlowConfig { t_end, record_every, keep_snapshots: true, ..FlowConfig::default() };
    let flow = coupled_flow(obj, chain0, &cfg, Some(fp.value))?;
    let gaps = flow.trace.gaps.clone().expect("gaps");
    let window = decay_window(&flow.trace.times, &gaps, flow.trace.burn_in, CHAIN_GAP_FLOOR);
    let fit = rate_fit_series(&flow.trace.times, &gaps, regime, window)?;
    Ok(ChainRun { reference: fp.value, flow, fit, window })
}

/// Largest `|(F̃ - F) + (τ/2)(H(μ_0) + H(μ_T))|` over `chains`, with `F` and
/// `F̃` evaluated separately by the two objectives.
pub fn endpoint_identity_error(
    standard: &ChainObjective<f64>,
    debiased: &ChainObjective<f64>,
    chains: &[Vec<GridDensity<f64>>],
) -> Result<f64> {
    let tau = standard.problem.tau;
    let mut worst = 0.0f64;
    for chain in chains {
        let f = standard.value(chain)?;
        let g = debiased.value(chain)?;
        let last = chain.len() - 1;
        let endpoint = 0.5 * tau * (entropy(&chain[0]) + entropy(&chain[last]));
        worst = worst.max(((g - f) + endpoint).abs());
    }
    Ok(worst)
}

/// Exponential decay of the standard chain, reciprocal decay of the
/// debiased chain, and the endpoint-entropy identity.
pub fn trajectory_inference() -> Result<Outcome> {
    let mut rec = Recorder::new(8, "trajectory inference variants");
    let problem = synthetic_problem(Variant::Standard)?;
    let tight = SinkhornOptions { tol: 1e-12, max_iter: 100_000 };
    let std_obj = build_objective(&problem, tight)?;
    let deb_obj = build_objective(&problem.with_variant(Variant::Debiased), tight)?;
    let std_run = chain_run(&std_obj, Regime::Exponential, 4.0, 0.025)?;
    let deb_run = chain_run(&deb_obj, Regime::Reciprocal, 4.0, 0.025)?;
    let loose = SinkhornOptions::default();
    let std_check = build_objective(&problem, loose)?;
    let deb_check = build_objective(&problem.with_variant(Variant::Debiased), loose)?;
    let mut ident = 0.0f64;
    for (name, r) in [("standard", &std_run), ("debiased", &deb_run)] {
        let e = endpoint_identity_error(&std_check, &deb_check, &r.flow.snapshots)?;
        ident = ident.max(e);
        rec.metric(format!("{name}_reference"), format!("{:.12e}", r.reference));
        rec.metric(format!("{name}_rate"), format!("{:.6e}", r.fit.rate));
        rec.metric(format!("{name}_r2"), format!("{:.6}", r.fit.r_squared));
        rec.metric(format!("{name}_window"), format!("[{:.3}, {:.3}] ({} samples)", r.window.0, r.window.1, r.fit.samples));
        rec.metric(format!("{name}_identity_error"), format!("{e:.3e} over {} chains", r.flow.snapshots.len()));
    }
    let deb_gaps = deb_run.flow.trace.gaps.as_ref().expect("gaps");
    let deb_exp = rate_fit_series(&deb_run.flow.trace.times, deb_gaps, Regime::Exponential, deb_run.window)?;
    rec.metric("debiased_exponential_rate_same_window", format!("{:.6e}", deb_exp.rate));
    rec.metric("debiased_exponential_r2_same_window", format!("{:.6}", deb_exp.r_squared));
    rec.check(format!("standard exponential R^2 {:.4} below 0.95", std_run.fit.r_squared), std_run.fit.r_squared >= 0.95);
    rec.check(format!("debiased reciprocal R^2 {:.4} below 0.95", deb_run.fit.r_squared), deb_run.fit.r_squared >= 0.95);
    rec.check(format!("endpoint-entropy identity error {ident:.2e} above 1e-10"), ident <= 1e-10);
    Ok(rec.finish(Duration::from_secs(600)))
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

/// `E[g(X)]` for `X ~ N(0, s²)` by the trapezoid rule on `[-12s, 12s]`,
/// which is spectrally accurate for Gaussian-weighted smooth integrands.
pub fn gaussian_expectation(s: f64, g: impl Fn(f64) -> f64) -> f64 {
    let k = 4000;
    let a = 12.0 * s;
    let h = 2.0 * a / k as f64;
    let norm = 1.0 / (s * (2.0 * PI).sqrt());
    (0..=k)
        .map(|i| {
            let x = -a + i as f64 * h;
            let w = if i == 0 || i == k { 0.5 } else { 1.0 };
            w * g(x) * norm * (-x * x / (2.0 * s * s)).exp()
        })
        .sum::<f64>()
        * h
}

/// Closed-form constants against direct re-evaluation, and the
/// change-of-Gaussian inequalities against quadrature.
pub fn formula_regression() -> Result<Outcome> {
    let mut rec = Recorder::new(9, "formula regression suite");
    let tol = 1e-9;
    let check = |rec: &mut Recorder, name: &str, got: f64, want: f64| {
        rec.metric(name, format!("{got:.12e} (oracle {want:.12e})"));
        rec.check(format!("{name}: {got:.12e} vs {want:.12e}"), rel_close(got, want, tol));
    };
    // Density envelope at L/τ = 2, d = 1.
    let env = torus_density_envelope(2.0, 1.0, 1)?;
    let m_oracle = 0.2 * (-1.5f64).exp() * 2.0 * 2f64.sqrt() / 3.0;
    let big_m_oracle = 4.0 * 2.0 * 2f64.sqrt() * 2.0;
    check(&mut rec, "m", env.m, m_oracle);
    check(&mut rec, "M", env.big_m, big_m_oracle);
    check(&mut rec, "t0", env.t0, 1.0 / 16.0);
    let cert = compact_rates(env.m, env.big_m, 2.0, 1.0, env.t0)?;
    check(&mut rec, "c1", cert.constant("c1").unwrap_or(f64::NAN), 8.0 * PI * PI * m_oracle / big_m_oracle);
    check(&mut rec, "c2", cert.constant("c2").unwrap_or(f64::NAN), PI * PI * m_oracle / (big_m_oracle * big_m_oracle));
    check(&mut rec, "exponential rate", cert.rate, 8.0 * PI * PI * m_oracle / big_m_oracle * 1.0);
    // Kernel bounds on the torus.
    let td = kernel_bounds_td(1.0, 1)?;
    check(&mut rec, "t_star", td.t_star, 0.125);
    check(&mut rec, "torus lower", td.lower, (-1.5f64).exp() / 15.0);
    check(&mut rec, "torus lower d=2", kernel_bounds_td(1.0, 2)?.lower, (-3.0f64).exp() / 45.0);
    check(&mut rec, "torus upper", td.upper, 8.0);
    // Bounded-drift kernel bound at x = y.
    let rd = kernel_bounds_rd(1.0, 1)?;
    let lower_oracle = (-1.0f64 - 0.25).exp() / (2f64.sqrt() * (2.0 * PI * 0.25).sqrt());
    check(&mut rec, "Rd lower (t=0.25, x=y)", rd.lower(0.25, &[0.0], &[0.0]), lower_oracle);
    // Gaussian-comparison constants.
    let vc = variance_change_constant(0.75f64.sqrt(), 1.0, 2.0, 1)?;
    check(&mut rec, "variance-change C", vc, 0.75f64.sqrt() * (1.0f64 / 0.5).powf(0.25));
    let pc = poly_constant(1.0, 1.5f64.sqrt(), 2)?;
    check(&mut rec, "poly C", pc, 4.0 / 3.0);
    let sw = gaussian_sandwich_params(0.1, 2.0, 1.5)?;
    check(&mut rec, "T_eps", sw.t_eps, (1600.0f64).ln() + 0.1 / 16.0);
    check(&mut rec, "noncompact t0", noncompact_burn_in(1.0, 2.0, 1.0, 1.0)?, 5.0 + 4f64.ln());

    // Variance-change inequalities by quadrature: Var_{γ2}(f) ≤ C ‖f - m1‖²_{L^{2p}(γ1)}.
    let (s1, s2, p) = (0.75f64.sqrt(), 1.0, 2.0);
    let c = variance_change_constant(s1, s2, p, 1)?;
    for (name, f) in [("x", (|x: f64| x) as fn(f64) -> f64), ("x^2", |x: f64| x * x)] {
        let m1 = gaussian_expectation(s1, f);
        let m2 = gaussian_expectation(s2, f);
        let var2 = gaussian_expectation(s2, |x| (f(x) - m2).powi(2));
        let norm = gaussian_expectation(s1, |x| (f(x) - m1).powf(2.0 * p)).powf(1.0 / p);
        rec.metric(format!("variance_change_{name}"), format!("Var {var2:.6e} <= C*norm {:.6e}", c * norm));
        rec.check(format!("variance-change inequality fails for f = {name}"), var2 <= c * norm * (1.0 + 1e-12));
    }
    // ∫(γ2/γ1)² dγ1 equals the polynomial-regime constant.
    let (t1, t2) = (1.0f64, 1.2f64.sqrt());
    let ratio = |x: f64| (t1 / t2) * (x * x / (2.0 * t1 * t1) - x * x / (2.0 * t2 * t2)).exp();
    let chi = gaussian_expectation(t1, |x| ratio(x).powi(2));
    check(&mut rec, "poly C by quadrature (d=1, alpha=1.2)", poly_constant(t1, t2, 1)?, chi);
    let pc1 = poly_constant(t1, t2, 1)?;
    for (name, f) in [("x", (|x: f64| x) as fn(f64) -> f64), ("x^2", |x: f64| x * x)] {
        let m1 = gaussian_expectation(t1, f);
        let lhs = gaussian_expectation(t2, |x| f(x) - m1).powi(2);
        let rhs = pc1 * gaussian_expectation(t1, |x| (f(x) - m1).powi(2));
        rec.metric(format!("poly_cs_{name}"), format!("{lhs:.6e} <= {rhs:.6e}"));
        rec.check(format!("change-of-measure bound fails for f = {name}"), lhs <= rhs * (1.0 + 1e-12));
    }
    Ok(rec.finish(Duration::from_secs(60)))
}

/// Finite-difference checks of every functional's first variation.
pub fn first_variation_suite() -> Result<Outcome> {
    let mut rec = Recorder::new(10, "first-variation suite");
    let checks = crate::fdcheck::all_functional_checks(20, 2024)?;
    let mut worst = f64::INFINITY;
    let mut exact = 0;
    for c in &checks {
        if c.exact() {
            exact += 1;
        } else {
            worst = worst.min(c.order);
        }
        if !c.passed() {
            rec.check(format!("{} #{}: order {:.3} errors {:?}", c.name, c.sample, c.order, c.errors), false);
        }
    }
    let names: std::collections::BTreeSet<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    rec.metric("functionals", names.into_iter().collect::<Vec<_>>().join(","));
    rec.metric("checks", checks.len());
    rec.metric("exact_to_rounding", exact);
    rec.metric("worst_order_of_the_rest", format!("{worst:.4}"));
    Ok(rec.finish(Duration::from_secs(300)))
}

/// Runs every criterion in order; an experiment error counts as a failure.
pub fn run_all() -> Vec<Outcome> {
    type Runner = fn() -> Result<Outcome>;
    let runners: [(u32, &'static str, Runner); 10] = [
        (1, "heat-flow benchmark", heat_flow),
        (2, "exponential regime above tau_c", exponential_regime),
        (3, "reciprocal regime at tau_c", reciprocal_regime),
        (4, "kernel bounds for bounded drift", kernel_bounds),
        (5, "Gaussian sandwich at T_eps", gaussian_sandwich),
        (6, "AFI sandwich and tau -> 0 ratio", afi_sandwich_sweep),
        (7, "approximation-error scaling", approximation_scaling),
        (8, "trajectory inference variants", trajectory_inference),
        (9, "formula regression suite", formula_regression),
        (10, "first-variation suite", first_variation_suite),
    ];
    runners.iter().map(|&(id, title, f)| run_one(id, title, f)).collect()
}

/// Runs one criterion, turning an error into a failed outcome.
pub fn run_one(id: u32, title: &'static str, f: fn() -> Result<Outcome>) -> Outcome {
    let start = Instant::now();
    f().unwrap_or_else(|e| Outcome {
        id,
        title,
        passed: false,
        metrics: Vec::new(),
        failures: vec![format!("error: {e}")],
        elapsed: start.elapsed(),
    })
}
