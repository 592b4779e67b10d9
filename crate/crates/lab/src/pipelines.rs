//! Experiment pipelines: each reads its config section, runs, and fills a
//! [`Report`].

use std::path::{Path, PathBuf};

use mfl_core::bounds::{
    compact_rates, confined_kernel_bounds, gaussian_sandwich_params, kernel_bounds_rd, kernel_bounds_td, noncompact_burn_in,
    poly_constant, torus_density_envelope, variance_change_constant, Regime,
};
use mfl_core::eot::afi_sandwich;
use mfl_core::functionals::{minimize_fixed_point, FixedPointOptions, Functional, Objective};
use mfl_core::grid::{entropy, w1_circle, GridDensity};
use mfl_core::io::{write_density_csv, write_ensemble_csv, write_ensemble_metadata, write_grid, write_trace_csv};
use mfl_core::particles::{histogram_density, simulate_confined_sde, simulate_mfl_torus, InitialLaw, MflConfig, SineDrift};
use mfl_core::rates::{decay_window, rate_fit_series, RateFit};
use mfl_core::spectrum::{interaction_tau_threshold, kernel_spectrum, ConvexityCertificate};
use mfl_core::trajectory::{build_objective, coupled_flow, generate_synthetic, minimize_chain, SyntheticSpec, TrajectoryProblem, Variant};
use mfl_core::wgf::{run_flow, FlowConfig, FlowTrace};

use crate::config::{
    resolve, AfiExperiment, BoundsExperiment, Experiment, ExperimentConfig, FlowExperiment, KernelCheckExperiment, ParticlesExperiment,
    RatesExperiment, SandwichExperiment, SinkhornSpec, SpectrumExperiment, TrajExperiment,
};
use crate::criteria::{kernel_buckets, quadratic_log_fit};
use crate::error::LabError;
use crate::report::{num, Report, Summary};
use crate::svg::LinePlot;

/// Settings shared by every experiment of a batch.
#[derive(Clone, Debug)]
pub struct RunContext {
    /// Directory containing the config, for relative input paths.
    pub base: PathBuf,
    /// Output root; each experiment writes to `<out>/<name>`.
    pub out: PathBuf,
    /// Seed used when neither the experiment nor the file sets one.
    pub default_seed: u64,
    /// Seed that overrides every config seed.
    pub seed_override: Option<u64>,
    pub emit_svg: bool,
}

/// Mass drift accepted for conservative updates.
const MASS_TOL: f64 = 1e-12;
/// Accepted disagreement between the fixed-point reference and the flow.
const REFERENCE_TOL: f64 = 1e-6;
/// Accepted error of the endpoint-entropy identity between variants.
const IDENTITY_TOL: f64 = 1e-10;

/// Runs one experiment and writes its manifest, also when it fails.
pub fn run_experiment(exp: &ExperimentConfig, file_seed: Option<u64>, ctx: &RunContext) -> Result<Summary, LabError> {
    let seed = ctx.seed_override.or(exp.seed).or(file_seed).unwrap_or(ctx.default_seed);
    let config = serde_json::to_value(exp).map_err(|e| LabError::Output(e.to_string()))?;
    let inputs = exp.files().into_iter().map(|f| resolve(&ctx.base, f).display().to_string()).collect();
    let mut rep = Report::create(&exp.name, exp.kind.tag(), seed, ctx.out.join(&exp.name), ctx.emit_svg, config, inputs)?;
    let base = ctx.base.as_path();
    let result = match &exp.kind {
        Experiment::Flow(e) => flow(e, base, &mut rep),
        Experiment::MflParticles(e) => particles(e, base, seed, &mut rep),
        Experiment::KernelCheck(e) => kernel_check(e, seed, &mut rep),
        Experiment::Sandwich(e) => sandwich(e, seed, &mut rep),
        Experiment::Afi(e) => afi(e, base, &mut rep),
        Experiment::Spectrum(e) => spectrum(e, base, &mut rep),
        Experiment::Traj(e) => traj(e, base, seed, &mut rep),
        Experiment::Rates(e) => rates(e, base, &mut rep),
        Experiment::Bounds(e) => bounds(e, &mut rep),
    };
    match result {
        Ok(()) => rep.finish(None),
        Err(e) => rep.finish(Some(&e)),
    }
}

fn trace_plot(rep: &mut Report, trace: &FlowTrace<f64>) -> Result<(), LabError> {
    let f: Vec<(f64, f64)> = trace.times.iter().zip(&trace.values).map(|(&t, &v)| (t, v)).collect();
    rep.svg("objective.svg", &LinePlot::new("objective along the flow", "t", "F").with_series("F", f))?;
    if let Some(g) = &trace.gaps {
        let pts = trace.times.iter().zip(g).map(|(&t, &v)| (t, v)).collect();
        rep.svg("gap.svg", &LinePlot::new("suboptimality gap", "t", "F - F*").log_y().with_series("gap", pts))?;
    }
    Ok(())
}

fn monotone(values: &[f64], slack: f64) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + slack * (1.0 + w[0].abs()))
}

fn write_density(rep: &mut Report, stem: &str, mu: &GridDensity<f64>) -> Result<(), LabError> {
    if mu.grid().dim() == 1 {
        rep.write_with(&format!("{stem}.csv"), |w| write_density_csv(w, mu))
    } else {
        rep.write_with(&format!("{stem}.grid"), |w| write_grid(w, mu.grid(), mu.values()))
    }
}

fn flow(e: &FlowExperiment, base: &Path, rep: &mut Report) -> Result<(), LabError> {
    let grid = e.grid.build()?;
    let obj = e.objective.build(grid, base)?;
    let mu0 = e.initial.build(grid, base)?;
    let reference = if e.reference {
        let fp = minimize_fixed_point(&obj, grid, FixedPointOptions::default())?;
        rep.metric("reference_value", fp.value);
        rep.metric("reference_residual", fp.residual);
        rep.metric("reference_iterations", fp.iterations);
        Some(fp.value)
    } else {
        None
    };
    let cfg = FlowConfig { dt_safety: e.dt_safety, t_end: e.t_end, record_every: e.record_every, ..FlowConfig::default() };
    cfg.validate()?;
    let trace = run_flow(&mu0, &obj, &cfg, reference)?;
    let last = trace.final_density.clone().expect("run_flow returns the final density");
    rep.write_with("trace.csv", |w| write_trace_csv(w, &trace))?;
    write_density(rep, "initial", &mu0)?;
    write_density(rep, "final", &last)?;
    trace_plot(rep, &trace)?;
    let drift = (last.mass() - mu0.mass()).abs();
    rep.metric("steps", trace.steps);
    rep.metric("final_value", *trace.values.last().unwrap_or(&f64::NAN));
    rep.metric("mass_drift", drift);
    rep.metric("lipschitz", trace.lipschitz);
    rep.metric("burn_in", trace.burn_in);
    rep.metric("min_density", last.min());
    rep.check("F nonincreasing", monotone(&trace.values, cfg.energy_slack), "F rose between two records");
    rep.check("mass conserved", drift <= MASS_TOL, format!("drift {drift:.3e} above {MASS_TOL:.0e}"));
    rep.check("density nonnegative", last.min() >= 0.0, format!("min {:.3e}", last.min()));
    if let Some(g) = &trace.gaps {
        let fin = *g.last().unwrap_or(&f64::NAN);
        rep.metric("final_gap", fin);
        rep.check(
            "reference below flow",
            fin >= -REFERENCE_TOL,
            format!("final gap {fin:.3e} below -{REFERENCE_TOL:.0e}: fixed-point reference disagrees with the flow"),
        );
        if let Some(max) = e.max_final_gap {
            rep.check("final gap", fin <= max, format!("final gap {fin:.3e} above {max:.3e}"));
        }
    }
    Ok(())
}

fn particles(e: &ParticlesExperiment, base: &Path, seed: u64, rep: &mut Report) -> Result<(), LabError> {
    let grid = e.grid.build()?;
    let obj = e.objective.build(grid, base)?;
    if e.max_w1.is_some() && !e.compare_flow {
        return Err(LabError::Config("max_w1 needs compare_flow = true".into()));
    }
    if e.compare_flow && grid.dim() != 1 {
        return Err(LabError::Config("compare_flow supports one-dimensional grids only".into()));
    }
    let mut snapshot_times = e.snapshot_times.clone();
    if !snapshot_times.iter().any(|&t| (t - e.t_end).abs() < 1e-12) {
        snapshot_times.push(e.t_end);
    }
    let cfg = MflConfig { particles: e.particles, dt: e.dt, t_end: e.t_end, record_every: e.record_every, seed, snapshot_times };
    let run = simulate_mfl_torus(&obj, grid, &cfg, None, None)?;
    rep.write_with("trace.csv", |w| write_trace_csv(w, &run.trace))?;
    trace_plot(rep, &run.trace)?;
    let params = vec![("tau".to_string(), obj.tau.to_string()), ("dt".to_string(), e.dt.to_string())];
    for (k, snap) in run.snapshots.iter().enumerate() {
        rep.write_with(&format!("snapshots/ensemble_{k:03}.csv"), |w| write_ensemble_csv(w, snap))?;
        rep.write_with(&format!("snapshots/ensemble_{k:03}.meta"), |w| write_ensemble_metadata(w, snap, &params))?;
    }
    let hist = histogram_density(&run.ensemble, &grid)?;
    write_density(rep, "final_histogram", &hist)?;
    rep.metric("snapshots", run.snapshots.len());
    rep.metric("final_value", *run.trace.values.last().unwrap_or(&f64::NAN));
    if e.compare_flow {
        let fcfg = FlowConfig { t_end: e.t_end, record_every: e.record_every, ..FlowConfig::default() };
        let trace = run_flow(&GridDensity::uniform(grid), &obj, &fcfg, None)?;
        let mu = trace.final_density.expect("run_flow returns the final density");
        write_density(rep, "flow_final", &mu)?;
        let w1 = w1_circle(&hist, &mu)?;
        rep.metric("w1_to_grid_flow", w1);
        if let Some(max) = e.max_w1 {
            rep.check("particles track the grid flow", w1 <= max, format!("W1 {w1:.3e} above {max:.3e}"));
        }
    }
    Ok(())
}

fn kernel_check(e: &KernelCheckExperiment, seed: u64, rep: &mut Report) -> Result<(), LabError> {
    let mut all = Vec::new();
    for (k, &mbar) in e.mbar.iter().enumerate() {
        all.extend(kernel_buckets(mbar, &e.starts, &e.times, e.particles, e.dt, e.bins, seed.wrapping_add(10 * k as u64))?);
    }
    if all.is_empty() {
        return Err(LabError::Config("no buckets: mbar, starts and times must be nonempty".into()));
    }
    let rows = all.iter().map(|b| {
        vec![
            num(b.mbar),
            num(b.t),
            num(b.x),
            num(b.lo),
            num(b.hi),
            b.count.to_string(),
            num(b.lower_prob),
            num(b.upper_prob),
            num(b.wilson.0),
            num(b.wilson.1),
            if b.passed { "pass" } else { "fail" }.to_string(),
        ]
    });
    let header = ["mbar", "t", "x", "bucket_lo", "bucket_hi", "count", "lower_prob", "upper_prob", "wilson_lo", "wilson_hi", "result"];
    rep.csv("buckets.csv", &header, rows.collect::<Vec<_>>())?;
    let passed = all.iter().filter(|b| b.passed).count();
    let frac = passed as f64 / all.len() as f64;
    rep.metric("buckets", all.len());
    rep.metric("buckets_passed", passed);
    rep.metric("pass_fraction", frac);
    rep.check(
        "buckets within kernel bounds",
        frac >= e.min_pass_fraction,
        format!("pass fraction {frac:.4} below {}", e.min_pass_fraction),
    );
    Ok(())
}

fn sandwich(e: &SandwichExperiment, seed: u64, rep: &mut Report) -> Result<(), LabError> {
    let params = gaussian_sandwich_params(e.epsilon, e.m_star, e.m)?;
    if e.amplitude.abs() > e.m {
        return Err(LabError::Config(format!("perturbation amplitude {} exceeds the drift bound {}", e.amplitude, e.m)));
    }
    // E exp(X²/M*²) for X ~ N(0, s²) is (1 - 2s²/M*²)^{-1/2}.
    let q = 1.0 - 2.0 * e.start_std * e.start_std / (e.m_star * e.m_star);
    let moment = if q > 0.0 { q.powf(-0.5) } else { f64::INFINITY };
    if moment > 2.0 {
        return Err(LabError::Config(format!("start law N(0, {}²) is not {}-subgaussian", e.start_std, e.m_star)));
    }
    let t_end = (params.t_eps / e.dt).ceil() * e.dt;
    let init = InitialLaw::Gaussian { mean: vec![0.0], std: e.start_std };
    let ens = simulate_confined_sde(&SineDrift { amplitude: e.amplitude }, e.m, &init, t_end, e.dt, e.particles, seed)?;
    let fit = quadratic_log_fit(&ens.positions, e.fit_radius, e.fit_bins);
    let c_eps = (-fit.intercept).exp();
    let n = ens.len() as f64;
    let rows: Vec<Vec<String>> = mfl_core::particles::line_histogram(&ens.positions, -e.fit_radius, e.fit_radius, e.fit_bins)
        .into_iter()
        .map(|b| {
            let x = b.center();
            let dens = b.count as f64 / (n * (b.hi - b.lo));
            let (lo, hi) = params.envelope(c_eps, &[x]);
            vec![num(x), b.count.to_string(), num(dens), num(fit.intercept + fit.coefficient * x * x), num(lo), num(hi)]
        })
        .collect();
    rep.csv("histogram.csv", &["x", "count", "density", "fitted_neg_log_density", "envelope_lower", "envelope_upper"], rows)?;
    rep.metric("t_eps", params.t_eps);
    rep.metric("t_simulated", t_end);
    rep.metric("subgaussian_moment", moment);
    rep.metric("coefficient", fit.coefficient);
    rep.metric("r_squared", fit.r_squared);
    rep.metric("fitted_c_eps", c_eps);
    rep.check(
        "quadratic exponent within [1-eps, 1+eps]",
        params.admits(fit.coefficient),
        format!("coefficient {:.4} outside [{}, {}]", fit.coefficient, params.upper_exponent, params.lower_exponent),
    );
    rep.check("quadratic fit quality", fit.r_squared >= e.min_r2, format!("R^2 {:.4} below {}", fit.r_squared, e.min_r2));
    Ok(())
}

fn afi(e: &AfiExperiment, base: &Path, rep: &mut Report) -> Result<(), LabError> {
    let grid = e.grid.build()?;
    let mu = e.density.build(grid, base)?;
    let opts = SinkhornSpec::options(e.sinkhorn);
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for &tau in &e.taus {
        match afi_sandwich(&mu, tau, opts) {
            Ok(sw) => {
                rows.push(vec![num(tau), num(sw.mid), num(sw.upper), num(sw.ratio())]);
                ratios.push((tau, sw.ratio()));
                rep.check(&format!("sandwich at tau={tau}"), true, "");
            }
            Err(mfl_core::Error::SandwichViolation { mid, upper, .. }) => {
                rows.push(vec![num(tau), num(mid), num(upper), num(mid / upper)]);
                rep.check(&format!("sandwich at tau={tau}"), false, format!("0 <= {mid:.3e} <= {upper:.3e} violated"));
            }
            Err(err) => return Err(err.into()),
        }
    }
    rep.csv("afi.csv", &["tau", "D_tau_plus_tauH", "upper_bound", "ratio"], rows)?;
    rep.svg("ratio.svg", &LinePlot::new("(D_tau + tau H) / (tau^2 I / 8)", "tau", "ratio").with_series("ratio", ratios.clone()))?;
    rep.metric("ratios", &ratios);
    if e.require_monotone {
        let mut sorted = ratios.clone();
        sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
        let ok = sorted.windows(2).all(|w| w[1].1 >= w[0].1);
        rep.check("ratio nondecreasing as tau decreases", ok, "ratio dropped when tau decreased");
    }
    Ok(())
}

fn spectrum(e: &SpectrumExperiment, base: &Path, rep: &mut Report) -> Result<(), LabError> {
    let grid = e.grid.build()?;
    let w = e.kernel.build(grid, base)?;
    let spec = kernel_spectrum(&w)?;
    let threshold = interaction_tau_threshold(&spec);
    let dim = grid.dim();
    let header: Vec<&str> = if dim == 1 { vec!["k", "W_k"] } else { vec!["k1", "k2", "W_k"] };
    let rows: Vec<Vec<String>> = spec
        .sorted()
        .into_iter()
        .map(|(k, c)| {
            let mut r: Vec<String> = k[..dim].iter().map(|v| v.to_string()).collect();
            r.push(num(c));
            r
        })
        .collect();
    rep.print(header.join(","));
    for r in &rows {
        rep.print(r.join(","));
    }
    rep.csv("spectrum.csv", &header, rows)?;
    let rec_err = spec
        .reconstruct()
        .values()
        .iter()
        .zip(w.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (plus, minus) = spec.split();
    let split_err = w
        .values()
        .iter()
        .zip(plus.values().iter().zip(minus.values()))
        .map(|(wv, (p, m))| (spec.mean_coefficient() + p - m - wv).abs())
        .fold(0.0, f64::max);
    let cert = ConvexityCertificate::fourier(&spec);
    rep.metric("threshold", threshold);
    rep.metric("negative_mass", spec.negative_mass());
    rep.metric("mean_coefficient", spec.mean_coefficient());
    rep.metric("reconstruction_error", rec_err);
    rep.metric("split_error", split_err);
    rep.metric("certificate", &cert);
    rep.check("reconstruction", rec_err <= 1e-10, format!("max error {rec_err:.3e}"));
    rep.check("split", split_err <= 1e-10, format!("max error {split_err:.3e}"));
    rep.print(format!("threshold={} negative_mass={} n={} d={}", num(threshold), num(spec.negative_mass()), grid.n(), dim));
    Ok(())
}

fn traj(e: &TrajExperiment, base: &Path, seed: u64, rep: &mut Report) -> Result<(), LabError> {
    let mut problem: TrajectoryProblem<f64> = match (&e.problem, &e.synthetic) {
        (Some(p), None) => {
            let f = std::fs::File::open(resolve(base, p)).map_err(|err| LabError::Config(format!("{}: {err}", p.display())))?;
            TrajectoryProblem::read(std::io::BufReader::new(f))?
        }
        (None, Some(s)) => {
            let grid = s.grid.build()?;
            generate_synthetic(&SyntheticSpec {
                potential: s.potential.build(grid, base)?,
                tau_true: s.tau_true,
                intervals: s.intervals,
                samples: s.samples,
                sigma: s.sigma,
                tau: s.tau,
                variant: Variant::Standard,
                seed,
                dt: s.dt,
            })?
        }
        _ => return Err(LabError::Config("set exactly one of `problem` and `synthetic`".into())),
    };
    if let Some(v) = &e.variant {
        problem = problem.with_variant(Variant::parse(v)?);
    }
    rep.write_with("problem.txt", |w| problem.write(w))?;
    let opts = SinkhornSpec::options(e.sinkhorn);
    let obj = build_objective(&problem, opts)?;
    let other = build_objective(
        &problem.with_variant(match problem.variant {
            Variant::Standard => Variant::Debiased,
            Variant::Debiased => Variant::Standard,
        }),
        opts,
    )?;
    let reference = if e.reference {
        let fp = minimize_chain(&obj, FixedPointOptions { tol: 1e-10, max_iter: 50_000, ..FixedPointOptions::default() })?;
        rep.metric("reference_value", fp.value);
        rep.metric("reference_residual", fp.residual);
        Some(fp.value)
    } else {
        None
    };
    let chain0 = (0..obj.len()).map(|_| GridDensity::uniform(*obj.grid())).collect();
    let cfg = FlowConfig { dt_safety: e.dt_safety, t_end: e.t_end, record_every: e.record_every, keep_snapshots: true, ..FlowConfig::default() };
    cfg.validate()?;
    let flow = coupled_flow(&obj, chain0, &cfg, reference)?;
    let t = &flow.trace;
    let rows: Vec<Vec<String>> = (0..t.times.len())
        .map(|k| {
            vec![
                num(t.times[k]),
                num(t.values[k]),
                num(flow.standard_values[k]),
                num(flow.debiased_values[k]),
                t.gaps.as_ref().map_or_else(String::new, |g| num(g[k])),
                num(t.min_density[k]),
                num(t.max_density[k]),
            ]
        })
        .collect();
    rep.csv("chain_trace.csv", &["t", "F", "F_standard", "F_debiased", "gap", "min_density", "max_density"], rows)?;
    trace_plot(rep, t)?;
    for (i, mu) in flow.chain.iter().enumerate() {
        write_density(rep, &format!("marginals/marginal_{i}"), mu)?;
        write_density(rep, &format!("marginals/observation_{i}"), &problem.observations[i])?;
    }
    let half_tau = 0.5 * problem.tau;
    let (std_obj, deb_obj) = match problem.variant {
        Variant::Standard => (&obj, &other),
        Variant::Debiased => (&other, &obj),
    };
    let mut ident = 0.0f64;
    for chain in &flow.snapshots {
        let last = chain.len() - 1;
        let d = deb_obj.value(chain)? - std_obj.value(chain)? + half_tau * (entropy(&chain[0]) + entropy(&chain[last]));
        ident = ident.max(d.abs());
    }
    if problem.grid().dim() == 1 {
        let w1: Vec<f64> = flow
            .chain
            .iter()
            .zip(&problem.observations)
            .map(|(m, o)| w1_circle(m, o))
            .collect::<mfl_core::Result<_>>()?;
        rep.metric("w1_to_observations", &w1);
    }
    rep.metric("variant", problem.variant.name());
    rep.metric("intervals", problem.intervals());
    rep.metric("final_value", *t.values.last().unwrap_or(&f64::NAN));
    rep.metric("endpoint_identity_error", ident);
    rep.metric("recorded_chains", flow.snapshots.len());
    rep.check("objective nonincreasing", monotone(&t.values, cfg.energy_slack), "F rose between two records");
    rep.check(
        "endpoint-entropy identity",
        ident <= IDENTITY_TOL,
        format!("max error {ident:.3e} above {IDENTITY_TOL:.0e}"),
    );
    if let Some(g) = &t.gaps {
        let fin = *g.last().unwrap_or(&f64::NAN);
        rep.metric("final_gap", fin);
        rep.check("reference below flow", fin >= -REFERENCE_TOL, format!("final gap {fin:.3e}"));
    }
    Ok(())
}

fn fit_row(name: &str, certified: Option<f64>, fit: &RateFit) -> Vec<String> {
    let ratio = certified.map(|c| fit.rate / c);
    vec![
        name.to_string(),
        certified.map_or_else(String::new, num),
        num(fit.rate),
        num(fit.r_squared),
        num(fit.window.0),
        num(fit.window.1),
        fit.samples.to_string(),
        ratio.map_or_else(String::new, num),
    ]
}

fn rates(e: &RatesExperiment, base: &Path, rep: &mut Report) -> Result<(), LabError> {
    let grid = e.grid.build()?;
    let w = e.kernel.build(grid, base)?;
    let threshold = interaction_tau_threshold(&kernel_spectrum(&w)?);
    if e.tau < threshold {
        return Err(LabError::Config(format!("tau {} below the certified threshold {threshold}: no rate certificate", e.tau)));
    }
    let obj = Objective::new(vec![Functional::interaction(w)?], e.tau);
    let fp = minimize_fixed_point(&obj, grid, FixedPointOptions::default())?;
    let mu0 = e.initial.build(grid, base)?;
    let cfg = FlowConfig { t_end: e.t_end, record_every: e.record_every, ..FlowConfig::default() };
    cfg.validate()?;
    let trace = run_flow(&mu0, &obj, &cfg, Some(fp.value))?;
    rep.write_with("trace.csv", |w| write_trace_csv(w, &trace))?;
    trace_plot(rep, &trace)?;
    let gaps = trace.gaps.clone().expect("reference supplied");
    let window = decay_window(&trace.times, &gaps, trace.burn_in, e.gap_floor);
    let l = trace.lipschitz.max(e.tau);
    let env = torus_density_envelope(l, e.tau, grid.dim())?;
    let cert = compact_rates(env.m, env.big_m, e.tau, threshold, env.t0)?;
    let exp_fit = rate_fit_series(&trace.times, &gaps, Regime::Exponential, window)?;
    let rec_fit = rate_fit_series(&trace.times, &gaps, Regime::Reciprocal, window)?;
    let header = ["regime", "certified", "fitted", "r_squared", "window_start", "window_end", "samples", "fitted_over_certified"];
    let rows = vec![fit_row("exponential", cert.exponential_rate, &exp_fit), fit_row("reciprocal", Some(cert.reciprocal_slope), &rec_fit)];
    rep.csv("rates.csv", &header, rows)?;
    rep.metric("threshold", threshold);
    rep.metric("reference_value", fp.value);
    rep.metric("envelope", env);
    rep.metric("certificate", &cert);
    rep.metric("exponential_fit", &exp_fit);
    rep.metric("reciprocal_fit", &rec_fit);
    let (fit, name) = match cert.regime {
        Regime::Exponential => (&exp_fit, "exponential"),
        _ => (&rec_fit, "reciprocal"),
    };
    if e.assert_certificate {
        let (ok, detail) = match cert.regime {
            Regime::Exponential => {
                let c = cert.rate;
                (exp_fit.rate >= 0.9 * c, format!("fitted rate {:.3e} below 0.9 x certificate {c:.3e}", exp_fit.rate))
            }
            _ => (rec_fit.rate >= cert.reciprocal_slope, format!("fitted slope {:.3e} below c2 {:.3e}", rec_fit.rate, cert.reciprocal_slope)),
        };
        rep.check(&format!("{name} certificate"), ok, detail);
    }
    if let Some(min) = e.min_r2 {
        rep.check(&format!("{name} fit quality"), fit.r_squared >= min, format!("R^2 {:.4} below {min}", fit.r_squared));
    }
    Ok(())
}

fn bounds(e: &BoundsExperiment, rep: &mut Report) -> Result<(), LabError> {
    let mut kv: Vec<(String, f64)> = Vec::new();
    let mut push = |k: &str, v: f64| kv.push((k.to_string(), v));
    match e {
        BoundsExperiment::TorusEnvelope { l, tau, d } => {
            let env = torus_density_envelope(*l, *tau, *d)?;
            push("m", env.m);
            push("M", env.big_m);
            push("t0", env.t0);
        }
        BoundsExperiment::CompactRates { l, tau, tau_c, d } => {
            let env = torus_density_envelope(*l, *tau, *d)?;
            let cert = compact_rates(env.m, env.big_m, *tau, *tau_c, env.t0)?;
            push("m", env.m);
            push("M", env.big_m);
            push("t0", env.t0);
            push("rate", cert.rate);
            push("reciprocal_slope", cert.reciprocal_slope);
            if let Some(r) = cert.exponential_rate {
                push("exponential_rate", r);
            }
            for (k, v) in &cert.constants {
                push(k, *v);
            }
        }
        BoundsExperiment::TorusKernel { mbar, d } => {
            let b = kernel_bounds_td(*mbar, *d)?;
            push("t_star", b.t_star);
            push("lower", b.lower);
            push("upper", b.upper);
        }
        BoundsExperiment::KernelRd { mbar, d, t, x, y } => {
            check_points(*d, x, y)?;
            let env = kernel_bounds_rd(*mbar, *d)?;
            let (lo, hi) = env.bounds(*t, x, y);
            push("lower", lo);
            push("upper", hi);
        }
        BoundsExperiment::ConfinedKernel { m, d, t, x, y } => {
            check_points(*d, x, y)?;
            let b = confined_kernel_bounds(*m, *d)?;
            let (lo, hi) = b.exact(*t, x, y);
            push("lower", lo);
            push("upper", hi);
            push("simplified_upper", b.simplified_upper(*t, x, y));
            if *t <= 1.0 {
                push("simplified_lower", b.simplified_lower(*t, x, y));
            }
        }
        BoundsExperiment::GaussianSandwich { epsilon, m_star, m } => {
            let p = gaussian_sandwich_params(*epsilon, *m_star, *m)?;
            push("t_eps", p.t_eps);
            push("lower_exponent", p.lower_exponent);
            push("upper_exponent", p.upper_exponent);
        }
        BoundsExperiment::NoncompactBurnIn { alpha, m0, tau, kappa } => push("t0", noncompact_burn_in(*alpha, *m0, *tau, *kappa)?),
        BoundsExperiment::VarianceChange { sigma1, sigma2, p, d } => push("C", variance_change_constant(*sigma1, *sigma2, *p, *d)?),
        BoundsExperiment::PolyConstant { sigma1, sigma2, d } => push("C", poly_constant(*sigma1, *sigma2, *d)?),
    }
    let mut map = serde_json::Map::new();
    for (k, v) in &kv {
        rep.print(format!("{k}={}", num(*v)));
        map.insert(k.clone(), serde_json::json!(v));
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(map.clone())).map_err(|e| LabError::Output(e.to_string()))?;
    rep.write_with("bounds.json", |w| Ok(std::io::Write::write_all(w, (text + "\n").as_bytes())?))?;
    rep.metric("values", map);
    Ok(())
}

fn check_points(d: usize, x: &[f64], y: &[f64]) -> Result<(), LabError> {
    if x.len() != d || y.len() != d {
        return Err(LabError::Config(format!("points must have {d} coordinates, got {} and {}", x.len(), y.len())));
    }
    Ok(())
}
