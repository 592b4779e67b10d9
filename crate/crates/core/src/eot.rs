//! Entropic optimal transport with the heat-kernel cost `c_τ = -τ log q(τ, ·)`.
//!
//! The discrete problem couples the grid measures `μ_i h^d` and `ν_j h^d`
//! through the Markov kernel of [`HeatKernel`]. Because `e^{-c_τ/τ}` is the
//! kernel itself, each Sinkhorn half-step is one application of the kernel
//! in the log domain:
//!
//! ```text
//! φ_i = -τ log Σ_j exp(ψ_j/τ) q(x_i - y_j) ν_j h^d
//! ψ_j = -τ log Σ_i exp(φ_i/τ) q(x_i - y_j) μ_i h^d
//! ```
//!
//! The value is read from the dual objective
//! `∫φ dμ + ∫ψ dν - τ (γ(Ω×Ω) - 1)`, whose last term vanishes at the optimum.
//! With the kernel normalized on the grid the discrete self-transport obeys
//! `T_τ(μ, μ) + τ H(μ) ≥ 0` exactly, since it equals `τ` times the relative
//! entropy of the optimal plan with respect to `μ(dx) q(τ, x, y) dy`.

use crate::error::{Error, Result};
use crate::grid::{entropy, fisher_information, GridDensity, GridFunction, TorusGrid};
use crate::heat::HeatKernel;
use crate::real::Real;

/// Stopping rule for Sinkhorn iterations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornOptions<S> {
    /// Total-variation tolerance on both plan marginals.
    pub tol: S,
    pub max_iter: usize,
}

impl<S: Real> Default for SinkhornOptions<S> {
    fn default() -> Self {
        Self { tol: S::tolerance(1e-9, 64.0), max_iter: 10_000 }
    }
}

/// Solution of an entropic transport problem.
#[derive(Clone, Debug)]
pub struct EotResult<S> {
    /// Potential on the first marginal, gauge `∫φ dx = 0`.
    pub phi: GridFunction<S>,
    /// Potential on the second marginal.
    pub psi: GridFunction<S>,
    /// `T_τ(μ, ν)` from the dual objective.
    pub value: S,
    /// Total-variation errors of the plan marginals against `(μ, ν)`.
    pub residuals: (S, S),
    pub iterations: usize,
}

/// Cost slice `c_τ(z) = -τ log q(τ, z)` over displacements, with the kernel
/// normalized on the grid.
pub fn eot_cost<S: Real>(tau: S, grid: TorusGrid) -> Result<GridFunction<S>> {
    if !(tau > S::zero()) {
        return Err(Error::InvalidTau(tau.to_f64_lossy()));
    }
    let q = HeatKernel::new(tau, grid)?.slice();
    Ok(q.map(|v| -tau * v.ln()))
}

/// Half-step `-τ log Σ_j exp(f_j/τ) q(x_i - x_j) m_j h^d`.
fn soft_min<S: Real>(heat: &HeatKernel<S>, f: &[S], log_m: &[S], tau: S) -> Vec<S> {
    let w: Vec<S> = f.iter().zip(log_m).map(|(&v, &l)| v / tau + l).collect();
    heat.log_apply(&w).into_iter().map(|v| -tau * v).collect()
}

/// `Σ_i m_i (exp((a_i - b_i)/τ) - 1) h^d` split into signed mass and TV norm.
fn marginal_error<S: Real>(m: &[S], a: &[S], b: &[S], tau: S, hd: S) -> (S, S) {
    let mut signed = S::zero();
    let mut tv = S::zero();
    for ((&mi, &ai), &bi) in m.iter().zip(a).zip(b) {
        let e = mi * (((ai - bi) / tau).exp() - S::one());
        signed += e;
        tv += e.abs();
    }
    (signed * hd, tv * hd)
}

fn log_density<S: Real>(mu: &GridDensity<S>) -> Vec<S> {
    mu.values().iter().map(|&v| if v > S::zero() { v.ln() } else { S::neg_infinity() }).collect()
}

/// Log-domain Sinkhorn for `T_τ(μ, ν)` with default kernel construction.
pub fn sinkhorn<S: Real>(
    mu: &GridDensity<S>,
    nu: &GridDensity<S>,
    tau: S,
    opts: SinkhornOptions<S>,
) -> Result<EotResult<S>> {
    if !(tau > S::zero()) {
        return Err(Error::InvalidTau(tau.to_f64_lossy()));
    }
    mu.grid().ensure_same(nu.grid())?;
    let heat = HeatKernel::new(tau, *mu.grid())?;
    sinkhorn_with(&heat, mu, nu, opts, None)
}

/// Log-domain Sinkhorn with a prebuilt kernel and an optional warm start for
/// the second potential.
pub fn sinkhorn_with<S: Real>(
    heat: &HeatKernel<S>,
    mu: &GridDensity<S>,
    nu: &GridDensity<S>,
    opts: SinkhornOptions<S>,
    psi0: Option<&[S]>,
) -> Result<EotResult<S>> {
    let grid = *mu.grid();
    grid.ensure_same(nu.grid())?;
    grid.ensure_same(heat.grid())?;
    let tau = heat.time();
    let hd = grid.cell_volume::<S>();
    let log_mu = log_density(mu);
    let log_nu = log_density(nu);
    let mut psi = match psi0 {
        Some(p) if p.len() == grid.len() => p.to_vec(),
        _ => vec![S::zero(); grid.len()],
    };
    let mut phi = soft_min(heat, &psi, &log_nu, tau);
    let mut iterations = 0;
    let mut res_mu = S::infinity();
    while iterations < opts.max_iter {
        iterations += 1;
        psi = soft_min(heat, &phi, &log_mu, tau);
        let phi_new = soft_min(heat, &psi, &log_nu, tau);
        res_mu = marginal_error(mu.values(), &phi, &phi_new, tau, hd).1;
        phi = phi_new;
        if res_mu <= opts.tol {
            break;
        }
    }
    // `phi` matches the first marginal exactly; measure the second one.
    let psi_check = soft_min(heat, &phi, &log_mu, tau);
    let (signed_nu, res_nu) = marginal_error(nu.values(), &psi, &psi_check, tau, hd);
    let residual = res_mu.max(res_nu);
    if !(residual <= opts.tol) {
        return Err(Error::NoConvergence { iterations, residual: residual.to_f64_lossy() });
    }
    let mean_phi = phi.iter().copied().sum::<S>() / S::from_usize_exact(phi.len());
    for v in &mut phi {
        *v -= mean_phi;
    }
    for v in &mut psi {
        *v += mean_phi;
    }
    let phi = GridFunction::from_raw(grid, phi);
    let psi = GridFunction::from_raw(grid, psi);
    let value = phi.integrate_against(mu) + psi.integrate_against(nu) - tau * signed_nu;
    Ok(EotResult { phi, psi, value, residuals: (S::zero(), res_nu), iterations })
}

/// Symmetric solution of `T_τ(μ, μ)`.
#[derive(Clone, Debug)]
pub struct SelfTransport<S> {
    /// Common potential `φ = ψ`, gauge `∫φ dx = 0`.
    pub potential: GridFunction<S>,
    /// `D_τ(μ) = T_τ(μ, μ)`.
    pub value: S,
    /// Total-variation error of the plan marginal.
    pub residual: S,
    pub iterations: usize,
}

impl<S: Real> SelfTransport<S> {
    /// First variation `φ + ψ = 2φ` in the mean-zero gauge.
    pub fn first_variation(&self) -> GridFunction<S> {
        self.potential.clone().scaled(S::c(2.0)).centered()
    }
}

/// Symmetric Sinkhorn `φ ← (φ + T_μ φ)/2` for the self-transport `D_τ(μ)`.
pub fn self_transport<S: Real>(
    heat: &HeatKernel<S>,
    mu: &GridDensity<S>,
    opts: SinkhornOptions<S>,
    warm: Option<&[S]>,
) -> Result<SelfTransport<S>> {
    let grid = *mu.grid();
    grid.ensure_same(heat.grid())?;
    let tau = heat.time();
    let hd = grid.cell_volume::<S>();
    let log_mu = log_density(mu);
    let mut phi = match warm {
        Some(p) if p.len() == grid.len() => p.to_vec(),
        _ => vec![S::zero(); grid.len()],
    };
    let half = S::c(0.5);
    let mut iterations = 0;
    loop {
        let t_phi = soft_min(heat, &phi, &log_mu, tau);
        let (signed, residual) = marginal_error(mu.values(), &phi, &t_phi, tau, hd);
        if residual <= opts.tol {
            let mean = phi.iter().copied().sum::<S>() / S::from_usize_exact(phi.len());
            let potential = GridFunction::from_raw(grid, phi.iter().map(|&v| v - mean).collect());
            let raw = GridFunction::from_raw(grid, phi);
            let value = S::c(2.0) * raw.integrate_against(mu) - tau * signed;
            return Ok(SelfTransport { potential, value, residual, iterations });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NoConvergence { iterations, residual: residual.to_f64_lossy() });
        }
        for (p, t) in phi.iter_mut().zip(&t_phi) {
            *p = half * (*p + *t);
        }
        iterations += 1;
    }
}

/// `D_τ(μ)` and its first variation, with a fresh kernel.
pub fn self_transport_fv<S: Real>(
    mu: &GridDensity<S>,
    tau: S,
    opts: SinkhornOptions<S>,
) -> Result<(S, GridFunction<S>)> {
    if !(tau > S::zero()) {
        return Err(Error::InvalidTau(tau.to_f64_lossy()));
    }
    let heat = HeatKernel::new(tau, *mu.grid())?;
    let st = self_transport(&heat, mu, opts, None)?;
    Ok((st.value, st.first_variation()))
}

/// The three sides of `0 ≤ D_τ(μ) + τ H(μ) ≤ τ² I(μ) / 8`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AfiSandwich<S> {
    pub tau: S,
    pub lower: S,
    /// `D_τ(μ) + τ H(μ)`.
    pub mid: S,
    /// `τ² I(μ) / 8`.
    pub upper: S,
}

impl<S: Real> AfiSandwich<S> {
    /// `mid / upper`, or 1 when both vanish.
    pub fn ratio(&self) -> S {
        if self.upper > S::zero() {
            self.mid / self.upper
        } else {
            S::one()
        }
    }
}

/// Slack allowed on each side of the sandwich.
pub const SANDWICH_SLACK: f64 = 1e-8;

/// Evaluates the approximate-Fisher-information sandwich and checks it with
/// slack [`SANDWICH_SLACK`].
pub fn afi_sandwich<S: Real>(mu: &GridDensity<S>, tau: S, opts: SinkhornOptions<S>) -> Result<AfiSandwich<S>> {
    if !(tau > S::zero()) {
        return Err(Error::InvalidTau(tau.to_f64_lossy()));
    }
    let heat = HeatKernel::new(tau, *mu.grid())?;
    let st = self_transport(&heat, mu, opts, None)?;
    let mid = st.value + tau * entropy(mu);
    let upper = tau * tau * fisher_information(mu)? / S::c(8.0);
    let sw = AfiSandwich { tau, lower: S::zero(), mid, upper };
    let slack = S::tolerance(SANDWICH_SLACK, 1e3);
    if mid < -slack || mid > upper + slack {
        return Err(Error::SandwichViolation {
            lower: 0.0,
            mid: mid.to_f64_lossy(),
            upper: upper.to_f64_lossy(),
        });
    }
    Ok(sw)
}
