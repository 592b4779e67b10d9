//! Fourier coefficients of interaction kernels and upper bounds on the
//! critical diffusivity `τ_c`.
//!
//! Coefficients follow `Ŵ_k = ∫ W(z) e^{-2iπ k·z} dz`, evaluated by grid
//! quadrature, so that `W(z) = Σ_k Ŵ_k e^{2iπ k·z}` and `cos(2πz)` has
//! `Ŵ_{±1} = 1/2`. Writing `W = Ŵ_0 + W_+ - W_-` with `W_±` carrying the
//! positive and negative parts of the nonzero modes, `𝒲 + τH` is convex as
//! soon as `τ ≥ 4 Σ_{k≠0} (Ŵ_k)_-`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::FourierPlan;
use crate::functionals::check_even;
use crate::grid::{GridFunction, TorusGrid};
use crate::real::Real;

/// Real Fourier coefficients of an even kernel, in transform order.
#[derive(Clone, Debug)]
pub struct KernelSpectrum<S> {
    grid: TorusGrid,
    coefficients: Vec<S>,
    negative_mass: S,
}

/// Signed frequency of transform index `i` on an axis of length `n`.
fn frequency(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl<S: Real> KernelSpectrum<S> {
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Coefficients in transform order (flat index as for grid values).
    pub fn coefficients(&self) -> &[S] {
        &self.coefficients
    }

    /// Signed frequency vector of a flat index.
    pub fn frequency_of(&self, idx: usize) -> [i64; 2] {
        let [i, j] = self.grid.split(idx);
        let n = self.grid.n();
        if self.grid.dim() == 1 {
            [frequency(i, n), 0]
        } else {
            [frequency(i, n), frequency(j, n)]
        }
    }

    /// `Ŵ_k` for a signed frequency with `-n/2 ≤ k < n/2` per axis.
    pub fn coefficient(&self, k: [i64; 2]) -> Option<S> {
        let n = self.grid.n() as i64;
        let wrap = |x: i64| -> Option<usize> {
            if x < -n / 2 || x >= n / 2 {
                None
            } else {
                Some(x.rem_euclid(n) as usize)
            }
        };
        let i = wrap(k[0])?;
        let j = if self.grid.dim() == 1 { 0 } else { wrap(k[1])? };
        Some(self.coefficients[self.grid.join([i, j])])
    }

    /// `(k, Ŵ_k)` pairs sorted by frequency.
    pub fn sorted(&self) -> Vec<([i64; 2], S)> {
        let mut v: Vec<_> = (0..self.coefficients.len()).map(|i| (self.frequency_of(i), self.coefficients[i])).collect();
        v.sort_by_key(|(k, _)| *k);
        v
    }

    /// `Σ_{k≠0} (Ŵ_k)_-`.
    pub fn negative_mass(&self) -> S {
        self.negative_mass
    }

    /// `4 Σ_{k≠0} (Ŵ_k)_-`.
    pub fn threshold(&self) -> S {
        S::c(4.0) * self.negative_mass
    }

    fn synthesize(&self, coeff: impl Fn(usize, S) -> S) -> GridFunction<S> {
        let plan = FourierPlan::<S>::new(self.grid);
        let spec = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, &c)| rustfft::num_complex::Complex::new(coeff(i, c), S::zero()))
            .collect();
        let scale = S::from_usize_exact(self.grid.len());
        GridFunction::new(self.grid, plan.inverse_real(spec).into_iter().map(|v| v * scale).collect())
            .expect("finite synthesis")
    }

    /// Inverse transform `Σ_k Ŵ_k e^{2iπ k·z}` at the grid displacements.
    pub fn reconstruct(&self) -> GridFunction<S> {
        self.synthesize(|_, c| c)
    }

    /// Kernels `(W_+, W_-)` built from the positive and negative parts of the
    /// nonzero modes; `W = Ŵ_0 + W_+ - W_-`.
    pub fn split(&self) -> (GridFunction<S>, GridFunction<S>) {
        let plus = self.synthesize(|i, c| if i == 0 { S::zero() } else { c.max(S::zero()) });
        let minus = self.synthesize(|i, c| if i == 0 { S::zero() } else { (-c).max(S::zero()) });
        (plus, minus)
    }

    /// `Ŵ_0`.
    pub fn mean_coefficient(&self) -> S {
        self.coefficients[0]
    }
}

/// Fourier coefficients of an even kernel slice.
///
/// Fails with [`Error::NotEven`] if the kernel is not even or if an
/// imaginary part exceeds `1e-10`.
pub fn kernel_spectrum<S: Real>(w: &GridFunction<S>) -> Result<KernelSpectrum<S>> {
    check_even(w)?;
    let grid = *w.grid();
    let plan = FourierPlan::<S>::new(grid);
    let hd = grid.cell_volume::<S>();
    let raw = plan.forward(w.values());
    let scale = S::one().max(w.max_abs());
    let mut coefficients = Vec::with_capacity(raw.len());
    for c in raw {
        if c.im.abs() * hd > S::tolerance(1e-10, 1e3) * scale {
            return Err(Error::NotEven((c.im * hd).to_f64_lossy()));
        }
        coefficients.push(c.re * hd);
    }
    let negative_mass = coefficients.iter().skip(1).map(|&c| (-c).max(S::zero())).sum();
    Ok(KernelSpectrum { grid, coefficients, negative_mass })
}

/// `4 Σ_{k≠0} (Ŵ_k)_-`: every `τ` at or above it makes `𝒲 + τH` convex.
pub fn interaction_tau_threshold<S: Real>(spec: &KernelSpectrum<S>) -> S {
    spec.threshold()
}

/// `L · diam(𝕋^d)² = L d / 4`: diffusivity making `G + τH` convex when
/// `∇G'` is `L`-Lipschitz in the measure argument.
pub fn lipschitz_tau_bound<S: Real>(l: S, grid: &TorusGrid) -> S {
    let d = grid.diameter::<S>();
    l * d * d
}

/// Origin of a bound on `τ_c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CertificateSource {
    Fourier,
    Lipschitz,
}

/// Upper bound on the critical diffusivity with the inputs that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct ConvexityCertificate {
    pub bound: f64,
    pub source: CertificateSource,
    /// Echoed inputs, e.g. `("L", 4.0)`, `("diam", 0.5)` or `("negative_mass", 1.0)`.
    pub inputs: Vec<(String, f64)>,
}

impl ConvexityCertificate {
    pub fn fourier<S: Real>(spec: &KernelSpectrum<S>) -> Self {
        Self {
            bound: spec.threshold().to_f64_lossy(),
            source: CertificateSource::Fourier,
            inputs: vec![
                ("negative_mass".into(), spec.negative_mass().to_f64_lossy()),
                ("n".into(), spec.grid().n() as f64),
                ("d".into(), spec.grid().dim() as f64),
            ],
        }
    }

    pub fn lipschitz(l: f64, grid: &TorusGrid) -> Self {
        Self {
            bound: lipschitz_tau_bound(l, grid),
            source: CertificateSource::Lipschitz,
            inputs: vec![("L".into(), l), ("diam".into(), grid.diameter::<f64>())],
        }
    }
}
