//! Discrete Fourier transforms on periodic grids, backed by `rustfft`.
//!
//! Two-dimensional transforms are done row by row and then column by column.
//! The forward transform is unnormalized, `F_k = Σ_j f_j e^{-2iπ k·j/n}`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::grid::{GridFunction, TorusGrid};
use crate::real::Real;

/// Forward and inverse plans for one grid.
#[derive(Clone)]
pub struct FourierPlan<S: Real> {
    grid: TorusGrid,
    fwd: Arc<dyn Fft<S>>,
    inv: Arc<dyn Fft<S>>,
}

impl<S: Real> fmt::Debug for FourierPlan<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FourierPlan").field("grid", &self.grid).finish()
    }
}

impl<S: Real> FourierPlan<S> {
    pub fn new(grid: TorusGrid) -> Self {
        let mut planner = FftPlanner::<S>::new();
        let fwd = planner.plan_fft_forward(grid.n());
        let inv = planner.plan_fft_inverse(grid.n());
        Self { grid, fwd, inv }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    fn transform(&self, buf: &mut [Complex<S>], plan: &Arc<dyn Fft<S>>) {
        let n = self.grid.n();
        plan.process(buf);
        if self.grid.dim() == 2 {
            let mut col = vec![Complex::new(S::zero(), S::zero()); n];
            for j in 0..n {
                for i in 0..n {
                    col[i] = buf[i * n + j];
                }
                plan.process(&mut col);
                for i in 0..n {
                    buf[i * n + j] = col[i];
                }
            }
        }
    }

    /// Unnormalized forward transform of real samples.
    pub fn forward(&self, values: &[S]) -> Vec<Complex<S>> {
        let mut buf: Vec<Complex<S>> = values.iter().map(|&v| Complex::new(v, S::zero())).collect();
        self.transform(&mut buf, &self.fwd);
        buf
    }

    /// Inverse transform divided by the number of cells; returns real parts.
    pub fn inverse_real(&self, mut spec: Vec<Complex<S>>) -> Vec<S> {
        self.transform(&mut spec, &self.inv);
        let scale = S::one() / S::from_usize_exact(self.grid.len());
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    /// Circular convolution with cell-volume weighting.
    pub fn convolve(&self, f: &GridFunction<S>, g: &GridFunction<S>) -> GridFunction<S> {
        let fg = self.forward(f.values());
        let gg = self.forward(g.values());
        self.convolve_spectrum(&gg, fg)
    }

    fn convolve_spectrum(&self, g_hat: &[Complex<S>], mut f_hat: Vec<Complex<S>>) -> GridFunction<S> {
        let hd = self.grid.cell_volume::<S>();
        for (a, b) in f_hat.iter_mut().zip(g_hat) {
            *a = *a * *b * hd;
        }
        GridFunction::from_raw(self.grid, self.inverse_real(f_hat))
    }
}

/// Convolution by a fixed kernel slice whose transform is precomputed.
#[derive(Clone, Debug)]
pub struct Convolver<S: Real> {
    plan: FourierPlan<S>,
    kernel_hat: Vec<Complex<S>>,
}

impl<S: Real> Convolver<S> {
    pub fn new(kernel: &GridFunction<S>) -> Self {
        let plan = FourierPlan::new(*kernel.grid());
        let kernel_hat = plan.forward(kernel.values());
        Self { plan, kernel_hat }
    }

    pub fn grid(&self) -> &TorusGrid {
        self.plan.grid()
    }

    /// `kernel * f`.
    pub fn apply(&self, f: &[S]) -> GridFunction<S> {
        let f_hat = self.plan.forward(f);
        self.plan.convolve_spectrum(&self.kernel_hat, f_hat)
    }
}
