//! Direct application of the grid heat kernel.
//!
//! The kernel is positive and separable, so applying it by direct summation
//! along each axis never cancels and keeps full relative accuracy even where
//! the result is tiny. This is what the Sinkhorn solver and the fit term rely
//! on; signed kernels go through [`crate::fourier`] instead.

use crate::error::Result;
use crate::grid::{heat_kernel_normalized, GridFunction, TorusGrid};
use crate::real::Real;

/// Markov kernel `P_t` on a grid: the wrapped heat kernel at time `t`,
/// normalized so that every row sums to one under cell quadrature.
#[derive(Clone, Debug)]
pub struct HeatKernel<S> {
    grid: TorusGrid,
    t: S,
    /// One-dimensional slice `p(j h)` scaled so that `Σ_j p_j h = 1`.
    slice: Vec<S>,
    log_slice: Vec<S>,
}

impl<S: Real> HeatKernel<S> {
    pub fn new(t: S, grid: TorusGrid) -> Result<Self> {
        let line = TorusGrid::new(1, grid.n())?;
        let slice = heat_kernel_normalized(t, line)?.into_values();
        let log_slice = slice.iter().map(|v| v.ln()).collect();
        Ok(Self { grid, t, slice, log_slice })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Diffusion time `t`.
    pub fn time(&self) -> S {
        self.t
    }

    /// Full kernel slice over displacements (product of the axis slices).
    pub fn slice(&self) -> GridFunction<S> {
        let values = match self.grid.dim() {
            1 => self.slice.clone(),
            _ => (0..self.grid.len())
                .map(|idx| {
                    let [i, j] = self.grid.split(idx);
                    self.slice[i] * self.slice[j]
                })
                .collect(),
        };
        GridFunction::from_raw(self.grid, values)
    }

    /// `log p(z)` of the full kernel at a displacement index.
    pub fn log_density(&self, disp: usize) -> S {
        let [i, j] = self.grid.split(disp);
        match self.grid.dim() {
            1 => self.log_slice[i],
            _ => self.log_slice[i] + self.log_slice[j],
        }
    }

    /// `(P f)_i = Σ_j p(x_i - x_j) f_j h^d`.
    pub fn apply(&self, f: &[S]) -> Vec<S> {
        let n = self.grid.n();
        let h = self.grid.h::<S>();
        let line = |src: &[S], dst: &mut [S]| {
            for (i, out) in dst.iter_mut().enumerate() {
                let mut acc = S::zero();
                for (j, &v) in src.iter().enumerate() {
                    acc += self.slice[(i + n - j) % n] * v;
                }
                *out = acc * h;
            }
        };
        self.separable(f, line)
    }

    /// `log Σ_j exp(w_j) p(x_i - x_j) h^d`, evaluated with one shift per line.
    pub fn log_apply(&self, w: &[S]) -> Vec<S> {
        let n = self.grid.n();
        let log_h = self.grid.h::<S>().ln();
        let line = |src: &[S], dst: &mut [S]| {
            let m = src.iter().copied().fold(S::neg_infinity(), S::max);
            if m == S::neg_infinity() {
                dst.iter_mut().for_each(|v| *v = m);
                return;
            }
            let e: Vec<S> = src.iter().map(|&v| (v - m).exp()).collect();
            let mut fallback = false;
            for (i, out) in dst.iter_mut().enumerate() {
                let mut acc = S::zero();
                for (j, &v) in e.iter().enumerate() {
                    acc += self.slice[(i + n - j) % n] * v;
                }
                if !(acc > S::min_positive_value()) {
                    fallback = true;
                }
                *out = m + acc.ln() + log_h;
            }
            if fallback {
                self.exact_log_line(src, dst);
            }
        };
        self.separable(w, line)
    }

    /// Per-output log-sum-exp, used when the shifted sum underflows.
    fn exact_log_line(&self, src: &[S], dst: &mut [S]) {
        let n = self.grid.n();
        let log_h = self.grid.h::<S>().ln();
        let mut terms = vec![S::zero(); n];
        for (i, out) in dst.iter_mut().enumerate() {
            for (j, t) in terms.iter_mut().enumerate() {
                *t = src[j] + self.log_slice[(i + n - j) % n];
            }
            *out = crate::real::log_sum_exp(&terms) + log_h;
        }
    }

    fn separable(&self, f: &[S], line: impl Fn(&[S], &mut [S])) -> Vec<S> {
        let n = self.grid.n();
        let mut out = vec![S::zero(); f.len()];
        if self.grid.dim() == 1 {
            line(f, &mut out);
            return out;
        }
        // Second axis: contiguous rows.
        let mut tmp = vec![S::zero(); f.len()];
        for (src, dst) in f.chunks(n).zip(tmp.chunks_mut(n)) {
            line(src, dst);
        }
        // First axis: strided columns.
        let mut col = vec![S::zero(); n];
        let mut res = vec![S::zero(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = tmp[i * n + j];
            }
            line(&col, &mut res);
            for i in 0..n {
                out[i * n + j] = res[i];
            }
        }
        out
    }
}
