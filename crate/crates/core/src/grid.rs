//! Uniform periodic grids on the unit torus and the densities and functions
//! sampled on them.
//!
//! Grid point `i` along an axis sits at `x_i = i h` with `h = 1/n` and owns the
//! cell `[x_i - h/2, x_i + h/2)`. In two dimensions values are stored row
//! major: flat index `i * n + j` holds the sample at `(x_i, x_j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::{floored_ln, xlogx, Real};

/// Uniform periodic grid with `n` points per axis on the `dim`-torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    /// Builds a grid; `dim` must be 1 or 2 and `n` a power of two with `n >= 8`.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 8"
            )));
        }
        Ok(Self { dim, n })
    }

    /// Spatial dimension `d`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of cells `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Always false: a grid has at least eight cells.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell width `h = 1/n`.
    pub fn h<S: Real>(&self) -> S {
        S::one() / S::from_usize_exact(self.n)
    }

    /// Cell volume `h^d`.
    pub fn cell_volume<S: Real>(&self) -> S {
        self.h::<S>().powi(self.dim as i32)
    }

    /// Geodesic diameter `sqrt(d)/2` of the unit torus.
    pub fn diameter<S: Real>(&self) -> S {
        S::from_usize_exact(self.dim).sqrt() / S::c(2.0)
    }

    /// Per-axis indices of a flat index (second entry is 0 in one dimension).
    #[inline]
    pub fn split(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    /// Flat index of per-axis indices.
    #[inline]
    pub fn join(&self, i: [usize; 2]) -> usize {
        if self.dim == 1 {
            i[0]
        } else {
            i[0] * self.n + i[1]
        }
    }

    /// Coordinates `(x_i, x_j)` of a flat index (second entry 0 in one dimension).
    pub fn coords<S: Real>(&self, idx: usize) -> [S; 2] {
        let h = self.h::<S>();
        let [i, j] = self.split(idx);
        [S::from_usize_exact(i) * h, S::from_usize_exact(j) * h]
    }

    /// Flat index of the neighbour `delta` cells away along `axis`, periodically.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, delta: isize) -> usize {
        let mut i = self.split(idx);
        let n = self.n as isize;
        i[axis] = ((i[axis] as isize + delta).rem_euclid(n)) as usize;
        self.join(i)
    }

    /// Flat index of the nearest grid point to a position on the torus.
    pub fn nearest_index(&self, x: &[f64]) -> usize {
        let n = self.n as f64;
        let mut i = [0usize; 2];
        for (axis, slot) in i.iter_mut().enumerate().take(self.dim) {
            let k = (x[axis] * n).round() as i64;
            *slot = k.rem_euclid(self.n as i64) as usize;
        }
        self.join(i)
    }

    /// Errors unless `other` is the same grid.
    pub fn ensure_same(&self, other: &TorusGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "d={} n={} vs d={} n={}",
                self.dim, self.n, other.dim, other.n
            )))
        }
    }
}

/// Real-valued function sampled on a grid (potential, first variation or
/// kernel slice indexed by displacement).
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<S> {
    grid: TorusGrid,
    values: Vec<S>,
}

impl<S: Real> GridFunction<S> {
    /// Wraps samples; fails on a length mismatch or non-finite entries.
    pub fn new(grid: TorusGrid, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite grid value {v}")));
        }
        Ok(Self { grid, values })
    }

    /// Constant zero function.
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, values: vec![S::zero(); grid.len()] }
    }

    /// Constant function.
    pub fn constant(grid: TorusGrid, c: S) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    /// Samples `f(x)` at every grid point; `x` has length `d`.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[S]) -> S) -> Self {
        let d = grid.dim();
        let values = (0..grid.len())
            .map(|idx| {
                let x = grid.coords::<S>(idx);
                f(&x[..d])
            })
            .collect();
        Self { grid, values }
    }

    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// Grid average, which equals the Lebesgue integral on the unit torus.
    pub fn mean(&self) -> S {
        self.values.iter().copied().sum::<S>() / S::from_usize_exact(self.values.len())
    }

    /// Quadrature `Σ f_i h^d`.
    pub fn integral(&self) -> S {
        self.values.iter().copied().sum::<S>() * self.grid.cell_volume::<S>()
    }

    /// Copy with the grid mean subtracted (the additive-constant gauge).
    pub fn centered(mut self) -> Self {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
        self
    }

    /// True when the grid mean is within `tol` of zero.
    pub fn is_mean_zero(&self, tol: S) -> bool {
        self.mean().abs() <= tol
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, v| m.max(v.abs()))
    }

    /// `∫ f dμ` by cell quadrature.
    pub fn integrate_against(&self, mu: &GridDensity<S>) -> S {
        self.values
            .iter()
            .zip(mu.values())
            .map(|(&f, &m)| f * m)
            .sum::<S>()
            * self.grid.cell_volume::<S>()
    }

    /// `Σ f_i g_i h^d`, the L² pairing.
    pub fn dot(&self, other: &GridFunction<S>) -> S {
        self.values
            .iter()
            .zip(other.values())
            .map(|(&f, &g)| f * g)
            .sum::<S>()
            * self.grid.cell_volume::<S>()
    }

    /// Pointwise `self + a * other`.
    pub fn axpy(mut self, a: S, other: &GridFunction<S>) -> Self {
        for (v, &o) in self.values.iter_mut().zip(other.values()) {
            *v += a * o;
        }
        self
    }

    /// Pointwise scaling.
    pub fn scaled(mut self, a: S) -> Self {
        for v in &mut self.values {
            *v *= a;
        }
        self
    }

    /// Applies `f` to every value.
    pub fn map(mut self, f: impl Fn(S) -> S) -> Self {
        for v in &mut self.values {
            *v = f(*v);
        }
        self
    }
}

/// Nonnegative probability density on a grid: `Σ μ_i h^d = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity<S> {
    grid: TorusGrid,
    values: Vec<S>,
}

/// Mass tolerance of a density with `len` cells.
pub(crate) fn mass_tolerance<S: Real>(len: usize) -> S {
    S::tolerance(1e-12, 8.0 * (len as f64).sqrt())
}

impl<S: Real> GridDensity<S> {
    /// Wraps samples that already form a probability density.
    pub fn new(grid: TorusGrid, values: Vec<S>) -> Result<Self> {
        let f = GridFunction::new(grid, values)?;
        if let Some(v) = f.values.iter().find(|&&v| v < S::zero()) {
            return Err(Error::InvalidDensity(format!("negative value {v}")));
        }
        let mass = f.integral();
        if (mass - S::one()).abs() > mass_tolerance::<S>(grid.len()) {
            return Err(Error::InvalidDensity(format!("mass {mass} differs from 1")));
        }
        Ok(Self { grid, values: f.values })
    }

    /// Normalizes nonnegative samples to unit mass.
    pub fn normalized(grid: TorusGrid, values: Vec<S>) -> Result<Self> {
        let f = GridFunction::new(grid, values)?;
        if let Some(v) = f.values.iter().find(|&&v| v < S::zero()) {
            return Err(Error::InvalidDensity(format!("negative value {v}")));
        }
        let mass = f.integral();
        if mass <= S::zero() {
            return Err(Error::InvalidDensity("zero total mass".into()));
        }
        let values = f.values.into_iter().map(|v| v / mass).collect();
        Ok(Self { grid, values })
    }

    /// Samples a nonnegative profile and normalizes it.
    pub fn from_fn(grid: TorusGrid, f: impl Fn(&[S]) -> S) -> Result<Self> {
        Self::normalized(grid, GridFunction::from_fn(grid, f).values)
    }

    /// Lebesgue measure of the unit torus.
    pub fn uniform(grid: TorusGrid) -> Self {
        Self { grid, values: vec![S::one(); grid.len()] }
    }

    /// Density proportional to `exp(-f)`, evaluated with max-subtraction.
    pub fn gibbs(f: &GridFunction<S>) -> Self {
        let fmin = f.values.iter().copied().fold(S::infinity(), S::min);
        let w: Vec<S> = f.values.iter().map(|&v| (fmin - v).exp()).collect();
        Self::normalized(f.grid, w).expect("Gibbs weights are positive")
    }

    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<S>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    /// `Σ μ_i h^d`.
    pub fn mass(&self) -> S {
        self.values.iter().copied().sum::<S>() * self.grid.cell_volume::<S>()
    }

    /// Smallest cell value.
    pub fn min(&self) -> S {
        self.values.iter().copied().fold(S::infinity(), S::min)
    }

    /// Largest cell value.
    pub fn max(&self) -> S {
        self.values.iter().copied().fold(S::neg_infinity(), S::max)
    }

    /// The same samples viewed as a grid function.
    pub fn to_function(&self) -> GridFunction<S> {
        GridFunction { grid: self.grid, values: self.values.clone() }
    }

    /// Convex combination `(1 - θ) self + θ other`.
    pub fn mix(&self, other: &GridDensity<S>, theta: S) -> Result<Self> {
        self.grid.ensure_same(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| (S::one() - theta) * a + theta * b)
            .collect();
        Ok(Self { grid: self.grid, values })
    }

    /// Errors with [`Error::DegenerateDensity`] if a cell is below `floor`.
    pub fn ensure_floor(&self, floor: S) -> Result<()> {
        let m = self.min();
        if m < floor {
            Err(Error::DegenerateDensity { value: m.to_f64_lossy(), floor: floor.to_f64_lossy() })
        } else {
            Ok(())
        }
    }

    /// Pointwise `log μ` with the positivity floor applied.
    pub fn ln(&self) -> GridFunction<S> {
        GridFunction { grid: self.grid, values: self.values.iter().map(|&v| floored_ln(v)).collect() }
    }
}

/// Negative entropy `H(μ) = Σ μ_i log μ_i h^d`, with `0 log 0 = 0`.
///
/// Nonnegative for every density on the unit torus, zero only at the uniform
/// density.
pub fn entropy<S: Real>(mu: &GridDensity<S>) -> S {
    mu.values.iter().map(|&v| xlogx(v)).sum::<S>() * mu.grid.cell_volume::<S>()
}

/// Cell floor below which the Fisher information is refused.
pub const FISHER_FLOOR: f64 = 1e-12;

/// `Σ_i |∇_h f(x_i)|² w_i h^d` with centered periodic differences.
pub fn weighted_gradient_energy<S: Real>(f: &GridFunction<S>, w: &[S]) -> S {
    let grid = f.grid;
    let two_h = S::c(2.0) * grid.h::<S>();
    let mut acc = S::zero();
    for (idx, &wi) in w.iter().enumerate().take(grid.len()) {
        let mut g2 = S::zero();
        for axis in 0..grid.dim() {
            let fp = f.values[grid.shift(idx, axis, 1)];
            let fm = f.values[grid.shift(idx, axis, -1)];
            let g = (fp - fm) / two_h;
            g2 += g * g;
        }
        acc += g2 * wi;
    }
    acc * grid.cell_volume::<S>()
}

/// Fisher information `I(μ) = Σ |∇_h log μ|² μ h^d` with centered differences.
///
/// Fails with [`Error::DegenerateDensity`] when a cell is below `1e-12`.
pub fn fisher_information<S: Real>(mu: &GridDensity<S>) -> Result<S> {
    mu.ensure_floor(S::c(FISHER_FLOOR).max(S::min_positive_value()))?;
    Ok(weighted_gradient_energy(&mu.ln(), &mu.values))
}

/// Number of periodic images on each side that keeps the omitted Gaussian
/// mass `erfc((K + 1/2)/sqrt(2t))` below `1e-14`.
pub fn image_count(t: f64) -> usize {
    let k = (5.6 * (2.0 * t).sqrt() - 0.5).ceil();
    k.max(1.0) as usize
}

/// Wrapped one-dimensional heat kernel `q(t, z) = Σ_k (2πt)^{-1/2} e^{-(z+k)²/(2t)}`.
pub fn wrapped_gaussian_1d<S: Real>(t: S, z: S) -> S {
    let k_max = image_count(t.to_f64_lossy()) as i64;
    let zr = z - z.round();
    let norm = (S::c(2.0) * S::PI() * t).sqrt();
    let two_t = S::c(2.0) * t;
    let mut acc = S::zero();
    for k in -k_max..=k_max {
        let u = zr + S::c(k as f64);
        acc += (-(u * u) / two_t).exp();
    }
    acc / norm
}

/// Wrapped heat kernel `q(t, z)` of the torus sampled at every displacement
/// `z_j = j h` (one slice, translation invariant).
///
/// Point samples integrate to 1 under cell quadrature up to the aliasing
/// error `2 exp(-2π² t / h²)`, which is below `1e-10` once `t ≥ 1.2 h²`.
pub fn wrapped_heat_kernel<S: Real>(t: S, grid: TorusGrid) -> Result<GridFunction<S>> {
    if !(t > S::zero()) || !t.is_finite() {
        return Err(Error::InvalidTime(t.to_f64_lossy()));
    }
    let n = grid.n();
    let h = grid.h::<S>();
    let q1: Vec<S> = (0..n).map(|j| wrapped_gaussian_1d(t, S::from_usize_exact(j) * h)).collect();
    let values = match grid.dim() {
        1 => q1,
        _ => (0..grid.len()).map(|idx| {
            let [i, j] = grid.split(idx);
            q1[i] * q1[j]
        })
        .collect(),
    };
    Ok(GridFunction::from_raw(grid, values))
}

/// Heat kernel slice rescaled so that its cell quadrature is exactly 1,
/// making it a Markov kernel on the grid.
pub fn heat_kernel_normalized<S: Real>(t: S, grid: TorusGrid) -> Result<GridFunction<S>> {
    let q = wrapped_heat_kernel(t, grid)?;
    let mass = q.integral();
    Ok(q.scaled(S::one() / mass))
}

/// Circular convolution `(f * g)(x_i) = Σ_j f(x_j) g(x_i - x_j) h^d`,
/// computed with the discrete Fourier transform.
pub fn convolve_periodic<S: Real>(f: &GridFunction<S>, g: &GridFunction<S>) -> Result<GridFunction<S>> {
    f.grid.ensure_same(&g.grid)?;
    let plan = crate::fourier::FourierPlan::new(f.grid);
    Ok(plan.convolve(f, g))
}

/// Wasserstein-1 distance on the circle between two one-dimensional grid
/// densities, viewed as atomic measures at the grid points:
/// `min_s Σ_i |D_i - s| h` with `D` the cumulative difference of masses.
pub fn w1_circle<S: Real>(mu: &GridDensity<S>, nu: &GridDensity<S>) -> Result<S> {
    mu.grid.ensure_same(&nu.grid)?;
    if mu.grid.dim() != 1 {
        return Err(Error::DimensionUnsupported(mu.grid.dim()));
    }
    let h = mu.grid.h::<S>();
    let mut acc = S::zero();
    let mut cdf: Vec<S> = mu
        .values
        .iter()
        .zip(&nu.values)
        .map(|(&a, &b)| {
            acc += (a - b) * h;
            acc
        })
        .collect();
    let mut sorted = cdf.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite cumulative masses"));
    let s = sorted[(sorted.len() - 1) / 2];
    for v in &mut cdf {
        *v = (*v - s).abs();
    }
    Ok(cdf.into_iter().sum::<S>() * h)
}
