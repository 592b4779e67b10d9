//! Wasserstein gradient flows of convex-plus-entropy objectives on the unit
//! torus, together with the tools used to check their convergence:
//!
//! * [`grid`]: periodic grids, densities, entropy, Fisher information, heat
//!   kernels, convolution and the circle Wasserstein-1 distance;
//! * [`functionals`]: potential, interaction, fit and self-transport terms,
//!   proximal Gibbs measures and a fixed-point minimizer;
//! * [`spectrum`]: Fourier certificates for the critical diffusivity;
//! * [`eot`]: log-domain Sinkhorn with the heat-kernel cost;
//! * [`wgf`]: an explicit conservative finite-volume flow integrator;
//! * [`particles`]: Euler–Maruyama simulators on the line and the torus;
//! * [`bounds`]: closed-form kernel bounds, density envelopes and rates;
//! * [`trajectory`]: the coupled marginal objective for trajectory inference;
//! * [`rates`]: least-squares fits of observed decay.
//!
//! The grid-level code is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

// Parameter checks are written `!(x > 0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod eot;
pub mod error;
pub mod fourier;
pub mod functionals;
pub mod grid;
pub mod heat;
pub mod io;
pub mod particles;
pub mod rates;
pub mod real;
pub mod spectrum;
pub mod trajectory;
pub mod wgf;

pub use error::{Error, Result};
pub use grid::TorusGrid;
pub use real::Real;

/// Density on a grid in double precision.
pub type Density = grid::GridDensity<f64>;
/// Grid function in double precision.
pub type Function = grid::GridFunction<f64>;
/// Objective component in double precision.
pub type Functional64 = functionals::Functional<f64>;
/// Composite objective in double precision.
pub type Objective64 = functionals::Objective<f64>;
/// Transport solution in double precision.
pub type Eot = eot::EotResult<f64>;
/// Flow trace in double precision.
pub type Trace = wgf::FlowTrace<f64>;
/// Kernel spectrum in double precision.
pub type Spectrum = spectrum::KernelSpectrum<f64>;
/// Single precision density.
pub type Density32 = grid::GridDensity<f32>;

/// Version of this crate, echoed into experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
