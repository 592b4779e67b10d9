//! Closed-form constants, thresholds, envelopes and rate certificates.
//!
//! Every number the experiments compare against is produced here, so no
//! other module hard-codes a constant.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::real::Real;

/// Poincaré constant `C_P = 1/(2π)` of the unit torus.
pub fn torus_poincare<S: Real>() -> S {
    S::one() / (S::c(2.0) * S::PI())
}

type EnvelopeFn<S> = Arc<dyn Fn(S, &[S], &[S]) -> (S, S) + Send + Sync>;

/// Pointwise lower and upper bounds over `(t, x, y)` with a validity region
/// `t ≥ valid_from` and echoed parameters.
#[derive(Clone)]
pub struct BoundEnvelope<S> {
    pub name: &'static str,
    pub valid_from: S,
    /// Upper end of the validity region in time, if any.
    pub valid_until: Option<S>,
    pub params: Vec<(String, f64)>,
    eval: EnvelopeFn<S>,
}

impl<S: Real> fmt::Debug for BoundEnvelope<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundEnvelope")
            .field("name", &self.name)
            .field("valid_from", &self.valid_from)
            .field("valid_until", &self.valid_until)
            .field("params", &self.params)
            .finish()
    }
}

impl<S: Real> BoundEnvelope<S> {
    /// `(lower, upper)` at `(t, x, y)`.
    pub fn bounds(&self, t: S, x: &[S], y: &[S]) -> (S, S) {
        (self.eval)(t, x, y)
    }

    pub fn lower(&self, t: S, x: &[S], y: &[S]) -> S {
        self.bounds(t, x, y).0
    }

    pub fn upper(&self, t: S, x: &[S], y: &[S]) -> S {
        self.bounds(t, x, y).1
    }

    /// Whether `t` lies in the validity region.
    pub fn is_valid_at(&self, t: S) -> bool {
        t >= self.valid_from && self.valid_until.is_none_or(|u| t <= u)
    }
}

fn dist2<S: Real>(x: &[S], y: &[S]) -> S {
    x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum()
}

fn gaussian_kernel<S: Real>(t: S, r2: S, d: usize) -> S {
    (S::c(2.0) * S::PI() * t).powf(-S::c(d as f64 / 2.0)) * (-r2 / (S::c(2.0) * t)).exp()
}

/// Bounds on `k(t, x, y)` for `dY = b dt + dB` on `ℝ^d` with `|b| ≤ M̄`:
///
/// ```text
/// 2^{-1/2} e^{-M̄²(|y-x| + 2√t)² - M̄² t} g_t(x - y) ≤ k(t, x, y) ≤ 2^{1/2} e^{M̄²(|y-x| + 2√t)²} g_t(x - y)
/// ```
///
/// with `g_t` the Gaussian heat kernel of variance `t`.
pub fn kernel_bounds_rd<S: Real>(mbar: S, d: usize) -> Result<BoundEnvelope<S>> {
    if !(mbar >= S::zero()) || !mbar.is_finite() {
        return Err(Error::InvalidParameter(format!("drift bound {mbar} must be nonnegative")));
    }
    if d == 0 {
        return Err(Error::DimensionUnsupported(d));
    }
    let m2 = mbar * mbar;
    let eval = move |t: S, x: &[S], y: &[S]| {
        let r2 = dist2(x, y);
        let a = r2.sqrt() + S::c(2.0) * t.sqrt();
        let g = gaussian_kernel(t, r2, d);
        let s2 = S::SQRT_2();
        ((-m2 * a * a - m2 * t).exp() * g / s2, (m2 * a * a).exp() * g * s2)
    };
    Ok(BoundEnvelope {
        name: "kernel_rd",
        valid_from: S::zero(),
        valid_until: None,
        params: vec![("Mbar".into(), mbar.to_f64_lossy()), ("d".into(), d as f64)],
        eval: Arc::new(eval),
    })
}

/// Constants bounding `t_*^{d/2} k̄(t_*, x, y)` on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TorusKernelBounds<S> {
    /// `t_* = 1 / max(8M̄², 1)`.
    pub t_star: S,
    /// `5^{-1} 3^{-d} e^{-(3/2) M̄² d}`.
    pub lower: S,
    /// `4 · 2^d`.
    pub upper: S,
}

/// Torus transition-kernel constants at `t_*`.
pub fn kernel_bounds_td<S: Real>(mbar: S, d: usize) -> Result<TorusKernelBounds<S>> {
    if !(mbar >= S::zero()) {
        return Err(Error::InvalidParameter(format!("drift bound {mbar} must be nonnegative")));
    }
    let df = S::c(d as f64);
    let t_star = S::one() / (S::c(8.0) * mbar * mbar).max(S::one());
    let lower = S::c(0.2) * S::c(3.0).powf(-df) * (-S::c(1.5) * mbar * mbar * df).exp();
    let upper = S::c(4.0) * S::c(2.0).powf(df);
    Ok(TorusKernelBounds { t_star, lower, upper })
}

/// Uniform-in-time density bounds `m ≤ μ_t ≤ M` for `t ≥ t₀` on the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityEnvelope<S> {
    pub m: S,
    #[serde(rename = "M")]
    pub big_m: S,
    pub t0: S,
    /// Drift bound `L` the envelope was built from.
    pub lipschitz: S,
    pub tau: S,
    pub d: usize,
}

impl<S: Real> DensityEnvelope<S> {
    /// Whether `[lo, hi]` lies inside `[m, M]`.
    pub fn contains(&self, lo: S, hi: S) -> bool {
        lo >= self.m && hi <= self.big_m
    }

    /// Exponential and reciprocal constants for this envelope.
    pub fn certificate(&self, tau_c: S) -> Result<RateCertificate> {
        compact_rates(self.m, self.big_m, self.tau, tau_c, self.t0)
    }
}

/// Envelope of a torus flow whose drift satisfies `‖∇G'[μ_t]‖_∞ ≤ L`:
///
/// ```text
/// m = 5^{-1} e^{-(3/8)(L/τ)² d} (L/τ)^d (√2/3)^d,   M = 4 (2√2)^d (L/τ)^d,   t₀ = τ/(4L²).
/// ```
///
/// Fails with [`Error::HypothesisViolated`] unless `L ≥ τ > 0`.
pub fn torus_density_envelope<S: Real>(l: S, tau: S, d: usize) -> Result<DensityEnvelope<S>> {
    if !(tau > S::zero()) {
        return Err(Error::InvalidTau(tau.to_f64_lossy()));
    }
    if !(l >= tau) {
        return Err(Error::HypothesisViolated(format!("drift bound L = {l} is below tau = {tau}")));
    }
    let r = l / tau;
    let df = S::c(d as f64);
    let m = S::c(0.2) * (-S::c(0.375) * r * r * df).exp() * r.powf(df) * (S::SQRT_2() / S::c(3.0)).powf(df);
    let big_m = S::c(4.0) * (S::c(2.0) * S::SQRT_2()).powf(df) * r.powf(df);
    Ok(DensityEnvelope { m, big_m, t0: tau / (S::c(4.0) * l * l), lipschitz: l, tau, d })
}

/// Convergence regime of a certificate or a fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Regime {
    /// `gap ≤ e^{-r (t - t₀)} gap₀`.
    Exponential,
    /// `1/gap ≥ 1/gap₀ + s (t - t₀)`.
    Reciprocal,
    /// `gap^{-1/κ} ≥ gap₀^{-1/κ} + s (t - t₀)`.
    Power { kappa: f64 },
}

/// Predicted convergence guarantee with the constants that produced it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateCertificate {
    pub regime: Regime,
    /// Exponential rate or reciprocal/power slope, depending on `regime`.
    pub rate: f64,
    pub burn_in: f64,
    /// Exponential rate `c₁ (τ - τ_c)` when `τ > τ_c`.
    pub exponential_rate: Option<f64>,
    /// Reciprocal slope `c₂`, valid whenever `τ ≥ τ_c`.
    pub reciprocal_slope: f64,
    pub constants: Vec<(String, f64)>,
}

impl RateCertificate {
    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Relative tolerance under which `τ` is treated as equal to `τ_c`.
const CRITICAL_TOL: f64 = 1e-12;

/// Rates on the torus from density bounds `m ≤ μ_t ≤ M`:
/// exponential rate `2(τ - τ_c) m / (M C_P²) = c₁ (τ - τ_c)` and reciprocal
/// slope `m / (4 M² C_P²) = c₂`, with `c₁ = 8mπ²/M`, `c₂ = mπ²/M²`.
///
/// Fails with [`Error::InvalidRegime`] if `τ < τ_c`.
pub fn compact_rates<S: Real>(m: S, big_m: S, tau: S, tau_c: S, burn_in: S) -> Result<RateCertificate> {
    if !(m > S::zero()) || !(big_m >= m) {
        return Err(Error::InvalidParameter(format!("density bounds m = {m}, M = {big_m} are not ordered and positive")));
    }
    if !(burn_in >= S::zero()) {
        return Err(Error::InvalidParameter(format!("burn-in {burn_in} is negative")));
    }
    let cp = torus_poincare::<S>();
    let margin = tau - tau_c;
    let scale = S::one().max(tau.abs()).max(tau_c.abs());
    if margin < -S::c(CRITICAL_TOL) * scale {
        return Err(Error::InvalidRegime(format!("tau = {tau} is below tau_c = {tau_c}")));
    }
    let c1 = S::c(2.0) * m / (big_m * cp * cp);
    let c2 = m / (S::c(4.0) * big_m * big_m * cp * cp);
    let critical = margin <= S::c(CRITICAL_TOL) * scale;
    let exponential_rate = (!critical).then(|| (c1 * margin).to_f64_lossy());
    let (regime, rate) = match exponential_rate {
        Some(r) => (Regime::Exponential, r),
        None => (Regime::Reciprocal, c2.to_f64_lossy()),
    };
    Ok(RateCertificate {
        regime,
        rate,
        burn_in: burn_in.to_f64_lossy(),
        exponential_rate,
        reciprocal_slope: c2.to_f64_lossy(),
        constants: vec![
            ("m".into(), m.to_f64_lossy()),
            ("M".into(), big_m.to_f64_lossy()),
            ("C_P".into(), cp.to_f64_lossy()),
            ("tau".into(), tau.to_f64_lossy()),
            ("tau_c".into(), tau_c.to_f64_lossy()),
            ("c1".into(), c1.to_f64_lossy()),
            ("c2".into(), c2.to_f64_lossy()),
        ],
    })
}

/// `C = α^{d/2} ((p-1)/(pα-1))^{d(p-1)/(2p)}` with `α = σ₁²/σ₂²`, the constant
/// in `Var_{γ₂}(f) ≤ C ‖f - m₁‖²_{L^{2p}(γ₁)}`.
pub fn variance_change_constant<S: Real>(sigma1: S, sigma2: S, p: S, d: usize) -> Result<S> {
    if !(sigma1 > S::zero() && sigma2 > S::zero()) {
        return Err(Error::InvalidParameter("standard deviations must be positive".into()));
    }
    if !(p > S::one()) {
        return Err(Error::HypothesisViolated(format!("p = {p} must exceed 1")));
    }
    let alpha = sigma1 * sigma1 / (sigma2 * sigma2);
    if !(alpha * p > S::one()) {
        return Err(Error::HypothesisViolated(format!("alpha = {alpha} must exceed 1/p = {}", S::one() / p)));
    }
    let df = S::c(d as f64);
    let base = (p - S::one()) / (p * alpha - S::one());
    Ok(alpha.powf(df / S::c(2.0)) * base.powf(df * (p - S::one()) / (S::c(2.0) * p)))
}

/// `C = (2α - α²)^{-d/2}` with `α = σ₂²/σ₁²`, requiring `σ₁ ≤ σ₂ < √2 σ₁`.
pub fn poly_constant<S: Real>(sigma1: S, sigma2: S, d: usize) -> Result<S> {
    if !(sigma1 > S::zero()) {
        return Err(Error::InvalidParameter("sigma1 must be positive".into()));
    }
    if !(sigma2 >= sigma1 && sigma2 < S::SQRT_2() * sigma1) {
        return Err(Error::HypothesisViolated(format!("need sigma1 <= sigma2 < sqrt(2) sigma1, got {sigma1}, {sigma2}")));
    }
    let alpha = sigma2 * sigma2 / (sigma1 * sigma1);
    Ok((S::c(2.0) * alpha - alpha * alpha).powf(-S::c(d as f64) / S::c(2.0)))
}

/// Reciprocal slope `m² / (4 C M² σ₁²)` for a flow sandwiched as
/// `m γ₁ ≤ μ_t ≤ M γ₂`, with `C` from [`poly_constant`].
pub fn gaussian_reciprocal_slope<S: Real>(m: S, big_m: S, sigma1: S, sigma2: S, d: usize) -> Result<S> {
    let c = poly_constant(sigma1, sigma2, d)?;
    Ok(m * m / (S::c(4.0) * c * big_m * big_m * sigma1 * sigma1))
}

/// Time threshold and exponents of the two-sided Gaussian envelope
/// `c_ε e^{-(1+ε)|x|²} ≤ μ_t ≤ c_ε^{-1} e^{-(1-ε)|x|²}`, `t ≥ T_ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GaussianSandwich<S> {
    pub epsilon: S,
    /// `T_ε = log(40 M_*²/ε) + ε/16`.
    pub t_eps: S,
    /// `1 + ε`.
    pub lower_exponent: S,
    /// `1 - ε`.
    pub upper_exponent: S,
}

impl<S: Real> GaussianSandwich<S> {
    /// Envelope `(c e^{-(1+ε)|x|²}, c^{-1} e^{-(1-ε)|x|²})` for a fitted `c`.
    pub fn envelope(&self, c_eps: S, x: &[S]) -> (S, S) {
        let r2: S = x.iter().map(|&v| v * v).sum();
        (c_eps * (-self.lower_exponent * r2).exp(), (-self.upper_exponent * r2).exp() / c_eps)
    }

    /// Whether a fitted quadratic coefficient lies in `[1-ε, 1+ε]`.
    pub fn admits(&self, coefficient: S) -> bool {
        coefficient >= self.upper_exponent && coefficient <= self.lower_exponent
    }
}

/// Parameters of the Gaussian envelope for a confined flow with drift bound
/// `M` from an `M_*`-subgaussian start. Requires `0 < ε < 1/4`, `M_* ≥ 2`
/// and `M > M_*/2`.
pub fn gaussian_sandwich_params<S: Real>(eps: S, m_star: S, m: S) -> Result<GaussianSandwich<S>> {
    if !(eps > S::zero() && eps < S::c(0.25)) {
        return Err(Error::HypothesisViolated(format!("epsilon = {eps} not in (0, 1/4)")));
    }
    if !(m_star >= S::c(2.0)) {
        return Err(Error::HypothesisViolated(format!("M_* = {m_star} below 2")));
    }
    if !(m > m_star / S::c(2.0)) {
        return Err(Error::HypothesisViolated(format!("M = {m} not above M_*/2 = {}", m_star / S::c(2.0))));
    }
    let t_eps = (S::c(40.0) * m_star * m_star / eps).ln() + eps / S::c(16.0);
    Ok(GaussianSandwich { epsilon: eps, t_eps, lower_exponent: S::one() + eps, upper_exponent: S::one() - eps })
}

/// Burn-in `α^{-1}(5 + log(M₀² α κ / τ))` of the noncompact rates; `κ = 1`
/// gives the convex (reciprocal) case.
pub fn noncompact_burn_in<S: Real>(alpha: S, m0: S, tau: S, kappa: S) -> Result<S> {
    if !(alpha > S::zero() && m0 > S::zero() && tau > S::zero() && kappa >= S::one()) {
        return Err(Error::InvalidParameter("need alpha, M0, tau > 0 and kappa >= 1".into()));
    }
    Ok((S::c(5.0) + (m0 * m0 * alpha * kappa / tau).ln()) / alpha)
}

/// Envelope accuracy `ε = 1/(2κ + 2)` used for the power-`κ` regime.
pub fn power_regime_epsilon<S: Real>(kappa: S) -> S {
    S::one() / (S::c(2.0) * kappa + S::c(2.0))
}

/// Rescaling that maps `∂_t μ = div((αx + v)μ) + τΔμ`, `|v| ≤ L`, to the
/// unit-noise confined equation: `μ̃_s(x) = b^d μ_{as}(bx)` with `a = 1/α`,
/// `b = √(2τ/α)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoncompactReduction<S> {
    pub a: S,
    pub b: S,
    pub d: usize,
    /// Drift bound of the reduced equation, `L/√(2ατ)`.
    pub drift_bound: S,
    /// Subgaussian scale of the reduced start, `M₀ √(α/(2τ))`.
    pub m_star: S,
    /// `max(L/√(2ατ), M₀ √(α/(8τ)))`.
    pub m: S,
}

impl<S: Real> NoncompactReduction<S> {
    pub fn new(alpha: S, tau: S, l: S, m0: S, d: usize) -> Result<Self> {
        if !(alpha > S::zero() && tau > S::zero() && l >= S::zero() && m0 > S::zero()) {
            return Err(Error::InvalidParameter("need alpha, tau, M0 > 0 and L >= 0".into()));
        }
        let a = S::one() / alpha;
        let b = (S::c(2.0) * tau / alpha).sqrt();
        let drift_bound = a * l / b;
        let m_star = m0 / b;
        Ok(Self { a, b, d, drift_bound, m_star, m: drift_bound.max(m_star / S::c(2.0)) })
    }

    /// Original time of reduced time `s`.
    pub fn original_time(&self, s: S) -> S {
        self.a * s
    }

    /// Original position of a reduced position.
    pub fn original_position(&self, x: &[S]) -> Vec<S> {
        x.iter().map(|&v| v * self.b).collect()
    }

    /// Factor `b^d` in `μ̃_s(x) = b^d μ_{as}(bx)`.
    pub fn density_factor(&self) -> S {
        self.b.powi(self.d as i32)
    }
}

/// Self-similar change of variables between the confined equation and the
/// pure-drift equation: `y = e^t x`, `s = (e^{2t} - 1)/2`,
/// `ν_s(y) = e^{-dt} μ_t(x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingTransform {
    pub d: usize,
}

/// Mapped coordinates `(time, position, density factor)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mapped<S> {
    pub time: S,
    pub position: Vec<S>,
    pub factor: S,
}

impl ScalingTransform {
    pub fn new(d: usize) -> Self {
        Self { d }
    }

    /// `(t, x) ↦ (s, y, e^{-dt})`.
    pub fn forward<S: Real>(&self, t: S, x: &[S]) -> Result<Mapped<S>> {
        if !(t >= S::zero()) {
            return Err(Error::InvalidTime(t.to_f64_lossy()));
        }
        let et = t.exp();
        Ok(Mapped {
            time: (S::c(2.0) * t).exp_m1() / S::c(2.0),
            position: x.iter().map(|&v| v * et).collect(),
            factor: (-S::c(self.d as f64) * t).exp(),
        })
    }

    /// `(s, y) ↦ (t, x, e^{dt})` with `t = ½ log(1 + 2s)`.
    pub fn inverse<S: Real>(&self, s: S, y: &[S]) -> Result<Mapped<S>> {
        if !(s >= S::zero()) {
            return Err(Error::InvalidTime(s.to_f64_lossy()));
        }
        let t = (S::c(2.0) * s).ln_1p() / S::c(2.0);
        let emt = (-t).exp();
        Ok(Mapped {
            time: t,
            position: y.iter().map(|&v| v * emt).collect(),
            factor: (S::c(self.d as f64) * t).exp(),
        })
    }
}

/// Transition-kernel bounds for `dY = (v - Y) dt + dB` with `|v| ≤ M`,
/// obtained by pulling the pure-drift bounds through [`ScalingTransform`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConfinedKernelBounds<S> {
    pub m: S,
    pub d: usize,
}

impl<S: Real> ConfinedKernelBounds<S> {
    /// `(lower, upper)` for `p(t, x₁, x₂) = e^{dt} q(s, x₁, e^t x₂)`.
    pub fn exact(&self, t: S, x1: &[S], x2: &[S]) -> (S, S) {
        let tr = ScalingTransform::new(self.d);
        let Mapped { time: s, position: y2, factor } = tr.forward(t, x2).expect("nonnegative time");
        let pure = kernel_bounds_rd(self.m, self.d).expect("valid drift bound");
        let (lo, hi) = pure.bounds(s, x1, &y2);
        (lo / factor, hi / factor)
    }

    fn ou_parts(&self, t: S, x1: &[S], x2: &[S]) -> (S, S) {
        let et = (-t).exp();
        let r2: S = x1.iter().zip(x2).map(|(&a, &b)| (b - et * a) * (b - et * a)).sum();
        (r2, -(S::c(-2.0) * t).exp_m1())
    }

    /// Simplified lower bound for `t ≤ 1`:
    /// `2^{-1/2} (8πt)^{-d/2} e^{-d-36M²} e^{-2M²e²|x₂-e^{-t}x₁|²} e^{-|e^{-t}x₁-x₂|²/(1-e^{-2t})}`.
    pub fn simplified_lower(&self, t: S, x1: &[S], x2: &[S]) -> S {
        let (r2, one_m) = self.ou_parts(t, x1, x2);
        let df = S::c(self.d as f64);
        let m2 = self.m * self.m;
        let e2 = S::c(2.0).exp();
        (S::c(8.0) * S::PI() * t).powf(-df / S::c(2.0)) / S::SQRT_2()
            * (-df - S::c(36.0) * m2).exp()
            * (-S::c(2.0) * m2 * e2 * r2).exp()
            * (-r2 / one_m).exp()
    }

    /// Simplified upper bound
    /// `2^{1/2} e^{32M²} (π(1-e^{-2t}))^{-d/2} e^{-|e^{-t}x₁-x₂|²/(1-e^{-2t})} e^{2M²e²|x₂-e^{-t}x₁|²}`.
    ///
    /// The prefactor uses `π(1-e^{-2t})` in place of `2πt`; with `2πt` the
    /// display falls below the drift-free kernel itself at `t = 1`.
    pub fn simplified_upper(&self, t: S, x1: &[S], x2: &[S]) -> S {
        let (r2, one_m) = self.ou_parts(t, x1, x2);
        let df = S::c(self.d as f64);
        let m2 = self.m * self.m;
        let e2 = S::c(2.0).exp();
        S::SQRT_2()
            * (S::c(32.0) * m2).exp()
            * (S::PI() * one_m).powf(-df / S::c(2.0))
            * (-r2 / one_m).exp()
            * (S::c(2.0) * m2 * e2 * r2).exp()
    }

    /// The exact bounds as an envelope over `(t, x, y)`.
    pub fn envelope(self) -> BoundEnvelope<S>
    where
        S: Real,
    {
        let me = self;
        BoundEnvelope {
            name: "kernel_confined",
            valid_from: S::zero(),
            valid_until: None,
            params: vec![("M".into(), self.m.to_f64_lossy()), ("d".into(), self.d as f64)],
            eval: Arc::new(move |t, x, y| me.exact(t, x, y)),
        }
    }
}

/// Confined-kernel bounds for drift bound `M ≥ 0`.
pub fn confined_kernel_bounds<S: Real>(m: S, d: usize) -> Result<ConfinedKernelBounds<S>> {
    if !(m >= S::zero()) {
        return Err(Error::InvalidParameter(format!("drift bound {m} must be nonnegative")));
    }
    if d == 0 {
        return Err(Error::DimensionUnsupported(d));
    }
    Ok(ConfinedKernelBounds { m, d })
}

/// Closed-form Ornstein-Uhlenbeck transition density
/// `(π(1-e^{-2t}))^{-d/2} exp(-|y - e^{-t}x|²/(1-e^{-2t}))`.
pub fn ou_transition_density<S: Real>(t: S, x: &[S], y: &[S]) -> S {
    let et = (-t).exp();
    let v = -(S::c(-2.0) * t).exp_m1();
    let r2: S = x.iter().zip(y).map(|(&a, &b)| (b - et * a) * (b - et * a)).sum();
    (S::PI() * v).powf(-S::c(x.len() as f64) / S::c(2.0)) * (-r2 / v).exp()
}
