//! Least-squares fits of suboptimality decays.

use serde::Serialize;

use crate::bounds::Regime;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::wgf::FlowTrace;

/// Smallest number of samples accepted by [`rate_fit`].
pub const MIN_SAMPLES: usize = 20;

/// Result of fitting one regime to a gap series.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub regime: Regime,
    /// Exponential rate `r` in `gap ≈ e^{a - r t}`, or slope `s` in
    /// `gap^{-1/κ} ≈ a + s t` (`κ = 1` for the reciprocal regime).
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub samples: usize,
}

/// Ordinary least squares `y ≈ a + b x`, returning `(a, b, R²)`.
///
/// `R²` is 1 when `y` has no spread and the fit is exact.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let sse: f64 = x.iter().zip(y).map(|(xi, yi)| (yi - a - b * xi).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - sse / syy } else if sse == 0.0 { 1.0 } else { 0.0 };
    (a, b, r2)
}

/// Fits `regime` to `(times, gaps)` restricted to `window`.
///
/// Fails with [`Error::InsufficientData`] below [`MIN_SAMPLES`] points in the
/// window and with [`Error::NonPositiveGap`] if a gap in the window is not
/// positive.
pub fn rate_fit_series(times: &[f64], gaps: &[f64], regime: Regime, window: (f64, f64)) -> Result<RateFit> {
    if times.len() != gaps.len() {
        return Err(Error::InvalidParameter("times and gaps differ in length".into()));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &g) in times.iter().zip(gaps) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(g > 0.0) {
            return Err(Error::NonPositiveGap { t, value: g });
        }
        xs.push(t);
        ys.push(match regime {
            Regime::Exponential => g.ln(),
            Regime::Reciprocal => 1.0 / g,
            Regime::Power { kappa } => g.powf(-1.0 / kappa),
        });
    }
    if xs.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData { got: xs.len(), needed: MIN_SAMPLES });
    }
    let (a, b, r2) = linear_fit(&xs, &ys);
    let rate = match regime {
        Regime::Exponential => -b,
        _ => b,
    };
    Ok(RateFit {
        regime,
        rate,
        intercept: a,
        r_squared: r2,
        window: (xs[0], *xs.last().expect("nonempty")),
        samples: xs.len(),
    })
}

/// Window `[start, t_floor)` where `t_floor` is the first recorded time at or
/// after `start` whose gap drops below `floor` (the end of the series if none).
pub fn decay_window(times: &[f64], gaps: &[f64], start: f64, floor: f64) -> (f64, f64) {
    let mut end = times.last().copied().unwrap_or(start);
    let mut last_ok = start;
    for (&t, &g) in times.iter().zip(gaps) {
        if t < start {
            continue;
        }
        if !(g >= floor) {
            end = last_ok;
            break;
        }
        last_ok = t;
    }
    (start, end)
}

/// Fits `regime` to the gaps of a flow trace after `burn_in`.
pub fn rate_fit<S: Real>(trace: &FlowTrace<S>, regime: Regime, burn_in: S) -> Result<RateFit> {
    let gaps = trace
        .gaps
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("trace carries no gaps".into()))?;
    let t: Vec<f64> = trace.times.iter().map(|v| v.to_f64_lossy()).collect();
    let g: Vec<f64> = gaps.iter().map(|v| v.to_f64_lossy()).collect();
    rate_fit_series(&t, &g, regime, (burn_in.to_f64_lossy(), f64::INFINITY))
}
