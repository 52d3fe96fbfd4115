//! Log-log growth-rate fits for regret curves.

use crate::error::{Error, Result};

/// Fewest points a fit accepts.
pub const MIN_POINTS: usize = 10;

/// Least-squares slope of `ln(regret)` against `ln(t)` over the points with
/// `lo <= t <= hi`.
pub fn slope_fit(curve: &[(f64, f64)], window: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window;
    let mut prev = f64::NEG_INFINITY;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &(t, r) in curve {
        if !(t > prev) {
            return Err(Error::InvalidArgument(
                "t must be strictly increasing".into(),
            ));
        }
        prev = t;
        if t < lo || t > hi {
            continue;
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InapplicableFit(format!(
                "regret {r} at t = {t} is not positive"
            )));
        }
        if !(t > 0.0) {
            return Err(Error::InapplicableFit(format!("t = {t} is not positive")));
        }
        xs.push(t.ln());
        ys.push(r.ln());
    }
    if xs.len() < MIN_POINTS {
        return Err(Error::InapplicableFit(format!(
            "{} points in window, need at least {MIN_POINTS}",
            xs.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    Ok(sxy / sxx)
}

/// Fit over `[T/10, T]` where `T` is the last round of the curve.
pub fn slope_fit_default(curve: &[(f64, f64)]) -> Result<f64> {
    let last = curve
        .last()
        .map(|&(t, _)| t)
        .ok_or_else(|| Error::InapplicableFit("empty curve".into()))?;
    slope_fit(curve, (last / 10.0, last))
}
