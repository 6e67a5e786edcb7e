//! Exponential decay fits of recorded norms.

use crate::error::{Error, Result};
use crate::stats::line_fit;

/// Fewest samples accepted inside a fit window.
pub const MIN_FIT_SAMPLES: usize = 8;

/// `values ~ prefactor * exp(-rate * t)` on `window`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    pub window: (f64, f64),
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub samples: usize,
}

/// Least squares on `(t, ln value)` over the samples with `t` in `window`.
pub fn fit_decay(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    if times.len() != values.len() {
        return Err(Error::Fit(format!("length mismatch {} vs {}", times.len(), values.len())));
    }
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::Fit(format!("empty window [{lo}, {hi}]")));
    }
    let tmin = times.iter().copied().fold(f64::INFINITY, f64::min);
    let tmax = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9 * (1.0 + tmax.abs());
    if lo < tmin - slack || hi > tmax + slack {
        return Err(Error::Fit(format!("window [{lo}, {hi}] outside sampled times [{tmin}, {tmax}]")));
    }
    let inside: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo - slack && **t <= hi + slack)
        .map(|(t, v)| (*t, *v))
        .collect();
    if inside.len() < MIN_FIT_SAMPLES {
        return Err(Error::Fit(format!("{} samples in window, need {MIN_FIT_SAMPLES}", inside.len())));
    }
    if let Some((t, v)) = inside.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Fit(format!(
            "value {v} at t = {t} is not positive; the norm has reached the quadrature floor, shrink the window"
        )));
    }
    let (t, l): (Vec<f64>, Vec<f64>) = inside.iter().map(|(t, v)| (*t, v.ln())).unzip();
    let fit = line_fit(&t, &l)?;
    Ok(DecayFit {
        window,
        rate: -fit.slope,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r2.clamp(0.0, 1.0),
        samples: inside.len(),
    })
}

/// The second half of the sampled times, cut where the values first drop
/// below `10 * floor`.
pub fn default_window(times: &[f64], values: &[f64], floor: f64) -> Result<(f64, f64)> {
    let tmax = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !tmax.is_finite() {
        return Err(Error::Fit("no samples".into()));
    }
    let lo = 0.5 * tmax;
    let mut hi = lo;
    for (t, v) in times.iter().zip(values).filter(|(t, _)| **t >= lo) {
        if !(*v >= 10.0 * floor) {
            break;
        }
        hi = *t;
    }
    if !(hi > lo) {
        return Err(Error::Fit(format!("every sample after t = {lo} is within 10x of the floor {floor}")));
    }
    Ok((lo, hi))
}
