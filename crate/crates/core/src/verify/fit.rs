//! Decay-law fits in log scale.
//!
//! The stretched law `log Y = log C - lambda t^b` is linear in
//! `(log C, lambda)` for fixed `b`, so `b` is found by a scan over `(0, 1]`
//! refined by golden-section search, with the linear part solved exactly
//! at each trial `b`. The power law is a straight line in `log(1 + t)`.

use serde::Serialize;
use thiserror::Error;

use crate::semigroup::Trajectory;

pub const MIN_SAMPLES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("window [{t0}, {t1}] holds {n} samples, need at least {MIN_SAMPLES}")]
    TooFewSamples { t0: f64, t1: f64, n: usize },
    #[error("non-positive value {value} at t = {t}")]
    NonPositive { t: f64, value: f64 },
    #[error("degenerate window [{0}, {1}]")]
    BadWindow(f64, f64),
    #[error("no series named {0}")]
    UnknownSeries(String),
    #[error("times and values differ in length")]
    LengthMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `Y = C exp(-lambda t^b)`
    StretchedExponential,
    /// `Y = C (1 + t)^{-a}`
    PowerLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub c: f64,
    /// `lambda` for the stretched law, `a` for the power law.
    pub rate: f64,
    /// Stretch exponent `b`; `None` for the power law.
    pub b: Option<f64>,
    pub window: (f64, f64),
    /// RMS of `log Y - log fit` over the window.
    pub residual: f64,
    pub samples: usize,
}

/// Least squares `y ~ c0 + c1 s`; returns `(c0, c1, rms)`.
fn line_fit(s: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = s.len() as f64;
    let ms = s.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = s.iter().map(|a| (a - ms) * (a - ms)).sum();
    let sxy: f64 = s.iter().zip(y).map(|(a, b)| (a - ms) * (b - my)).sum();
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c0 = my - c1 * ms;
    let rss: f64 = s.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    (c0, c1, (rss / n).sqrt())
}

fn window(times: &[f64], values: &[f64], win: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>), FitError> {
    if times.len() != values.len() {
        return Err(FitError::LengthMismatch);
    }
    let (t0, t1) = win;
    if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() || t0 < 0.0 {
        return Err(FitError::BadWindow(t0, t1));
    }
    let mut ts = Vec::new();
    let mut ly = Vec::new();
    for (&t, &y) in times.iter().zip(values) {
        if t < t0 || t > t1 {
            continue;
        }
        if !(y > 0.0) {
            return Err(FitError::NonPositive { t, value: y });
        }
        ts.push(t);
        ly.push(y.ln());
    }
    if ts.len() < MIN_SAMPLES {
        return Err(FitError::TooFewSamples { t0, t1, n: ts.len() });
    }
    Ok((ts, ly))
}

/// Fits `values(times)` on `win` with the chosen law.
pub fn fit_series(times: &[f64], values: &[f64], model: DecayModel, win: (f64, f64)) -> Result<DecayFit, FitError> {
    let (ts, ly) = window(times, values, win)?;
    let samples = ts.len();
    match model {
        DecayModel::PowerLaw => {
            let s: Vec<f64> = ts.iter().map(|t| (1.0 + t).ln()).collect();
            let (c0, c1, rms) = line_fit(&s, &ly);
            Ok(DecayFit { model, c: c0.exp(), rate: -c1, b: None, window: win, residual: rms, samples })
        }
        DecayModel::StretchedExponential => {
            let eval = |b: f64| {
                let s: Vec<f64> = ts.iter().map(|t| t.powf(b)).collect();
                line_fit(&s, &ly)
            };
            let scan = 400;
            let (mut best_b, mut best) = (1.0, f64::INFINITY);
            for i in 1..=scan {
                let b = i as f64 / scan as f64;
                let r = eval(b).2;
                if r < best {
                    best = r;
                    best_b = b;
                }
            }
            let step = 1.0 / scan as f64;
            let (mut lo, mut hi) = ((best_b - step).max(1e-6), (best_b + step).min(1.0));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let m1 = hi - g * (hi - lo);
                let m2 = lo + g * (hi - lo);
                if eval(m1).2 <= eval(m2).2 {
                    hi = m2;
                } else {
                    lo = m1;
                }
            }
            let mut b = 0.5 * (lo + hi);
            if eval(best_b).2 < eval(b).2 {
                b = best_b;
            }
            let (c0, c1, rms) = eval(b);
            Ok(DecayFit { model, c: c0.exp(), rate: -c1, b: Some(b), window: win, residual: rms, samples })
        }
    }
}

/// Fits the recorded functional `name` of a trajectory.
pub fn fit_decay(traj: &Trajectory<f64>, name: &str, model: DecayModel, win: (f64, f64)) -> Result<DecayFit, FitError> {
    let ys = traj.series(name).ok_or_else(|| FitError::UnknownSeries(name.to_string()))?;
    fit_series(&traj.times, &ys, model, win)
}

/// Supremum `gamma / (2 - gamma)` of the admissible stretch exponents.
pub fn stretch_ceiling(gamma: f64) -> f64 {
    gamma / (2.0 - gamma)
}

/// `l (1 - theta) / (1 - gamma/2)`.
pub fn polynomial_rate(l: f64, theta: f64, gamma: f64) -> f64 {
    l * (1.0 - theta) / (1.0 - 0.5 * gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(t0: f64, t1: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| t0 + (t1 - t0) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn recovers_stretched_exponential() {
        let ts = grid(0.1, 50.0, 500);
        let ys: Vec<f64> = ts.iter().map(|t| 3.0 * (-2.0 * t.powf(0.5)).exp()).collect();
        let f = fit_series(&ts, &ys, DecayModel::StretchedExponential, (0.1, 50.0)).unwrap();
        assert!((f.c - 3.0).abs() < 0.03 && (f.rate - 2.0).abs() < 0.02);
        assert!((f.b.unwrap() - 0.5).abs() < 0.005);
        assert!(f.residual < 1e-8);
    }

    #[test]
    fn recovers_power_law() {
        let ts = grid(0.0, 50.0, 200);
        let ys: Vec<f64> = ts.iter().map(|t| (1.0 + t).powf(-4.0 / 3.0)).collect();
        let f = fit_series(&ts, &ys, DecayModel::PowerLaw, (0.0, 50.0)).unwrap();
        assert!((f.rate - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn input_errors() {
        let ts = grid(0.0, 1.0, 30);
        let mut ys = vec![1.0; 30];
        assert!(matches!(fit_series(&ts, &ys, DecayModel::PowerLaw, (0.0, 0.1)), Err(FitError::TooFewSamples { .. })));
        assert!(matches!(fit_series(&ts, &ys, DecayModel::PowerLaw, (1.0, 0.0)), Err(FitError::BadWindow(..))));
        ys[5] = 0.0;
        assert!(matches!(fit_series(&ts, &ys, DecayModel::PowerLaw, (0.0, 1.0)), Err(FitError::NonPositive { .. })));
    }

    #[test]
    fn target_exponents() {
        assert!((stretch_ceiling(0.5) - 1.0 / 3.0).abs() < 1e-15);
        assert!((polynomial_rate(2.0, 0.5, 0.5) - 4.0 / 3.0).abs() < 1e-15);
    }
}
