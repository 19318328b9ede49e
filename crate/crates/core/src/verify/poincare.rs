//! Weak versus strong Poincare ratios on the spatial line.
//!
//! weighted:   `int u^2 <grad V>^2 e^{-V} / int u'^2 e^{-V}`
//! unweighted: `int u^2 e^{-V} / int u'^2 e^{-V}`
//! with `u` gauged so that `int u e^{-V} <grad V>^{-2} = 0`.

use serde::Serialize;

use crate::model::ConfinementModel;
use crate::operators::elliptic::{apply_gauge, gauge_defect};
use crate::phase_grid::{LineGrid, XField};

use super::{VerificationReport, VerifyError};

/// Named test profile `u(x)`.
pub type Profile = (String, Box<dyn Fn(f64) -> f64 + Sync>);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareEntry {
    pub label: String,
    pub weighted: f64,
    pub unweighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareStudy {
    pub entries: Vec<PoincareEntry>,
    /// Largest weighted ratio; a lower bound for the weak constant squared.
    pub lambda_sq: f64,
    pub excluded: Vec<String>,
}

/// Ratios for one test function; `None` when `u` lies in the kernel of the gradient.
pub fn poincare_ratios(model: &ConfinementModel<f64>, u: &XField<f64>) -> Result<Option<(f64, f64)>, VerifyError> {
    let line = *u.line();
    let g = apply_gauge(model, u);
    let defect = gauge_defect(model, &g);
    let scale = g.max_abs().max(u.max_abs());
    if defect > 1e-10 * scale.max(1e-300) {
        return Err(VerifyError::BadInput(format!("gauge residual {defect:e}")));
    }
    let du = g.derivative();
    let mut num_w = Vec::with_capacity(line.len());
    let mut num = Vec::with_capacity(line.len());
    let mut den = Vec::with_capacity(line.len());
    for i in 0..line.len() {
        let x = line.node(i);
        let e = (-model.potential(x)).exp();
        let gw = model.grad_weight(x);
        let y = g.values()[i];
        num_w.push(y * y * gw * gw * e);
        num.push(y * y * e);
        den.push(du.values()[i].powi(2) * e);
    }
    let d = line.integrate(&den);
    if d <= 1e-300 || scale < 1e-300 {
        return Ok(None);
    }
    Ok(Some((line.integrate(&num_w) / d, line.integrate(&num) / d)))
}

/// Evaluates labelled test functions; kernel elements are reported as excluded.
pub fn weak_poincare_ratio(
    model: &ConfinementModel<f64>,
    line: &LineGrid<f64>,
    family: &[Profile],
) -> Result<PoincareStudy, VerifyError> {
    let mut entries = Vec::new();
    let mut excluded = Vec::new();
    for (label, f) in family {
        let u = XField::from_fn(*line, f)?;
        match poincare_ratios(model, &u)? {
            Some((weighted, unweighted)) => entries.push(PoincareEntry { label: label.clone(), weighted, unweighted }),
            None => excluded.push(label.clone()),
        }
    }
    let lambda_sq = entries.iter().map(|e| e.weighted).fold(0.0, f64::max);
    Ok(PoincareStudy { entries, lambda_sq, excluded })
}

/// Gaussian bumps `exp(-((x - n)/width)^2)`.
pub fn translated_bumps(centers: &[f64], width: f64) -> Vec<Profile> {
    centers
        .iter()
        .map(|&n| {
            let f: Box<dyn Fn(f64) -> f64 + Sync> = Box::new(move |x: f64| (-((x - n) / width).powi(2)).exp());
            (format!("bump(x-{n})"), f)
        })
        .collect()
}

/// Weighted ratios bounded by `lambda_bound`, unweighted ratios strictly increasing.
pub fn dichotomy_report(
    model: &ConfinementModel<f64>,
    line: &LineGrid<f64>,
    centers: &[f64],
    width: f64,
    lambda_bound: f64,
) -> Result<VerificationReport, VerifyError> {
    let study = weak_poincare_ratio(model, line, &translated_bumps(centers, width))?;
    let mut r = VerificationReport::new("poincare");
    r.input("gamma", model.gamma())
        .input("x_max", line.half_width())
        .input("nx", line.len())
        .input("width", width)
        .input("centers", format!("{centers:?}"));
    for e in &study.entries {
        r.measure(&format!("weighted[{}]", e.label), e.weighted);
        r.measure(&format!("unweighted[{}]", e.label), e.unweighted);
    }
    r.check("max weighted ratio", study.lambda_sq, format!("<= {lambda_bound}"), study.lambda_sq <= lambda_bound);
    let increments: Vec<f64> = study.entries.windows(2).map(|w| w[1].unweighted - w[0].unweighted).collect();
    let min_inc = increments.iter().copied().fold(f64::INFINITY, f64::min);
    r.check("min unweighted increment", min_inc, "> 0", min_inc > 0.0);
    Ok(r)
}
