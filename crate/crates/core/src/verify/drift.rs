//! Pointwise Lyapunov drift certificates from closed-form derivatives.
//!
//! For a weight `m` the drift is
//! `phi = Delta_v m/m - v.grad_v m/m - T m/m - K chi_R`
//! with `T m/m = -v.grad_x m/m + V'.grad_v m/m`, and a certificate is the
//! largest `C` with `phi + C H^e <= 0` on the sample points.

use serde::Serialize;

use crate::model::{exp_h_derivatives, lyapunov_h, poly_h_derivatives, ConfinementModel, CutoffSpec, LogDerivatives};
use crate::phase_grid::PhaseGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DriftKind {
    /// `m = e^{eps H^delta}`, target power `delta + gamma/2 - 1`.
    Exp { delta: f64, eps_weight: f64, p: f64 },
    /// `m = H^k`, target power `gamma/2 - 1`.
    Poly { k: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftParams {
    pub gamma: f64,
    pub kind: DriftKind,
    pub big_k: f64,
    pub r: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftCertificate {
    pub params: DriftParams,
    pub exponent: f64,
    /// Largest admissible `C`; nonpositive when no certificate exists.
    pub c: f64,
    /// `max (phi + max(C, 0) H^e)` over the samples.
    pub margin: f64,
    /// Where `phi + max(C, 0) H^e` is largest.
    pub worst: (f64, f64),
    pub pass: bool,
}

/// `phi` without the absorption term.
pub fn drift_phi(model: &ConfinementModel<f64>, ld: &LogDerivatives<f64>, x: f64, v: f64) -> f64 {
    ld.lap_v - v * ld.gv - model.potential_d1(x) * ld.gv + v * ld.gx
}

fn certify(params: DriftParams, grid: &PhaseGrid<f64>) -> DriftCertificate {
    let model = ConfinementModel::new(params.gamma).expect("gamma validated by caller");
    let cut = CutoffSpec { k: params.big_k, r: params.r };
    let exponent = match params.kind {
        DriftKind::Exp { delta, .. } => delta + 0.5 * params.gamma - 1.0,
        DriftKind::Poly { .. } => 0.5 * params.gamma - 1.0,
    };
    let mut samples = Vec::with_capacity(grid.len());
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..grid.nv() {
            let v = grid.v(j);
            let ld = match params.kind {
                DriftKind::Exp { delta, eps_weight, .. } => exp_h_derivatives(eps_weight, delta, x, v),
                DriftKind::Poly { k } => poly_h_derivatives(k, x, v),
            };
            let phi = drift_phi(&model, &ld, x, v) - cut.value(x, v);
            samples.push((x, v, phi, lyapunov_h(x, v).powf(exponent)));
        }
    }
    let c = samples.iter().map(|&(_, _, phi, w)| -phi / w).fold(f64::INFINITY, f64::min);
    let c_used = c.max(0.0);
    let (mut margin, mut worst) = (f64::NEG_INFINITY, (0.0, 0.0));
    for &(x, v, phi, w) in &samples {
        let m = phi + c_used * w;
        if m > margin {
            margin = m;
            worst = (x, v);
        }
    }
    // at the minimizer the margin is zero up to roundoff
    if c > 0.0 {
        margin = margin.min(0.0);
    }
    DriftCertificate { params, exponent, c, margin, worst, pass: c > 0.0 && margin <= 0.0 }
}

/// Certificate for `m = e^{eps H^delta}`; needs `0 < delta <= gamma/2`, `p >= 1`.
pub fn certify_drift_exp(
    gamma: f64,
    delta: f64,
    eps_weight: f64,
    p: f64,
    big_k: f64,
    r: f64,
    grid: &PhaseGrid<f64>,
) -> Result<DriftCertificate, String> {
    ConfinementModel::new(gamma).map_err(|e| e.to_string())?;
    if !(delta > 0.0 && delta <= 0.5 * gamma) {
        return Err(format!("delta = {delta} outside (0, gamma/2]"));
    }
    if !(p >= 1.0) || !(eps_weight > 0.0) {
        return Err(format!("need p >= 1 and eps_weight > 0, got {p}, {eps_weight}"));
    }
    let kind = DriftKind::Exp { delta, eps_weight, p };
    Ok(certify(DriftParams { gamma, kind, big_k, r }, grid))
}

/// Certificate for `m = H^k`, `k >= 1`.
pub fn certify_drift_poly(
    gamma: f64,
    k: f64,
    big_k: f64,
    r: f64,
    grid: &PhaseGrid<f64>,
) -> Result<DriftCertificate, String> {
    ConfinementModel::new(gamma).map_err(|e| e.to_string())?;
    if !(k >= 1.0) {
        return Err(format!("k = {k} < 1"));
    }
    Ok(certify(DriftParams { gamma, kind: DriftKind::Poly { k }, big_k, r }, grid))
}

/// All certificates over `ks x rs`, row-major in `ks`.
pub fn drift_sweep(
    gamma: f64,
    kind: DriftKind,
    ks: &[f64],
    rs: &[f64],
    grid: &PhaseGrid<f64>,
) -> Vec<DriftCertificate> {
    use rayon::prelude::*;
    let pairs: Vec<(f64, f64)> = ks.iter().flat_map(|&k| rs.iter().map(move |&r| (k, r))).collect();
    pairs.par_iter().map(|&(big_k, r)| certify(DriftParams { gamma, kind, big_k, r }, grid)).collect()
}

/// True when, for each `R`, passing at `K` implies passing at every larger `K`.
pub fn monotone_in_k(certs: &[DriftCertificate]) -> bool {
    let mut rs: Vec<f64> = certs.iter().map(|c| c.params.r).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    rs.iter().all(|&r| {
        let mut col: Vec<&DriftCertificate> = certs.iter().filter(|c| c.params.r == r).collect();
        col.sort_by(|a, b| a.params.big_k.total_cmp(&b.params.big_k));
        col.windows(2).all(|w| !w[0].pass || w[1].pass) && col.windows(2).all(|w| w[1].c >= w[0].c)
    })
}
