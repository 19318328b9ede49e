//! Short-time `L^1 -> L^2` smoothing of `S_B` and weighted `L^1` growth,
//! both in the weight `G^{-(1+delta)/2}`.

use serde::Serialize;

use crate::initial::bump;
use crate::model::Equilibrium;
use crate::operators::GeneratorMatrix;
use crate::phase_grid::Field;
use crate::semigroup::{evolve_with, EvolveConfig, Scheme};

use super::{VerificationReport, VerifyError};

/// Exponent `(5d + 1)/2` of the smoothing bound for `d = 1`.
pub const SMOOTHING_EXPONENT: f64 = 3.0;

fn log_w(eq: &Equilibrium<f64>, delta: f64) -> impl Fn(f64, f64) -> f64 + '_ {
    move |x, v| -0.5 * (1.0 + delta) * eq.log_density(x, v)
}

/// `int |f| G^{-(1+delta)/2}`.
pub fn weighted_l1(f: &Field<f64>, eq: &Equilibrium<f64>, delta: f64) -> f64 {
    let w = log_w(eq, delta);
    f.map_nodes(|x, v, y| y.abs() * w(x, v).exp()).integrate()
}

/// `(int f^2 G^{-(1+delta)})^{1/2}`.
pub fn weighted_l2(f: &Field<f64>, eq: &Equilibrium<f64>, delta: f64) -> f64 {
    let w = log_w(eq, delta);
    f.map_nodes(|x, v, y| (y * w(x, v).exp()).powi(2)).integrate().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizationMember {
    pub label: String,
    pub width: f64,
    pub l1_initial: f64,
    pub l2_initial: f64,
    /// `sup_{t in [t_min, eta]} t^3 |S_B(t) f|_2 / |f|_1`.
    pub sup_scaled: f64,
    pub t_at_sup: f64,
    /// `|S_B(eta) f|_2 / |f|_1`.
    pub ratio_at_eta: f64,
    /// The unscaled ratio is nonincreasing on `[t_min, eta]`.
    pub decreasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularizationStudy {
    pub delta: f64,
    pub eta: f64,
    pub t_min: f64,
    pub members: Vec<RegularizationMember>,
    pub sup: f64,
}

/// Runs `S_B` on each initial datum and measures the scaled smoothing ratio.
pub fn regularization_rate(
    eq: &Equilibrium<f64>,
    b: &GeneratorMatrix<f64>,
    delta: f64,
    eta: f64,
    t_min: f64,
    dt: f64,
    family: &[(String, f64, Field<f64>)],
) -> Result<RegularizationStudy, VerifyError> {
    if !(0.0 < t_min && t_min < eta) {
        return Err(VerifyError::BadInput(format!("need 0 < t_min < eta, got {t_min}, {eta}")));
    }
    use rayon::prelude::*;
    let members = family
        .par_iter()
        .map(|(label, width, f0)| -> Result<RegularizationMember, VerifyError> {
            let l1 = weighted_l1(f0, eq, delta);
            let cfg = EvolveConfig::new(dt, eta, Scheme::ImplicitEuler);
            let tr = evolve_with(b, f0, &cfg, vec!["l2".into()], |_, f| Ok(vec![weighted_l2(f, eq, delta)]))?;
            let l2 = tr.series("l2").expect("recorded");
            let (mut sup, mut t_sup) = (0.0f64, t_min);
            let mut decreasing = true;
            let mut prev = f64::INFINITY;
            for (&t, &y) in tr.times.iter().zip(&l2) {
                if t + 1e-12 < t_min {
                    continue;
                }
                let r = y / l1;
                decreasing &= r <= prev * (1.0 + 1e-12);
                prev = r;
                let s = t.powf(SMOOTHING_EXPONENT) * r;
                if s > sup {
                    sup = s;
                    t_sup = t;
                }
            }
            Ok(RegularizationMember {
                label: label.clone(),
                width: *width,
                l1_initial: l1,
                l2_initial: l2[0],
                sup_scaled: sup,
                t_at_sup: t_sup,
                ratio_at_eta: l2[l2.len() - 1] / l1,
                decreasing,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let sup = members.iter().map(|m| m.sup_scaled).fold(0.0, f64::max);
    Ok(RegularizationStudy { delta, eta, t_min, members, sup })
}

/// Unit-mass bumps of width `k dx` for each `k` in `widths_in_dx`, at each centre.
pub fn near_singular_family(
    eq: &Equilibrium<f64>,
    centers: &[(f64, f64)],
    widths_in_dx: &[f64],
) -> Vec<(String, f64, Field<f64>)> {
    let dx = eq.grid().dx();
    let mut out = Vec::new();
    for &(x0, v0) in centers {
        for &k in widths_in_dx {
            out.push((format!("bump({x0},{v0};{k}dx)"), k * dx, bump(eq, x0, v0, k * dx)));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Growth {
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
    /// `max_t |f_t|_{L^1(w)} / (e^t |f_0|_{L^1(w)})`.
    pub worst_ratio: f64,
    /// `max_t max(-f_t) / max |f_t|`; zero when positivity is preserved.
    pub negative_part: f64,
}

/// Weighted `L^1` norm along an `S_B` orbit against `e^t` times the initial norm.
pub fn l1_growth_check(
    eq: &Equilibrium<f64>,
    b: &GeneratorMatrix<f64>,
    delta: f64,
    f0: &Field<f64>,
    t_end: f64,
    dt: f64,
) -> Result<L1Growth, VerifyError> {
    let cfg = EvolveConfig::new(dt, t_end, Scheme::ImplicitEuler);
    let names = vec!["l1".into(), "neg".into()];
    let tr = evolve_with(b, f0, &cfg, names, |_, f| {
        let neg = f.values().iter().fold(0.0f64, |m, &y| m.max(-y));
        Ok(vec![weighted_l1(f, eq, delta), neg / f.max_abs().max(1e-300)])
    })?;
    let l1 = tr.series("l1").expect("recorded");
    let neg = tr.series("neg").expect("recorded");
    let worst_ratio = tr.times.iter().zip(&l1).map(|(t, y)| y / (t.exp() * l1[0])).fold(0.0, f64::max);
    Ok(L1Growth { times: tr.times, l1, worst_ratio, negative_part: neg.iter().copied().fold(0.0, f64::max) })
}

/// Report form of [`l1_growth_check`].
pub fn l1_growth_report(g: &L1Growth, tol: f64, positive_data: bool) -> VerificationReport {
    let mut r = VerificationReport::new("l1growth");
    r.input("tol", tol).input("samples", g.times.len());
    r.check("max |f_t|/(e^t |f_0|)", g.worst_ratio, format!("<= 1 + {tol}"), g.worst_ratio <= 1.0 + tol);
    r.measure("negative part", g.negative_part);
    if positive_data {
        r.note("the implicit step is not an M-matrix (centred transport); the negative part is reported, not asserted");
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_equilibrium, ConfinementModel, CutoffSpec};
    use crate::operators::assemble_full;
    use crate::phase_grid::PhaseGrid;

    fn setup(n: usize) -> (Equilibrium<f64>, crate::operators::Generators<f64>) {
        let g = PhaseGrid::new(n, n, 6.0, 7.0).unwrap();
        let eq = build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap();
        let gens = assemble_full(&eq, Some(&CutoffSpec::new(1.0, 3.0).unwrap())).unwrap();
        (eq, gens)
    }

    #[test]
    fn smooth_data_ratio_decreases() {
        let (eq, gens) = setup(33);
        let fam = vec![("smooth".to_string(), 1.0, bump(&eq, 0.5, 0.0, 1.0))];
        let s = regularization_rate(&eq, &gens.b, 0.5, 1.0, 0.05, 0.01, &fam).unwrap();
        assert!(s.members[0].decreasing);
        assert!(s.sup.is_finite() && s.sup > 0.0);
        assert!(regularization_rate(&eq, &gens.b, 0.5, 1.0, 2.0, 0.01, &fam).is_err());
    }

    #[test]
    fn equilibrium_l1_growth_is_bounded() {
        let (eq, gens) = setup(33);
        let g = l1_growth_check(&eq, &gens.b, 0.5, eq.density(), 1.0, 0.01).unwrap();
        assert!((g.l1[0] * g.times[0].exp() - weighted_l1(eq.density(), &eq, 0.5)).abs() < 1e-14);
        assert!(g.worst_ratio <= 1.0);
        assert!(l1_growth_report(&g, 1e-6, true).pass);
    }
}
