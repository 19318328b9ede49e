//! Integral identities and inequalities for the generator, evaluated either
//! with the discrete operators (finite-difference gradients, assembled `L`)
//! or with closed-form derivatives of Gaussian test functions.

use serde::Serialize;

use crate::model::{exp_h_derivatives, poly_h_derivatives, Equilibrium, LogDerivatives};
use crate::operators::{Generators, OperatorError};
use crate::phase_grid::{Field, PhaseGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    /// `lhs = rhs`
    Equality,
    /// `lhs <= rhs`
    Inequality,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityEntry {
    pub name: String,
    pub kind: IdentityKind,
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityEntry {
    /// `lhs - rhs`.
    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }

    /// `rhs - lhs`; nonnegative when an inequality holds.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn relative_residual(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            self.residual().abs() / scale
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityReport {
    pub entries: Vec<IdentityEntry>,
}

impl IdentityReport {
    pub fn get(&self, name: &str) -> Option<&IdentityEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Parameters of the identity suite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityOptions {
    /// Exponent in `G^{-(1+delta)}`.
    pub delta: f64,
    /// Integrability exponent of the weighted `L^p` identities.
    pub p: f64,
    /// `m = e^{eps H^delta_w}` in the splitting identity.
    pub eps_weight: f64,
    pub delta_weight: f64,
    /// `m = H^k` in the weighted `L^p` identity.
    pub k: f64,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self { delta: 0.5, p: 2.0, eps_weight: 0.05, delta_weight: 0.25, k: 0.5 }
    }
}

/// Pointwise data of one function: values, first derivatives, `L f`, `L* f`.
#[derive(Debug, Clone)]
pub struct Samples {
    pub f: Vec<f64>,
    pub fx: Vec<f64>,
    pub fv: Vec<f64>,
    pub lf: Vec<f64>,
    pub lsf: Vec<f64>,
}

impl Samples {
    /// Finite differences and the assembled generators.
    pub fn discrete(f: &Field<f64>, gens: &Generators<f64>) -> Result<Self, OperatorError> {
        Ok(Self {
            f: f.values().to_vec(),
            fx: f.gradient_x().into_values(),
            fv: f.gradient_v().into_values(),
            lf: gens.l.apply(f)?.into_values(),
            lsf: gens.lstar.apply(f)?.into_values(),
        })
    }

    /// Closed-form derivatives of a Gaussian test function.
    pub fn analytic(test: &GaussianTest, eq: &Equilibrium<f64>) -> Self {
        let grid = eq.grid();
        let m = eq.model();
        let n = grid.len();
        let mut s = Self {
            f: Vec::with_capacity(n),
            fx: Vec::with_capacity(n),
            fv: Vec::with_capacity(n),
            lf: Vec::with_capacity(n),
            lsf: Vec::with_capacity(n),
        };
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.nv() {
                let v = grid.v(j);
                let d = test.derivatives(x, v);
                let t = -v * d.fx + m.potential_d1(x) * d.fv;
                let c = d.fvv + d.f + v * d.fv;
                s.f.push(d.f);
                s.fx.push(d.fx);
                s.fv.push(d.fv);
                s.lf.push(t + c);
                s.lsf.push(c - t);
            }
        }
        s
    }
}

/// `amp * exp(-(a X^2 + b Y^2 + c X Y))` with `X = x - x0`, `Y = v - v0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianTest {
    pub amp: f64,
    pub x0: f64,
    pub v0: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct PointDerivatives {
    pub f: f64,
    pub fx: f64,
    pub fv: f64,
    pub fvv: f64,
}

impl GaussianTest {
    pub fn derivatives(&self, x: f64, v: f64) -> PointDerivatives {
        let (xx, yy) = (x - self.x0, v - self.v0);
        let q = -(self.a * xx * xx + self.b * yy * yy + self.c * xx * yy);
        let qx = -(2.0 * self.a * xx + self.c * yy);
        let qv = -(2.0 * self.b * yy + self.c * xx);
        let f = self.amp * q.exp();
        PointDerivatives { f, fx: qx * f, fv: qv * f, fvv: (qv * qv - 2.0 * self.b) * f }
    }

    pub fn field(&self, grid: &PhaseGrid<f64>) -> Field<f64> {
        Field::from_fn(*grid, |x, v| self.derivatives(x, v).f).expect("finite Gaussian")
    }

    /// A fixed family of well-resolved anisotropic bumps.
    pub fn family() -> Vec<GaussianTest> {
        vec![
            GaussianTest { amp: 1.0, x0: 0.4, v0: -0.3, a: 0.6, b: 0.8, c: 0.2 },
            GaussianTest { amp: 0.7, x0: -1.1, v0: 0.5, a: 0.4, b: 1.0, c: -0.3 },
            GaussianTest { amp: 1.3, x0: 1.5, v0: 0.9, a: 0.9, b: 0.6, c: 0.1 },
        ]
    }
}

/// Runs the suite on two sample sets living on `eq`'s grid.
pub fn lemma_identities_check(
    sf: &Samples,
    sg: &Samples,
    eq: &Equilibrium<f64>,
    opts: &IdentityOptions,
    grad_weighted: Option<(&[f64], &[f64])>,
) -> IdentityReport {
    let grid = *eq.grid();
    let model = eq.model();
    let w = grid.weights();
    let n = grid.len();
    let d = 1.0;
    let delta = opts.delta;
    let mut log_g = Vec::with_capacity(n);
    let mut xs = Vec::with_capacity(n);
    let mut vs = Vec::with_capacity(n);
    for i in 0..grid.nx() {
        for j in 0..grid.nv() {
            let (x, v) = (grid.x(i), grid.v(j));
            log_g.push(eq.log_density(x, v));
            xs.push(x);
            vs.push(v);
        }
    }
    let sum = |f: &dyn Fn(usize) -> f64| -> f64 { (0..n).map(|k| w[k] * f(k)).sum() };
    let wd = |k: usize| (-(1.0 + delta) * log_g[k]).exp();

    let mut entries = Vec::new();
    let mut push = |name: &str, kind: IdentityKind, lhs: f64, rhs: f64| {
        entries.push(IdentityEntry { name: name.to_string(), kind, lhs, rhs });
    };

    for (star, lf, lg) in [("", &sf.lf, &sg.lf), ("_dual", &sf.lsf, &sg.lsf)] {
        let bil_lhs = sum(&|k| (sf.f[k] * lg[k] + sg.f[k] * lf[k]) * wd(k));
        let bil_rhs = sum(&|k| {
            let (v, fk, gk) = (vs[k], sf.f[k], sg.f[k]);
            (-2.0 * (sf.fv[k] + v * fk) * (sg.fv[k] + v * gk) + (delta * d - delta * (1.0 - delta) * v * v) * fk * gk)
                * wd(k)
        });
        push(&format!("bilinear_dissipation{star}"), IdentityKind::Equality, bil_lhs, bil_rhs);

        let quad_lhs = sum(&|k| sf.f[k] * lf[k] * wd(k));
        let quad_rhs = sum(&|k| {
            let (v, fk) = (vs[k], sf.f[k]);
            let gv = sf.fv[k] + v * fk;
            (-gv * gv + 0.5 * delta * d * fk * fk - 0.5 * delta * (1.0 - delta) * v * v * fk * fk) * wd(k)
        });
        push(&format!("quadratic_dissipation{star}"), IdentityKind::Equality, quad_lhs, quad_rhs);

        // the bilinear form on the diagonal restates the quadratic one
        let bil_diag = sum(&|k| {
            let (v, fk) = (vs[k], sf.f[k]);
            (-2.0 * (sf.fv[k] + v * fk).powi(2) + (delta * d - delta * (1.0 - delta) * v * v) * fk * fk) * wd(k)
        });
        push(&format!("bilinear_diagonal{star}"), IdentityKind::Equality, 0.5 * bil_diag, quad_rhs);

        let grad_rhs = sum(&|k| {
            let (v, fk) = (vs[k], sf.f[k]);
            (-sf.fv[k] * sf.fv[k] + 0.5 * delta * (1.0 + delta) * v * v * fk * fk + 0.5 * (2.0 + delta) * d * fk * fk)
                * wd(k)
        });
        push(&format!("gradient_dissipation{star}"), IdentityKind::Equality, quad_lhs, grad_rhs);
    }

    // splitting identity with m = e^{eps H^delta_w}: integrand f^{p-1} L f G^{-(p-1)} m
    let p = opts.p;
    let ppow = |y: f64, e: f64| y.abs().powf(e) * y.signum();
    let exp_d: Vec<LogDerivatives<f64>> =
        (0..n).map(|k| exp_h_derivatives(opts.eps_weight, opts.delta_weight, xs[k], vs[k])).collect();
    let log_m = |k: usize| opts.eps_weight * crate::model::lyapunov_h(xs[k], vs[k]).powf(opts.delta_weight);
    let gw = |k: usize| (-(p - 1.0) * log_g[k] + log_m(k)).exp();
    let split_lhs = sum(&|k| ppow(sf.f[k], p - 1.0) * sf.lf[k] * gw(k));
    let split_rhs = sum(&|k| {
        let ld = exp_d[k];
        let v = vs[k];
        let phi = ld.lap_v - v * ld.gv - model.potential_d1(xs[k]) * ld.gv + v * ld.gx;
        sf.f[k].abs().powf(p) * gw(k) * phi / p
    });
    let kind = if p == 1.0 { IdentityKind::Equality } else { IdentityKind::Inequality };
    push("splitting_drift", kind, split_lhs, split_rhs);
    // with the dissipation (p-1) int |d_v(f/G)|^2 |f/G|^{p-2} G m restored
    let diss = if p == 1.0 {
        0.0
    } else {
        sum(&|k| {
            let h = sf.f[k] * (-log_g[k]).exp();
            let hv = (sf.fv[k] + vs[k] * sf.f[k]) * (-log_g[k]).exp();
            (p - 1.0) * hv * hv * h.abs().powf(p - 2.0) * (log_g[k] + log_m(k)).exp()
        })
    };
    push("splitting_drift_with_dissipation", IdentityKind::Equality, split_lhs + diss, split_rhs);

    // weighted L^p identity with m = H^k
    let poly: Vec<LogDerivatives<f64>> = (0..n).map(|k| poly_h_derivatives(opts.k, xs[k], vs[k])).collect();
    let mk = |k: usize| crate::model::lyapunov_h(xs[k], vs[k]).powf(opts.k);
    let lp_lhs = sum(&|k| sf.lf[k] * ppow(sf.f[k], p - 1.0) * mk(k).powf(p));
    let inv_pp = 1.0 - 1.0 / p;
    let lp_rhs = sum(&|k| {
        let ld = poly[k];
        let (x, v) = (xs[k], vs[k]);
        let tm = -v * ld.gx + model.potential_d1(x) * ld.gv;
        let phi = 2.0 * inv_pp * ld.gv * ld.gv + (2.0 / p - 1.0) * ld.lap_v + d * inv_pp - v * ld.gv - tm;
        let m = mk(k);
        let mf = m * sf.f[k];
        let dmf = m * sf.fv[k] + sf.f[k] * m * ld.gv;
        let diss = if p == 1.0 { 0.0 } else { (p - 1.0) * dmf * dmf * mf.abs().powf(p - 2.0) };
        -diss + sf.f[k].abs().powf(p) * m.powf(p) * phi
    });
    push("weighted_lp", IdentityKind::Equality, lp_lhs, lp_rhs);

    // gradient-weight inequality with m = G^{-(1+delta)/2}
    let s = 0.5 * (1.0 + delta);
    let grad_f_sq = sum(&|k| (sf.fx[k] * sf.fx[k] + sf.fv[k] * sf.fv[k]) * wd(k));
    let f_sq = sum(&|k| sf.f[k] * sf.f[k] * wd(k));
    let q_int = sum(&|k| {
        let (x, v) = (xs[k], vs[k]);
        let vp = model.potential_d1(x);
        let q = -s * s * (vp * vp + v * v) - s * (model.potential_d2(x) + d);
        q * sf.f[k] * sf.f[k] * wd(k)
    });
    let gw_lhs = match grad_weighted {
        Some((gx, gv)) => sum(&|k| gx[k] * gx[k] + gv[k] * gv[k]),
        None => sum(&|k| {
            let (x, v) = (xs[k], vs[k]);
            let m = (-s * log_g[k]).exp();
            let dx = sf.fx[k] * m + sf.f[k] * s * model.potential_d1(x) * m;
            let dv = sf.fv[k] * m + sf.f[k] * s * v * m;
            dx * dx + dv * dv
        }),
    };
    push("gradient_weight_identity", IdentityKind::Equality, gw_lhs, grad_f_sq + q_int);
    push("gradient_weight", IdentityKind::Inequality, gw_lhs, grad_f_sq + gradient_weight_constant(eq, delta) * f_sq);

    IdentityReport { entries }
}

/// Smallest `C >= 0` with `-(s^2 V'^2 + s V'') <= C` on the box, `s = (1+delta)/2`.
pub fn gradient_weight_constant(eq: &Equilibrium<f64>, delta: f64) -> f64 {
    let m = eq.model();
    let s = 0.5 * (1.0 + delta);
    let xm = eq.grid().x_max();
    (0..=20_000)
        .map(|i| {
            let x = xm * i as f64 / 20_000.0;
            let vp = m.potential_d1(x);
            -(s * s * vp * vp + s * m.potential_d2(x))
        })
        .fold(0.0, f64::max)
}

/// Finite-difference gradient of `f G^{-(1+delta)/2}`, for the discrete mode.
pub fn weighted_gradient(f: &Field<f64>, eq: &Equilibrium<f64>, delta: f64) -> (Vec<f64>, Vec<f64>) {
    let s = 0.5 * (1.0 + delta);
    let fm = f.map_nodes(|x, v, y| y * (-s * eq.log_density(x, v)).exp());
    (fm.gradient_x().into_values(), fm.gradient_v().into_values())
}

/// Discrete-mode suite for fields `f`, `g`.
pub fn discrete_identities(
    f: &Field<f64>,
    g: &Field<f64>,
    eq: &Equilibrium<f64>,
    gens: &Generators<f64>,
    opts: &IdentityOptions,
) -> Result<IdentityReport, OperatorError> {
    let sf = Samples::discrete(f, gens)?;
    let sg = Samples::discrete(g, gens)?;
    let (gx, gv) = weighted_gradient(f, eq, opts.delta);
    Ok(lemma_identities_check(&sf, &sg, eq, opts, Some((&gx, &gv))))
}

/// Analytic-mode suite for two Gaussian test functions.
pub fn analytic_identities(
    f: &GaussianTest,
    g: &GaussianTest,
    eq: &Equilibrium<f64>,
    opts: &IdentityOptions,
) -> IdentityReport {
    let sf = Samples::analytic(f, eq);
    let sg = Samples::analytic(g, eq);
    lemma_identities_check(&sf, &sg, eq, opts, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_equilibrium, ConfinementModel};
    use crate::operators::assemble_full;

    fn eq(n: usize) -> Equilibrium<f64> {
        let g = PhaseGrid::new(n, n, 8.0, 8.0).unwrap();
        build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap()
    }

    #[test]
    fn equilibrium_gives_zero_sides() {
        let e = eq(65);
        let gens = assemble_full(&e, None).unwrap();
        let opts = IdentityOptions { delta: 0.0, ..Default::default() };
        let r = discrete_identities(e.density(), e.density(), &e, &gens, &opts).unwrap();
        let quad = r.get("quadratic_dissipation").unwrap();
        // the right side only sees finite-difference error in (d_v + v) G
        assert!(quad.lhs.abs() < 1e-12 && quad.rhs.abs() < 1e-3, "{quad:?}");
    }

    #[test]
    fn constant_weight_reduces_to_mass_conservation() {
        let e = eq(65);
        let gens = assemble_full(&e, None).unwrap();
        let opts = IdentityOptions { p: 1.0, k: 0.0, ..Default::default() };
        let f = GaussianTest::family()[1].field(e.grid());
        let r = discrete_identities(&f, &f, &e, &gens, &opts).unwrap();
        let lp = r.get("weighted_lp").unwrap();
        assert_eq!(lp.rhs, 0.0);
        assert!(lp.lhs.abs() < 1e-14);
    }

    #[test]
    fn analytic_identities_hold_to_quadrature_accuracy() {
        let e = eq(129);
        let fam = GaussianTest::family();
        for p in [1.0, 2.0, 1.5] {
            let opts = IdentityOptions { p, ..Default::default() };
            let r = analytic_identities(&fam[0], &fam[2], &e, &opts);
            for ent in &r.entries {
                match ent.kind {
                    IdentityKind::Equality => {
                        assert!(ent.relative_residual() < 1e-9, "p={p}: {ent:?}")
                    }
                    IdentityKind::Inequality => assert!(ent.margin() >= 0.0, "p={p}: {ent:?}"),
                }
            }
        }
    }
}
