//! Norms, moments, projections and quadratic forms on phase-space fields.

pub mod identities;

use thiserror::Error;

use crate::model::{eval_weight, ConfinementModel, Equilibrium, ModelError, WeightSpec};
use crate::operators::{elliptic_solve, EllipticError, GeneratorMatrix, OperatorError};
use crate::phase_grid::{Field, GridError, XField};
use crate::scalar::Scalar;

pub use crate::operators::inner_ginv;
pub use identities::{lemma_identities_check, IdentityEntry, IdentityKind, IdentityReport};

/// Relative mass tolerance for zero-mass inputs.
pub const MASS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FunctionalError {
    #[error("field is not mean-free: mass {mass:.3e} exceeds {tol:.0e} x L1 norm {l1:.3e}")]
    MassDefect { mass: f64, l1: f64, tol: f64 },
    #[error("functional needs the full generator L")]
    MissingGenerator,
    #[error("invalid functional parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Elliptic(#[from] EllipticError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Sign of the mixed term in the regularization energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergySign {
    Plus,
    Minus,
}

/// `F(t, f) = A|f|^2 + a t^2 |d_v f|^2 +- 2 c t^4 (d_v f, d_x f) + b t^6 |d_x f|^2`
/// in `L^2(G^{-(1+delta)/2})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub big_a: f64,
    pub delta: f64,
    pub sign: EnergySign,
}

impl EnergyParams {
    pub fn validate(&self) -> Result<(), FunctionalError> {
        let ok = self.a > 0.0
            && self.b > 0.0
            && self.c > 0.0
            && self.big_a > 0.0
            && self.c <= (self.a * self.b).sqrt()
            && (0.0..1.0).contains(&self.delta);
        if ok {
            Ok(())
        } else {
            Err(FunctionalError::BadParams(format!("need a, b, c, A > 0, c <= sqrt(ab), 0 <= delta < 1: {self:?}")))
        }
    }
}

/// Quantities recorded along trajectories.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionalSpec {
    /// `(int |f w|^p)^{1/p}`; `p = inf` gives `max |f w|`.
    WeightedLp {
        p: f64,
        weight: WeightSpec,
    },
    Mass,
    /// `int v^order f` for order 0 or 1.
    Moment {
        order: u8,
    },
    H1Weighted,
    ModifiedInner {
        eps: f64,
    },
    Dirichlet {
        eps: f64,
    },
    EnergyF(EnergyParams),
}

impl FunctionalSpec {
    pub fn validate(&self) -> Result<(), FunctionalError> {
        match self {
            FunctionalSpec::WeightedLp { p, weight } => {
                if !(*p >= 1.0) {
                    return Err(FunctionalError::BadParams(format!("p = {p} < 1")));
                }
                Ok(weight.validate()?)
            }
            FunctionalSpec::Moment { order } if *order > 1 => {
                Err(FunctionalError::BadParams(format!("moment order {order} > 1")))
            }
            FunctionalSpec::ModifiedInner { eps } | FunctionalSpec::Dirichlet { eps } if !(*eps >= 0.0) => {
                Err(FunctionalError::BadParams(format!("eps_scalar = {eps} < 0")))
            }
            FunctionalSpec::EnergyF(p) => p.validate(),
            _ => Ok(()),
        }
    }
}

/// Everything a functional may need besides the field.
#[derive(Debug, Clone, Copy)]
pub struct FunctionalContext<'a, T> {
    pub eq: &'a Equilibrium<T>,
    pub l: Option<&'a GeneratorMatrix<T>>,
}

impl<'a, T: Scalar> FunctionalContext<'a, T> {
    pub fn new(eq: &'a Equilibrium<T>) -> Self {
        Self { eq, l: None }
    }

    pub fn with_generator(mut self, l: &'a GeneratorMatrix<T>) -> Self {
        self.l = Some(l);
        self
    }

    /// Evaluates `spec` on `f` at time `t`.
    pub fn eval(&self, spec: &FunctionalSpec, f: &Field<T>, t: T) -> Result<T, FunctionalError> {
        let eq = self.eq;
        Ok(match spec {
            FunctionalSpec::WeightedLp { p, weight } => weighted_norm(f, T::of(*p), weight, eq)?,
            FunctionalSpec::Mass => f.integrate(),
            FunctionalSpec::Moment { order: 0 } => f.integrate(),
            FunctionalSpec::Moment { order: 1 } => f.integrate_v_weighted(|v| v).integrate(),
            FunctionalSpec::Moment { order } => {
                return Err(FunctionalError::BadParams(format!("moment order {order}")))
            }
            FunctionalSpec::H1Weighted => h1_norm(f, eq),
            FunctionalSpec::ModifiedInner { eps } => {
                let f0 = ensure_zero_mass(f, eq)?;
                modified_inner(&f0, &f0, T::of(*eps), eq)?
            }
            FunctionalSpec::Dirichlet { eps } => {
                let l = self.l.ok_or(FunctionalError::MissingGenerator)?;
                dirichlet_form(f, T::of(*eps), l, eq)?
            }
            FunctionalSpec::EnergyF(p) => energy_functional(f, t, p, eq)?,
        })
    }
}

/// `(int |f w|^p)^{1/p}` with `w` from `spec`; `p = inf` is the max norm.
pub fn weighted_norm<T: Scalar>(
    f: &Field<T>,
    p: T,
    spec: &WeightSpec,
    eq: &Equilibrium<T>,
) -> Result<T, FunctionalError> {
    let w = eval_weight(spec, eq)?;
    Ok(weighted_norm_field(f, p, &w))
}

pub fn weighted_norm_field<T: Scalar>(f: &Field<T>, p: T, w: &Field<T>) -> T {
    let fw = f * w;
    if p.is_infinite() {
        return fw.max_abs();
    }
    if p == T::one() {
        return fw.map(|y| y.abs()).integrate();
    }
    if p == T::of(2.0) {
        return fw.map(|y| y * y).integrate().sqrt();
    }
    fw.map(|y| y.abs().powf(p)).integrate().powf(T::one() / p)
}

/// `int |f|`.
pub fn l1_norm<T: Scalar>(f: &Field<T>) -> T {
    f.map(|y| y.abs()).integrate()
}

/// `int f^2 w` for a pointwise weight given in log form.
pub fn weighted_sq<T: Scalar>(f: &Field<T>, log_w: impl Fn(T, T) -> T) -> T {
    f.map_nodes(|x, v, y| y * y * log_w(x, v).exp()).integrate()
}

/// `rho_f = int f dv`.
pub fn density<T: Scalar>(f: &Field<T>) -> XField<T> {
    f.integrate_v()
}

/// `j_f = int v f dv`.
pub fn current<T: Scalar>(f: &Field<T>) -> XField<T> {
    f.integrate_v_weighted(|v| v)
}

/// Maxwellian normalized to unit trapezoidal mass on the velocity grid.
pub fn discrete_maxwellian<T: Scalar>(f: &Field<T>) -> Vec<T> {
    let g = f.grid();
    let raw: Vec<T> = (0..g.nv()).map(|j| (-g.v(j) * g.v(j) * T::of(0.5)).exp()).collect();
    let mass = g.v_line().integrate(&raw);
    raw.into_iter().map(|m| m / mass).collect()
}

/// `pi f = M(v) rho_f(x)`.
pub fn projection_pi<T: Scalar>(f: &Field<T>) -> Field<T> {
    let g = *f.grid();
    let m = discrete_maxwellian(f);
    let rho = density(f);
    let mut out = Vec::with_capacity(g.len());
    for i in 0..g.nx() {
        for &mj in &m {
            out.push(mj * rho.values()[i]);
        }
    }
    Field::raw(g, out)
}

/// `f - pi f`.
pub fn projection_perp<T: Scalar>(f: &Field<T>) -> Field<T> {
    f - &projection_pi(f)
}

/// Repairs a small mass defect by subtracting `mass * G`; rejects large ones.
pub fn ensure_zero_mass<T: Scalar>(f: &Field<T>, eq: &Equilibrium<T>) -> Result<Field<T>, FunctionalError> {
    let mass = f.integrate();
    let l1 = l1_norm(f);
    if mass == T::zero() {
        return Ok(f.clone());
    }
    if mass.abs() > T::of(MASS_TOLERANCE) * l1 {
        return Err(FunctionalError::MassDefect { mass: mass.f64(), l1: l1.f64(), tol: MASS_TOLERANCE });
    }
    Ok(f.axpy(-mass, eq.density())?)
}

/// `f - M(f) G`.
pub fn remove_mass<T: Scalar>(f: &Field<T>, eq: &Equilibrium<T>) -> Field<T> {
    f.axpy(-f.integrate(), eq.density()).expect("field and equilibrium share a grid")
}

/// `|f|_{H_1} = (int f^2 G^{-1} <grad V>^2)^{1/2}`.
pub fn h1_norm<T: Scalar>(f: &Field<T>, eq: &Equilibrium<T>) -> T {
    let m = eq.model();
    weighted_sq(f, |x, v| -eq.log_density(x, v) + T::of(2.0) * m.grad_weight(x).ln()).sqrt()
}

/// Solves `-Delta_V^* u = rho_f e^V <grad V>^2` and returns `u'`.
pub fn corrector_gradient<T: Scalar>(f: &Field<T>, eq: &Equilibrium<T>) -> Result<XField<T>, FunctionalError> {
    let m: &ConfinementModel<T> = eq.model();
    let rho = density(f);
    let xi = rho.map_nodes(|x, r| {
        let g = m.grad_weight(x);
        r * m.potential(x).exp() * g * g
    });
    let sol = elliptic_solve(f.grid().x_line(), m, &xi)?;
    Ok(sol.solution.derivative())
}

fn x_inner<T: Scalar>(a: &XField<T>, b: &XField<T>) -> T {
    let line = a.line();
    let prod: Vec<T> = a.values().iter().zip(b.values()).map(|(&p, &q)| p * q).collect();
    line.integrate(&prod)
}

/// `((f, g)) = (f, g)_{G^{-1}} + eps [<j_f, u_g'> + <u_f', j_g>]` for mean-free
/// `f`, `g`, with `-Delta_V^* u_h = rho_h e^V <grad V>^2`.
pub fn modified_inner<T: Scalar>(
    f: &Field<T>,
    g: &Field<T>,
    eps: T,
    eq: &Equilibrium<T>,
) -> Result<T, FunctionalError> {
    let f = ensure_zero_mass(f, eq)?;
    let g = ensure_zero_mass(g, eq)?;
    let base = inner_ginv(eq, &f, &g);
    if eps == T::zero() {
        return Ok(base);
    }
    Ok(base + eps * cross_terms(&f, &g, eq)?)
}

fn cross_terms<T: Scalar>(f: &Field<T>, g: &Field<T>, eq: &Equilibrium<T>) -> Result<T, FunctionalError> {
    let du_f = corrector_gradient(f, eq)?;
    let du_g = corrector_gradient(g, eq)?;
    Ok(x_inner(&current(f), &du_g) + x_inner(&du_f, &current(g)))
}

/// `D[f] = ((-L f, f))`.
pub fn dirichlet_form<T: Scalar>(
    f: &Field<T>,
    eps: T,
    l: &GeneratorMatrix<T>,
    eq: &Equilibrium<T>,
) -> Result<T, FunctionalError> {
    let f = ensure_zero_mass(f, eq)?;
    let lf = l.apply(&f)?.scale(-T::one());
    modified_inner(&lf, &f, eps, eq)
}

/// Energy functional of the regularization estimate at time `t`.
pub fn energy_functional<T: Scalar>(
    f: &Field<T>,
    t: T,
    p: &EnergyParams,
    eq: &Equilibrium<T>,
) -> Result<T, FunctionalError> {
    p.validate()?;
    if t < T::zero() {
        return Err(FunctionalError::BadParams(format!("t = {t} < 0")));
    }
    let parts = energy_parts(f, p.delta, eq);
    let t2 = t * t;
    let sign = match p.sign {
        EnergySign::Plus => T::one(),
        EnergySign::Minus => -T::one(),
    };
    Ok(T::of(p.big_a) * parts.f2
        + T::of(p.a) * t2 * parts.fv2
        + sign * T::of(2.0 * p.c) * t2 * t2 * parts.fvfx
        + T::of(p.b) * t2 * t2 * t2 * parts.fx2)
}

/// The four integrals in `L^2(G^{-(1+delta)/2})` entering the energy functional.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParts<T> {
    pub f2: T,
    pub fv2: T,
    pub fvfx: T,
    pub fx2: T,
}

pub fn energy_parts<T: Scalar>(f: &Field<T>, delta: f64, eq: &Equilibrium<T>) -> EnergyParts<T> {
    let s = T::one() + T::of(delta);
    let w = Field::raw(
        *f.grid(),
        (0..f.grid().len())
            .map(|k| {
                let (i, j) = f.grid().split(k);
                (-s * eq.log_density(f.grid().x(i), f.grid().v(j))).exp()
            })
            .collect(),
    );
    let fx = f.gradient_x();
    let fv = f.gradient_v();
    let wint = |a: &Field<T>, b: &Field<T>| (&(a * b) * &w).integrate();
    EnergyParts { f2: wint(f, f), fv2: wint(&fv, &fv), fvfx: wint(&fv, &fx), fx2: wint(&fx, &fx) }
}

/// `|f|_2^2 / (|f|_1 |grad_{x,v} f|_2)`, the two-dimensional Nash quotient.
pub fn nash_ratio<T: Scalar>(f: &Field<T>) -> T {
    let l2sq = f.map(|y| y * y).integrate();
    let gx = f.gradient_x();
    let gv = f.gradient_v();
    let grad = (gx.map(|y| y * y).integrate() + gv.map(|y| y * y).integrate()).sqrt();
    l2sq / (l1_norm(f) * grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_equilibrium;
    use crate::operators::assemble_full;
    use crate::phase_grid::PhaseGrid;

    fn eq(n: usize) -> Equilibrium<f64> {
        let g = PhaseGrid::new(n, n, 8.0, 8.0).unwrap();
        build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap()
    }

    fn dipole(eq: &Equilibrium<f64>) -> Field<f64> {
        Field::from_fn(*eq.grid(), |x, v| {
            (-(x - 1.0).powi(2) - v * v).exp() - (-(x + 1.0).powi(2) - (v - 0.5).powi(2)).exp()
        })
        .map(|f| remove_mass(&f, eq))
        .unwrap()
    }

    #[test]
    fn equilibrium_norms() {
        let e = eq(129);
        let n = weighted_norm(e.density(), 2.0, &WeightSpec::EquilibriumPower { s: 0.5 }, &e).unwrap();
        assert!((n - 1.0).abs() < 1e-12);
        let z = Field::zeros(*e.grid());
        assert_eq!(weighted_norm(&z, 1.0, &WeightSpec::PolyH { k: 2.0 }, &e).unwrap(), 0.0);
        let inf = weighted_norm(e.density(), f64::INFINITY, &WeightSpec::EquilibriumPower { s: 1.0 }, &e).unwrap();
        assert!((inf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projections() {
        let e = eq(65);
        let f = dipole(&e);
        let p = projection_pi(&f);
        assert!((&projection_pi(&p) - &p).max_abs() < 1e-15);
        assert!(projection_pi(&projection_perp(&f)).max_abs() < 1e-15);
        assert!((&projection_pi(e.density()) - e.density()).max_abs() < 1e-15);
        let total = inner_ginv(&e, &f, &f);
        let split = inner_ginv(&e, &p, &p) + inner_ginv(&e, &projection_perp(&f), &projection_perp(&f));
        assert!((total - split).abs() < 1e-12 * total);
    }

    #[test]
    fn modified_inner_degenerates_and_is_symmetric() {
        let e = eq(65);
        let f = dipole(&e);
        let g = remove_mass(
            &Field::from_fn(*e.grid(), |x, v| v * (-(x - 0.3).powi(2) - v * v).exp() + (-(x * x) - v * v).exp())
                .unwrap(),
            &e,
        );
        let plain = inner_ginv(&e, &f, &g);
        assert!((modified_inner(&f, &g, 0.0, &e).unwrap() - plain).abs() < 1e-14 * plain.abs());
        let a = modified_inner(&f, &g, 0.01, &e).unwrap();
        let b = modified_inner(&g, &f, 0.01, &e).unwrap();
        assert!((a - b).abs() < 1e-14 * a.abs().max(1.0));
    }

    #[test]
    fn mass_defect_rejected() {
        let e = eq(33);
        let err = modified_inner(e.density(), e.density(), 0.01, &e).unwrap_err();
        assert!(matches!(err, FunctionalError::MassDefect { .. }));
    }

    #[test]
    fn dirichlet_signs() {
        let e = eq(65);
        let gens = assemble_full(&e, None).unwrap();
        // Hermite-1 in v: pure f-perp
        let perp = Field::from_fn(*e.grid(), |x, v| v * e.density_at(x, v) * (-(x * x) / 4.0).exp()).unwrap();
        assert!(dirichlet_form(&perp, 0.0, &gens.l, &e).unwrap() > 0.0);
        // hydrodynamic data: no dissipation without the correction
        let hydro = projection_pi(&dipole(&e));
        let d0 = dirichlet_form(&hydro, 0.0, &gens.l, &e).unwrap();
        let d1 = dirichlet_form(&hydro, 0.01, &gens.l, &e).unwrap();
        assert!(d0.abs() < 1e-10 * inner_ginv(&e, &hydro, &hydro));
        assert!(d1 > 0.0);
    }

    #[test]
    fn energy_at_zero_time() {
        let e = eq(33);
        let f = dipole(&e);
        let p = EnergyParams { a: 1.0, b: 1.0, c: 0.5, big_a: 3.0, delta: 0.5, sign: EnergySign::Minus };
        let parts = energy_parts(&f, 0.5, &e);
        assert!((energy_functional(&f, 0.0, &p, &e).unwrap() - 3.0 * parts.f2).abs() < 1e-14);
        assert!(energy_functional(&f, 0.7, &p, &e).unwrap() > 0.0);
        let bad = EnergyParams { c: 2.0, ..p };
        assert!(energy_functional(&f, 0.1, &bad, &e).is_err());
    }

    #[test]
    fn homogeneity() {
        let e = eq(33);
        let f = dipole(&e);
        let w = WeightSpec::PolyH { k: 1.0 };
        let a = weighted_norm(&f.scale(-2.5), 2.0, &w, &e).unwrap();
        let b = weighted_norm(&f, 2.0, &w, &e).unwrap();
        assert!((a - 2.5 * b).abs() < 1e-14 * a);
    }
}
