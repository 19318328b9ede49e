//! Time evolution `f_t = e^{t M} f_0` for an assembled generator `M`, a dense
//! matrix-exponential oracle for small grids and Duhamel convolutions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::{FunctionalContext, FunctionalError, FunctionalSpec};
use crate::operators::{BandedLu, CsrMatrix, FactorError, GeneratorMatrix, OperatorError};
use crate::phase_grid::{Field, GridError};
use crate::scalar::Scalar;

/// Largest `nx * nv` accepted by the dense routines.
pub const DENSE_LIMIT: usize = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SemigroupError {
    #[error("factorization failed: {0}")]
    Factor(#[from] FactorError),
    #[error("non-finite value after step {step}")]
    NonFinite { step: usize },
    #[error("initial data and generator live on different grids")]
    GridMismatch,
    #[error("invalid evolution config: {0}")]
    BadConfig(String),
    #[error("dense routines need nx*nv <= {DENSE_LIMIT}, got {0}")]
    TooLarge(usize),
    #[error(transparent)]
    Functional(#[from] FunctionalError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitEuler,
    CrankNicolson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
    /// Named functionals evaluated at every recorded step.
    pub functionals: Vec<(String, FunctionalSpec)>,
    /// Keep the field every this many steps.
    pub snapshot_every: Option<usize>,
}

impl EvolveConfig {
    pub fn new(dt: f64, t_end: f64, scheme: Scheme) -> Self {
        Self { dt, t_end, scheme, record_every: 1, functionals: Vec::new(), snapshot_every: None }
    }

    pub fn validate(&self) -> Result<(), SemigroupError> {
        if !(self.dt > 0.0 && self.t_end > 0.0 && self.dt.is_finite() && self.t_end.is_finite()) {
            return Err(SemigroupError::BadConfig(format!(
                "dt = {} and t_end = {} must be positive and finite",
                self.dt, self.t_end
            )));
        }
        if self.dt > self.t_end {
            return Err(SemigroupError::BadConfig(format!("dt = {} > t_end = {}", self.dt, self.t_end)));
        }
        if self.record_every == 0 || self.snapshot_every == Some(0) {
            return Err(SemigroupError::BadConfig("record and snapshot intervals must be >= 1".into()));
        }
        for (_, spec) in &self.functionals {
            spec.validate()?;
        }
        Ok(())
    }

    /// Number of steps; the step is shrunk so that they end exactly at `t_end`.
    pub fn steps(&self) -> usize {
        ((self.t_end / self.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub names: Vec<String>,
    /// `rows[i][k]` is functional `names[k]` at `times[i]`.
    pub rows: Vec<Vec<T>>,
    pub snapshots: Vec<(T, Field<T>)>,
    pub last: Field<T>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn series(&self, name: &str) -> Option<Vec<T>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// One factorization of the implicit step, reused across steps.
#[derive(Debug, Clone)]
pub struct Stepper<T> {
    lu: BandedLu<T>,
    explicit: Option<CsrMatrix<T>>,
    dt: T,
}

impl<T: Scalar> Stepper<T> {
    pub fn new(gen: &GeneratorMatrix<T>, dt: T, scheme: Scheme) -> Result<Self, SemigroupError> {
        let m = gen.matrix();
        Ok(match scheme {
            Scheme::ImplicitEuler => Self { lu: BandedLu::factor_shifted(m, T::one(), -dt)?, explicit: None, dt },
            Scheme::CrankNicolson => {
                let half = dt * T::of(0.5);
                let id = CsrMatrix::diagonal_from(&vec![T::one(); m.nrows()]);
                Self {
                    lu: BandedLu::factor_shifted(m, T::one(), -half)?,
                    explicit: Some(id.lin_comb(T::one(), m, half)),
                    dt,
                }
            }
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// Advances `values` by one step in place.
    pub fn step(&self, values: &mut Vec<T>) {
        if let Some(e) = &self.explicit {
            *values = e.mul_vec(values);
        }
        self.lu.solve_in_place(values);
    }
}

/// Evolves `f0` under `gen`, recording the configured functionals.
pub fn evolve<T: Scalar>(
    gen: &GeneratorMatrix<T>,
    f0: &Field<T>,
    cfg: &EvolveConfig,
    ctx: Option<&FunctionalContext<'_, T>>,
) -> Result<Trajectory<T>, SemigroupError> {
    if !cfg.functionals.is_empty() && ctx.is_none() {
        return Err(SemigroupError::BadConfig("functionals need an equilibrium context".into()));
    }
    let names: Vec<String> = cfg.functionals.iter().map(|(n, _)| n.clone()).collect();
    evolve_with(gen, f0, cfg, names, |t, f| {
        let ctx = match ctx {
            Some(c) => c,
            None => return Ok(Vec::new()),
        };
        cfg.functionals.iter().map(|(_, spec)| ctx.eval(spec, f, t).map_err(SemigroupError::from)).collect()
    })
}

/// As [`evolve`] with an arbitrary probe returning one value per name.
pub fn evolve_with<T: Scalar>(
    gen: &GeneratorMatrix<T>,
    f0: &Field<T>,
    cfg: &EvolveConfig,
    names: Vec<String>,
    mut probe: impl FnMut(T, &Field<T>) -> Result<Vec<T>, SemigroupError>,
) -> Result<Trajectory<T>, SemigroupError> {
    cfg.validate()?;
    if f0.grid() != gen.grid() {
        return Err(SemigroupError::GridMismatch);
    }
    let steps = cfg.steps();
    let dt = T::of(cfg.t_end / steps as f64);
    let stepper = Stepper::new(gen, dt, cfg.scheme)?;
    let grid = *f0.grid();
    let mut traj = Trajectory { times: Vec::new(), names, rows: Vec::new(), snapshots: Vec::new(), last: f0.clone() };
    let mut record = |traj: &mut Trajectory<T>, t: T, f: &Field<T>, step: usize| -> Result<(), SemigroupError> {
        let row = probe(t, f)?;
        if row.iter().any(|y| !y.is_finite()) {
            return Err(SemigroupError::NonFinite { step });
        }
        traj.times.push(t);
        traj.rows.push(row);
        Ok(())
    };
    record(&mut traj, T::zero(), f0, 0)?;
    if cfg.snapshot_every.is_some() {
        traj.snapshots.push((T::zero(), f0.clone()));
    }
    let mut values = f0.values().to_vec();
    for step in 1..=steps {
        stepper.step(&mut values);
        if values.iter().any(|y| !y.is_finite()) {
            return Err(SemigroupError::NonFinite { step });
        }
        let t = T::of_usize(step) * dt;
        let rec = step % cfg.record_every == 0 || step == steps;
        let snap = cfg.snapshot_every.is_some_and(|s| step % s == 0);
        if rec || snap {
            let f = Field::raw(grid, values.clone());
            if rec {
                record(&mut traj, t, &f, step)?;
            }
            if snap {
                traj.snapshots.push((t, f));
            }
        }
    }
    traj.last = Field::raw(grid, values);
    Ok(traj)
}

/// Dense copy of a generator; guarded by [`DENSE_LIMIT`].
pub fn dense_matrix(gen: &GeneratorMatrix<f64>) -> Result<DMatrix<f64>, SemigroupError> {
    let n = gen.grid().len();
    if n > DENSE_LIMIT {
        return Err(SemigroupError::TooLarge(n));
    }
    Ok(DMatrix::from_row_slice(n, n, &gen.to_dense_f64()))
}

/// `e^{t M}` as a dense matrix (scaling and squaring with a Pade approximant).
pub fn expm(gen: &GeneratorMatrix<f64>, t: f64) -> Result<DMatrix<f64>, SemigroupError> {
    Ok((dense_matrix(gen)? * t).exp())
}

/// `e^{t M} f0` by the dense exponential; a test oracle for small grids.
pub fn matrix_exponential(gen: &GeneratorMatrix<f64>, t: f64, f0: &Field<f64>) -> Result<Field<f64>, SemigroupError> {
    if f0.grid() != gen.grid() {
        return Err(SemigroupError::GridMismatch);
    }
    if t == 0.0 {
        dense_matrix(gen)?;
        return Ok(f0.clone());
    }
    let y = expm(gen, t)? * DVector::from_column_slice(f0.values());
    Ok(Field::from_values(*f0.grid(), y.as_slice().to_vec())?)
}

/// Composite Simpson weights on `k` equal intervals of width `h`; an odd
/// count closes with the 3/8 rule and `k = 1` falls back to the trapezoid.
pub fn simpson_weights(k: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; k + 1];
    match k {
        0 => {}
        1 => {
            w[0] = h / 2.0;
            w[1] = h / 2.0;
        }
        _ => {
            let even = if k.is_multiple_of(2) { k } else { k - 3 };
            for i in (0..even).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if even < k {
                for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[even + o] += 3.0 * h / 8.0 * c;
                }
            }
        }
    }
    w
}

/// `sum_j w_j E^j y_j` by Horner's rule.
fn horner(e: &DMatrix<f64>, w: &[f64], ys: &[DVector<f64>]) -> DVector<f64> {
    let last = w.len() - 1;
    let mut acc = &ys[last] * w[last];
    for j in (0..last).rev() {
        acc = e * acc + &ys[j] * w[j];
    }
    acc
}

fn check_dense(gens: &[&GeneratorMatrix<f64>], f0: &Field<f64>) -> Result<(), SemigroupError> {
    for g in gens {
        if g.grid() != f0.grid() {
            return Err(SemigroupError::GridMismatch);
        }
    }
    if f0.grid().len() > DENSE_LIMIT {
        return Err(SemigroupError::TooLarge(f0.grid().len()));
    }
    Ok(())
}

fn check_quadrature(t: f64, nquad: usize) -> Result<(), SemigroupError> {
    if nquad < 8 || !(t > 0.0) {
        return Err(SemigroupError::BadConfig(format!("need nquad >= 8 and t > 0, got {nquad}, {t}")));
    }
    Ok(())
}

/// `int_0^t S_outer(s) A S_inner(t - s) f0 ds` by composite Simpson.
pub fn duhamel_convolve(
    outer: &GeneratorMatrix<f64>,
    inner: &GeneratorMatrix<f64>,
    multiplier: &GeneratorMatrix<f64>,
    t: f64,
    nquad: usize,
    f0: &Field<f64>,
) -> Result<Field<f64>, SemigroupError> {
    check_dense(&[outer, inner, multiplier], f0)?;
    check_quadrature(t, nquad)?;
    let h = t / nquad as f64;
    let eo = expm(outer, h)?;
    let ei = expm(inner, h)?;
    let a = dense_matrix(multiplier)?;
    // ys[k] = A S_inner(t - s_k) f0
    let mut ys = vec![DVector::zeros(f0.grid().len()); nquad + 1];
    let mut y = DVector::from_column_slice(f0.values());
    for k in (0..=nquad).rev() {
        ys[k] = &a * &y;
        if k > 0 {
            y = &ei * y;
        }
    }
    let out = horner(&eo, &simpson_weights(nquad, h), &ys);
    Ok(Field::from_values(*f0.grid(), out.as_slice().to_vec())?)
}

/// Terms of `S_L = S_B + sum_{l=1}^{n-1} S_B * (A S_B)^{*l} + S_L * (A S_B)^{*n}`
/// applied to `f0` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct IteratedDuhamel {
    pub exact: Field<f64>,
    /// `S_B f0` followed by the `n - 1` convolution terms.
    pub terms: Vec<Field<f64>>,
    pub remainder: Field<f64>,
}

impl IteratedDuhamel {
    pub fn partial_sum(&self) -> Field<f64> {
        let mut acc = self.terms[0].clone();
        for term in &self.terms[1..] {
            acc = &acc + term;
        }
        acc
    }

    /// `|S_L f0 - sum of terms - remainder|_2 / |f0|_2`.
    pub fn relative_residual(&self, f0: &Field<f64>) -> f64 {
        let r = &(&self.exact - &self.partial_sum()) - &self.remainder;
        r.l2_plain() / f0.l2_plain()
    }
}

/// Expands `S_L(t) f0` to order `n >= 1`; nested convolutions share the
/// quadrature grid `s_k = k t / nquad`.
pub fn iterated_duhamel(
    l: &GeneratorMatrix<f64>,
    b: &GeneratorMatrix<f64>,
    a: &GeneratorMatrix<f64>,
    t: f64,
    nquad: usize,
    n: usize,
    f0: &Field<f64>,
) -> Result<IteratedDuhamel, SemigroupError> {
    check_dense(&[l, b, a], f0)?;
    check_quadrature(t, nquad)?;
    if n == 0 {
        return Err(SemigroupError::BadConfig("expansion order must be >= 1".into()));
    }
    let grid = *f0.grid();
    let h = t / nquad as f64;
    let eb = expm(b, h)?;
    let el = expm(l, h)?;
    let am = dense_matrix(a)?;
    let x0 = DVector::from_column_slice(f0.values());

    // r[k] = (A S_B)^{*l}(s_k) f0, starting from l = 1
    let mut sb = Vec::with_capacity(nquad + 1);
    let mut y = x0.clone();
    for k in 0..=nquad {
        if k > 0 {
            y = &eb * y;
        }
        sb.push(y.clone());
    }
    let mut r: Vec<DVector<f64>> = sb.iter().map(|y| &am * y).collect();
    let to_field = |v: DVector<f64>| Field::from_values(grid, v.as_slice().to_vec());
    let mut terms = vec![to_field(sb[nquad].clone())?];
    let conv = |e: &DMatrix<f64>, r: &[DVector<f64>], k: usize| -> DVector<f64> {
        if k == 0 {
            return DVector::zeros(r[0].len());
        }
        // int_0^{s_k} S(s) r(s_k - s) ds
        let rev: Vec<DVector<f64>> = (0..=k).map(|j| r[k - j].clone()).collect();
        horner(e, &simpson_weights(k, h), &rev)
    };
    for level in 1..=n {
        if level < n {
            terms.push(to_field(conv(&eb, &r, nquad))?);
            r = (0..=nquad).map(|k| &am * conv(&eb, &r, k)).collect();
        } else {
            let remainder = to_field(conv(&el, &r, nquad))?;
            let exact = to_field(expm(l, t)? * &x0)?;
            return Ok(IteratedDuhamel { exact, terms, remainder });
        }
    }
    unreachable!("loop returns at level n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_equilibrium, ConfinementModel, CutoffSpec, Equilibrium};
    use crate::operators::{assemble_full, Generators};
    use crate::phase_grid::PhaseGrid;

    fn setup(n: usize, x_max: f64, v_max: f64, k: f64) -> (Equilibrium<f64>, Generators<f64>) {
        let g = PhaseGrid::new(n, n, x_max, v_max).unwrap();
        let eq = build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap();
        let cut = CutoffSpec::new(k, 2.0).unwrap();
        let gens = assemble_full(&eq, Some(&cut)).unwrap();
        (eq, gens)
    }

    fn bump(eq: &Equilibrium<f64>) -> Field<f64> {
        crate::initial::bump(eq, 0.7, -0.4, 0.8)
    }

    #[test]
    fn simpson_weights_integrate_cubics() {
        for k in [1usize, 2, 3, 5, 8, 9] {
            let h = 0.3;
            let w = simpson_weights(k, h);
            let s: f64 = w.iter().enumerate().map(|(i, w)| w * (i as f64 * h).powi(if k == 1 { 1 } else { 3 })).sum();
            let b = k as f64 * h;
            let exact = if k == 1 { b * b / 2.0 } else { b.powi(4) / 4.0 };
            assert!((s - exact).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn config_validation() {
        let mut c = EvolveConfig::new(0.1, 1.0, Scheme::ImplicitEuler);
        assert!(c.validate().is_ok());
        assert_eq!(c.steps(), 10);
        c.dt = 2.0;
        assert!(c.validate().is_err());
        c.dt = 0.1;
        c.record_every = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn dense_guard() {
        let (eq, gens) = setup(33, 4.0, 7.0, 1.0);
        let err = matrix_exponential(&gens.l, 1.0, eq.density()).unwrap_err();
        assert_eq!(err, SemigroupError::TooLarge(33 * 33));
    }

    #[test]
    fn exponential_at_zero_and_of_diagonal() {
        let (eq, gens) = setup(16, 4.0, 7.0, 3.0);
        let f = bump(&eq);
        assert_eq!(matrix_exponential(&gens.l, 0.0, &f).unwrap(), f);
        let e = matrix_exponential(&gens.a, 0.7, &f).unwrap();
        let a = gens.a.matrix().diagonal();
        for k in 0..f.values().len() {
            let want = (0.7 * a[k]).exp() * f.values()[k];
            assert!((e.values()[k] - want).abs() <= 1e-12 * want.abs().max(1e-300));
        }
    }

    #[test]
    fn exponential_law() {
        let (eq, gens) = setup(16, 4.0, 7.0, 1.0);
        let f = bump(&eq);
        let direct = matrix_exponential(&gens.l, 1.3, &f).unwrap();
        let split = matrix_exponential(&gens.l, 0.5, &matrix_exponential(&gens.l, 0.8, &f).unwrap()).unwrap();
        assert!((&direct - &split).l2_plain() <= 1e-10 * direct.l2_plain());
    }

    #[test]
    fn stationary_and_mass_conserving() {
        let (eq, gens) = setup(33, 6.0, 7.0, 1.0);
        let cfg = EvolveConfig::new(0.05, 10.0, Scheme::ImplicitEuler);
        let tr = evolve(&gens.l, eq.density(), &cfg, None).unwrap();
        let d = (&tr.last - eq.density()).max_abs() / eq.density().max_abs();
        assert!(d < 1e-10, "{d}");
        let f = bump(&eq);
        let m0 = f.integrate();
        let tr = evolve_with(&gens.l, &f, &cfg, vec!["mass".into()], |_, f| Ok(vec![f.integrate()])).unwrap();
        for m in tr.series("mass").unwrap() {
            assert!((m - m0).abs() < 1e-12);
        }
    }

    #[test]
    fn implicit_euler_is_first_order_against_oracle() {
        let (eq, gens) = setup(16, 4.0, 7.0, 1.0);
        let f = bump(&eq);
        let exact = matrix_exponential(&gens.l, 1.0, &f).unwrap();
        let err = |dt: f64| {
            let tr = evolve(&gens.l, &f, &EvolveConfig::new(dt, 1.0, Scheme::ImplicitEuler), None).unwrap();
            (&tr.last - &exact).l2_plain() / exact.l2_plain()
        };
        let (e1, e2) = (err(1e-3), err(5e-4));
        assert!(e1 < 1e-2);
        assert!((e1 / e2 - 2.0).abs() < 0.6, "{e1} {e2}");
        let cn = evolve(&gens.l, &f, &EvolveConfig::new(1e-2, 1.0, Scheme::CrankNicolson), None).unwrap();
        assert!((&cn.last - &exact).l2_plain() / exact.l2_plain() < e1);
    }

    #[test]
    fn recording_schedule() {
        let (eq, gens) = setup(16, 4.0, 7.0, 1.0);
        let mut cfg = EvolveConfig::new(0.1, 1.0, Scheme::ImplicitEuler);
        cfg.record_every = 3;
        cfg.snapshot_every = Some(5);
        cfg.functionals = vec![("mass".into(), FunctionalSpec::Mass)];
        let ctx = FunctionalContext::new(&eq);
        let tr = evolve(&gens.l, &bump(&eq), &cfg, Some(&ctx)).unwrap();
        assert_eq!(tr.times.len(), 5);
        assert!((tr.times[4] - 1.0).abs() < 1e-12);
        assert_eq!(tr.snapshots.len(), 3);
        assert!(evolve(&gens.l, &bump(&eq), &cfg, None).is_err());
    }

    #[test]
    fn zero_multiplier_gives_zero() {
        let (eq, gens) = setup(16, 4.0, 7.0, 1.0);
        let z = crate::operators::compose(gens.t.clone(), gens.s.clone(), None).unwrap().a;
        let out = duhamel_convolve(&gens.b, &gens.l, &z, 1.0, 16, &bump(&eq)).unwrap();
        assert_eq!(out.max_abs(), 0.0);
    }

    #[test]
    fn two_term_duhamel() {
        let (eq, gens) = setup(16, 4.0, 7.0, 2.0);
        let f = bump(&eq);
        let conv = duhamel_convolve(&gens.b, &gens.l, &gens.a, 1.0, 64, &f).unwrap();
        let sl = matrix_exponential(&gens.l, 1.0, &f).unwrap();
        let sb = matrix_exponential(&gens.b, 1.0, &f).unwrap();
        let r = &(&sl - &sb) - &conv;
        assert!(r.l2_plain() / f.l2_plain() < 1e-6, "{}", r.l2_plain() / f.l2_plain());
    }

    #[test]
    fn iterated_duhamel_orders() {
        let (eq, gens) = setup(16, 4.0, 7.0, 2.0);
        let f = bump(&eq);
        for n in 1..=3 {
            let it = iterated_duhamel(&gens.l, &gens.b, &gens.a, 1.0, 64, n, &f).unwrap();
            assert_eq!(it.terms.len(), n);
            let res = it.relative_residual(&f);
            assert!(res < 1e-5, "n={n}: {res}");
        }
    }
}
