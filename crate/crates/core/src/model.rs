//! Confinement potential, equilibrium, cutoff and weight families.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::phase_grid::{Field, GridError, PhaseGrid};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("gamma must lie in (0, 1), got {0}")]
    BadGamma(f64),
    #[error("weight overflow; shrink epsilon or domain (log-weight {log_weight:.1} at x={x:.3}, v={v:.3})")]
    WeightOverflow { log_weight: f64, x: f64, v: f64 },
    #[error("invalid weight parameter: {0}")]
    BadWeight(String),
    #[error("cutoff radius {r} too large: support sqrt(2)*R must fit inside the domain (limit {limit:.4})")]
    CutoffTooLarge { r: f64, limit: f64 },
    #[error("cutoff parameters must be positive and finite (K={k}, R={r})")]
    BadCutoff { k: f64, r: f64 },
    #[error("equilibrium normalization underflowed; enlarge the domain")]
    NormalizationUnderflow,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// `V(x) = <x>^gamma` with `<x> = sqrt(1 + x^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfinementModel<T> {
    gamma: T,
}

impl<T: Scalar> ConfinementModel<T> {
    pub fn new(gamma: T) -> Result<Self, ModelError> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(ModelError::BadGamma(gamma.f64()));
        }
        Ok(Self { gamma })
    }

    #[inline]
    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// `<x>^2 = 1 + x^2`.
    #[inline]
    pub fn bracket_sq(x: T) -> T {
        T::one() + x * x
    }

    #[inline]
    pub fn potential(&self, x: T) -> T {
        Self::bracket_sq(x).powf(self.gamma * T::of(0.5))
    }

    /// `V'(x) = gamma x <x>^(gamma-2)`.
    #[inline]
    pub fn potential_d1(&self, x: T) -> T {
        self.gamma * x * Self::bracket_sq(x).powf((self.gamma - T::of(2.0)) * T::of(0.5))
    }

    /// `V''(x) = gamma <x>^(gamma-4) (1 + (gamma-1) x^2)`.
    #[inline]
    pub fn potential_d2(&self, x: T) -> T {
        let b2 = Self::bracket_sq(x);
        self.gamma * b2.powf((self.gamma - T::of(4.0)) * T::of(0.5)) * (T::one() + (self.gamma - T::one()) * x * x)
    }

    /// Constant `C` in `|V''(x)| <= C <x>^(gamma-2)`.
    #[inline]
    pub fn d2_bound_constant(&self) -> T {
        self.gamma
    }

    /// `<grad V> = <x>^(gamma-1)`.
    #[inline]
    pub fn grad_weight(&self, x: T) -> T {
        Self::bracket_sq(x).powf((self.gamma - T::one()) * T::of(0.5))
    }

    /// `W = v^2/2 + V(x)`.
    #[inline]
    pub fn energy(&self, x: T, v: T) -> T {
        v * v * T::of(0.5) + self.potential(x)
    }

    /// Normalized Maxwellian in one velocity dimension.
    #[inline]
    pub fn maxwellian(v: T) -> T {
        (-v * v * T::of(0.5)).exp() / T::of((2.0 * std::f64::consts::PI).sqrt())
    }
}

/// Lyapunov function `H = 1 + x^2 + 2xv + 3v^2 = (x+v)^2 + 2v^2 + 1`.
#[inline]
pub fn lyapunov_h<T: Scalar>(x: T, v: T) -> T {
    T::one() + x * x + T::of(2.0) * x * v + T::of(3.0) * v * v
}

/// `grad_x m / m`, `grad_v m / m` and `Delta_v m / m` for a weight `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDerivatives<T> {
    pub gx: T,
    pub gv: T,
    pub lap_v: T,
}

/// Closed-form derivatives of `H`: `(H_x, H_v, H_vv) = (2x + 2v, 6v + 2x, 6)`.
#[inline]
pub fn lyapunov_h_derivatives<T: Scalar>(x: T, v: T) -> (T, T, T) {
    let two = T::of(2.0);
    (two * (x + v), T::of(6.0) * v + two * x, T::of(6.0))
}

/// Log-derivatives of `m = e^{eps H^delta}`.
pub fn exp_h_derivatives<T: Scalar>(eps: T, delta: T, x: T, v: T) -> LogDerivatives<T> {
    let h = lyapunov_h(x, v);
    let (hx, hv, hvv) = lyapunov_h_derivatives(x, v);
    let ed = eps * delta;
    let hd1 = h.powf(delta - T::one());
    LogDerivatives {
        gx: ed * hd1 * hx,
        gv: ed * hd1 * hv,
        lap_v: ed * (hvv * hd1 + (delta - T::one()) * hv * hv * hd1 / h) + ed * ed * hv * hv * hd1 * hd1,
    }
}

/// Log-derivatives of `m = H^k`.
pub fn poly_h_derivatives<T: Scalar>(k: T, x: T, v: T) -> LogDerivatives<T> {
    let h = lyapunov_h(x, v);
    let (hx, hv, hvv) = lyapunov_h_derivatives(x, v);
    LogDerivatives { gx: k * hx / h, gv: k * hv / h, lap_v: k * hvv / h + k * (k - T::one()) * hv * hv / (h * h) }
}

/// Gibbs state on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium<T> {
    model: ConfinementModel<T>,
    z: T,
    log_z_discrete: T,
    density: Field<T>,
}

impl<T: Scalar> Equilibrium<T> {
    #[inline]
    pub fn model(&self) -> &ConfinementModel<T> {
        &self.model
    }

    #[inline]
    pub fn grid(&self) -> &PhaseGrid<T> {
        self.density.grid()
    }

    /// Box normalization from the refined product quadrature.
    #[inline]
    pub fn z(&self) -> T {
        self.z
    }

    /// Normalization that gives the nodal density unit trapezoidal mass.
    #[inline]
    pub fn z_discrete(&self) -> T {
        self.log_z_discrete.exp()
    }

    #[inline]
    pub fn density(&self) -> &Field<T> {
        &self.density
    }

    /// `log G(x, v)` with the discrete normalization, valid off-grid.
    #[inline]
    pub fn log_density(&self, x: T, v: T) -> T {
        -self.model.energy(x, v) - self.log_z_discrete
    }

    #[inline]
    pub fn density_at(&self, x: T, v: T) -> T {
        self.log_density(x, v).exp()
    }

    /// Spatial marginal `e^{-V}` normalized like `G`, i.e. `G = M(v) * rho_G(x)`.
    pub fn spatial_marginal(&self, x: T) -> T {
        let zv = T::of((2.0 * std::f64::consts::PI).sqrt());
        (-self.model.potential(x) - self.log_z_discrete).exp() * zv
    }
}

/// Composite Simpson rule on `n_intervals` (even) subintervals.
fn simpson<T: Scalar>(a: T, b: T, n_intervals: usize, f: impl Fn(T) -> T) -> T {
    debug_assert!(n_intervals.is_multiple_of(2) && n_intervals > 0);
    let h = (b - a) / T::of_usize(n_intervals);
    let mut s = f(a) + f(b);
    for k in 1..n_intervals {
        let c = if k % 2 == 1 { T::of(4.0) } else { T::of(2.0) };
        s += c * f(a + T::of_usize(k) * h);
    }
    s * h / T::of(3.0)
}

/// Builds `G = Z^{-1} e^{-v^2/2 - V(x)}` on `grid`, normalized to unit discrete mass.
pub fn build_equilibrium<T: Scalar>(
    grid: &PhaseGrid<T>,
    model: &ConfinementModel<T>,
) -> Result<Equilibrium<T>, ModelError> {
    let zx = simpson(-grid.x_max(), grid.x_max(), 4 * (grid.nx() - 1), |x| (-model.potential(x)).exp());
    let zv = simpson(-grid.v_max(), grid.v_max(), 4 * (grid.nv() - 1), |v| (-v * v * T::of(0.5)).exp());
    let z = zx * zv;
    // shift by the minimum energy W(0,0) = 1 before summing
    let shift = T::one();
    let unnorm = Field::from_fn(*grid, |x, v| (shift - model.energy(x, v)).exp())?;
    let mass = unnorm.integrate();
    if !(z > T::zero()) || !(mass > T::zero()) || !mass.is_finite() {
        return Err(ModelError::NormalizationUnderflow);
    }
    let log_z_discrete = mass.ln() - shift;
    let density = unnorm.scale(T::one() / mass);
    Ok(Equilibrium { model: *model, z, log_z_discrete, density })
}

/// Weight families on phase space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightSpec {
    /// `G^{-s}`
    EquilibriumPower {
        s: f64,
    },
    /// `e^{eps H^delta}`
    ExpH {
        eps: f64,
        delta: f64,
    },
    /// `H^k`
    PolyH {
        k: f64,
    },
    /// `<grad V>^r`
    GradV {
        r: f64,
    },
    Product {
        factors: Vec<WeightSpec>,
    },
}

impl WeightSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ModelError::BadWeight(format!("{name} must be finite")))
            }
        };
        match self {
            WeightSpec::EquilibriumPower { s } => finite("s", *s),
            WeightSpec::ExpH { eps, delta } => {
                finite("eps", *eps)?;
                if !(*delta > 0.0 && *delta <= 1.0) {
                    return Err(ModelError::BadWeight(format!("delta={delta} outside (0, 1]")));
                }
                Ok(())
            }
            WeightSpec::PolyH { k } => finite("k", *k),
            WeightSpec::GradV { r } => finite("r", *r),
            WeightSpec::Product { factors } => factors.iter().try_for_each(|f| f.validate()),
        }
    }

    /// Pointwise logarithm of the weight.
    pub fn log_weight<T: Scalar>(&self, eq: &Equilibrium<T>, x: T, v: T) -> T {
        match self {
            WeightSpec::EquilibriumPower { s } => -T::of(*s) * eq.log_density(x, v),
            WeightSpec::ExpH { eps, delta } => T::of(*eps) * lyapunov_h(x, v).powf(T::of(*delta)),
            WeightSpec::PolyH { k } => T::of(*k) * lyapunov_h(x, v).ln(),
            WeightSpec::GradV { r } => T::of(*r) * eq.model().grad_weight(x).ln(),
            WeightSpec::Product { factors } => {
                factors.iter().map(|f| f.log_weight(eq, x, v)).fold(T::zero(), |a, b| a + b)
            }
        }
    }
}

/// Samples a weight on the equilibrium's grid, in log space.
pub fn eval_weight<T: Scalar>(spec: &WeightSpec, eq: &Equilibrium<T>) -> Result<Field<T>, ModelError> {
    spec.validate()?;
    let limit = T::max_value().ln().min(T::of(700.0));
    let grid = *eq.grid();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.nx() {
        let x = grid.x(i);
        for j in 0..grid.nv() {
            let v = grid.v(j);
            let lw = spec.log_weight(eq, x, v);
            if !(lw <= limit) {
                return Err(ModelError::WeightOverflow { log_weight: lw.f64(), x: x.f64(), v: v.f64() });
            }
            values.push(lw.exp());
        }
    }
    Ok(Field::from_values(grid, values)?)
}

/// Absorption `A = K chi_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffSpec {
    pub k: f64,
    pub r: f64,
}

impl CutoffSpec {
    pub fn new(k: f64, r: f64) -> Result<Self, ModelError> {
        if !(k >= 0.0 && k.is_finite() && r > 0.0 && r.is_finite()) {
            return Err(ModelError::BadCutoff { k, r });
        }
        Ok(Self { k, r })
    }

    /// `chi_R(x, v)` in `[0, 1]`.
    pub fn chi<T: Scalar>(&self, x: T, v: T) -> T {
        let r2 = T::of(self.r * self.r);
        smooth_step((T::of(2.0) * r2 - x * x - v * v) / r2)
    }

    #[inline]
    pub fn value<T: Scalar>(&self, x: T, v: T) -> T {
        T::of(self.k) * self.chi(x, v)
    }
}

fn sigma<T: Scalar>(t: T) -> T {
    if t > T::zero() {
        (-T::one() / t).exp()
    } else {
        T::zero()
    }
}

/// C-infinity step: 0 for `t <= 0`, 1 for `t >= 1`.
pub fn smooth_step<T: Scalar>(t: T) -> T {
    if t <= T::zero() {
        T::zero()
    } else if t >= T::one() {
        T::one()
    } else {
        let a = sigma(t);
        a / (a + sigma(T::one() - t))
    }
}

/// Samples `K chi_R` on `grid`.
pub fn eval_cutoff<T: Scalar>(spec: &CutoffSpec, grid: &PhaseGrid<T>) -> Result<Field<T>, ModelError> {
    CutoffSpec::new(spec.k, spec.r)?;
    let limit = grid.x_max().min(grid.v_max()).f64() / std::f64::consts::SQRT_2;
    if spec.r > limit {
        return Err(ModelError::CutoffTooLarge { r: spec.r, limit });
    }
    Ok(Field::from_fn(*grid, |x, v| spec.value(x, v))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> Equilibrium<f64> {
        let g = PhaseGrid::new(129, 129, 8.0, 8.0).unwrap();
        build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap()
    }

    #[test]
    fn gamma_validated() {
        assert!(ConfinementModel::new(0.0).is_err());
        assert!(ConfinementModel::new(1.0).is_err());
        assert!(ConfinementModel::new(f64::NAN).is_err());
    }

    #[test]
    fn potential_closed_forms() {
        let m = ConfinementModel::new(0.5).unwrap();
        assert_eq!(m.potential(0.0), 1.0);
        assert_eq!(m.grad_weight(0.0), 1.0);
        for &x in &[-7.0f64, -1.3, 0.2, 2.0, 30.0] {
            assert_eq!(m.potential(x), m.potential(-x));
            let h = 1e-5;
            let fd = (m.potential(x + h) - m.potential(x - h)) / (2.0 * h);
            assert!((fd - m.potential_d1(x)).abs() < 1e-9);
            let fd2 = (m.potential_d1(x + h) - m.potential_d1(x - h)) / (2.0 * h);
            assert!((fd2 - m.potential_d2(x)).abs() < 1e-8);
            assert!(m.grad_weight(x) <= 1.0);
        }
    }

    #[test]
    fn equilibrium_unit_mass_and_even() {
        let eq = setup();
        assert!((eq.density().integrate() - 1.0).abs() < 1e-12);
        let g = eq.grid();
        for i in 0..g.nx() {
            for j in 0..g.nv() {
                let a = eq.density().at(i, j);
                assert!(a > 0.0);
                assert_eq!(a, eq.density().at(i, g.nv() - 1 - j));
            }
        }
        // refined quadrature agrees with the nodal trapezoid sum
        assert!((eq.z() / eq.z_discrete() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn weight_examples() {
        let g = PhaseGrid::new(5, 5, 2.0, 2.0).unwrap();
        let eq = build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap();
        let w = eval_weight(&WeightSpec::ExpH { eps: 0.05, delta: 0.25 }, &eq).unwrap();
        assert!((w.at(2, 2) - 0.05f64.exp()).abs() < 1e-15);
        let w = eval_weight(&WeightSpec::PolyH { k: 2.0 }, &eq).unwrap();
        assert!((w.at(3, 3) - 49.0).abs() < 1e-12);
        let w = eval_weight(&WeightSpec::GradV { r: 1.0 }, &eq).unwrap();
        assert!((w.at(2, 0) - 1.0).abs() < 1e-15);
        let w = eval_weight(&WeightSpec::EquilibriumPower { s: 1.0 }, &eq).unwrap();
        let prod = &w * eq.density();
        assert!(prod.values().iter().all(|p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn weight_overflow_rejected() {
        let eq = setup();
        let err = eval_weight(&WeightSpec::ExpH { eps: 100.0, delta: 1.0 }, &eq).unwrap_err();
        assert!(matches!(err, ModelError::WeightOverflow { .. }));
        assert!(err.to_string().contains("shrink"));
    }

    #[test]
    fn cutoff_support_and_values() {
        let g = PhaseGrid::new(65, 65, 8.0, 8.0).unwrap();
        let c = CutoffSpec::new(3.0, 2.0).unwrap();
        let f = eval_cutoff(&c, &g).unwrap();
        assert_eq!(f.at(32, 32), 3.0);
        assert_eq!(c.value(2.0, 2.0), 0.0);
        assert_eq!(c.value(2.0f64.sqrt() * 2.0, 0.0), 0.0);
        assert_eq!(c.value(1.2, 1.5), 3.0);
        assert!(eval_cutoff(&CutoffSpec::new(1.0, 6.0).unwrap(), &g).is_err());
    }

    #[test]
    fn weight_derivatives_match_finite_differences() {
        let h = 1e-5;
        for &(x, v) in &[(0.3f64, -1.2f64), (-2.0, 0.7), (4.0, 3.0)] {
            for (d, m) in [
                (
                    exp_h_derivatives(0.05, 0.25, x, v),
                    Box::new(|x: f64, v: f64| (0.05 * lyapunov_h(x, v).powf(0.25)).exp())
                        as Box<dyn Fn(f64, f64) -> f64>,
                ),
                (poly_h_derivatives(2.0, x, v), Box::new(|x: f64, v: f64| lyapunov_h(x, v).powi(2))),
            ] {
                let m0 = m(x, v);
                let gx = (m(x + h, v) - m(x - h, v)) / (2.0 * h) / m0;
                let gv = (m(x, v + h) - m(x, v - h)) / (2.0 * h) / m0;
                let lap = (m(x, v + h) - 2.0 * m0 + m(x, v - h)) / (h * h) / m0;
                assert!((gx - d.gx).abs() < 1e-7 * (1.0 + gx.abs()));
                assert!((gv - d.gv).abs() < 1e-7 * (1.0 + gv.abs()));
                assert!((lap - d.lap_v).abs() < 1e-4 * (1.0 + lap.abs()));
            }
        }
    }

    #[test]
    fn smooth_step_is_monotone() {
        let mut prev = 0.0;
        for k in 0..=1000 {
            let s = smooth_step(k as f64 / 1000.0);
            assert!(s >= prev && (0.0..=1.0).contains(&s));
            prev = s;
        }
        assert_eq!(smooth_step(0.5), 0.5);
    }
}
