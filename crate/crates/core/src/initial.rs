//! Initial data: shifted bumps, zero-mass dipoles, equilibrium perturbations
//! and seeded random smooth zero-mass fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::functionals::remove_mass;
use crate::model::Equilibrium;
use crate::phase_grid::Field;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    /// The equilibrium itself.
    Equilibrium,
    /// Unit-mass Gaussian of width `width` centred at `(x0, v0)`.
    Bump { x0: f64, v0: f64, width: f64 },
    /// Difference of two unit-mass bumps at `(+-x0, 0)`: zero mass.
    Dipole { x0: f64, width: f64 },
    /// `(1 + amp cos(x)) G`, renormalized to unit mass.
    CosPerturbation { amp: f64 },
    /// `tanh(x / scale) G`: odd, zero mass, spread over the whole domain.
    OddProfile { scale: f64 },
}

impl InitialData {
    pub fn build<T: Scalar>(&self, eq: &Equilibrium<T>) -> Field<T> {
        match *self {
            InitialData::Equilibrium => eq.density().clone(),
            InitialData::Bump { x0, v0, width } => bump(eq, x0, v0, width),
            InitialData::Dipole { x0, width } => dipole(eq, x0, width),
            InitialData::CosPerturbation { amp } => cos_perturbation(eq, amp),
            InitialData::OddProfile { scale } => odd_profile(eq, scale),
        }
    }
}

/// Gaussian bump normalized to unit trapezoidal mass.
pub fn bump<T: Scalar>(eq: &Equilibrium<T>, x0: f64, v0: f64, width: f64) -> Field<T> {
    let (x0, v0, s) = (T::of(x0), T::of(v0), T::of(width));
    let f = Field::from_fn(*eq.grid(), |x, v| {
        let r2 = ((x - x0) * (x - x0) + (v - v0) * (v - v0)) / (s * s);
        (-T::of(0.5) * r2).exp()
    })
    .expect("bump is finite");
    let m = f.integrate();
    f.scale(T::one() / m)
}

/// Difference of two unit-mass bumps; mass removed to roundoff.
pub fn dipole<T: Scalar>(eq: &Equilibrium<T>, x0: f64, width: f64) -> Field<T> {
    let d = &bump(eq, x0, 0.0, width) - &bump(eq, -x0, 0.0, width);
    remove_mass(&d, eq)
}

pub fn cos_perturbation<T: Scalar>(eq: &Equilibrium<T>, amp: f64) -> Field<T> {
    let a = T::of(amp);
    let f = eq.density().map_nodes(|x, _, g| (T::one() + a * x.cos()) * g);
    let m = f.integrate();
    f.scale(T::one() / m)
}

/// `tanh(x / scale) G`, mass removed to roundoff.
pub fn odd_profile<T: Scalar>(eq: &Equilibrium<T>, scale: f64) -> Field<T> {
    let s = T::of(scale);
    remove_mass(&eq.density().map_nodes(|x, _, g| (x / s).tanh() * g), eq)
}

/// Random smooth zero-mass field `G P(x, v)` with `P` a random combination of
/// trigonometric modes in `x` and Hermite polynomials in `v`, mass removed.
/// Deterministic in `seed`.
pub fn random_zero_mass<T: Scalar>(eq: &Equilibrium<T>, seed: u64) -> Field<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    const MODES_X: usize = 4;
    const MODES_V: usize = 4;
    let scale = 4.0f64;
    let mut coef = [[0.0f64; MODES_V]; 2 * MODES_X + 1];
    for (m, row) in coef.iter_mut().enumerate() {
        for (n, c) in row.iter_mut().enumerate() {
            let u: f64 = rng.gen_range(-1.0..1.0);
            *c = u / (1.0 + (m / 2 + n) as f64);
        }
    }
    let f = eq.density().map_nodes(|x, v, g| {
        let (x, v) = (x.f64(), v.f64());
        let xm: Vec<f64> = (0..=2 * MODES_X)
            .map(|m| {
                let k = (m / 2 + m % 2) as f64 / scale;
                if m == 0 {
                    1.0
                } else if m % 2 == 1 {
                    (k * x).sin()
                } else {
                    (k * x).cos()
                }
            })
            .collect();
        let he = [1.0, v, v * v - 1.0, v * v * v - 3.0 * v];
        let mut p = 0.0;
        for (m, row) in coef.iter().enumerate() {
            for (n, c) in row.iter().enumerate() {
                p += c * xm[m] * he[n];
            }
        }
        g * T::of(p)
    });
    remove_mass(&f, eq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_equilibrium, ConfinementModel};
    use crate::phase_grid::PhaseGrid;

    fn eq() -> Equilibrium<f64> {
        let g = PhaseGrid::new(65, 65, 8.0, 8.0).unwrap();
        build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap()
    }

    #[test]
    fn masses() {
        let e = eq();
        assert!((bump(&e, 1.0, -0.5, 0.7).integrate() - 1.0).abs() < 1e-14);
        assert!(dipole(&e, 2.0, 0.8).integrate().abs() < 1e-15);
        assert!((cos_perturbation(&e, 0.5).integrate() - 1.0).abs() < 1e-14);
        let odd = odd_profile(&e, 2.0);
        assert!(odd.integrate().abs() < 1e-15);
        // odd in x: mirrored nodes cancel
        let n = e.grid().nx();
        assert!((odd.at(0, 10) + odd.at(n - 1, 10)).abs() < 1e-15);
        assert_eq!(InitialData::OddProfile { scale: 2.0 }.build(&e), odd);
    }

    #[test]
    fn random_fields_are_seeded_and_mean_free() {
        let e = eq();
        let a = random_zero_mass(&e, 7);
        assert_eq!(a, random_zero_mass(&e, 7));
        assert_ne!(a, random_zero_mass(&e, 8));
        assert!(a.integrate().abs() < 1e-14 * crate::functionals::l1_norm(&a).max(1.0));
    }
}
