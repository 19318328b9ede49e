//! Coercivity of the Dirichlet form on random mean-free data and monotone
//! decay of the modified norm along `S_L` orbits.

use serde::Serialize;

use crate::functionals::{dirichlet_form, h1_norm, inner_ginv, modified_inner, remove_mass};
use crate::initial::random_zero_mass;
use crate::model::Equilibrium;
use crate::operators::GeneratorMatrix;
use crate::phase_grid::Field;
use crate::semigroup::{evolve_with, EvolveConfig, Scheme};

use super::VerifyError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoercivityStudy {
    pub eps: f64,
    pub samples: usize,
    /// `min D[f] / |f|_{H_1}^2`.
    pub lambda: f64,
    pub worst_seed: u64,
    /// Range of `((f, f)) / |f|^2_{G^{-1/2}}`.
    pub equivalence: (f64, f64),
}

/// Samples `count` random mean-free fields with seeds `seed, seed + 1, ...`.
pub fn coercivity_study(
    eq: &Equilibrium<f64>,
    l: &GeneratorMatrix<f64>,
    eps: f64,
    count: usize,
    seed: u64,
) -> Result<CoercivityStudy, VerifyError> {
    use rayon::prelude::*;
    let rows = (0..count as u64)
        .into_par_iter()
        .map(|i| -> Result<(u64, f64, f64), VerifyError> {
            let s = seed + i;
            let f = random_zero_mass(eq, s);
            let d = dirichlet_form(&f, eps, l, eq)?;
            let h1 = h1_norm(&f, eq).powi(2);
            let eqv = modified_inner(&f, &f, eps, eq)? / inner_ginv(eq, &f, &f);
            Ok((s, d / h1, eqv))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (mut lambda, mut worst_seed) = (f64::INFINITY, seed);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(s, r, e) in &rows {
        if r < lambda {
            lambda = r;
            worst_seed = s;
        }
        lo = lo.min(e);
        hi = hi.max(e);
    }
    Ok(CoercivityStudy { eps, samples: count, lambda, worst_seed, equivalence: (lo, hi) })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypocoerciveDecay {
    pub times: Vec<f64>,
    /// `((f_t, f_t))`.
    pub modified: Vec<f64>,
    /// `int f_t^2 G^{-1} <x>^{2(gamma - 1)}`.
    pub weak_norm: Vec<f64>,
    /// Largest relative increase of `((f_t, f_t))` between records.
    pub max_increase: f64,
    /// `min_t -(d/dt)((f,f)) / weak_norm`, with the difference quotient.
    pub c_measured: f64,
    /// `max_t |difference quotient + 2 D[f_t]| / weak_norm`: discretization budget.
    pub budget: f64,
}

/// Follows `((f_t, f_t))` along `S_L` from mean-free data.
pub fn hypocoercive_decay(
    eq: &Equilibrium<f64>,
    l: &GeneratorMatrix<f64>,
    f0: &Field<f64>,
    eps: f64,
    dt: f64,
    t_end: f64,
) -> Result<HypocoerciveDecay, VerifyError> {
    let f0 = remove_mass(f0, eq);
    let cfg = EvolveConfig::new(dt, t_end, Scheme::ImplicitEuler);
    let names = vec!["modified".into(), "weak".into(), "dirichlet".into()];
    let tr = evolve_with(l, &f0, &cfg, names, |_, f| {
        let f = remove_mass(f, eq);
        let m = modified_inner(&f, &f, eps, eq)?;
        let w = h1_norm(&f, eq).powi(2);
        let d = dirichlet_form(&f, eps, l, eq)?;
        Ok(vec![m, w, d])
    })
    .map_err(VerifyError::from)?;
    let modified = tr.series("modified").expect("recorded");
    let weak = tr.series("weak").expect("recorded");
    let dir = tr.series("dirichlet").expect("recorded");
    let mut max_increase = f64::NEG_INFINITY;
    let mut c_measured = f64::INFINITY;
    let mut budget = 0.0f64;
    for k in 0..tr.times.len() - 1 {
        let h = tr.times[k + 1] - tr.times[k];
        let dq = (modified[k + 1] - modified[k]) / h;
        max_increase = max_increase.max((modified[k + 1] - modified[k]) / modified[k]);
        // implicit Euler differences sample the derivative at the new time
        c_measured = c_measured.min(-dq / weak[k + 1]);
        budget = budget.max((dq + 2.0 * dir[k + 1]).abs() / weak[k + 1]);
    }
    Ok(HypocoerciveDecay { times: tr.times, modified, weak_norm: weak, max_increase, c_measured, budget })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::dipole;
    use crate::model::{build_equilibrium, ConfinementModel};
    use crate::operators::assemble_full;
    use crate::phase_grid::PhaseGrid;

    fn setup() -> (Equilibrium<f64>, crate::operators::Generators<f64>) {
        let g = PhaseGrid::new(33, 33, 8.0, 8.0).unwrap();
        let eq = build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap();
        let gens = assemble_full(&eq, None).unwrap();
        (eq, gens)
    }

    #[test]
    fn coercivity_is_positive_and_norms_are_equivalent() {
        let (eq, gens) = setup();
        let s = coercivity_study(&eq, &gens.l, 0.01, 10, 1).unwrap();
        assert!(s.lambda > 0.0, "{s:?}");
        assert!(s.equivalence.0 > 0.9 && s.equivalence.1 < 1.1, "{s:?}");
        let again = coercivity_study(&eq, &gens.l, 0.01, 10, 1).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn modified_norm_decreases() {
        let (eq, gens) = setup();
        let d = hypocoercive_decay(&eq, &gens.l, &dipole(&eq, 2.0, 0.8), 0.01, 0.05, 2.0).unwrap();
        assert!(d.max_increase <= 0.0, "{}", d.max_increase);
        assert!(d.c_measured > 0.0);
    }
}
