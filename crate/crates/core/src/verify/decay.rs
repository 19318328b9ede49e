//! Long-time decay: stretched-exponential relaxation of `S_L` across `gamma`
//! and polynomial decay of `S_B` between `L^1(H^l)` and `L^1(H^{l theta})`.

use serde::Serialize;

use crate::functionals::l1_norm;
use crate::initial::{bump, InitialData};
use crate::model::{build_equilibrium, lyapunov_h, ConfinementModel, CutoffSpec, Equilibrium};
use crate::operators::{assemble_full, inner_ginv, GeneratorMatrix};
use crate::phase_grid::{Field, PhaseGrid};
use crate::semigroup::{evolve_with, EvolveConfig, Scheme};

use super::fit::{fit_series, polynomial_rate, stretch_ceiling, DecayFit, DecayModel};
use super::VerifyError;

/// `|f - M(f) G|_{L^2(G^{-1/2})}`.
pub fn distance_to_equilibrium(f: &Field<f64>, eq: &Equilibrium<f64>, mass: f64) -> f64 {
    let d = f.axpy(-mass, eq.density()).expect("shared grid");
    inner_ginv(eq, &d, &d).max(0.0).sqrt()
}

/// `|f - M(f) G|` in `L^1` for `p = 1` and in `L^2(G^{-1/2})` for `p = 2`.
pub fn distance_p(f: &Field<f64>, eq: &Equilibrium<f64>, mass: f64, p: u8) -> f64 {
    match p {
        1 => l1_norm(&f.axpy(-mass, eq.density()).expect("shared grid")),
        _ => distance_to_equilibrium(f, eq, mass),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecaySetup {
    pub grid: PhaseGrid<f64>,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub window: (f64, f64),
    /// Time at which norms are compared across `gamma`.
    pub t_compare: f64,
    pub initial: InitialData,
    /// Norm of the distance to equilibrium, 1 or 2.
    pub p: u8,
}

impl DecaySetup {
    /// Zero-mass dipole at `x = +-4` on `[-30, 30] x [-7, 7]`, `t_end = 60`.
    /// The wide box keeps the tails of `G` inside the domain for `gamma >= 0.4`.
    pub fn standard() -> Self {
        let t_end = 60.0;
        Self {
            grid: PhaseGrid::new(241, 49, 30.0, 7.0).expect("valid grid"),
            dt: 0.05,
            t_end,
            record_every: 4,
            window: (1.0, 0.9 * t_end),
            t_compare: 20.0,
            initial: InitialData::Dipole { x0: 4.0, width: 1.0 },
            p: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRun {
    pub gamma: f64,
    pub ceiling: f64,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub fit: DecayFit,
    pub distance_at_compare: f64,
}

/// Relaxation of `S_L` for one `gamma`.
pub fn decay_run(gamma: f64, setup: &DecaySetup) -> Result<DecayRun, VerifyError> {
    if !matches!(setup.p, 1 | 2) {
        return Err(VerifyError::BadInput(format!("p = {} not in {{1, 2}}", setup.p)));
    }
    let model = ConfinementModel::new(gamma)?;
    let eq = build_equilibrium(&setup.grid, &model)?;
    let gens = assemble_full(&eq, None)?;
    let f0 = setup.initial.build(&eq);
    let mass = f0.integrate();
    let mut cfg = EvolveConfig::new(setup.dt, setup.t_end, Scheme::ImplicitEuler);
    cfg.record_every = setup.record_every;
    let tr =
        evolve_with(&gens.l, &f0, &cfg, vec!["distance".into()], |_, f| Ok(vec![distance_p(f, &eq, mass, setup.p)]))?;
    let distance = tr.series("distance").expect("recorded");
    let fit = fit_series(&tr.times, &distance, DecayModel::StretchedExponential, setup.window)?;
    let k = tr
        .times
        .iter()
        .position(|&t| t >= setup.t_compare - 1e-9)
        .ok_or_else(|| VerifyError::BadInput(format!("t_compare {} beyond t_end", setup.t_compare)))?;
    Ok(DecayRun {
        gamma,
        ceiling: stretch_ceiling(gamma),
        distance_at_compare: distance[k],
        times: tr.times,
        distance,
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayStudy {
    pub runs: Vec<DecayRun>,
    pub b_increasing: bool,
    pub distance_decreasing: bool,
}

/// Runs every `gamma` (ascending) concurrently and checks the orderings.
pub fn decay_study(gammas: &[f64], setup: &DecaySetup) -> Result<DecayStudy, VerifyError> {
    use rayon::prelude::*;
    let mut gs = gammas.to_vec();
    gs.sort_by(f64::total_cmp);
    let runs = gs.par_iter().map(|&g| decay_run(g, setup)).collect::<Result<Vec<_>, _>>()?;
    let b_increasing = runs.windows(2).all(|w| w[1].fit.b > w[0].fit.b);
    let distance_decreasing = runs.windows(2).all(|w| w[1].distance_at_compare < w[0].distance_at_compare);
    Ok(DecayStudy { runs, b_increasing, distance_decreasing })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialDecay {
    pub l: f64,
    pub theta: f64,
    pub target: f64,
    pub times: Vec<f64>,
    /// `sup_f |S_B(t) f|_{L^1(H^{l theta})} / |f|_{L^1(H^l)}` over the family.
    pub sup_ratio: Vec<f64>,
    pub fit: DecayFit,
}

fn l1_h(f: &Field<f64>, power: f64) -> f64 {
    f.map_nodes(|x, v, y| y.abs() * lyapunov_h(x, v).powf(power)).integrate()
}

/// `S_B` decay from `L^1(H^l)` to `L^1(H^{l theta})` on a family of bumps.
#[allow(clippy::too_many_arguments)]
pub fn polynomial_decay(
    eq: &Equilibrium<f64>,
    b: &GeneratorMatrix<f64>,
    l: f64,
    theta: f64,
    centers: &[(f64, f64)],
    width: f64,
    cfg: &EvolveConfig,
    window: (f64, f64),
) -> Result<PolynomialDecay, VerifyError> {
    use rayon::prelude::*;
    let series = centers
        .par_iter()
        .map(|&(x0, v0)| -> Result<(Vec<f64>, Vec<f64>), VerifyError> {
            let f0 = bump(eq, x0, v0, width);
            let n0 = l1_h(&f0, l);
            let tr = evolve_with(b, &f0, cfg, vec!["r".into()], |_, f| Ok(vec![l1_h(f, l * theta) / n0]))?;
            Ok((tr.times.clone(), tr.series("r").expect("recorded")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let times = series[0].0.clone();
    let sup_ratio: Vec<f64> = (0..times.len()).map(|k| series.iter().map(|s| s.1[k]).fold(0.0, f64::max)).collect();
    let fit = fit_series(&times, &sup_ratio, DecayModel::PowerLaw, window)?;
    Ok(PolynomialDecay { l, theta, target: polynomial_rate(l, theta, eq.model().gamma()), times, sup_ratio, fit })
}

/// Inputs of a polynomial-decay run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolynomialSetup {
    pub grid: PhaseGrid<f64>,
    pub cutoff: CutoffSpec,
    pub l: f64,
    pub theta: f64,
    pub centers: Vec<(f64, f64)>,
    pub width: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub window: (f64, f64),
}

impl PolynomialSetup {
    /// Bumps at `x = 0, 2, 4, ..., 64` on `[-120, 120] x [-7, 7]`, `l = 2`,
    /// `theta = 1/2`. The late window skips the diffusive transient, during
    /// which the local exponent is well below its asymptotic value.
    pub fn standard() -> Self {
        let t_end = 800.0;
        Self {
            grid: PhaseGrid::new(481, 33, 120.0, 7.0).expect("valid grid"),
            cutoff: CutoffSpec::new(1.0, 4.0).expect("valid cutoff"),
            l: 2.0,
            theta: 0.5,
            centers: [0.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0].iter().map(|&x| (x, 0.0)).collect(),
            width: 1.0,
            dt: 0.2,
            t_end,
            record_every: 5,
            window: (0.25 * t_end, 0.9 * t_end),
        }
    }
}

/// [`polynomial_decay`] driven by a [`PolynomialSetup`].
pub fn polynomial_study(gamma: f64, setup: &PolynomialSetup) -> Result<PolynomialDecay, VerifyError> {
    let (eq, b) = polynomial_setup(gamma, setup.grid, setup.cutoff)?;
    let mut cfg = EvolveConfig::new(setup.dt, setup.t_end, Scheme::ImplicitEuler);
    cfg.record_every = setup.record_every;
    polynomial_decay(&eq, &b, setup.l, setup.theta, &setup.centers, setup.width, &cfg, setup.window)
}

/// Grid, cutoff and generator for [`polynomial_decay`].
pub fn polynomial_setup(
    gamma: f64,
    grid: PhaseGrid<f64>,
    cutoff: CutoffSpec,
) -> Result<(Equilibrium<f64>, GeneratorMatrix<f64>), VerifyError> {
    let eq = build_equilibrium(&grid, &ConfinementModel::new(gamma)?)?;
    let gens = assemble_full(&eq, Some(&cutoff))?;
    Ok((eq, gens.b))
}
