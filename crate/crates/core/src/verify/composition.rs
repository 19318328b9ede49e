//! Operator norms of the convolution powers `(A S_B)^{*l}(t)` on small grids.
//!
//! `S_B * (A S_B)^{*(l-1)}` is the top-right block of `exp(t M)` where `M`
//! is block bidiagonal with `B` on the diagonal and `A` above it; the blocks
//! of `exp(t M)` are block Toeplitz, so time stepping multiplies `l` blocks.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::initial::bump;
use crate::model::Equilibrium;
use crate::operators::Generators;
use crate::semigroup::{dense_matrix, iterated_duhamel};

use super::fit::{fit_series, DecayFit, DecayModel};
use super::VerifyError;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompositionStudy {
    pub eps_space: f64,
    pub times: Vec<f64>,
    /// `norms[l - 1][k]` is `|(A S_B)^{*l}(times[k])|_{X -> Y}`.
    pub norms: Vec<Vec<f64>>,
    /// `|A|_{X -> Y}`.
    pub a_norm: f64,
    /// `|A S_B(t0)|` for a tiny `t0`.
    pub small_time_norm: f64,
    pub fit: Option<DecayFit>,
    /// `sup_t norms[l-1] / (t^{l-1} e^{-a t^b})` for each `l`.
    pub bound_constants: Vec<f64>,
    /// `sup_t norms[l-1] / (t^{l-1} norms[0])` over the first and second half of the window.
    pub ratio_halves: Vec<(f64, f64)>,
    /// Relative residual of the order-`levels` Duhamel expansion.
    pub remainder_residual: f64,
}

fn top_singular(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().max()
}

/// Norms from `L^2(G^{-1/2})` to `L^2(G^{-(1/2 + eps_space)})` at `t = k dt`, `k = 1..=steps`.
pub fn composition_bounds_check(
    eq: &Equilibrium<f64>,
    gens: &Generators<f64>,
    levels: usize,
    dt: f64,
    steps: usize,
    eps_space: f64,
    nquad: usize,
) -> Result<CompositionStudy, VerifyError> {
    if levels == 0 || steps < 2 || !(dt > 0.0) {
        return Err(VerifyError::BadInput("need levels >= 1, steps >= 2, dt > 0".into()));
    }
    let grid = eq.grid();
    let n = grid.len();
    let b = dense_matrix(&gens.b)?;
    let a = dense_matrix(&gens.a)?;
    let w = grid.weights();
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    for k in 0..n {
        let (i, j) = grid.split(k);
        let lg = eq.log_density(grid.x(i), grid.v(j));
        dx[k] = (w[k] * (-lg).exp()).sqrt();
        dy[k] = (w[k] * (-(1.0 + 2.0 * eps_space) * lg).exp()).sqrt();
    }
    let weighted_norm = |p: &DMatrix<f64>| {
        let mut q = p.clone();
        for r in 0..n {
            for c in 0..n {
                q[(r, c)] *= dy[r] / dx[c];
            }
        }
        top_singular(&q)
    };

    // blocks F_0..F_{levels-1} of exp(dt M)
    let big = levels * n;
    let mut m = DMatrix::zeros(big, big);
    for blk in 0..levels {
        m.view_mut((blk * n, blk * n), (n, n)).copy_from(&b);
        if blk + 1 < levels {
            m.view_mut((blk * n, (blk + 1) * n), (n, n)).copy_from(&a);
        }
    }
    let e = (m * dt).exp();
    let step: Vec<DMatrix<f64>> = (0..levels).map(|j| e.view((0, j * n), (n, n)).into_owned()).collect();
    let mut cur = step.clone();
    let mut times = Vec::with_capacity(steps);
    let mut norms = vec![Vec::with_capacity(steps); levels];
    for k in 1..=steps {
        if k > 1 {
            let next: Vec<DMatrix<f64>> = (0..levels)
                .map(|j| (0..=j).fold(DMatrix::zeros(n, n), |acc, i| acc + &cur[i] * &step[j - i]))
                .collect();
            cur = next;
        }
        times.push(k as f64 * dt);
        for (l, blk) in cur.iter().enumerate() {
            norms[l].push(weighted_norm(&(&a * blk)));
        }
    }

    let a_norm = (0..n).map(|k| a[(k, k)].abs() * dy[k] / dx[k]).fold(0.0, f64::max);
    let t0 = 1e-4;
    let small_time_norm = weighted_norm(&(&a * (&b * t0).exp()));

    let fit = fit_series(&times, &norms[0], DecayModel::StretchedExponential, (times[0], times[steps - 1])).ok();
    let envelope = |t: f64| match &fit {
        Some(f) => (-f.rate * t.powf(f.b.unwrap_or(1.0))).exp(),
        None => 1.0,
    };
    let bound_constants = (0..levels)
        .map(|l| times.iter().zip(&norms[l]).map(|(&t, &y)| y / (t.powi(l as i32) * envelope(t))).fold(0.0, f64::max))
        .collect();
    let half = steps / 2;
    let ratio_halves = (0..levels)
        .map(|l| {
            let r: Vec<f64> = (0..steps).map(|k| norms[l][k] / (times[k].powi(l as i32) * norms[0][k])).collect();
            let first = r[..half].iter().copied().fold(0.0, f64::max);
            let second = r[half..].iter().copied().fold(0.0, f64::max);
            (first, second)
        })
        .collect();

    let f0 = bump(eq, 0.5, -0.3, 1.0);
    let it = iterated_duhamel(&gens.l, &gens.b, &gens.a, 1.0, nquad, levels, &f0)?;
    Ok(CompositionStudy {
        eps_space,
        times,
        norms,
        a_norm,
        small_time_norm,
        fit,
        bound_constants,
        ratio_halves,
        remainder_residual: it.relative_residual(&f0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_equilibrium, ConfinementModel, CutoffSpec};
    use crate::operators::assemble_full;
    use crate::phase_grid::PhaseGrid;

    #[test]
    fn small_grid_bounds() {
        let g = PhaseGrid::new(10, 10, 4.0, 7.0).unwrap();
        let eq = build_equilibrium(&g, &ConfinementModel::new(0.5).unwrap()).unwrap();
        let gens = assemble_full(&eq, Some(&CutoffSpec::new(2.0, 2.0).unwrap())).unwrap();
        let s = composition_bounds_check(&eq, &gens, 3, 0.25, 8, 0.0, 16).unwrap();
        // without extra weight, |A| is K times the largest cutoff value on the grid
        let kmax = gens.a.matrix().diagonal().into_iter().fold(0.0, f64::max);
        assert!((s.a_norm - kmax).abs() < 1e-12);
        assert!((s.small_time_norm - s.a_norm).abs() < 1e-2 * s.a_norm);
        assert!(s.norms.iter().flatten().all(|y| y.is_finite() && *y >= 0.0));
        assert!(s.remainder_residual < 1e-4);
        // the first block is exp(t B) itself
        let direct = {
            let b = dense_matrix(&gens.b).unwrap();
            let a = dense_matrix(&gens.a).unwrap();
            a * (b * 0.5).exp()
        };
        let mut q = direct;
        let w = g.weights();
        for r in 0..g.len() {
            for c in 0..g.len() {
                let (ri, rj) = g.split(r);
                let (ci, cj) = g.split(c);
                let gr = eq.log_density(g.x(ri), g.v(rj));
                let gc = eq.log_density(g.x(ci), g.v(cj));
                q[(r, c)] *= (w[r] * (-gr).exp()).sqrt() / (w[c] * (-gc).exp()).sqrt();
            }
        }
        let want = q.singular_values().max();
        assert!((s.norms[0][1] - want).abs() < 1e-10 * want);
    }
}
