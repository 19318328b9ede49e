//! Discrete generators on the phase-space grid.
//!
//! Both parts of the generator are written for `h = f / G` on the dual
//! control volumes of the trapezoidal rule, with `omega` the nodal weights:
//!
//! * collision: `omega * S f = A_S h`, with `A_S` the graph Laplacian along
//!   `v` whose conductances are `G` at velocity half-nodes;
//! * transport: `omega * T f = 1/2 F h`, with `F` the antisymmetric matrix of
//!   face fluxes of the divergence-free field `G (-v, V')`, obtained from the
//!   stream function `psi = G` at control-volume corners. The `x` walls are
//!   specular: the outflow at `(x_wall, v)` re-enters at `(x_wall, -v)`.
//!
//! Hence `S G = T G = 0`, `omega^T L = 0`, `S` is symmetric nonpositive and
//! `T` skew in the `G^{-1}` weighted inner product.

pub mod banded;
pub mod elliptic;
pub mod sparse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use banded::{BandedLu, FactorError};
pub use elliptic::{elliptic_solve, EllipticError, EllipticSolve};
pub use sparse::CsrMatrix;

use crate::model::{eval_cutoff, ConfinementModel, CutoffSpec, Equilibrium, ModelError};
use crate::phase_grid::{Field, GridError, PhaseGrid};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error("velocity box too small: M(v_max) = {0:.3e} must be below 1e-10")]
    VelocityTruncation(f64),
    #[error("operators assembled on different grids")]
    GridMismatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    T,
    S,
    L,
    A,
    B,
    Lstar,
    Bstar,
}

impl Role {
    pub fn name(&self) -> &'static str {
        match self {
            Role::T => "T",
            Role::S => "S",
            Role::L => "L",
            Role::A => "A",
            Role::B => "B",
            Role::Lstar => "Lstar",
            Role::Bstar => "Bstar",
        }
    }
}

/// Sparse generator tagged with its role.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorMatrix<T> {
    role: Role,
    matrix: CsrMatrix<T>,
    grid: PhaseGrid<T>,
    model: ConfinementModel<T>,
    cutoff: Option<CutoffSpec>,
}

impl<T: Scalar> GeneratorMatrix<T> {
    #[inline]
    pub fn role(&self) -> Role {
        self.role
    }

    #[inline]
    pub fn matrix(&self) -> &CsrMatrix<T> {
        &self.matrix
    }

    #[inline]
    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }

    #[inline]
    pub fn model(&self) -> &ConfinementModel<T> {
        &self.model
    }

    #[inline]
    pub fn cutoff(&self) -> Option<&CutoffSpec> {
        self.cutoff.as_ref()
    }

    pub fn apply(&self, f: &Field<T>) -> Result<Field<T>, OperatorError> {
        if f.grid() != &self.grid {
            return Err(OperatorError::GridMismatch);
        }
        Ok(Field::from_values(self.grid, self.matrix.mul_vec(f.values()))?)
    }

    fn derived(&self, role: Role, matrix: CsrMatrix<T>, cutoff: Option<CutoffSpec>) -> Self {
        Self { role, matrix, grid: self.grid, model: self.model, cutoff }
    }

    /// Same matrix under a new role tag.
    pub fn with_role(&self, role: Role) -> Self {
        self.derived(role, self.matrix.clone(), self.cutoff)
    }

    /// Dense row-major copy of the matrix in `f64`.
    pub fn to_dense_f64(&self) -> Vec<f64> {
        self.matrix.to_dense_f64()
    }
}

/// Builds the collision part `S f = d_v(M d_v(f/M))`.
pub fn assemble_collision<T: Scalar>(eq: &Equilibrium<T>) -> Result<GeneratorMatrix<T>, OperatorError> {
    let grid = *eq.grid();
    let m_edge = ConfinementModel::<f64>::maxwellian(grid.v_max().f64());
    if m_edge >= 1e-10 {
        return Err(OperatorError::VelocityTruncation(m_edge));
    }
    let (nx, nv) = (grid.nx(), grid.nv());
    let vl = grid.v_line();
    let dv = grid.dv();
    let mut trip = Vec::with_capacity(3 * grid.len());
    for i in 0..nx {
        let x = grid.x(i);
        for j in 0..nv - 1 {
            let (k, l) = (grid.index(i, j), grid.index(i, j + 1));
            let lg_mid = eq.log_density(x, vl.midpoint(j));
            let lg_k = eq.log_density(x, vl.node(j));
            let lg_l = eq.log_density(x, vl.node(j + 1));
            // conductance G_{j+1/2} / dv, divided by omega_v and by G of the column
            let (wk, wl) = (vl.weight(j) * dv, vl.weight(j + 1) * dv);
            let to_l_from_k = (lg_mid - lg_k).exp();
            let to_k_from_l = (lg_mid - lg_l).exp();
            trip.push((k, l, to_k_from_l / wk));
            trip.push((k, k, -to_l_from_k / wk));
            trip.push((l, k, to_l_from_k / wl));
            trip.push((l, l, -to_k_from_l / wl));
        }
    }
    Ok(GeneratorMatrix {
        role: Role::S,
        matrix: CsrMatrix::from_triplets(grid.len(), grid.len(), trip),
        grid,
        model: *eq.model(),
        cutoff: None,
    })
}

/// Corner coordinates of the dual cells along one axis: the two ends and
/// all midpoints.
fn corners<T: Scalar>(line: &crate::phase_grid::LineGrid<T>) -> Vec<T> {
    let n = line.len();
    let mut c = Vec::with_capacity(n + 1);
    c.push(line.node(0));
    for i in 0..n - 1 {
        c.push(line.midpoint(i));
    }
    c.push(line.node(n - 1));
    c
}

/// Builds the transport part `T f = -v d_x f + V'(x) d_v f`.
pub fn assemble_transport<T: Scalar>(eq: &Equilibrium<T>) -> Result<GeneratorMatrix<T>, OperatorError> {
    let grid = *eq.grid();
    let (nx, nv) = (grid.nx(), grid.nv());
    let xc = corners(grid.x_line());
    let vc = corners(grid.v_line());
    // log psi at corners; the velocity walls carry psi = 0
    let log_psi = |a: usize, b: usize| -> Option<T> {
        if b == 0 || b == nv {
            None
        } else {
            Some(eq.log_density(xc[a], vc[b]))
        }
    };
    let log_g: Vec<T> = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.split(k);
            eq.log_density(grid.x(i), grid.v(j))
        })
        .collect();
    // psi(a, b) / G_l evaluated in log space
    let ratio = |a: usize, b: usize, l: usize| log_psi(a, b).map_or(T::zero(), |lp| (lp - log_g[l]).exp());
    let weights = grid.weights();
    let half = T::of(0.5);
    let mut trip = Vec::with_capacity(6 * grid.len());
    // F is the flux of G (-v, V') from k to l; T f = div((-v, V') f), so
    // T_kl = F/(2 w_k G_l) and T_lk = -F/(2 w_l G_k)
    let mut push_pair = |k: usize, l: usize, f_over_gl: T, f_over_gk: T| {
        trip.push((k, l, half * f_over_gl / weights[k]));
        trip.push((l, k, -half * f_over_gk / weights[l]));
    };
    for i in 0..nx {
        for j in 0..nv {
            let k = grid.index(i, j);
            if i + 1 < nx {
                // face at corner column a = i+1, flux psi(a, j+1) - psi(a, j)
                let l = grid.index(i + 1, j);
                let a = i + 1;
                push_pair(k, l, ratio(a, j + 1, l) - ratio(a, j, l), ratio(a, j + 1, k) - ratio(a, j, k));
            }
            if j + 1 < nv {
                // face at corner row b = j+1, flux -(psi(i+1, b) - psi(i, b))
                let l = grid.index(i, j + 1);
                let b = j + 1;
                push_pair(k, l, ratio(i, b, l) - ratio(i + 1, b, l), ratio(i, b, k) - ratio(i + 1, b, k));
            }
        }
    }
    // specular walls: pair (wall, j) with (wall, nv-1-j)
    for j in 0..nv / 2 {
        let jm = nv - 1 - j;
        let (k, l) = (grid.index(0, j), grid.index(0, jm));
        push_pair(k, l, ratio(0, j, l) - ratio(0, j + 1, l), ratio(0, j, k) - ratio(0, j + 1, k));
        let (k, l) = (grid.index(nx - 1, j), grid.index(nx - 1, jm));
        push_pair(k, l, ratio(nx, j + 1, l) - ratio(nx, j, l), ratio(nx, j + 1, k) - ratio(nx, j, k));
    }
    Ok(GeneratorMatrix {
        role: Role::T,
        matrix: CsrMatrix::from_triplets(grid.len(), grid.len(), trip),
        grid,
        model: *eq.model(),
        cutoff: None,
    })
}

/// The full family of generators on one grid.
#[derive(Debug, Clone)]
pub struct Generators<T> {
    pub t: GeneratorMatrix<T>,
    pub s: GeneratorMatrix<T>,
    pub l: GeneratorMatrix<T>,
    pub a: GeneratorMatrix<T>,
    pub b: GeneratorMatrix<T>,
    pub lstar: GeneratorMatrix<T>,
    pub bstar: GeneratorMatrix<T>,
}

impl<T: Scalar> Generators<T> {
    pub fn get(&self, role: Role) -> &GeneratorMatrix<T> {
        match role {
            Role::T => &self.t,
            Role::S => &self.s,
            Role::L => &self.l,
            Role::A => &self.a,
            Role::B => &self.b,
            Role::Lstar => &self.lstar,
            Role::Bstar => &self.bstar,
        }
    }
}

/// Assembles `L = T + S`, `A = K chi_R`, `B = L - A`, `L* = S - T`, `B* = L* - A`.
/// Without a cutoff `A` is the zero matrix.
pub fn assemble_full<T: Scalar>(
    eq: &Equilibrium<T>,
    cutoff: Option<&CutoffSpec>,
) -> Result<Generators<T>, OperatorError> {
    let s = assemble_collision(eq)?;
    let t = assemble_transport(eq)?;
    compose(t, s, cutoff)
}

/// Combines separately assembled transport and collision parts.
pub fn compose<T: Scalar>(
    t: GeneratorMatrix<T>,
    s: GeneratorMatrix<T>,
    cutoff: Option<&CutoffSpec>,
) -> Result<Generators<T>, OperatorError> {
    if t.grid != s.grid || t.model != s.model {
        return Err(OperatorError::GridMismatch);
    }
    let grid = t.grid;
    let a_diag = match cutoff {
        Some(c) => eval_cutoff(c, &grid)?.into_values(),
        None => vec![T::zero(); grid.len()],
    };
    let cut = cutoff.copied();
    let a = t.derived(Role::A, CsrMatrix::diagonal_from(&a_diag), cut);
    let l = t.derived(Role::L, t.matrix.add(&s.matrix), cut);
    let b = t.derived(Role::B, l.matrix.sub(&a.matrix), cut);
    let lstar = t.derived(Role::Lstar, s.matrix.sub(&t.matrix), cut);
    let bstar = t.derived(Role::Bstar, lstar.matrix.sub(&a.matrix), cut);
    Ok(Generators { t, s, l, a, b, lstar, bstar })
}

/// `<f, g>` in the discrete `L^2(G^{-1/2})` inner product.
pub fn inner_ginv<T: Scalar>(eq: &Equilibrium<T>, f: &Field<T>, g: &Field<T>) -> T {
    let grid = eq.grid();
    let w = grid.weights();
    f.values()
        .iter()
        .zip(g.values())
        .zip(eq.density().values())
        .zip(&w)
        .map(|(((&a, &b), &gk), &wk)| wk * a * b / gk)
        .sum()
}
