//! One-dimensional weighted elliptic problem `-(e^{-V} u')' = e^{-V} xi`
//! with zero-flux ends and the gauge `int u e^{-V} <grad V>^{-2} = 0`.

use thiserror::Error;

use crate::model::ConfinementModel;
use crate::phase_grid::{LineGrid, XField};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EllipticError {
    #[error("tridiagonal elimination broke down at row {0}")]
    Breakdown(usize),
    #[error("right-hand side grid does not match the solver grid")]
    GridMismatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSolve<T> {
    pub rhs: XField<T>,
    pub solution: XField<T>,
    /// `|int u e^{-V} <grad V>^{-2} dx|` after gauging.
    pub gauge_residual: T,
    /// `|int e^{-V} xi dx|` before projection.
    pub compatibility_defect: T,
}

impl<T: Scalar> EllipticSolve<T> {
    pub fn line(&self) -> &LineGrid<T> {
        self.solution.line()
    }
}

/// Gauge weight `e^{-V} <grad V>^{-2}`.
pub fn gauge_weight<T: Scalar>(model: &ConfinementModel<T>, x: T) -> T {
    let g = model.grad_weight(x);
    (-model.potential(x)).exp() / (g * g)
}

/// Subtracts the gauge-weighted mean.
pub fn apply_gauge<T: Scalar>(model: &ConfinementModel<T>, u: &XField<T>) -> XField<T> {
    let line = *u.line();
    let w: Vec<T> = line.nodes().into_iter().map(|x| gauge_weight(model, x)).collect();
    let num = line.integrate(&u.values().iter().zip(&w).map(|(a, b)| *a * *b).collect::<Vec<_>>());
    let den = line.integrate(&w);
    let c = num / den;
    u.map_nodes(|_, y| y - c)
}

pub fn gauge_defect<T: Scalar>(model: &ConfinementModel<T>, u: &XField<T>) -> T {
    let line = u.line();
    let vals: Vec<T> = u.values().iter().enumerate().map(|(i, &y)| y * gauge_weight(model, line.node(i))).collect();
    line.integrate(&vals).abs()
}

/// Solves `-Delta_V^* u = xi` where `Delta_V^* u = e^V (e^{-V} u')'`.
pub fn elliptic_solve<T: Scalar>(
    line: &LineGrid<T>,
    model: &ConfinementModel<T>,
    xi: &XField<T>,
) -> Result<EllipticSolve<T>, EllipticError> {
    if xi.line() != line {
        return Err(EllipticError::GridMismatch);
    }
    let n = line.len();
    let h = line.spacing();
    // scale e^{-V} by e^{V(0)} = e to keep entries O(1) near the origin
    let ev = |x: T| (T::one() - model.potential(x)).exp();
    let cond: Vec<T> = (0..n - 1).map(|i| ev(line.midpoint(i)) / h).collect();
    let mass: Vec<T> = (0..n).map(|i| line.weight(i) * ev(line.node(i))).collect();

    let b_raw: Vec<T> = (0..n).map(|i| mass[i] * xi.values()[i]).collect();
    let total: T = b_raw.iter().copied().sum();
    let mass_sum: T = mass.iter().copied().sum();
    let compatibility_defect = (total * (-T::one()).exp()).abs();
    let b: Vec<T> = b_raw.iter().zip(&mass).map(|(&bi, &mi)| bi - total * mi / mass_sum).collect();

    // pin u_0 = 0 and drop row 0; rows 1..n-1 form a tridiagonal system
    let m = n - 1;
    let mut lower = vec![T::zero(); m];
    let mut diag = vec![T::zero(); m];
    let mut upper = vec![T::zero(); m];
    let mut rhs = vec![T::zero(); m];
    for r in 0..m {
        let i = r + 1;
        let left = cond[i - 1];
        let right = if i + 1 < n { cond[i] } else { T::zero() };
        diag[r] = left + right;
        if r > 0 {
            lower[r] = -left;
        }
        if i + 1 < n {
            upper[r] = -right;
        }
        rhs[r] = b[i];
    }
    let sol = thomas(&lower, &diag, &upper, &rhs)?;
    let mut u = vec![T::zero(); n];
    u[1..].copy_from_slice(&sol);
    let raw = XField::from_values(*line, u).map_err(|_| EllipticError::Breakdown(0))?;
    let solution = apply_gauge(model, &raw);
    let gauge_residual = gauge_defect(model, &solution);
    Ok(EllipticSolve { rhs: xi.clone(), solution, gauge_residual, compatibility_defect })
}

fn thomas<T: Scalar>(a: &[T], b: &[T], c: &[T], d: &[T]) -> Result<Vec<T>, EllipticError> {
    let n = b.len();
    let mut cp = vec![T::zero(); n];
    let mut dp = vec![T::zero(); n];
    let mut denom = b[0];
    if denom == T::zero() {
        return Err(EllipticError::Breakdown(0));
    }
    cp[0] = c[0] / denom;
    dp[0] = d[0] / denom;
    for i in 1..n {
        denom = b[i] - a[i] * cp[i - 1];
        if denom == T::zero() || !denom.is_finite() {
            return Err(EllipticError::Breakdown(i));
        }
        cp[i] = c[i] / denom;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / denom;
    }
    let mut x = vec![T::zero(); n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    Ok(x)
}
