//! Truncated phase-space grid, densities on it, and trapezoidal quadrature.
//!
//! Nodes are uniform and symmetric about the origin in both variables.
//! Storage is row-major with `x` as the outer index and `v` contiguous,
//! so velocity operators act on contiguous slices.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least 4 points per axis, got nx={nx}, nv={nv}")]
    TooFewPoints { nx: usize, nv: usize },
    #[error("domain half-widths must be positive and finite")]
    BadExtent,
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field value at index {index} is not finite")]
    NonFinite { index: usize },
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Uniform symmetric 1-D grid on `[-half_width, half_width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineGrid<T> {
    n: usize,
    half_width: T,
    h: T,
}

impl<T: Scalar> LineGrid<T> {
    pub fn new(n: usize, half_width: T) -> Result<Self, GridError> {
        if n < 4 {
            return Err(GridError::TooFewPoints { nx: n, nv: n });
        }
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(GridError::BadExtent);
        }
        let h = T::of(2.0) * half_width / T::of_usize(n - 1);
        Ok(Self { n, half_width, h })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn half_width(&self) -> T {
        self.half_width
    }

    #[inline]
    pub fn spacing(&self) -> T {
        self.h
    }

    /// Node coordinate. Computed from the offset to the centre so that
    /// `node(i) == -node(n-1-i)` holds bit for bit.
    #[inline]
    pub fn node(&self, i: usize) -> T {
        let centre = T::of_usize(self.n - 1) * T::of(0.5);
        (T::of_usize(i) - centre) * self.h
    }

    /// Midpoint between nodes `i` and `i+1`.
    #[inline]
    pub fn midpoint(&self, i: usize) -> T {
        let centre = T::of_usize(self.n - 1) * T::of(0.5);
        (T::of_usize(i) + T::of(0.5) - centre) * self.h
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Trapezoidal weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> T {
        if i == 0 || i + 1 == self.n {
            self.h * T::of(0.5)
        } else {
            self.h
        }
    }

    pub fn weights(&self) -> Vec<T> {
        (0..self.n).map(|i| self.weight(i)).collect()
    }

    /// Index of the mirror node `-x_i`.
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        self.n - 1 - i
    }

    /// Second-order first derivative: centred inside, one-sided at the ends.
    pub fn derivative(&self, f: &[T]) -> Vec<T> {
        derivative_strided(f, self.n, 1, self.h)
    }

    pub fn integrate(&self, f: &[T]) -> T {
        f.iter().enumerate().map(|(i, &y)| self.weight(i) * y).sum()
    }
}

fn derivative_strided<T: Scalar>(f: &[T], n: usize, stride: usize, h: T) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    let inv2h = T::one() / (T::of(2.0) * h);
    let at = |i: usize| f[i * stride];
    for (i, o) in out.iter_mut().enumerate().take(n - 1).skip(1) {
        *o = (at(i + 1) - at(i - 1)) * inv2h;
    }
    // differences first, so constants map to exactly zero
    out[0] = (T::of(4.0) * (at(1) - at(0)) - (at(2) - at(0))) * inv2h;
    out[n - 1] = (-T::of(4.0) * (at(n - 2) - at(n - 1)) + (at(n - 3) - at(n - 1))) * inv2h;
    out
}

/// Tensor grid on `[-x_max, x_max] x [-v_max, v_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid<T> {
    x: LineGrid<T>,
    v: LineGrid<T>,
}

impl<T: Scalar> PhaseGrid<T> {
    pub fn new(nx: usize, nv: usize, x_max: T, v_max: T) -> Result<Self, GridError> {
        if nx < 4 || nv < 4 {
            return Err(GridError::TooFewPoints { nx, nv });
        }
        Ok(Self { x: LineGrid::new(nx, x_max)?, v: LineGrid::new(nv, v_max)? })
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.x.len()
    }

    #[inline]
    pub fn nv(&self) -> usize {
        self.v.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx() * self.nv()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn x_max(&self) -> T {
        self.x.half_width()
    }

    #[inline]
    pub fn v_max(&self) -> T {
        self.v.half_width()
    }

    #[inline]
    pub fn dx(&self) -> T {
        self.x.spacing()
    }

    #[inline]
    pub fn dv(&self) -> T {
        self.v.spacing()
    }

    #[inline]
    pub fn x_line(&self) -> &LineGrid<T> {
        &self.x
    }

    #[inline]
    pub fn v_line(&self) -> &LineGrid<T> {
        &self.v
    }

    #[inline]
    pub fn x(&self, i: usize) -> T {
        self.x.node(i)
    }

    #[inline]
    pub fn v(&self, j: usize) -> T {
        self.v.node(j)
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.nv() + j
    }

    /// `(i, j)` of a flat index.
    #[inline]
    pub fn split(&self, k: usize) -> (usize, usize) {
        (k / self.nv(), k % self.nv())
    }

    /// Trapezoidal cell weight of node `(i, j)`.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.x.weight(i) * self.v.weight(j)
    }

    /// Flat vector of trapezoidal weights.
    pub fn weights(&self) -> Vec<T> {
        let mut w = Vec::with_capacity(self.len());
        for i in 0..self.nx() {
            for j in 0..self.nv() {
                w.push(self.weight(i, j));
            }
        }
        w
    }

    /// Coarsened copy with `factor` times more intervals per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self::new((self.nx() - 1) * factor + 1, (self.nv() - 1) * factor + 1, self.x_max(), self.v_max())
            .expect("refinement of a valid grid is valid")
    }
}

/// Density sampled on a [`PhaseGrid`]. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: PhaseGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn from_values(grid: PhaseGrid<T>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for arithmetic on already validated data.
    pub(crate) fn raw(grid: PhaseGrid<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: PhaseGrid<T>) -> Self {
        Self::raw(grid, vec![T::zero(); grid.len()])
    }

    pub fn constant(grid: PhaseGrid<T>, c: T) -> Self {
        Self::raw(grid, vec![c; grid.len()])
    }

    /// Samples `f(x, v)` at every node.
    pub fn from_fn(grid: PhaseGrid<T>, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx() {
            let x = grid.x(i);
            for j in 0..grid.nv() {
                values.push(f(x, grid.v(j)));
            }
        }
        Self::from_values(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &PhaseGrid<T> {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::raw(self.grid, self.values.iter().map(|&y| f(y)).collect())
    }

    /// Pointwise map with access to node coordinates.
    pub fn map_nodes(&self, f: impl Fn(T, T, T) -> T) -> Self {
        let g = &self.grid;
        let mut out = Vec::with_capacity(g.len());
        for i in 0..g.nx() {
            let x = g.x(i);
            for j in 0..g.nv() {
                out.push(f(x, g.v(j), self.values[g.index(i, j)]));
            }
        }
        Self::raw(self.grid, out)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        Ok(Self::raw(self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|y| c * y)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: T, other: &Self) -> Result<Self, GridError> {
        self.zip_with(other, |a, b| a + c * b)
    }

    /// Trapezoidal approximation of the integral over the box.
    pub fn integrate(&self) -> T {
        let g = &self.grid;
        let mut total = T::zero();
        for i in 0..g.nx() {
            let row = &self.values[i * g.nv()..(i + 1) * g.nv()];
            total += g.x_line().weight(i) * g.v_line().integrate(row);
        }
        total
    }

    /// Per-`x` velocity integral.
    pub fn integrate_v(&self) -> XField<T> {
        self.integrate_v_weighted(|_| T::one())
    }

    /// Per-`x` velocity integral of `f * w(v)`.
    pub fn integrate_v_weighted(&self, w: impl Fn(T) -> T) -> XField<T> {
        let g = &self.grid;
        let wv: Vec<T> = (0..g.nv()).map(|j| g.v_line().weight(j) * w(g.v(j))).collect();
        let values = (0..g.nx())
            .map(|i| {
                let row = &self.values[i * g.nv()..(i + 1) * g.nv()];
                row.iter().zip(&wv).map(|(&f, &w)| f * w).sum()
            })
            .collect();
        XField::raw(*g.x_line(), values)
    }

    pub fn gradient_x(&self) -> Self {
        let g = &self.grid;
        let (nx, nv) = (g.nx(), g.nv());
        let mut out = vec![T::zero(); g.len()];
        for j in 0..nv {
            let d = derivative_strided(&self.values[j..], nx, nv, g.dx());
            for (i, di) in d.into_iter().enumerate() {
                out[i * nv + j] = di;
            }
        }
        Self::raw(self.grid, out)
    }

    pub fn gradient_v(&self) -> Self {
        let g = &self.grid;
        let nv = g.nv();
        let mut out = Vec::with_capacity(g.len());
        for i in 0..g.nx() {
            out.extend(derivative_strided(&self.values[i * nv..(i + 1) * nv], nv, 1, g.dv()));
        }
        Self::raw(self.grid, out)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &y| if y.abs() > m { y.abs() } else { m })
    }

    /// Plain Euclidean norm of the node values.
    pub fn l2_plain(&self) -> T {
        self.values.iter().map(|&y| y * y).sum::<T>().sqrt()
    }

    /// Integral of `|f|` over the outermost ring of nodes, used to monitor
    /// truncation.
    pub fn boundary_mass(&self) -> T {
        let g = &self.grid;
        let (nx, nv) = (g.nx(), g.nv());
        let mut total = T::zero();
        for i in 0..nx {
            for j in 0..nv {
                if i == 0 || j == 0 || i + 1 == nx || j + 1 == nv {
                    total += g.weight(i, j) * self.at(i, j).abs();
                }
            }
        }
        total
    }
}

impl<T: Scalar> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        self.zip_with(rhs, |a, b| a + b).expect("grid mismatch in Field addition")
    }
}

impl<T: Scalar> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        self.zip_with(rhs, |a, b| a - b).expect("grid mismatch in Field subtraction")
    }
}

impl<T: Scalar> Mul for &Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: Self) -> Field<T> {
        self.zip_with(rhs, |a, b| a * b).expect("grid mismatch in Field product")
    }
}

/// Function of `x` only (moments, elliptic data).
#[derive(Debug, Clone, PartialEq)]
pub struct XField<T> {
    line: LineGrid<T>,
    values: Vec<T>,
}

impl<T: Scalar> XField<T> {
    pub fn from_values(line: LineGrid<T>, values: Vec<T>) -> Result<Self, GridError> {
        if values.len() != line.len() {
            return Err(GridError::LengthMismatch { expected: line.len(), got: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite { index });
        }
        Ok(Self { line, values })
    }

    pub(crate) fn raw(line: LineGrid<T>, values: Vec<T>) -> Self {
        Self { line, values }
    }

    pub fn from_fn(line: LineGrid<T>, f: impl Fn(T) -> T) -> Result<Self, GridError> {
        Self::from_values(line, line.nodes().into_iter().map(f).collect())
    }

    pub fn zeros(line: LineGrid<T>) -> Self {
        Self::raw(line, vec![T::zero(); line.len()])
    }

    #[inline]
    pub fn line(&self) -> &LineGrid<T> {
        &self.line
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn map_nodes(&self, f: impl Fn(T, T) -> T) -> Self {
        Self::raw(self.line, self.values.iter().enumerate().map(|(i, &y)| f(self.line.node(i), y)).collect())
    }

    pub fn integrate(&self) -> T {
        self.line.integrate(&self.values)
    }

    pub fn derivative(&self) -> Self {
        Self::raw(self.line, self.line.derivative(&self.values))
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, &y| if y.abs() > m { y.abs() } else { m })
    }
}
