//! Kinetic Fokker-Planck equation with a weakly confining potential
//! `V(x) = <x>^gamma`, `0 < gamma < 1`, on a truncated phase space.
//!
//! The numerical core is generic over the scalar type; `f64` aliases are
//! exported at the crate root.

// `!(a > b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// stencil loops index several arrays at once
#![allow(clippy::needless_range_loop)]

pub mod functionals;
pub mod initial;
pub mod model;
pub mod operators;
pub mod phase_grid;
pub mod scalar;
pub mod semigroup;
pub mod verify;

pub use scalar::Scalar;

pub type PhaseGrid = phase_grid::PhaseGrid<f64>;
pub type LineGrid = phase_grid::LineGrid<f64>;
pub type Field = phase_grid::Field<f64>;
pub type XField = phase_grid::XField<f64>;
pub type ConfinementModel = model::ConfinementModel<f64>;
pub type Equilibrium = model::Equilibrium<f64>;
pub type GeneratorMatrix = operators::GeneratorMatrix<f64>;
pub type Generators = operators::Generators<f64>;
pub type EllipticSolve = operators::EllipticSolve<f64>;

pub use model::{CutoffSpec, WeightSpec};
pub use operators::Role;
