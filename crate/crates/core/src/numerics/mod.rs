//! Grids, finite differences, quadrature, eigensolves and time stepping.

pub mod eigen;
pub mod field;
pub mod grid;
pub mod interp;
pub mod propagate;
pub mod quadrature;
pub mod stencil;

pub use eigen::{hermitian_eigensolve, EigenPair};
pub use field::{Closure, Differentiator, Field, FieldValue};
pub use grid::{AxisSpec, Boundary, Grid, GridSpec};
pub use propagate::{unitary_step, CayleyPropagator};
pub use quadrature::{cell_weights, integrate, Measure};
pub use stencil::FdOrder;
