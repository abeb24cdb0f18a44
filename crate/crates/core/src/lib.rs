//! Gauge- and coordinate-covariant exact-factorization toolkit.
//!
//! A two-component wavefunction `Ψ(Q)` on a grid over nuclear configuration
//! space is factorized as `Ψ = χ Φ` with `⟨Φ(Q)|Φ(Q)⟩ = 1`. The crate builds
//! the full Hamiltonian with the coordinate-invariant kinetic operator,
//! extracts `χ` and `Φ`, computes the geometric objects of `Φ` (quantum
//! metric, quantum geometric tensor, quantum Christoffel symbols) and
//! evaluates the residuals of the coupled equations for `χ` and `Φ`.
//!
//! Units: `ħ = 1`.

pub mod dynamics;
pub mod ef_geometry;
pub mod error;
pub mod expr;
pub mod factorization;
pub mod geometry;
pub mod io;
pub mod models;
pub mod numerics;
pub mod pipeline;
pub mod residuals;
pub mod scalar;
pub mod solver;
pub mod sweep;

pub use error::{Error, Result};
pub use scalar::{Real, C64};

/// Double-precision aliases of the generic geometry and grid types.
pub type Grid = numerics::Grid<f64>;
pub type Field<V = C64> = numerics::Field<V>;
pub type Tensor2 = geometry::Tensor2<f64>;
pub type Tensor3 = geometry::Tensor3<f64>;
pub type MassMetricField = geometry::MassMetricField<f64>;
pub type MetricSamples = geometry::MetricSamples<f64>;
pub type Differentiator = numerics::Differentiator<f64>;
pub type Measure = numerics::Measure<f64>;
