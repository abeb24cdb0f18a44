//! Geometric objects of the conditional amplitude `Φ`.

mod covariant;
mod tensors;

pub use covariant::{covariant_derivative, second_covariant_derivative, Charge, Transport, LINK_FLOOR};
pub use tensors::{
    christoffel_from_metric, compute_geometry, compute_geometry_with, covariant_derivatives, epsilon_bo, epsilon_geo, quantum_christoffel_first,
    quantum_geometric_tensor, quantum_metric, tangent_frame, CovariantDerivatives, EfGeometry, TangentFrame,
    CONDITION_CAP, H_FLOOR, RANK_FLOOR,
};
