//! Configuration-space charts, mass metrics and Π symbols.
//!
//! Everything here is generic over the real scalar type.

pub mod chart;
pub mod metric;
pub mod tensor;

pub use chart::{ChartReport, ChartSpec, CoordinateChart};
pub use metric::{compute_pi, pullback_metric, transform_pi, volume_weight, MassMetricField, MetricSamples};
pub use tensor::{Tensor2, Tensor3};
