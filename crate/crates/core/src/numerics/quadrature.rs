//! Quadrature against the volume weight `√𝓜 J₀`.

use num_complex::Complex;

use super::field::Field;
use super::grid::Grid;
use crate::error::{Error, Result};
use crate::geometry::MassMetricField;
use crate::scalar::Real;

/// Per-node cell volume: trapezoid on clamped axes, rectangle on periodic ones.
pub fn cell_weights<T: Real>(grid: &Grid<T>) -> Vec<T> {
    let half = T::lit(0.5);
    (0..grid.len())
        .map(|node| {
            grid.axes().iter().enumerate().fold(T::one(), |acc, (a, ax)| {
                let j = grid.index_along(node, a);
                let edge = !ax.is_periodic() && (j == 0 || j + 1 == ax.n);
                acc * if edge { half * ax.spacing } else { ax.spacing }
            })
        })
        .collect()
}

/// Quadrature weights including the volume weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure<T> {
    weights: Vec<T>,
}

impl<T: Real> Measure<T> {
    pub fn new(grid: &Grid<T>, volume_weight: &[T]) -> Result<Self> {
        if volume_weight.len() != grid.len() {
            return Err(Error::shape(format!(
                "{} volume weights for {} nodes",
                volume_weight.len(),
                grid.len()
            )));
        }
        Ok(Self {
            weights: cell_weights(grid).into_iter().zip(volume_weight).map(|(c, w)| c * *w).collect(),
        })
    }

    pub fn from_metric(grid: &Grid<T>, metric: &MassMetricField<T>) -> Result<Self> {
        let w: Vec<T> = (0..grid.len())
            .map(|n| metric.volume_weight(&grid.point(n)))
            .collect::<Result<_>>()?;
        Self::new(grid, &w)
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn integrate(&self, values: &[Complex<T>]) -> Result<Complex<T>> {
        self.check(values.len())?;
        Ok(values
            .iter()
            .zip(&self.weights)
            .fold(Complex::new(T::zero(), T::zero()), |acc, (v, w)| acc + *v * *w))
    }

    pub fn integrate_real(&self, values: &[T]) -> Result<T> {
        self.check(values.len())?;
        Ok(values.iter().zip(&self.weights).fold(T::zero(), |acc, (v, w)| acc + *v * *w))
    }

    /// `∫ Σ_c |f_c|²`.
    pub fn norm_sqr(&self, field: &Field<Complex<T>>) -> Result<T> {
        self.check(field.nodes())?;
        Ok((0..field.nodes()).fold(T::zero(), |acc, n| {
            acc + self.weights[n] * field.node(n).iter().fold(T::zero(), |s, z| s + z.norm_sqr())
        }))
    }

    /// `∫ Σ_c conj(a_c) b_c`.
    pub fn inner(&self, a: &Field<Complex<T>>, b: &Field<Complex<T>>) -> Result<Complex<T>> {
        self.check(a.nodes())?;
        if a.comps() != b.comps() || a.nodes() != b.nodes() {
            return Err(Error::shape("inner product of differently shaped fields"));
        }
        Ok((0..a.nodes()).fold(Complex::new(T::zero(), T::zero()), |acc, n| {
            acc + crate::scalar::braket(a.node(n), b.node(n)) * self.weights[n]
        }))
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.weights.len() {
            return Err(Error::shape(format!("{len} values for {} quadrature nodes", self.weights.len())));
        }
        Ok(())
    }
}

/// `∫ dQ √𝓜 J₀ f(Q)` for a scalar field.
pub fn integrate<T: Real>(grid: &Grid<T>, metric: &MassMetricField<T>, field: &Field<Complex<T>>) -> Result<Complex<T>> {
    if field.comps() != 1 {
        return Err(Error::shape(format!("integrand has {} components, expected 1", field.comps())));
    }
    Measure::from_metric(grid, metric)?.integrate(field.data())
}
