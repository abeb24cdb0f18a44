//! Tensor-product grids. Nodes are numbered row-major with the last axis
//! varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Smallest number of nodes allowed on any axis.
pub const MIN_POINTS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// `lo` and `hi` are identified; the node at `hi` is not stored.
    Periodic,
    /// Both `lo` and `hi` are nodes.
    Clamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    pub boundary: Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

impl GridSpec {
    pub fn uniform_1d(n: usize, lo: f64, hi: f64, boundary: Boundary) -> Self {
        Self {
            axes: vec![AxisSpec { n, lo, hi, boundary }],
        }
    }

    /// Same bounds with `n` nodes on every axis.
    pub fn with_points(&self, n: usize) -> Self {
        Self {
            axes: self.axes.iter().map(|a| AxisSpec { n, ..a.clone() }).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Axis<T> {
    pub n: usize,
    pub lo: T,
    pub hi: T,
    pub boundary: Boundary,
    pub spacing: T,
}

impl<T: Real> Axis<T> {
    #[inline]
    pub fn coord(&self, j: usize) -> T {
        self.lo + T::lit(j as f64) * self.spacing
    }

    #[inline]
    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::Periodic
    }

    /// Length of the axis domain.
    pub fn extent(&self) -> T {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    axes: Vec<Axis<T>>,
    strides: Vec<usize>,
    len: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(spec: &GridSpec) -> Result<Self> {
        if spec.axes.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        let mut axes = Vec::with_capacity(spec.axes.len());
        for (i, a) in spec.axes.iter().enumerate() {
            if a.n < MIN_POINTS {
                return Err(Error::InvalidGrid(format!(
                    "axis {i} has {} points, need at least {MIN_POINTS}",
                    a.n
                )));
            }
            if !(a.lo.is_finite() && a.hi.is_finite() && a.hi > a.lo) {
                return Err(Error::InvalidGrid(format!(
                    "axis {i} bounds [{}, {}] are not an increasing finite interval",
                    a.lo, a.hi
                )));
            }
            let lo = T::lit(a.lo);
            let hi = T::lit(a.hi);
            let cells = match a.boundary {
                Boundary::Periodic => a.n,
                Boundary::Clamped => a.n - 1,
            };
            axes.push(Axis {
                n: a.n,
                lo,
                hi,
                boundary: a.boundary,
                spacing: (hi - lo) / T::lit(cells as f64),
            });
        }
        let mut strides = vec![1; axes.len()];
        for i in (0..axes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].n;
        }
        let len = axes.iter().map(|a| a.n).product();
        Ok(Self { axes, strides, len })
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            axes: self
                .axes
                .iter()
                .map(|a| AxisSpec {
                    n: a.n,
                    lo: a.lo.to_f64_lossy(),
                    hi: a.hi.to_f64_lossy(),
                    boundary: a.boundary,
                })
                .collect(),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    /// Total number of nodes.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn axes(&self) -> &[Axis<T>] {
        &self.axes
    }

    pub fn axis(&self, axis: usize) -> Result<&Axis<T>> {
        self.axes.get(axis).ok_or(Error::AxisOutOfRange {
            axis,
            dim: self.dim(),
        })
    }

    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Index of `node` along `axis`.
    #[inline]
    pub fn index_along(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.axes[axis].n
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dim()).map(|a| self.index_along(node, a)).collect()
    }

    pub fn node(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Node obtained from `node` by setting its `axis` index to `j`.
    #[inline]
    pub fn with_index(&self, node: usize, axis: usize, j: usize) -> usize {
        let cur = self.index_along(node, axis);
        node - cur * self.strides[axis] + j * self.strides[axis]
    }

    pub fn point(&self, node: usize) -> Vec<T> {
        (0..self.dim())
            .map(|a| self.axes[a].coord(self.index_along(node, a)))
            .collect()
    }

    pub fn points(&self) -> Vec<Vec<T>> {
        (0..self.len).map(|n| self.point(n)).collect()
    }

    pub fn all_periodic(&self) -> bool {
        self.axes.iter().all(Axis::is_periodic)
    }

    /// Nodes at least `margin` away from every clamped edge.
    pub fn is_interior(&self, node: usize, margin: usize) -> bool {
        self.axes.iter().enumerate().all(|(a, ax)| {
            if ax.is_periodic() {
                true
            } else {
                let j = self.index_along(node, a);
                j >= margin && j + margin < ax.n
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_excludes_upper_bound() {
        let g = Grid::<f64>::new(&GridSpec::uniform_1d(8, 0.0, 1.0, Boundary::Periodic)).unwrap();
        assert_eq!(g.axes()[0].spacing, 0.125);
        assert_eq!(g.point(7), vec![0.875]);
        let c = Grid::<f64>::new(&GridSpec::uniform_1d(5, 0.0, 1.0, Boundary::Clamped)).unwrap();
        assert_eq!(c.axes()[0].spacing, 0.25);
        assert_eq!(c.point(4), vec![1.0]);
    }

    #[test]
    fn row_major_layout() {
        let spec = GridSpec {
            axes: vec![
                AxisSpec { n: 5, lo: 0.0, hi: 4.0, boundary: Boundary::Clamped },
                AxisSpec { n: 6, lo: 0.0, hi: 6.0, boundary: Boundary::Periodic },
            ],
        };
        let g = Grid::<f32>::new(&spec).unwrap();
        assert_eq!(g.len(), 30);
        assert_eq!(g.stride(0), 6);
        let n = g.node(&[3, 4]);
        assert_eq!(n, 22);
        assert_eq!(g.multi_index(n), vec![3, 4]);
        assert_eq!(g.with_index(n, 0, 1), g.node(&[1, 4]));
        assert_eq!(g.point(n), vec![3.0, 4.0]);
        assert!(g.is_interior(n, 1) && !g.is_interior(n, 2));
    }

    #[test]
    fn rejects_bad_axes() {
        assert!(Grid::<f64>::new(&GridSpec::uniform_1d(4, 0.0, 1.0, Boundary::Clamped)).is_err());
        assert!(Grid::<f64>::new(&GridSpec::uniform_1d(10, 1.0, 1.0, Boundary::Clamped)).is_err());
        assert!(Grid::<f64>::new(&GridSpec { axes: vec![] }).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = GridSpec::uniform_1d(201, -3.5, 3.5, Boundary::Clamped);
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"clamped\""));
        assert_eq!(serde_json::from_str::<GridSpec>(&text).unwrap(), s);
    }
}
