//! Node-major grid fields and their finite-difference derivatives.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;

use super::grid::Grid;
use super::stencil::{fornberg_weights, FdOrder};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Values that finite-difference stencils can act on.
pub trait FieldValue<T: Real>:
    Copy + Send + Sync + Zero + Add<Output = Self> + Sub<Output = Self> + Mul<T, Output = Self>
{
}

impl<T: Real> FieldValue<T> for T {}
impl<T: Real> FieldValue<T> for Complex<T> {}

/// `comps` values per grid node, stored node-major.
///
/// Scalars have one component, covectors `d`, rank-2 tensors `d*d`
/// (row-major), electronic vectors `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<V> {
    comps: usize,
    data: Vec<V>,
}

impl<V: Copy> Field<V> {
    pub fn new(comps: usize, data: Vec<V>) -> Result<Self> {
        if comps == 0 || data.len() % comps != 0 {
            return Err(Error::shape(format!(
                "{} values cannot be split into {comps} components per node",
                data.len()
            )));
        }
        Ok(Self { comps, data })
    }

    pub fn filled(nodes: usize, comps: usize, v: V) -> Self {
        Self {
            comps,
            data: vec![v; nodes * comps],
        }
    }

    pub fn from_fn(nodes: usize, comps: usize, mut f: impl FnMut(usize, usize) -> V) -> Self {
        let mut data = Vec::with_capacity(nodes * comps);
        for n in 0..nodes {
            for c in 0..comps {
                data.push(f(n, c));
            }
        }
        Self { comps, data }
    }

    pub fn from_nodes(nodes: &[Vec<V>]) -> Result<Self> {
        let comps = nodes.first().map_or(1, Vec::len);
        if nodes.iter().any(|v| v.len() != comps) {
            return Err(Error::shape("ragged node vectors"));
        }
        Self::new(comps, nodes.iter().flatten().copied().collect())
    }

    #[inline]
    pub fn comps(&self) -> usize {
        self.comps
    }

    #[inline]
    pub fn nodes(&self) -> usize {
        self.data.len() / self.comps
    }

    #[inline]
    pub fn node(&self, n: usize) -> &[V] {
        &self.data[n * self.comps..(n + 1) * self.comps]
    }

    #[inline]
    pub fn node_mut(&mut self, n: usize) -> &mut [V] {
        &mut self.data[n * self.comps..(n + 1) * self.comps]
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize) -> V {
        self.data[n * self.comps + c]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, v: V) {
        self.data[n * self.comps + c] = v;
    }

    pub fn data(&self) -> &[V] {
        &self.data
    }

    pub fn into_data(self) -> Vec<V> {
        self.data
    }

    pub fn map<W: Copy>(&self, f: impl Fn(V) -> W) -> Field<W> {
        Field {
            comps: self.comps,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Single component as a scalar field.
    pub fn component(&self, c: usize) -> Field<V> {
        Field {
            comps: 1,
            data: (0..self.nodes()).map(|n| self.get(n, c)).collect(),
        }
    }

    pub fn check_nodes(&self, nodes: usize, what: &str) -> Result<()> {
        if self.nodes() != nodes {
            return Err(Error::shape(format!(
                "{what} has {} nodes, grid has {nodes}",
                self.nodes()
            )));
        }
        Ok(())
    }
}

impl<T: Real> Field<Complex<T>> {
    pub fn re(&self) -> Field<T> {
        self.map(|z| z.re)
    }

    pub fn im(&self) -> Field<T> {
        self.map(|z| z.im)
    }
}

impl<T: Real> Field<T> {
    pub fn to_complex(&self) -> Field<Complex<T>> {
        self.map(|x| Complex::new(x, T::zero()))
    }
}

/// How a clamped axis is closed at its ends. Periodic axes always wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Closure {
    /// Values outside the box are zero (wavefunctions).
    Dirichlet,
    /// Same-order stencils shifted inside the box (geometric fields).
    OneSided,
}

/// `(1-D index, weight)` pairs; weights already divided by the spacing.
pub type Stencil<T> = Vec<(usize, T)>;

/// First- and second-derivative stencils for every axis, index and closure.
#[derive(Debug, Clone)]
pub struct Differentiator<T> {
    grid: Grid<T>,
    order: FdOrder,
    // stencils[axis][closure as usize][j]
    stencils: Vec<[Vec<Stencil<T>>; 2]>,
    second: Vec<[Vec<Stencil<T>>; 2]>,
}

fn second_stencils<T: Real>(ax: &super::grid::Axis<T>, order: FdOrder) -> [Vec<Stencil<T>>; 2] {
    let p = order.half_width() as i64;
    let n = ax.n as i64;
    let inv_h2 = T::one() / (ax.spacing * ax.spacing);
    let offsets: Vec<T> = (-p..=p).map(|k| T::lit(k as f64)).collect();
    let central = fornberg_weights(T::zero(), &offsets, 2).swap_remove(2);
    // One more point than the first-derivative stencil keeps the order.
    let width = (2 * p + 2).min(n);
    let mut dirichlet = Vec::with_capacity(ax.n);
    let mut one_sided = Vec::with_capacity(ax.n);
    for j in 0..n {
        let inside = |i: i64| ax.is_periodic() || (0..n).contains(&i);
        let s_d: Stencil<T> = (-p..=p)
            .zip(&central)
            .filter(|&(k, _)| inside(j + k))
            .map(|(k, &w)| ((j + k).rem_euclid(n) as usize, w * inv_h2))
            .collect();
        let s_o = if ax.is_periodic() || (j >= p && j + p < n) {
            s_d.clone()
        } else {
            let start = (j - p).clamp(0, n - width);
            let xs: Vec<T> = (0..width).map(|k| T::lit((start + k - j) as f64)).collect();
            let w = fornberg_weights(T::zero(), &xs, 2);
            (0..width as usize).map(|k| (start as usize + k, w[2][k] * inv_h2)).collect()
        };
        dirichlet.push(s_d);
        one_sided.push(s_o);
    }
    [dirichlet, one_sided]
}

impl<T: Real> Differentiator<T> {
    pub fn new(grid: &Grid<T>, order: FdOrder) -> Result<Self> {
        let width = order.as_usize() + 1;
        let mut stencils = Vec::with_capacity(grid.dim());
        for (a, ax) in grid.axes().iter().enumerate() {
            if ax.n < width {
                return Err(Error::InvalidGrid(format!(
                    "axis {a} has {} points, order {} needs {width}",
                    ax.n,
                    order.as_usize()
                )));
            }
            let inv_h = T::one() / ax.spacing;
            let p = order.half_width() as i64;
            let central: Vec<T> = order.central_weights().iter().map(|&w| T::lit(w) * inv_h).collect();
            let n = ax.n as i64;
            let mut dirichlet = Vec::with_capacity(ax.n);
            let mut one_sided = Vec::with_capacity(ax.n);
            for j in 0..n {
                let mut s_d = Vec::with_capacity(width);
                for (k, &w) in (-p..=p).zip(&central) {
                    if w == T::zero() {
                        continue;
                    }
                    let i = j + k;
                    if ax.is_periodic() {
                        s_d.push((i.rem_euclid(n) as usize, w));
                    } else if (0..n).contains(&i) {
                        s_d.push((i as usize, w));
                    }
                }
                let s_o = if ax.is_periodic() || (j >= p && j + p < n) {
                    (-p..=p)
                        .zip(&central)
                        .filter(|(_, w)| **w != T::zero())
                        .map(|(k, &w)| ((j + k).rem_euclid(n) as usize, w))
                        .collect()
                } else {
                    let start = (j - p).clamp(0, n - width as i64);
                    let xs: Vec<T> = (0..width as i64).map(|k| T::lit((start + k - j) as f64)).collect();
                    let w = fornberg_weights(T::zero(), &xs, 1);
                    (0..width)
                        .map(|k| ((start as usize) + k, w[1][k] * inv_h))
                        .collect()
                };
                dirichlet.push(s_d);
                one_sided.push(s_o);
            }
            stencils.push([dirichlet, one_sided]);
        }
        let second = grid.axes().iter().map(|ax| second_stencils(ax, order)).collect();
        Ok(Self {
            grid: grid.clone(),
            order,
            stencils,
            second,
        })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn order(&self) -> FdOrder {
        self.order
    }

    /// Stencil along `axis` at 1-D index `j`.
    #[inline]
    pub fn stencil(&self, axis: usize, closure: Closure, j: usize) -> &[(usize, T)] {
        &self.stencils[axis][closure as usize][j]
    }

    /// Stencil at `node` along `axis`, expressed in global node numbers.
    pub fn node_stencil(&self, node: usize, axis: usize, closure: Closure) -> impl Iterator<Item = (usize, T)> + '_ {
        let j = self.grid.index_along(node, axis);
        self.stencil(axis, closure, j)
            .iter()
            .map(move |&(k, w)| (self.grid.with_index(node, axis, k), w))
    }

    /// Second-derivative stencil at `node` along `axis`, same order as the
    /// first-derivative one.
    pub fn node_stencil2(&self, node: usize, axis: usize, closure: Closure) -> impl Iterator<Item = (usize, T)> + '_ {
        let j = self.grid.index_along(node, axis);
        self.second[axis][closure as usize][j]
            .iter()
            .map(move |&(k, w)| (self.grid.with_index(node, axis, k), w))
    }

    /// `∂²_axis` of every component of `field`.
    pub fn second_partial<V: FieldValue<T>>(&self, field: &Field<V>, axis: usize, closure: Closure) -> Result<Field<V>> {
        if axis >= self.grid.dim() {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.grid.dim(),
            });
        }
        field.check_nodes(self.grid.len(), "field")?;
        let comps = field.comps();
        let mut out = vec![V::zero(); field.data().len()];
        out.par_chunks_mut(comps).enumerate().for_each(|(node, dst)| {
            for (m, w) in self.node_stencil2(node, axis, closure) {
                let src = field.node(m);
                for c in 0..comps {
                    dst[c] = dst[c] + src[c] * w;
                }
            }
        });
        Field::new(comps, out)
    }

    /// `∂_axis` of every component of `field`.
    pub fn partial<V: FieldValue<T>>(&self, field: &Field<V>, axis: usize, closure: Closure) -> Result<Field<V>> {
        if axis >= self.grid.dim() {
            return Err(Error::AxisOutOfRange {
                axis,
                dim: self.grid.dim(),
            });
        }
        field.check_nodes(self.grid.len(), "field")?;
        let comps = field.comps();
        let mut out = vec![V::zero(); field.data().len()];
        out.par_chunks_mut(comps).enumerate().for_each(|(node, dst)| {
            for (m, w) in self.node_stencil(node, axis, closure) {
                let src = field.node(m);
                for c in 0..comps {
                    dst[c] = dst[c] + src[c] * w;
                }
            }
        });
        Field::new(comps, out)
    }

    /// All first partials: `result[mu]`.
    pub fn gradient<V: FieldValue<T>>(&self, field: &Field<V>, closure: Closure) -> Result<Vec<Field<V>>> {
        (0..self.grid.dim()).map(|a| self.partial(field, a, closure)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::grid::{Boundary, GridSpec};

    fn grid(n: usize, lo: f64, hi: f64, b: Boundary) -> Grid<f64> {
        Grid::new(&GridSpec::uniform_1d(n, lo, hi, b)).unwrap()
    }

    #[test]
    fn linear_function_exact_with_one_sided_ends() {
        let g = grid(9, -1.0, 1.0, Boundary::Clamped);
        for order in [FdOrder::Second, FdOrder::Fourth, FdOrder::Sixth] {
            let d = Differentiator::new(&g, order).unwrap();
            let f = Field::from_fn(g.len(), 1, |n, _| 3.0 * g.point(n)[0] - 2.0);
            let df = d.partial(&f, 0, Closure::OneSided).unwrap();
            assert!(df.data().iter().all(|v| (v - 3.0).abs() < 1e-12));
        }
    }

    #[test]
    fn dirichlet_stencil_is_antisymmetric() {
        let g = grid(11, 0.0, 1.0, Boundary::Clamped);
        let d = Differentiator::new(&g, FdOrder::Fourth).unwrap();
        let mut m = vec![vec![0.0; 11]; 11];
        for j in 0..11 {
            for &(k, w) in d.stencil(0, Closure::Dirichlet, j) {
                m[j][k] = w;
            }
        }
        for j in 0..11 {
            for k in 0..11 {
                assert_eq!(m[j][k], -m[k][j]);
            }
        }
    }

    #[test]
    fn periodic_sine_fourth_order() {
        let g = grid(64, 0.0, 1.0, Boundary::Periodic);
        let d = Differentiator::new(&g, FdOrder::Fourth).unwrap();
        let tau = std::f64::consts::TAU;
        let f = Field::from_fn(g.len(), 1, |n, _| (tau * g.point(n)[0]).sin());
        let df = d.partial(&f, 0, Closure::Dirichlet).unwrap();
        let err = (0..g.len())
            .map(|n| (df.get(n, 0) - tau * (tau * g.point(n)[0]).cos()).abs())
            .fold(0.0, f64::max);
        // Truncation error is (2π)^5 h^4 / 30 ≈ 1.9e-5 absolute; 3.1e-6 relative to max|f'|.
        assert!(err / tau < 1e-5, "{err}");
        assert!(err > 1e-5);
    }

    #[test]
    fn second_derivative_orders() {
        let tau = std::f64::consts::TAU;
        for order in [FdOrder::Second, FdOrder::Fourth, FdOrder::Sixth] {
            let mut errs = Vec::new();
            for n in [41, 81] {
                let g = grid(n, -1.0, 1.0, Boundary::Clamped);
                let d = Differentiator::new(&g, order).unwrap();
                let f = Field::from_fn(n, 1, |m, _| (0.5 * tau * g.point(m)[0]).sin());
                let dd = d.second_partial(&f, 0, Closure::OneSided).unwrap();
                let e = (0..n)
                    .map(|m| (dd.get(m, 0) + 0.25 * tau * tau * f.get(m, 0)).abs())
                    .fold(0.0, f64::max);
                errs.push(e);
            }
            let observed = (errs[0] / errs[1]).log2();
            assert!(observed > order.as_usize() as f64 - 0.4, "{order:?}: {observed}");
        }
    }

    #[test]
    fn axis_out_of_range() {
        let g = grid(9, 0.0, 1.0, Boundary::Clamped);
        let d = Differentiator::new(&g, FdOrder::Fourth).unwrap();
        let f = Field::filled(9, 1, 1.0);
        assert!(matches!(d.partial(&f, 1, Closure::OneSided), Err(Error::AxisOutOfRange { .. })));
        assert!(d.partial(&f, 0, Closure::OneSided).unwrap().data().iter().all(|v| v.abs() < 1e-13));
    }
}
