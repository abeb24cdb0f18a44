//! Tensor-product Lagrange interpolation of grid fields.

use super::field::{Field, FieldValue};
use super::grid::Grid;
use super::stencil::fornberg_weights;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Interpolates every component of `field` at `q` using `points` nodes per
/// axis (centered where possible, shifted inside on clamped axes).
pub fn interpolate<T: Real, V: FieldValue<T>>(grid: &Grid<T>, field: &Field<V>, q: &[T], points: usize) -> Result<Vec<V>> {
    field.check_nodes(grid.len(), "field")?;
    if q.len() != grid.dim() {
        return Err(Error::shape(format!("point of dimension {} on a {}-d grid", q.len(), grid.dim())));
    }
    let mut windows: Vec<Vec<(usize, T)>> = Vec::with_capacity(grid.dim());
    for (a, ax) in grid.axes().iter().enumerate() {
        let p = points.min(ax.n).max(1);
        let s = (q[a] - ax.lo) / ax.spacing;
        let slack = T::lit(1e-9);
        if !ax.is_periodic() && (s < -slack || s > T::lit((ax.n - 1) as f64) + slack) {
            return Err(Error::InvalidArgument(format!("coordinate {} outside axis {a} bounds", q[a])));
        }
        let base = s.floor().to_i64().unwrap_or(0);
        let mut start = base - (p as i64 - 1) / 2;
        if !ax.is_periodic() {
            start = start.clamp(0, ax.n as i64 - p as i64);
        }
        let xs: Vec<T> = (0..p as i64).map(|k| T::lit((start + k) as f64)).collect();
        let w = fornberg_weights(s, &xs, 0);
        windows.push(
            (0..p)
                .map(|k| ((start + k as i64).rem_euclid(ax.n as i64) as usize, w[0][k]))
                .collect(),
        );
    }
    let comps = field.comps();
    let mut out = vec![V::zero(); comps];
    let mut idx = vec![0usize; grid.dim()];
    let mut counters = vec![0usize; grid.dim()];
    loop {
        let mut weight = T::one();
        for a in 0..grid.dim() {
            let (j, w) = windows[a][counters[a]];
            idx[a] = j;
            weight *= w;
        }
        let node = grid.node(&idx);
        for c in 0..comps {
            out[c] = out[c] + field.get(node, c) * weight;
        }
        let mut a = grid.dim();
        loop {
            if a == 0 {
                return Ok(out);
            }
            a -= 1;
            counters[a] += 1;
            if counters[a] < windows[a].len() {
                break;
            }
            counters[a] = 0;
        }
    }
}
