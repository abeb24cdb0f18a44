//! Gauge-covariant finite differences.
//!
//! Two realizations are provided:
//!
//! * [`covariant_derivative`] / [`second_covariant_derivative`]:
//!   `D_μ f = ∂_μ f ± i A_μ f` with a plain finite difference and a given
//!   `A_μ`. Covariant under gauge transformations up to truncation error.
//! * [`Transport`]: link-variable differences. For a stencil entry
//!   `(j, k)` the overlap phase `u_jk = ⟨Φ_j|Φ_k⟩ / |⟨Φ_j|Φ_k⟩|` transports
//!   `f_k` to node `j` before differencing. Under `Φ → e^{iλ}Φ` the links
//!   change by `e^{i(λ_k − λ_j)}`, so transported differences transform by
//!   the exact node phase. The continuum limit is the same `D_μ`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::Closure;
use crate::scalar::{braket, C64};
use crate::{Differentiator, Field, Tensor3};

/// Overlaps below this modulus give no usable link phase.
pub const LINK_FLOOR: f64 = 1e-8;

/// Transformation type of the differentiated object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Charge {
    /// Transforms like `χ` (`e^{−iλ}`): `D = ∂ + iA`.
    ChiLike,
    /// Transforms like `Φ` (`e^{+iλ}`): `D = ∂ − iA`.
    PhiLike,
}

impl Charge {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Charge::ChiLike => 1.0,
            Charge::PhiLike => -1.0,
        }
    }
}

/// `D_μ f = ∂_μ f + sign·i A_μ f` for every axis.
pub fn covariant_derivative(
    diff: &Differentiator,
    f: &Field<C64>,
    a_mu: &Field<f64>,
    charge: Charge,
    closure: Closure,
) -> Result<Vec<Field<C64>>> {
    let d = diff.grid().dim();
    a_mu.check_nodes(f.nodes(), "vector potential")?;
    if a_mu.comps() != d {
        return Err(Error::shape(format!("vector potential has {} components, grid dimension {d}", a_mu.comps())));
    }
    let s = charge.sign();
    (0..d)
        .map(|mu| {
            let mut df = diff.partial(f, mu, closure)?;
            for n in 0..f.nodes() {
                let ia = C64::new(0.0, s * a_mu.get(n, mu));
                for c in 0..f.comps() {
                    let v = df.get(n, c) + ia * f.get(n, c);
                    df.set(n, c, v);
                }
            }
            Ok(df)
        })
        .collect()
}

/// `∇_μ∇_ν f = D_μ D_ν f − Π^λ_{μν} D_λ f`, returned at index `μ·d + ν`.
pub fn second_covariant_derivative(
    diff: &Differentiator,
    f: &Field<C64>,
    a_mu: &Field<f64>,
    pi: &[Tensor3],
    charge: Charge,
    closure: Closure,
) -> Result<Vec<Field<C64>>> {
    let d = diff.grid().dim();
    if pi.len() != f.nodes() {
        return Err(Error::shape(format!("{} Π samples for {} nodes", pi.len(), f.nodes())));
    }
    let first = covariant_derivative(diff, f, a_mu, charge, closure)?;
    let nested: Vec<Vec<Field<C64>>> = first
        .iter()
        .map(|f_nu| covariant_derivative(diff, f_nu, a_mu, charge, closure))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(d * d);
    for mu in 0..d {
        for nu in 0..d {
            out.push(subtract_pi(nested[nu][mu].clone(), &first, pi, mu, nu));
        }
    }
    Ok(out)
}

fn subtract_pi(mut dd: Field<C64>, first: &[Field<C64>], pi: &[Tensor3], mu: usize, nu: usize) -> Field<C64> {
    for n in 0..dd.nodes() {
        for c in 0..dd.comps() {
            let corr = (0..first.len()).fold(C64::new(0.0, 0.0), |acc, l| acc + first[l].get(n, c) * pi[n][(l, mu, nu)]);
            let v = dd.get(n, c) - corr;
            dd.set(n, c, v);
        }
    }
    dd
}

/// Link-variable stencils built from a conditional amplitude `Φ`.
#[derive(Debug, Clone)]
pub struct Transport {
    // entries[axis][node] = (neighbour node, weight, link phase u_jk)
    entries: Vec<Vec<Vec<(usize, f64, C64)>>>,
    second: Vec<Vec<Vec<(usize, f64, C64)>>>,
    degenerate: usize,
}

type Row = Vec<(usize, f64, C64)>;

fn link_rows(
    nodes: usize,
    phi: &Field<C64>,
    stencil: impl Fn(usize) -> Vec<(usize, f64)> + Sync,
) -> (Vec<Row>, usize) {
    let per_node: Vec<(Row, usize)> = (0..nodes)
        .into_par_iter()
        .map(|j| {
            let mut bad = 0;
            let row = stencil(j)
                .into_iter()
                .map(|(k, w)| {
                    let z = braket(phi.node(j), phi.node(k));
                    let r = z.norm();
                    let u = if r > LINK_FLOOR {
                        z / r
                    } else {
                        bad += 1;
                        C64::new(1.0, 0.0)
                    };
                    (k, w, u)
                })
                .collect();
            (row, bad)
        })
        .collect();
    let bad = per_node.iter().map(|(_, b)| b).sum();
    (per_node.into_iter().map(|(r, _)| r).collect(), bad)
}

fn apply_rows(table: &[Row], f: &Field<C64>, charge: Charge) -> Result<Field<C64>> {
    f.check_nodes(table.len(), "field")?;
    let comps = f.comps();
    let mut out = vec![C64::new(0.0, 0.0); f.data().len()];
    out.par_chunks_mut(comps).enumerate().for_each(|(j, dst)| {
        for &(k, w, u) in &table[j] {
            let t = match charge {
                Charge::PhiLike => u.conj(),
                Charge::ChiLike => u,
            } * w;
            for c in 0..comps {
                dst[c] += f.get(k, c) * t;
            }
        }
    });
    Field::new(comps, out)
}

impl Transport {
    pub fn new(diff: &Differentiator, phi: &Field<C64>, closure: Closure) -> Result<Self> {
        let grid = diff.grid();
        phi.check_nodes(grid.len(), "conditional amplitude")?;
        let mut degenerate = 0;
        let mut entries = Vec::with_capacity(grid.dim());
        let mut second = Vec::with_capacity(grid.dim());
        for axis in 0..grid.dim() {
            let (rows, bad) = link_rows(grid.len(), phi, |j| diff.node_stencil(j, axis, closure).collect());
            degenerate += bad;
            entries.push(rows);
            // Degenerate links are counted on first-difference stencils only.
            let (rows, _) = link_rows(grid.len(), phi, |j| diff.node_stencil2(j, axis, closure).collect());
            second.push(rows);
        }
        Ok(Self {
            entries,
            second,
            degenerate,
        })
    }

    /// Stencil entries whose overlap fell below [`LINK_FLOOR`].
    pub fn degenerate_links(&self) -> usize {
        self.degenerate
    }

    /// Transported difference of `f` along `axis`.
    pub fn derivative(&self, f: &Field<C64>, axis: usize, charge: Charge) -> Result<Field<C64>> {
        let table = self.entries.get(axis).ok_or(Error::AxisOutOfRange {
            axis,
            dim: self.entries.len(),
        })?;
        apply_rows(table, f, charge)
    }

    /// Transported second difference along `axis`: `D_μD_μ f` at the same
    /// order as [`Transport::derivative`], from a single compact stencil.
    pub fn second_derivative(&self, f: &Field<C64>, axis: usize, charge: Charge) -> Result<Field<C64>> {
        let table = self.second.get(axis).ok_or(Error::AxisOutOfRange {
            axis,
            dim: self.second.len(),
        })?;
        apply_rows(table, f, charge)
    }

    /// `A_μ = Σ_k w_k arg u_jk`, the difference of the local phase function
    /// `θ_j(Q) = arg⟨Φ_j|Φ(Q)⟩`, whose slope at `Q_j` is `−i⟨Φ|∂_μΦ⟩`.
    pub fn connection(&self) -> Field<f64> {
        let d = self.entries.len();
        let nodes = self.entries.first().map_or(0, Vec::len);
        Field::from_fn(nodes, d, |j, mu| self.entries[mu][j].iter().map(|&(_, w, u)| w * u.arg()).sum())
    }
}
