//! Gauge and coordinate invariance sweeps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ef_geometry::{compute_geometry, EfGeometry};
use crate::error::{Error, Result};
use crate::factorization::{
    compute_vector_potential, gauge_transform, geometric_phase, random_smooth_gauge, ring_loop, smooth_loop_gauge,
    wilson_loop_phase, wrap_phase, Factorization, GaugeConvention, factorize,
};
use crate::geometry::{transform_pi, ChartSpec, CoordinateChart};
use crate::models::ModelSpec;
use crate::numerics::interp::interpolate;
use crate::numerics::{hermitian_eigensolve, Closure, FdOrder};
use crate::residuals::{evaluate_residuals, excluded_nodes, ResidualMode, ResidualNorms};
use crate::scalar::C64;
use crate::solver::{build_full_hamiltonian, solve_eigenstates, Discretization};
use crate::{Field, Grid};

/// Spreads for one gauge function, each against the untransformed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeSample {
    pub seed: u64,
    pub eps_bo: f64,
    pub eps_geo: f64,
    pub g: f64,
    pub h: f64,
    pub residual_norms: f64,
    /// `max |A'_μ − A_μ − D_μλ|` with the grid derivative of `λ`.
    pub a_shift_grid: f64,
    /// `max |A'_μ − A_μ − ∂_μλ| / max |∂_μλ|` with the exact gradient.
    pub a_shift_exact: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaugeSweepReport {
    pub count: usize,
    pub modes: usize,
    pub samples: Vec<GaugeSample>,
    /// Largest spread over `ε_BO, ε_geo, g, h` and the residual norms.
    pub max_spread: f64,
    pub max_a_shift_grid: f64,
    pub max_a_shift_exact: f64,
}

fn max_diff(a: impl Iterator<Item = f64>) -> f64 {
    a.fold(0.0, f64::max)
}

fn norm_values(n: &ResidualNorms) -> [f64; 6] {
    [
        n.nuclear_norm,
        n.electronic_norm,
        n.phi_projection,
        n.form_agreement,
        n.projected.tangent_norm,
        n.projected.frame_norm,
    ]
}

/// Applies `count` seeded gauge functions (`seed, seed + 1, …`) to a
/// stationary factorization and measures how much every gauge-invariant
/// quantity moves. Unmasked nodes only.
pub fn gauge_sweep(
    disc: &Discretization,
    fact: &Factorization,
    h_bo: &[DMatrix<C64>],
    energy: f64,
    seed: u64,
    count: usize,
    modes: usize,
) -> Result<GaugeSweepReport> {
    let mut report = GaugeSweepReport {
        count,
        modes,
        ..Default::default()
    };
    if count == 0 {
        return Ok(report);
    }
    let mode = ResidualMode::Stationary { energy };
    let base_geo = compute_geometry(disc, fact, h_bo)?;
    let base_norms = evaluate_residuals(disc, fact, &base_geo, h_bo, &mode)?.norms;
    let base_a = compute_vector_potential(disc, fact)?.a_mu;
    let live: Vec<usize> = (0..fact.nodes()).filter(|&n| !fact.mask[n]).collect();
    let d = disc.dim();
    for k in 0..count as u64 {
        let s = seed.wrapping_add(k);
        let lam = random_smooth_gauge(&disc.grid, s, modes)?;
        let f = gauge_transform(fact, &lam.values)?;
        let geo = compute_geometry(disc, &f, h_bo)?;
        let norms = evaluate_residuals(disc, &f, &geo, h_bo, &mode)?.norms;
        let a = compute_vector_potential(disc, &f)?.a_mu;
        let grid_grad = disc.diff.gradient(&Field::new(1, lam.values.clone())?, Closure::OneSided)?;
        let scale = lam.gradient.data().iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
        let shift = |n: usize, mu: usize| a.get(n, mu) - base_a.get(n, mu);
        let sample = GaugeSample {
            seed: s,
            eps_bo: max_diff(live.iter().map(|&n| (geo.eps_bo[n] - base_geo.eps_bo[n]).abs())),
            eps_geo: max_diff(live.iter().map(|&n| (geo.eps_geo[n] - base_geo.eps_geo[n]).abs())),
            g: max_diff(live.iter().flat_map(|&n| {
                let (g, g0) = (&geo.g, &base_geo.g);
                (0..d * d).map(move |i| (g.get(n, i) - g0.get(n, i)).abs())
            })),
            h: max_diff(live.iter().flat_map(|&n| {
                let (h, h0) = (&geo.h, &base_geo.h);
                (0..d * d).map(move |i| (h.get(n, i) - h0.get(n, i)).norm())
            })),
            residual_norms: max_diff(
                norm_values(&norms)
                    .iter()
                    .zip(norm_values(&base_norms))
                    .map(|(x, y)| (x - y).abs()),
            ),
            a_shift_grid: max_diff(live.iter().flat_map(|&n| {
                let g = &grid_grad;
                (0..d).map(move |mu| (shift(n, mu) - g[mu].get(n, 0)).abs())
            })),
            a_shift_exact: max_diff(live.iter().flat_map(|&n| {
                let g = &lam.gradient;
                (0..d).map(move |mu| (shift(n, mu) - g.get(n, mu)).abs())
            })) / scale,
        };
        report.max_spread = report
            .max_spread
            .max(sample.eps_bo)
            .max(sample.eps_geo)
            .max(sample.g)
            .max(sample.h)
            .max(sample.residual_norms);
        report.max_a_shift_grid = report.max_a_shift_grid.max(sample.a_shift_grid);
        report.max_a_shift_exact = report.max_a_shift_exact.max(sample.a_shift_exact);
        report.samples.push(sample);
    }
    Ok(report)
}

/// Geometric phase of an adiabatic level around a periodic one-dimensional
/// grid, by two routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPhase {
    pub level: usize,
    /// `−arg Π⟨v_j|v_{j+1}⟩`, independent of the phases of the `v_j`.
    pub wilson: f64,
    /// `∮ A_μ dQ^μ` (trapezoid) in a smooth single-valued gauge.
    pub line_integral: f64,
    /// Largest change of `wilson` (mod 2π) under the gauge functions applied.
    pub gauge_spread: f64,
    pub min_gap: f64,
}

/// Adiabatic states of level `level` around the ring, their Berry phase,
/// and its change under `count` seeded gauge functions.
pub fn adiabatic_loop_phase(
    disc: &Discretization,
    h_bo: &[DMatrix<C64>],
    level: usize,
    seed: u64,
    count: usize,
    modes: usize,
) -> Result<LoopPhase> {
    let grid = &disc.grid;
    if grid.dim() != 1 || !grid.all_periodic() {
        return Err(Error::InvalidArgument("loop phase needs a one-dimensional periodic grid".into()));
    }
    let mut states = Vec::with_capacity(grid.len());
    let mut min_gap = f64::INFINITY;
    for h in h_bo {
        let pairs = hermitian_eigensolve(h, h.nrows())?;
        let v = pairs.get(level).ok_or_else(|| {
            Error::InvalidArgument(format!("level {level} of a {}-level Hamiltonian", h.nrows()))
        })?;
        if let Some(up) = pairs.get(level + 1) {
            min_gap = min_gap.min(up.value - v.value);
        }
        if level > 0 {
            min_gap = min_gap.min(v.value - pairs[level - 1].value);
        }
        states.push(v.vector.as_slice().to_vec());
    }
    let wilson = wilson_loop_phase(&states);
    let (smooth, _) = smooth_loop_gauge(&states);
    let phi = Field::from_nodes(&smooth)?;
    let fact = Factorization {
        chi: Field::filled(grid.len(), 1, C64::new(1.0, 0.0)),
        phi,
        mask: vec![false; grid.len()],
    };
    let a = compute_vector_potential(disc, &fact)?.a_mu;
    let line_integral = geometric_phase(grid, &a, &ring_loop(grid))?;
    let mut gauge_spread = 0.0_f64;
    for k in 0..count as u64 {
        let lam = random_smooth_gauge(grid, seed.wrapping_add(k), modes)?;
        let turned: Vec<Vec<C64>> = states
            .iter()
            .zip(&lam.values)
            .map(|(v, l)| v.iter().map(|z| z * C64::from_polar(1.0, *l)).collect())
            .collect();
        gauge_spread = gauge_spread.max(wrap_phase(wilson_loop_phase(&turned) - wilson).abs());
    }
    Ok(LoopPhase {
        level,
        wilson,
        line_integral,
        gauge_spread,
        min_gap: if min_gap.is_finite() { min_gap } else { 0.0 },
    })
}

/// Differences between a model and the same model on barred coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartReport {
    pub energies: Vec<f64>,
    pub barred_energies: Vec<f64>,
    /// `|Ē_k − E_k| / |E_k|`.
    pub energy_deltas: Vec<f64>,
    pub max_energy_delta: f64,
    /// Pointwise `|ε̄(Q̄) − ε(Q(Q̄))|`, base fields interpolated.
    pub eps_bo_delta: f64,
    pub eps_geo_delta: f64,
    pub nodes_compared: usize,
    /// `max |Π̄_rule − Π̄_direct|` and `max |Π̄_direct|`.
    pub pi_residual: f64,
    pub pi_scale: f64,
}

/// Attaches `chart` to a chart-free model; each grid axis is mapped through
/// the chart at the centre of the other axes.
pub fn barred_model(base: &ModelSpec, chart: &ChartSpec) -> Result<ModelSpec> {
    if base.chart.is_some() {
        return Err(Error::InvalidArgument(format!(
            "model `{}` already carries a chart; sweep its unbarred form",
            base.name
        )));
    }
    let c = CoordinateChart::new(chart.clone())?;
    let centre: Vec<f64> = base.grid.axes.iter().map(|a| 0.5 * (a.lo + a.hi)).collect();
    let mut spec = base.clone();
    spec.chart = Some(chart.clone());
    for (mu, ax) in spec.grid.axes.iter_mut().enumerate() {
        let map = |x: f64| {
            let mut q = centre.clone();
            q[mu] = x;
            c.forward(&q)[mu]
        };
        let (lo, hi) = (map(ax.lo), map(ax.hi));
        if !(hi > lo) {
            return Err(Error::ChartDegeneracy {
                location: format!("axis {mu}"),
                detail: "chart does not preserve the axis orientation".into(),
            });
        }
        ax.lo = lo;
        ax.hi = hi;
    }
    Ok(spec)
}

struct Pipeline {
    energies: Vec<f64>,
    disc: Discretization,
    fact: Factorization,
    geo: EfGeometry,
}

fn ground_pipeline(spec: &ModelSpec, order: FdOrder, states: usize) -> Result<(Pipeline, crate::models::Model)> {
    let model = spec.instantiate()?;
    let disc = model.discretize(order)?;
    let h = build_full_hamiltonian(&disc, &model.h_bo)?;
    let sts = solve_eigenstates(&h, &disc, states.max(1))?;
    let energies = sts.iter().map(|s| s.energy.unwrap_or(f64::NAN)).collect();
    let fact = factorize(&sts[0], &disc, &GaugeConvention::ChiRealPositive)?;
    let geo = compute_geometry(&disc, &fact, h.bo_samples())?;
    Ok((Pipeline { energies, disc, fact, geo }, model))
}

/// Solves `base` and its barred version and compares spectra, the scalar
/// fields `ε_BO`, `ε_geo`, and the transformation rule of Π.
pub fn chart_sweep(base: &ModelSpec, chart: &ChartSpec, order: FdOrder, states: usize) -> Result<ChartReport> {
    let barred = barred_model(base, chart)?;
    let (a, _) = ground_pipeline(base, order, states)?;
    let (b, bm) = ground_pipeline(&barred, order, states)?;
    let c = bm.chart.as_ref().expect("barred model has a chart");

    let energy_deltas: Vec<f64> = a
        .energies
        .iter()
        .zip(&b.energies)
        .map(|(e, eb)| (eb - e).abs() / e.abs().max(f64::MIN_POSITIVE))
        .collect();

    let grid_a: &Grid = &a.disc.grid;
    let skip_a = excluded_nodes(&a.disc, &a.fact);
    let skip_b = excluded_nodes(&b.disc, &b.fact);
    let eps_a = Field::from_fn(grid_a.len(), 2, |n, k| if k == 0 { a.geo.eps_bo[n] } else { a.geo.eps_geo[n] });
    const POINTS: usize = 6;
    let (mut d_bo, mut d_geo, mut compared) = (0.0_f64, 0.0_f64, 0);
    for n in (0..b.disc.nodes()).filter(|&n| !skip_b[n]) {
        let q = c.inverse(&b.disc.grid.point(n));
        // Skip when the base interpolation window touches excluded nodes.
        let near = nearest_window(grid_a, &q, POINTS);
        if near.is_empty() || near.iter().any(|&m| skip_a[m]) {
            continue;
        }
        let v = interpolate(grid_a, &eps_a, &q, POINTS)?;
        d_bo = d_bo.max((b.geo.eps_bo[n] - v[0]).abs());
        d_geo = d_geo.max((b.geo.eps_geo[n] - v[1]).abs());
        compared += 1;
    }

    let (mut pi_res, mut pi_scale) = (0.0_f64, 0.0_f64);
    for n in 0..b.disc.nodes() {
        let qbar = b.disc.grid.point(n);
        let q = c.inverse(&qbar);
        let direct = &b.disc.samples.pi[n];
        let rule = transform_pi(c, &a.disc.metric.pi(&q)?, &q)?;
        let d = direct.dim();
        for l in 0..d {
            for mu in 0..d {
                for nu in 0..d {
                    pi_res = pi_res.max((rule[(l, mu, nu)] - direct[(l, mu, nu)]).abs());
                    pi_scale = pi_scale.max(direct[(l, mu, nu)].abs());
                }
            }
        }
    }

    Ok(ChartReport {
        max_energy_delta: energy_deltas.iter().copied().fold(0.0, f64::max),
        energies: a.energies,
        barred_energies: b.energies,
        energy_deltas,
        eps_bo_delta: d_bo,
        eps_geo_delta: d_geo,
        nodes_compared: compared,
        pi_residual: pi_res,
        pi_scale,
    })
}

// Nodes of the interpolation window around `q`; empty if `q` is off the grid.
fn nearest_window(grid: &Grid, q: &[f64], points: usize) -> Vec<usize> {
    let mut idx = Vec::with_capacity(grid.dim());
    for (a, ax) in grid.axes().iter().enumerate() {
        let s = ((q[a] - ax.lo) / ax.spacing).round() as i64;
        let half = points as i64 / 2;
        let range: Vec<usize> = (s - half..=s + half)
            .filter_map(|i| {
                if ax.is_periodic() {
                    Some(i.rem_euclid(ax.n as i64) as usize)
                } else {
                    (0..ax.n as i64).contains(&i).then_some(i as usize)
                }
            })
            .collect();
        if range.is_empty() {
            return Vec::new();
        }
        idx.push(range);
    }
    // Tensor product of the per-axis ranges.
    let mut out = vec![grid.node(&vec![0; grid.dim()])];
    out.clear();
    let mut cur = vec![0usize; grid.dim()];
    fn rec(grid: &Grid, idx: &[Vec<usize>], cur: &mut Vec<usize>, axis: usize, out: &mut Vec<usize>) {
        if axis == idx.len() {
            out.push(grid.node(cur));
            return;
        }
        for &i in &idx[axis] {
            cur[axis] = i;
            rec(grid, idx, cur, axis + 1, out);
        }
    }
    rec(grid, &idx, &mut cur, 0, &mut out);
    out
}
