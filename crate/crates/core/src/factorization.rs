//! Extraction of `χ` and `Φ` from `Ψ`, gauge transformations, gauge
//! potentials and geometric phases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ef_geometry::{Charge, Transport};
use crate::error::{Error, Result};
use crate::numerics::Closure;
use crate::scalar::{braket, norm_sqr, C64};
use crate::solver::{Discretization, FullState};
use crate::{Field, Grid};

/// Nodes with `|χ|² < NODE_RATIO · max|χ|²` are masked.
pub const NODE_RATIO: f64 = 1e-12;
/// Smallest accepted `|⟨v_ref|Φ⟩|` under the reference-overlap convention.
pub const REFERENCE_FLOOR: f64 = 1e-6;
/// Allowed deviation of `⟨Φ|Φ⟩` from one off-mask.
pub const PHI_NORM_TOLERANCE: f64 = 1e-10;
/// Allowed deviation of `∫|Ψ|²` from one on input.
pub const PSI_NORM_TOLERANCE: f64 = 1e-8;

/// How the phase of `χ` is fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum GaugeConvention {
    /// `χ = |χ|`; all phase sits in `Φ`.
    ChiRealPositive,
    /// `⟨v_ref|Φ(Q)⟩` real positive everywhere.
    ReferenceOverlap { reference: Vec<C64> },
}

impl GaugeConvention {
    /// Reference-overlap convention with the `level`-th basis vector.
    pub fn reference_level(level: usize, levels: usize) -> Result<Self> {
        if level >= levels {
            return Err(Error::InvalidArgument(format!(
                "reference level {level} out of range for {levels} levels"
            )));
        }
        let mut reference = vec![C64::new(0.0, 0.0); levels];
        reference[level] = C64::new(1.0, 0.0);
        Ok(GaugeConvention::ReferenceOverlap { reference })
    }
}

/// `Ψ = χ Φ` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub chi: Field<C64>,
    pub phi: Field<C64>,
    /// `true` where `|χ|²` fell below the node threshold; `Φ` there is a
    /// copy of the nearest unmasked node along axis 0.
    pub mask: Vec<bool>,
}

impl Factorization {
    pub fn nodes(&self) -> usize {
        self.mask.len()
    }

    pub fn levels(&self) -> usize {
        self.phi.comps()
    }

    pub fn masked_fraction(&self) -> f64 {
        self.mask.iter().filter(|&&m| m).count() as f64 / self.mask.len().max(1) as f64
    }

    /// Mask grown by `reach` nodes along every axis: the nodes whose
    /// derivative stencils read filled `Φ` values.
    pub fn halo(&self, grid: &Grid, reach: usize) -> Vec<bool> {
        let r = reach as i64;
        let mut out = self.mask.clone();
        // One axis at a time gives the full box, which mixed stencils need.
        for axis in 0..grid.dim() {
            let ax = &grid.axes()[axis];
            let n_ax = ax.n as i64;
            let prev = out.clone();
            for (n, _) in prev.iter().enumerate().filter(|(_, &m)| m) {
                let j = grid.index_along(n, axis) as i64;
                for i in j - r..=j + r {
                    let i = if ax.is_periodic() {
                        i.rem_euclid(n_ax)
                    } else if (0..n_ax).contains(&i) {
                        i
                    } else {
                        continue;
                    };
                    out[grid.with_index(n, axis, i as usize)] = true;
                }
            }
        }
        out
    }

    /// `χ Φ` at every node.
    pub fn product(&self) -> Field<C64> {
        Field::from_fn(self.nodes(), self.levels(), |n, c| self.chi.get(n, 0) * self.phi.get(n, c))
    }

    /// `max |χΦ − Ψ|` over unmasked nodes.
    pub fn reconstruction_error(&self, psi: &Field<C64>) -> Result<f64> {
        psi.check_nodes(self.nodes(), "wavefunction")?;
        let prod = self.product();
        Ok((0..self.nodes())
            .filter(|&n| !self.mask[n])
            .flat_map(|n| (0..self.levels()).map(move |c| (n, c)))
            .fold(0.0, |m, (n, c)| m.max((prod.get(n, c) - psi.get(n, c)).norm())))
    }

    /// `max |⟨Φ|Φ⟩ − 1|` over unmasked nodes.
    pub fn phi_norm_deviation(&self) -> f64 {
        (0..self.nodes())
            .filter(|&n| !self.mask[n])
            .fold(0.0, |m, n| m.max((norm_sqr(self.phi.node(n)) - 1.0).abs()))
    }

    /// `|χ|²` at every node.
    pub fn density(&self) -> Vec<f64> {
        self.chi.data().iter().map(|z| z.norm_sqr()).collect()
    }
}

/// Splits a normalized `Ψ` into `χ` and `Φ`.
pub fn factorize(psi: &FullState, disc: &Discretization, convention: &GaugeConvention) -> Result<Factorization> {
    factorize_with(psi, disc, convention, NODE_RATIO)
}

/// [`factorize`] with the node threshold `|χ|² < node_ratio · max|χ|²`.
pub fn factorize_with(
    psi: &FullState,
    disc: &Discretization,
    convention: &GaugeConvention,
    node_ratio: f64,
) -> Result<Factorization> {
    if !(node_ratio >= 0.0 && node_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("node ratio {node_ratio} outside [0, 1)")));
    }
    let field = &psi.psi;
    field.check_nodes(disc.nodes(), "wavefunction")?;
    let levels = field.comps();
    let density: Vec<f64> = (0..field.nodes()).map(|n| norm_sqr(field.node(n))).collect();
    let max = density.iter().fold(0.0_f64, |m, &r| m.max(r));
    if max == 0.0 || !max.is_finite() {
        return Err(Error::ZeroState);
    }
    let norm = disc.measure.integrate_real(&density)?;
    if (norm - 1.0).abs() > PSI_NORM_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "wavefunction norm {norm} differs from 1 by more than {PSI_NORM_TOLERANCE:e}"
        )));
    }
    let mask: Vec<bool> = density.iter().map(|&r| r < node_ratio * max).collect();
    if mask.iter().all(|&m| m) {
        return Err(Error::AllMasked);
    }
    let reference = match convention {
        GaugeConvention::ChiRealPositive => None,
        GaugeConvention::ReferenceOverlap { reference } => {
            if reference.len() != levels {
                return Err(Error::shape(format!(
                    "reference vector has {} entries, wavefunction {levels} levels",
                    reference.len()
                )));
            }
            let r = norm_sqr(reference).sqrt();
            if r == 0.0 {
                return Err(Error::GaugeFixing("reference vector is zero".into()));
            }
            Some(reference.iter().map(|z| z / r).collect::<Vec<_>>())
        }
    };

    let mut chi = Field::filled(field.nodes(), 1, C64::new(0.0, 0.0));
    let mut phi = Field::filled(field.nodes(), levels, C64::new(0.0, 0.0));
    for n in (0..field.nodes()).filter(|&n| !mask[n]) {
        let modulus = density[n].sqrt();
        let phase = match &reference {
            None => C64::new(1.0, 0.0),
            Some(v) => {
                let z = braket(v, field.node(n)) / modulus;
                if z.norm() < REFERENCE_FLOOR {
                    return Err(Error::GaugeFixing(format!(
                        "|⟨v_ref|Φ⟩| = {:.3e} at node {n} is below {REFERENCE_FLOOR:e}",
                        z.norm()
                    )));
                }
                z / z.norm()
            }
        };
        let c = phase * modulus;
        chi.set(n, 0, c);
        for (k, z) in field.node(n).iter().enumerate() {
            phi.set(n, k, z / c);
        }
    }
    for n in (0..field.nodes()).filter(|&n| mask[n]) {
        let src = nearest_unmasked(&disc.grid, &mask, n);
        let fill = phi.node(src).to_vec();
        chi.set(n, 0, braket(&fill, field.node(n)));
        phi.node_mut(n).copy_from_slice(&fill);
    }
    Ok(Factorization { chi, phi, mask })
}

// Nearest unmasked node along axis 0 (lower index on ties); falls back to
// the nearest in node order when the whole line is masked.
fn nearest_unmasked(grid: &Grid, mask: &[bool], node: usize) -> usize {
    let n0 = grid.axes()[0].n;
    let j = grid.index_along(node, 0);
    let periodic = grid.axes()[0].is_periodic();
    for dist in 1..n0 {
        let mut candidates = Vec::with_capacity(2);
        if j >= dist {
            candidates.push(j - dist);
        } else if periodic {
            candidates.push(j + n0 - dist);
        }
        if j + dist < n0 {
            candidates.push(j + dist);
        } else if periodic {
            candidates.push(j + dist - n0);
        }
        if let Some(k) = candidates
            .into_iter()
            .map(|k| grid.with_index(node, 0, k))
            .find(|&m| !mask[m])
        {
            return k;
        }
    }
    (0..mask.len())
        .filter(|&m| !mask[m])
        .min_by_key(|&m| (m.abs_diff(node), m))
        .expect("at least one unmasked node")
}

/// `χ → e^{−iλ}χ`, `Φ → e^{iλ}Φ`.
pub fn gauge_transform(fact: &Factorization, lambda: &[f64]) -> Result<Factorization> {
    if lambda.len() != fact.nodes() {
        return Err(Error::shape(format!("{} gauge values for {} nodes", lambda.len(), fact.nodes())));
    }
    let chi = Field::from_fn(fact.nodes(), 1, |n, _| fact.chi.get(n, 0) * C64::from_polar(1.0, -lambda[n]));
    let phi = Field::from_fn(fact.nodes(), fact.levels(), |n, c| {
        fact.phi.get(n, c) * C64::from_polar(1.0, lambda[n])
    });
    Ok(Factorization {
        chi,
        phi,
        mask: fact.mask.clone(),
    })
}

/// Gauge potentials of a factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeData {
    /// `A_μ`, one component per axis.
    pub a_mu: Field<f64>,
    /// `A₀`, present for time-dependent runs.
    pub a_0: Option<Field<f64>>,
    /// `max |Re⟨Φ|∂_μΦ⟩|` off-mask with a plain difference. Vanishes in the
    /// continuum; on the grid it is a truncation-error gauge.
    pub imag_residue: f64,
    /// Stencil links with vanishing overlap.
    pub degenerate_links: usize,
}

fn check_phi_normalized(fact: &Factorization) -> Result<()> {
    let dev = fact.phi_norm_deviation();
    if dev > PHI_NORM_TOLERANCE {
        return Err(Error::Unnormalized { deviation: dev });
    }
    Ok(())
}

/// `A_μ = −i⟨Φ|∂_μΦ⟩`.
///
/// Evaluated as the difference of the local phase `arg⟨Φ_j|Φ(Q)⟩`, which is
/// real by construction and shifts by exactly the differenced `λ` under a
/// gauge transformation.
pub fn compute_vector_potential(disc: &Discretization, fact: &Factorization) -> Result<GaugeData> {
    check_phi_normalized(fact)?;
    let transport = Transport::new(&disc.diff, &fact.phi, Closure::OneSided)?;
    let a_mu = transport.connection();
    let mut residue = 0.0_f64;
    for mu in 0..disc.dim() {
        let dphi = disc.diff.partial(&fact.phi, mu, Closure::OneSided)?;
        for n in (0..fact.nodes()).filter(|&n| !fact.mask[n]) {
            residue = residue.max(braket(fact.phi.node(n), dphi.node(n)).re.abs());
        }
    }
    Ok(GaugeData {
        a_mu,
        a_0: None,
        imag_residue: residue,
        degenerate_links: transport.degenerate_links(),
    })
}

/// `A_μ = Im⟨Φ|∂_μΦ⟩` from a plain difference of `Φ`, for comparison with
/// [`compute_vector_potential`].
pub fn vector_potential_plain(disc: &Discretization, phi: &Field<C64>) -> Result<Field<f64>> {
    let d = disc.dim();
    let grads = disc.diff.gradient(phi, Closure::OneSided)?;
    Ok(Field::from_fn(phi.nodes(), d, |n, mu| braket(phi.node(n), grads[mu].node(n)).im))
}

/// `A₀ = −i⟨Φ(t)|∂_tΦ(t)⟩` from snapshots at `t − dt`, `t`, `t + dt`,
/// central in time on the phase of `⟨Φ(t)|Φ(t ± dt)⟩`.
pub fn compute_scalar_potential(
    prev: &Field<C64>,
    now: &Field<C64>,
    next: &Field<C64>,
    dt: f64,
) -> Result<Field<f64>> {
    if prev.nodes() != now.nodes() || next.nodes() != now.nodes() {
        return Err(Error::shape("snapshots live on different grids"));
    }
    if prev.comps() != now.comps() || next.comps() != now.comps() {
        return Err(Error::shape("snapshots have different level counts"));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("time step {dt} must be positive")));
    }
    Ok(Field::from_fn(now.nodes(), 1, |n, _| {
        let fwd = braket(now.node(n), next.node(n)).arg();
        let bwd = braket(now.node(n), prev.node(n)).arg();
        (fwd - bwd) / (2.0 * dt)
    }))
}

/// Transported time derivatives `(D_tχ, D_tΦ)` at the middle snapshot.
pub fn time_covariant_derivatives(
    prev: &Factorization,
    now: &Factorization,
    next: &Factorization,
    dt: f64,
) -> Result<(Field<C64>, Field<C64>)> {
    compute_scalar_potential(&prev.phi, &now.phi, &next.phi, dt)?;
    let nodes = now.nodes();
    let levels = now.levels();
    let mut dchi = Field::filled(nodes, 1, C64::new(0.0, 0.0));
    let mut dphi = Field::filled(nodes, levels, C64::new(0.0, 0.0));
    let link = |a: &[C64], b: &[C64]| {
        let z = braket(a, b);
        if z.norm() > crate::ef_geometry::LINK_FLOOR {
            z / z.norm()
        } else {
            C64::new(1.0, 0.0)
        }
    };
    let inv = 1.0 / (2.0 * dt);
    for n in 0..nodes {
        let up = link(now.phi.node(n), next.phi.node(n));
        let um = link(now.phi.node(n), prev.phi.node(n));
        dchi.set(n, 0, (next.chi.get(n, 0) * up - prev.chi.get(n, 0) * um) * inv);
        let raw: Vec<C64> = (0..levels)
            .map(|c| (next.phi.get(n, c) * up.conj() - prev.phi.get(n, c) * um.conj()) * inv)
            .collect();
        let along = braket(now.phi.node(n), &raw);
        for c in 0..levels {
            dphi.set(n, c, raw[c] - now.phi.get(n, c) * along);
        }
    }
    Ok((dchi, dphi))
}

/// Wraps an angle into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// `∮ A_μ dQ^μ` along a closed node sequence (first node repeated at the
/// end), trapezoidal per segment, wrapped into `(−π, π]`.
pub fn geometric_phase(grid: &Grid, a_mu: &Field<f64>, path: &[usize]) -> Result<f64> {
    a_mu.check_nodes(grid.len(), "vector potential")?;
    if a_mu.comps() != grid.dim() {
        return Err(Error::shape(format!(
            "vector potential has {} components, grid dimension {}",
            a_mu.comps(),
            grid.dim()
        )));
    }
    let (first, last) = match (path.first(), path.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::InvalidArgument("empty loop".into())),
    };
    if path.len() < 3 || first != last {
        return Err(Error::OpenLoop { first, last });
    }
    if let Some(&bad) = path.iter().find(|&&n| n >= grid.len()) {
        return Err(Error::InvalidArgument(format!("loop node {bad} outside the grid")));
    }
    let mut total = 0.0;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (pa, pb) = (grid.point(a), grid.point(b));
        for (mu, ax) in grid.axes().iter().enumerate() {
            let mut dq = pb[mu] - pa[mu];
            if ax.is_periodic() {
                let len = ax.extent();
                dq -= len * (dq / len).round();
            }
            total += 0.5 * (a_mu.get(a, mu) + a_mu.get(b, mu)) * dq;
        }
    }
    Ok(wrap_phase(total))
}

/// Closed loop around every node of a one-dimensional periodic grid.
pub fn ring_loop(grid: &Grid) -> Vec<usize> {
    (0..grid.len()).chain(std::iter::once(0)).collect()
}

/// Berry phase `−arg Π ⟨v_j|v_{j+1}⟩` of a closed sequence of states
/// (the last state is joined back to the first). Gauge-invariant.
pub fn wilson_loop_phase(states: &[Vec<C64>]) -> f64 {
    let n = states.len();
    let prod = (0..n).fold(C64::new(1.0, 0.0), |acc, j| acc * braket(&states[j], &states[(j + 1) % n]));
    wrap_phase(-prod.arg())
}

/// Rephases a closed sequence of states into a smooth single-valued gauge.
///
/// States are parallel transported (`⟨v_j|v_{j+1}⟩` real positive); the
/// holonomy `γ` left over at closure is spread linearly along the loop.
/// Returns the rephased states and `γ`.
pub fn smooth_loop_gauge(states: &[Vec<C64>]) -> (Vec<Vec<C64>>, f64) {
    let n = states.len();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let mut out: Vec<Vec<C64>> = Vec::with_capacity(n);
    out.push(states[0].clone());
    for j in 1..n {
        let z = braket(&out[j - 1], &states[j]);
        let u = if z.norm() > 0.0 { z.conj() / z.norm() } else { C64::new(1.0, 0.0) };
        out.push(states[j].iter().map(|v| v * u).collect());
    }
    // Closing link phase; spread it over the loop so the gauge is single-valued.
    let gamma = -braket(&out[n - 1], &out[0]).arg();
    for (j, v) in out.iter_mut().enumerate() {
        let ph = C64::from_polar(1.0, -gamma * j as f64 / n as f64);
        v.iter_mut().for_each(|z| *z *= ph);
    }
    (out, wrap_phase(gamma))
}

/// Most modes per axis accepted by [`random_smooth_gauge`].
pub const MAX_GAUGE_MODES: usize = 5;

/// A gauge function sampled on the grid with its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothGauge {
    pub values: Vec<f64>,
    /// `∂_μλ`, one component per axis.
    pub gradient: Field<f64>,
}

/// Seeded smooth gauge function: per axis, the lowest `modes` Fourier modes
/// (periodic) or Chebyshev polynomials `T_0..T_{modes−1}` (clamped), with
/// coefficients uniform in `[−1, 1]`, summed over axes.
pub fn random_smooth_gauge(grid: &Grid, seed: u64, modes: usize) -> Result<SmoothGauge> {
    if modes == 0 || modes > MAX_GAUGE_MODES {
        return Err(Error::InvalidArgument(format!(
            "gauge modes must be in 1..={MAX_GAUGE_MODES}, got {modes}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs: Vec<Vec<(f64, f64)>> = (0..grid.dim())
        .map(|_| (0..modes).map(|_| (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))).collect())
        .collect();
    let d = grid.dim();
    let mut values = vec![0.0; grid.len()];
    let mut gradient = Field::filled(grid.len(), d, 0.0);
    for n in 0..grid.len() {
        let q = grid.point(n);
        for (mu, ax) in grid.axes().iter().enumerate() {
            let (v, dv) = if ax.is_periodic() {
                fourier_series(&coeffs[mu], std::f64::consts::TAU / ax.extent(), q[mu] - ax.lo)
            } else {
                let scale = 2.0 / (ax.hi - ax.lo);
                let (v, dv) = chebyshev_series(&coeffs[mu], scale * (q[mu] - ax.lo) - 1.0);
                (v, dv * scale)
            };
            values[n] += v;
            gradient.set(n, mu, dv);
        }
    }
    Ok(SmoothGauge { values, gradient })
}

// Σ a_k cos(kωx) + b_k sin(kωx) and its x-derivative.
fn fourier_series(c: &[(f64, f64)], omega: f64, x: f64) -> (f64, f64) {
    c.iter().enumerate().fold((0.0, 0.0), |(v, dv), (k, (a, b))| {
        let w = k as f64 * omega;
        let (s, co) = (w * x).sin_cos();
        (v + a * co + b * s, dv + w * (b * co - a * s))
    })
}

// Σ a_k T_k(s) and its s-derivative, T_k' = k U_{k−1}.
fn chebyshev_series(c: &[(f64, f64)], s: f64) -> (f64, f64) {
    let (mut t_prev, mut t) = (1.0, s);
    let (mut u_prev, mut u) = (0.0, 1.0);
    let mut v = c[0].0;
    let mut dv = 0.0;
    for (k, (a, _)) in c.iter().enumerate().skip(1) {
        v += a * t;
        dv += a * k as f64 * u;
        (t_prev, t) = (t, 2.0 * s * t - t_prev);
        (u_prev, u) = (u, 2.0 * s * u - u_prev);
    }
    (v, dv)
}

/// Covariant derivatives of `χ` along every axis from link transport.
pub fn chi_covariant_derivative(disc: &Discretization, fact: &Factorization) -> Result<Vec<Field<C64>>> {
    let t = Transport::new(&disc.diff, &fact.phi, Closure::Dirichlet)?;
    (0..disc.dim()).map(|mu| t.derivative(&fact.chi, mu, Charge::ChiLike)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MassMetricField;
    use crate::numerics::{Boundary, FdOrder, GridSpec};

    fn disc(n: usize, lo: f64, hi: f64, b: Boundary) -> Discretization {
        let g = Grid::new(&GridSpec::uniform_1d(n, lo, hi, b)).unwrap();
        Discretization::new(g, MassMetricField::flat(1, 1.0).unwrap(), FdOrder::Fourth).unwrap()
    }

    fn normalized(d: &Discretization, psi: Field<C64>) -> FullState {
        FullState { psi, energy: None }.normalized(d).unwrap()
    }

    #[test]
    fn product_state_round_trip() {
        let d = disc(101, -5.0, 5.0, Boundary::Clamped);
        let v = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let psi = Field::from_fn(101, 2, |n, c| v[c] * (-d.grid.point(n)[0].powi(2)).exp());
        let st = normalized(&d, psi);
        let f = factorize(&st, &d, &GaugeConvention::ChiRealPositive).unwrap();
        assert!(f.reconstruction_error(&st.psi).unwrap() < 1e-15);
        assert!(f.chi.data().iter().all(|z| z.im == 0.0 && z.re >= 0.0));
        for n in (0..101).filter(|&n| !f.mask[n]) {
            for c in 0..2 {
                assert!((f.phi.get(n, c) - v[c]).norm() < 1e-14);
            }
        }
        let norm = d.measure.integrate_real(&f.density()).unwrap();
        assert!((norm - 1.0).abs() < 1e-10);
        // Gaussian tails underflow the threshold near the edges.
        assert!(f.mask[0] && f.mask[100] && !f.mask[50]);
        assert_eq!(f.phi.node(0), f.phi.node(f.mask.iter().position(|m| !m).unwrap()));
    }

    #[test]
    fn reference_overlap_convention() {
        let d = disc(64, 0.0, 1.0, Boundary::Periodic);
        let psi = Field::from_fn(64, 2, |n, c| {
            let x = std::f64::consts::TAU * d.grid.point(n)[0];
            if c == 0 {
                C64::from_polar(1.0 + 0.3 * x.cos(), 2.0 * x)
            } else {
                C64::new(0.2 * x.sin(), 0.0)
            }
        });
        let st = normalized(&d, psi);
        let conv = GaugeConvention::reference_level(0, 2).unwrap();
        let f = factorize(&st, &d, &conv).unwrap();
        for n in 0..64 {
            assert!(f.phi.get(n, 0).im.abs() < 1e-14 && f.phi.get(n, 0).re > 0.0);
        }
        assert!(f.reconstruction_error(&st.psi).unwrap() < 1e-14);
        let bad = GaugeConvention::reference_level(1, 2).unwrap();
        assert!(matches!(factorize(&st, &d, &bad), Err(Error::GaugeFixing(_))));
    }

    #[test]
    fn zero_state_rejected() {
        let d = disc(16, 0.0, 1.0, Boundary::Periodic);
        let st = FullState {
            psi: Field::filled(16, 2, C64::new(0.0, 0.0)),
            energy: None,
        };
        assert!(matches!(factorize(&st, &d, &GaugeConvention::ChiRealPositive), Err(Error::ZeroState)));
    }

    #[test]
    fn gauge_transform_properties() {
        let d = disc(64, 0.0, 1.0, Boundary::Periodic);
        let psi = Field::from_fn(64, 2, |n, c| C64::new(1.0 + c as f64, (n as f64 * 0.1).sin()));
        let st = normalized(&d, psi);
        let f = factorize(&st, &d, &GaugeConvention::ChiRealPositive).unwrap();
        assert_eq!(gauge_transform(&f, &[0.0; 64]).unwrap(), f);
        let lam: Vec<f64> = (0..64).map(|n| (std::f64::consts::TAU * d.grid.point(n)[0]).sin()).collect();
        let g = gauge_transform(&f, &lam).unwrap();
        for n in 0..64 {
            assert!((g.chi.get(n, 0).norm() - f.chi.get(n, 0).norm()).abs() <= 4.0 * f64::EPSILON * f.chi.get(n, 0).norm());
        }
        assert!(g.reconstruction_error(&st.psi).unwrap() < 1e-14);
        let a = compute_vector_potential(&d, &f).unwrap().a_mu;
        let b = compute_vector_potential(&d, &g).unwrap().a_mu;
        let tau = std::f64::consts::TAU;
        for n in 0..64 {
            let dl = tau * (tau * d.grid.point(n)[0]).cos();
            assert!((b.get(n, 0) - a.get(n, 0) - dl).abs() < 1e-4 * tau);
        }
    }

    #[test]
    fn vector_potential_examples() {
        let d = disc(64, 0.0, 1.0, Boundary::Periodic);
        let k = std::f64::consts::TAU * 2.0;
        let mk = |phi: Field<C64>| Factorization {
            chi: Field::filled(64, 1, C64::new(1.0, 0.0)),
            phi,
            mask: vec![false; 64],
        };
        let wave = mk(Field::from_fn(64, 2, |n, c| {
            C64::from_polar(std::f64::consts::FRAC_1_SQRT_2, k * d.grid.point(n)[0]) * if c == 0 { 1.0 } else { -1.0 }
        }));
        let a = compute_vector_potential(&d, &wave).unwrap();
        assert!(a.a_mu.data().iter().all(|x| (x - k).abs() < 1e-10));
        let real = mk(Field::from_fn(64, 2, |n, c| {
            let th = (std::f64::consts::TAU * d.grid.point(n)[0]).sin();
            C64::new(if c == 0 { th.cos() } else { th.sin() }, 0.0)
        }));
        let a = compute_vector_potential(&d, &real).unwrap();
        assert!(a.a_mu.data().iter().all(|x| x.abs() < 1e-10));
        assert!(a.imag_residue < 1e-3);
        let unnorm = mk(Field::filled(64, 2, C64::new(1.0, 0.0)));
        assert!(matches!(
            compute_vector_potential(&d, &unnorm),
            Err(Error::Unnormalized { .. })
        ));
        let plain = vector_potential_plain(&d, &wave.phi).unwrap();
        assert!(plain.data().iter().all(|x| (x - k).abs() < 1e-3 * k));
    }

    #[test]
    fn scalar_potential_examples() {
        let v = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let at = |t: f64, w: f64| Field::from_fn(3, 2, |_, c| v[c] * C64::from_polar(1.0, w * t));
        let dt = 1e-2;
        let a0 = compute_scalar_potential(&at(-dt, 0.0), &at(0.0, 0.0), &at(dt, 0.0), dt).unwrap();
        assert!(a0.data().iter().all(|x| *x == 0.0));
        let w = 1.7;
        let a0 = compute_scalar_potential(&at(1.0 - dt, w), &at(1.0, w), &at(1.0 + dt, w), dt).unwrap();
        assert!(a0.data().iter().all(|x| (x - w).abs() < w * dt * dt));
        assert!(compute_scalar_potential(&at(0.0, w), &Field::filled(2, 2, v[0]), &at(0.0, w), dt).is_err());
    }

    #[test]
    fn geometric_phase_checks() {
        let d = disc(64, 0.0, std::f64::consts::TAU, Boundary::Periodic);
        let zero = Field::filled(64, 1, 0.0);
        let ring = ring_loop(&d.grid);
        assert_eq!(geometric_phase(&d.grid, &zero, &ring).unwrap(), 0.0);
        assert!(matches!(
            geometric_phase(&d.grid, &zero, &ring[..10]),
            Err(Error::OpenLoop { first: 0, last: 9 })
        ));
        let half = Field::filled(64, 1, 0.5);
        let p = geometric_phase(&d.grid, &half, &ring).unwrap();
        assert!((p.abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn sign_flip_loop() {
        // Real eigenvector rotating by half a turn around the loop.
        let n = 128;
        let states: Vec<Vec<C64>> = (0..n)
            .map(|j| {
                let t = std::f64::consts::PI * j as f64 / n as f64;
                vec![C64::new(t.cos(), 0.0), C64::new(t.sin(), 0.0)]
            })
            .collect();
        let w = wilson_loop_phase(&states);
        assert!((w.abs() - std::f64::consts::PI).abs() < 1e-12);
        let (smooth, gamma) = smooth_loop_gauge(&states);
        assert!((gamma.abs() - std::f64::consts::PI).abs() < 1e-12);
        let close = braket(&smooth[n - 1], &smooth[0]);
        assert!(close.im.abs() < 0.1 && close.re > 0.9);
    }

    #[test]
    fn random_gauge_deterministic() {
        let d = disc(32, 0.0, 1.0, Boundary::Periodic);
        let a = random_smooth_gauge(&d.grid, 7, 3).unwrap();
        assert_eq!(a, random_smooth_gauge(&d.grid, 7, 3).unwrap());
        assert_ne!(a, random_smooth_gauge(&d.grid, 8, 3).unwrap());
        assert!(random_smooth_gauge(&d.grid, 7, 6).is_err());
    }

    #[test]
    fn random_gauge_gradient_is_exact() {
        for b in [Boundary::Periodic, Boundary::Clamped] {
            let d = disc(401, -1.0, 2.0, b);
            let lam = random_smooth_gauge(&d.grid, 3, 5).unwrap();
            let fd = d.diff.partial(&Field::new(1, lam.values.clone()).unwrap(), 0, Closure::OneSided).unwrap();
            let scale = lam.gradient.data().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
            let err = (0..401).map(|n| (fd.get(n, 0) - lam.gradient.get(n, 0)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-6 * scale, "{b:?}: {err} vs {scale}");
        }
    }
}
