//! Full-wavefunction reference solver on the product space
//! (grid nodes) ⊗ (electronic levels).
//!
//! The kinetic operator is the coordinate-invariant form
//! `T = ½ 𝓜^{-1/2} P_μ 𝓜^{1/2} M^{μν} P_ν = −½ w⁻¹ ∂_μ (w M^{μν} ∂_ν)` with
//! `w = √𝓜 J₀`. It is discretized as `T = ½ W⁻¹ Gᵀ diag(w M) G` with
//! wavefunction closure (zero outside clamped boxes, wrap on periodic axes),
//! so it is symmetric in the inner product `Σ w_n conj(a_n) b_n` by
//! construction; see [`build_kinetic_operator`]. Eigensolves and time stepping act on the symmetrized
//! matrix `S H S⁻¹`, `S = diag(√w)`, which is Hermitian.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::chart::{parse_expr, CoordinateChart};
use crate::numerics::eigen::{hermitian_eigensolve, relative_asymmetry};
use crate::numerics::propagate::CayleyPropagator;
use crate::numerics::{Closure, FdOrder};
use crate::scalar::C64;
use crate::{Differentiator, Field, Grid, MassMetricField, Measure, MetricSamples};

/// Allowed per-node deviation of `h_bo` from Hermiticity, relative to
/// `max(1, |h_bo|)`.
pub const BO_HERMITIAN_TOLERANCE: f64 = 1e-12;

type BoFn = dyn Fn(&[f64]) -> DMatrix<C64> + Send + Sync;

/// `Q -> Ĥ^BO(Q)`, an `n × n` Hermitian matrix.
#[derive(Clone)]
pub struct BoHamiltonian {
    levels: usize,
    eval: Arc<BoFn>,
}

impl fmt::Debug for BoHamiltonian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoHamiltonian").field("levels", &self.levels).finish_non_exhaustive()
    }
}

/// One matrix element: real part and optional imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct EntryExpr {
    pub re: Expr,
    pub im: Option<Expr>,
}

impl EntryExpr {
    pub fn parse(re: &str, im: Option<&str>, dim: usize, field: &str) -> Result<Self> {
        Ok(Self {
            re: parse_expr(re, dim, &format!("{field}.re"))?,
            im: im.map(|s| parse_expr(s, dim, &format!("{field}.im"))).transpose()?,
        })
    }

    fn eval(&self, q: &[f64]) -> C64 {
        C64::new(self.re.eval(q), self.im.as_ref().map_or(0.0, |e| e.eval(q)))
    }
}

impl BoHamiltonian {
    pub fn new(levels: usize, f: impl Fn(&[f64]) -> DMatrix<C64> + Send + Sync + 'static) -> Self {
        Self {
            levels,
            eval: Arc::new(f),
        }
    }

    /// `entries[i][j]` is the expression for `⟨i|Ĥ^BO|j⟩`.
    pub fn from_exprs(entries: Vec<Vec<EntryExpr>>) -> Result<Self> {
        let n = entries.len();
        if entries.iter().any(|r| r.len() != n) {
            return Err(Error::schema("h_bo", "matrix must be square"));
        }
        Ok(Self::new(n, move |q| DMatrix::from_fn(n, n, |i, j| entries[i][j].eval(q))))
    }

    pub fn zero(levels: usize) -> Self {
        Self::new(levels, move |_| DMatrix::zeros(levels, levels))
    }

    #[inline]
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn at(&self, q: &[f64]) -> DMatrix<C64> {
        (self.eval)(q)
    }

    /// `Q̄ -> Ĥ^BO(Q(Q̄))`.
    pub fn composed_with_inverse(&self, chart: &CoordinateChart) -> Self {
        let chart = chart.clone();
        let inner = self.eval.clone();
        Self::new(self.levels, move |qbar| inner(&chart.inverse(qbar)))
    }

    /// Samples every node, enforcing Hermiticity.
    pub fn sample(&self, grid: &Grid) -> Result<Vec<DMatrix<C64>>> {
        (0..grid.len())
            .map(|n| {
                let h = self.at(&grid.point(n));
                if h.nrows() != self.levels || h.ncols() != self.levels {
                    return Err(Error::shape(format!("h_bo is {}x{}, expected {} levels", h.nrows(), h.ncols(), self.levels)));
                }
                let scale = h.iter().fold(1.0_f64, |m, z| m.max(z.norm()));
                let asym = (&h - h.adjoint()).iter().fold(0.0_f64, |m, z| m.max(z.norm())) / scale;
                if asym > BO_HERMITIAN_TOLERANCE {
                    return Err(Error::NonHermitian {
                        asymmetry: asym,
                        tolerance: BO_HERMITIAN_TOLERANCE,
                    });
                }
                Ok((&h + h.adjoint()) * C64::new(0.5, 0.0))
            })
            .collect()
    }
}

/// Grid, metric and derivative operators used together by every stage.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub grid: Grid,
    pub metric: MassMetricField,
    pub samples: MetricSamples,
    pub diff: Differentiator,
    pub measure: Measure,
}

impl Discretization {
    pub fn new(grid: Grid, metric: MassMetricField, order: FdOrder) -> Result<Self> {
        let metric = metric.with_fd(order, None);
        let samples = metric.sample(&grid)?;
        let diff = Differentiator::new(&grid, order)?;
        let measure = Measure::new(&grid, &samples.volume_weight)?;
        Ok(Self {
            grid,
            metric,
            samples,
            diff,
            measure,
        })
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
}

/// Kinetic operator stored as the symmetric matrix `W T`.
#[derive(Debug, Clone)]
pub struct KineticOperator {
    weighted: DMatrix<f64>,
    weights: Vec<f64>,
    asymmetry: f64,
}

impl KineticOperator {
    /// Physical matrix `T`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut t = self.weighted.clone();
        for (mut row, w) in t.row_iter_mut().zip(&self.weights) {
            row /= *w;
        }
        t
    }

    /// `S T S⁻¹`, symmetric.
    pub fn symmetrized(&self) -> DMatrix<f64> {
        let s: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        DMatrix::from_fn(self.weights.len(), self.weights.len(), |i, j| self.weighted[(i, j)] / (s[i] * s[j]))
    }

    /// Relative asymmetry of `W T` before symmetrization.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    /// `T f` for a scalar field given node-wise.
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let n = self.weights.len();
        (0..n)
            .map(|i| {
                let s = (0..n).fold(C64::new(0.0, 0.0), |acc, j| acc + f[j] * self.weighted[(i, j)]);
                s / self.weights[i]
            })
            .collect()
    }
}

/// Assembles the kinetic operator.
///
/// Diagonal terms `M^{μμ}` use staggered differences `G_μ` onto cell
/// midpoints with `w M^{μμ}` evaluated there:
/// `½ W⁻¹ G_μᵀ diag(w M^{μμ}) G_μ`. A nested central difference would leave
/// the alternating mode `(−1)^j` without kinetic energy. Off-diagonal terms
/// (`μ ≠ ν`) use the node-centred `½ W⁻¹ D_μᵀ diag(w M^{μν}) D_ν`.
pub fn build_kinetic_operator(disc: &Discretization) -> Result<KineticOperator> {
    let grid = &disc.grid;
    let n = grid.len();
    let d = grid.dim();
    let w = &disc.samples.volume_weight;
    let mut weighted = DMatrix::<f64>::zeros(n, n);
    for mu in 0..d {
        for mid in staggered_midpoints(disc, mu)? {
            for &(a, ga) in &mid.coeffs {
                for &(b, gb) in &mid.coeffs {
                    weighted[(a, b)] += 0.5 * mid.weight * ga * gb;
                }
            }
        }
    }
    if d > 1 {
        let rows: Vec<Vec<(usize, f64)>> = (0..n)
            .into_par_iter()
            .map(|a| {
                let mut acc: Vec<(usize, f64)> = Vec::new();
                for mu in 0..d {
                    for (m, da) in stencil_transpose(disc, a, mu) {
                        let k = &disc.samples.inverse_mass[m];
                        for nu in (0..d).filter(|&nu| nu != mu) {
                            let c = 0.5 * w[m] * k[(mu, nu)];
                            if c == 0.0 {
                                continue;
                            }
                            for (b, db) in disc.diff.node_stencil(m, nu, Closure::Dirichlet) {
                                acc.push((b, da * c * db));
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        for (a, row) in rows.into_iter().enumerate() {
            for (b, v) in row {
                weighted[(a, b)] += v;
            }
        }
    }
    let scale = weighted.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let diff = (&weighted - weighted.transpose()).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let asymmetry = if scale > 0.0 { diff / scale } else { 0.0 };
    let weighted = (&weighted + weighted.transpose()) * 0.5;
    Ok(KineticOperator {
        weighted,
        weights: w.clone(),
        asymmetry,
    })
}

struct Midpoint {
    coeffs: Vec<(usize, f64)>,
    /// `w M^{μμ}` at the midpoint.
    weight: f64,
}

/// Staggered first differences along `mu` onto the midpoints `j + ½`
/// (and `−½` on clamped axes), with wavefunction closure.
fn staggered_midpoints(disc: &Discretization, mu: usize) -> Result<Vec<Midpoint>> {
    let grid = &disc.grid;
    let ax = &grid.axes()[mu];
    let half = disc.diff.order().half_width() as i64;
    let nn = ax.n as i64;
    let sites: Vec<(usize, f64)> = (0..grid.len())
        .flat_map(|a| {
            let j = grid.index_along(a, mu);
            let lower = (!ax.is_periodic() && j == 0).then_some((a, -0.5));
            std::iter::once((a, 0.5)).chain(lower)
        })
        .collect();
    sites
        .into_par_iter()
        .map(|(a, shift)| {
            let j = grid.index_along(a, mu) as i64;
            let centre = j as f64 + shift;
            let first = centre.floor() as i64 - half + 1;
            let idx: Vec<i64> = (first..first + 2 * half).collect();
            let xs: Vec<f64> = idx.iter().map(|&i| i as f64 - centre).collect();
            let wts = crate::numerics::stencil::fornberg_weights(0.0, &xs, 1);
            let coeffs = idx
                .iter()
                .zip(&wts[1])
                .filter_map(|(&i, &c)| {
                    let i = if ax.is_periodic() {
                        i.rem_euclid(nn)
                    } else if (0..nn).contains(&i) {
                        i
                    } else {
                        return None;
                    };
                    Some((grid.with_index(a, mu, i as usize), c / ax.spacing))
                })
                .collect();
            let mut q = grid.point(a);
            q[mu] = q[mu] + shift * ax.spacing;
            let eval = |q: &[f64]| -> Result<f64> {
                Ok(disc.metric.volume_weight(q)? * disc.metric.inverse_mass(q)?[(mu, mu)])
            };
            let weight = match eval(&q) {
                Ok(v) => v,
                Err(_) if !ax.is_periodic() => {
                    q[mu] = q[mu].clamp(ax.lo, ax.hi);
                    eval(&q)?
                }
                Err(e) => return Err(e),
            };
            Ok(Midpoint { coeffs, weight })
        })
        .collect()
}

/// Nodes `m` whose `mu`-stencil contains `a`, with the weight `D[m, a]`.
fn stencil_transpose(disc: &Discretization, a: usize, mu: usize) -> Vec<(usize, f64)> {
    let grid = &disc.grid;
    let ax = &grid.axes()[mu];
    let ja = grid.index_along(a, mu);
    let reach = disc.diff.order().half_width();
    let mut out = Vec::new();
    for off in -(reach as i64)..=(reach as i64) {
        let jm = ja as i64 + off;
        let jm = if ax.is_periodic() {
            jm.rem_euclid(ax.n as i64)
        } else if (0..ax.n as i64).contains(&jm) {
            jm
        } else {
            continue;
        } as usize;
        for &(k, wgt) in disc.diff.stencil(mu, Closure::Dirichlet, jm) {
            if k == ja {
                out.push((grid.with_index(a, mu, jm), wgt));
            }
        }
    }
    out
}

/// `−½ w⁻¹ Σ ∂_μ(w M^{μν} ∂_ν f)` by nested differentiation of fields.
pub fn apply_kinetic_divergence(disc: &Discretization, f: &Field<C64>) -> Result<Field<C64>> {
    f.check_nodes(disc.nodes(), "field")?;
    let d = disc.dim();
    let grad = disc.diff.gradient(f, Closure::Dirichlet)?;
    let comps = f.comps();
    let mut out = Field::filled(disc.nodes(), comps, C64::new(0.0, 0.0));
    for mu in 0..d {
        let flux = Field::from_fn(disc.nodes(), comps, |n, c| {
            let k = &disc.samples.inverse_mass[n];
            let s = (0..d).fold(C64::new(0.0, 0.0), |acc, nu| acc + grad[nu].get(n, c) * k[(mu, nu)]);
            s * disc.samples.volume_weight[n]
        });
        let div = disc.diff.partial(&flux, mu, Closure::Dirichlet)?;
        for n in 0..disc.nodes() {
            for c in 0..comps {
                let v = out.get(n, c) - div.get(n, c) * (0.5 / disc.samples.volume_weight[n]);
                out.set(n, c, v);
            }
        }
    }
    Ok(out)
}

/// `Ψ` on the product space, node-major with levels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FullState {
    pub psi: Field<C64>,
    pub energy: Option<f64>,
}

impl FullState {
    pub fn levels(&self) -> usize {
        self.psi.comps()
    }

    /// `∫ √𝓜 J₀ Σ |Ψ|²`.
    pub fn norm_sqr(&self, disc: &Discretization) -> Result<f64> {
        disc.measure.norm_sqr(&self.psi)
    }

    pub fn normalized(mut self, disc: &Discretization) -> Result<Self> {
        let n2 = self.norm_sqr(disc)?;
        if n2 == 0.0 || !n2.is_finite() {
            return Err(Error::ZeroState);
        }
        let s = 1.0 / n2.sqrt();
        self.psi = self.psi.map(|z| z * s);
        Ok(self)
    }
}

/// Rotation applied inside a degenerate ground pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRotation {
    pub theta: f64,
    pub phase: f64,
    /// `min_Q Σ|Ψ_c|²` before and after.
    pub min_density_before: f64,
    pub min_density: f64,
}

fn min_density(psi: &Field<C64>) -> f64 {
    (0..psi.nodes())
        .map(|n| psi.node(n).iter().map(|z| z.norm_sqr()).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

fn pair_combination(a: &Field<C64>, b: &Field<C64>, theta: f64, phase: f64) -> Field<C64> {
    let (ca, cb) = (C64::new(theta.cos(), 0.0), C64::from_polar(theta.sin(), phase));
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x * ca + y * cb).collect();
    Field::new(a.comps(), data).expect("same shape")
}

/// When the two lowest energies agree to `rel_tol · max(|E₀|, 1)`, returns
/// `cos θ Ψ₀ + e^{iφ} sin θ Ψ₁` with the largest `min_Q Σ|Ψ_c|²`. Any
/// state of the pair solves the same equations; a real combination of a
/// degenerate pair usually has nodes that the nodeless one avoids.
pub fn nodeless_combination(states: &[FullState], rel_tol: f64) -> Option<(FullState, PairRotation)> {
    let (a, b) = (states.first()?, states.get(1)?);
    let (ea, eb) = (a.energy?, b.energy?);
    if (eb - ea).abs() > rel_tol * ea.abs().max(1.0) {
        return None;
    }
    let score = |t: f64, p: f64| min_density(&pair_combination(&a.psi, &b.psi, t, p));
    let (nt, np) = (32, 64);
    let (mut bt, mut bp, mut best) = (0.0, 0.0, score(0.0, 0.0));
    for i in 0..=nt {
        for j in 0..np {
            let (t, p) = (FRAC_PI_2 * i as f64 / nt as f64, TAU * j as f64 / np as f64);
            let v = score(t, p);
            if v > best {
                (bt, bp, best) = (t, p, v);
            }
        }
    }
    // Compass search around the best grid point.
    let (mut st, mut sp) = (FRAC_PI_2 / nt as f64, TAU / np as f64);
    while st > 1e-10 {
        let mut moved = false;
        for (dt, dp) in [(st, 0.0), (-st, 0.0), (0.0, sp), (0.0, -sp)] {
            let v = score(bt + dt, bp + dp);
            if v > best {
                (bt, bp, best) = (bt + dt, bp + dp, v);
                moved = true;
            }
        }
        if !moved {
            st *= 0.5;
            sp *= 0.5;
        }
    }
    let state = FullState {
        psi: pair_combination(&a.psi, &b.psi, bt, bp),
        energy: Some(ea + (eb - ea) * bt.sin().powi(2)),
    };
    let rot = PairRotation {
        theta: bt,
        phase: bp,
        min_density_before: min_density(&a.psi),
        min_density: best,
    };
    Some((state, rot))
}

/// `T ⊗ 1 + ⊕_Q Ĥ^BO(Q)` in symmetrized form.
#[derive(Debug, Clone)]
pub struct FullHamiltonian {
    levels: usize,
    sqrt_w: Vec<f64>,
    matrix: DMatrix<C64>,
    kinetic_asymmetry: f64,
    bo: Vec<DMatrix<C64>>,
}

pub fn build_full_hamiltonian(disc: &Discretization, h_bo: &BoHamiltonian) -> Result<FullHamiltonian> {
    let kin = build_kinetic_operator(disc)?;
    let bo = h_bo.sample(&disc.grid)?;
    let n = h_bo.levels();
    let nodes = disc.nodes();
    let ts = kin.symmetrized();
    let size = nodes * n;
    let mut matrix = DMatrix::<C64>::zeros(size, size);
    for a in 0..nodes {
        for b in 0..nodes {
            let t = ts[(a, b)];
            if t != 0.0 {
                for l in 0..n {
                    matrix[(a * n + l, b * n + l)] = C64::new(t, 0.0);
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                matrix[(a * n + i, a * n + j)] += bo[a][(i, j)];
            }
        }
    }
    Ok(FullHamiltonian {
        levels: n,
        sqrt_w: disc.samples.volume_weight.iter().map(|w| w.sqrt()).collect(),
        matrix,
        kinetic_asymmetry: kin.asymmetry(),
        bo,
    })
}

impl FullHamiltonian {
    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Hermitian matrix `S H S⁻¹`.
    pub fn symmetrized(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn kinetic_asymmetry(&self) -> f64 {
        self.kinetic_asymmetry
    }

    /// `Ĥ^BO` at every node.
    pub fn bo_samples(&self) -> &[DMatrix<C64>] {
        &self.bo
    }

    /// Relative asymmetry of the symmetrized matrix.
    pub fn asymmetry(&self) -> f64 {
        relative_asymmetry(&self.matrix)
    }

    pub fn to_symmetric(&self, psi: &Field<C64>) -> Result<DVector<C64>> {
        self.check(psi)?;
        let n = self.levels;
        Ok(DVector::from_iterator(
            psi.data().len(),
            psi.data().iter().enumerate().map(|(i, z)| z * self.sqrt_w[i / n]),
        ))
    }

    pub fn from_symmetric(&self, v: &DVector<C64>) -> Field<C64> {
        let n = self.levels;
        Field::from_fn(self.sqrt_w.len(), n, |node, l| v[node * n + l] / self.sqrt_w[node])
    }

    /// `H Ψ` in the physical representation.
    pub fn apply(&self, psi: &Field<C64>) -> Result<Field<C64>> {
        let v = self.to_symmetric(psi)?;
        Ok(self.from_symmetric(&(&self.matrix * v)))
    }

    /// Rayleigh quotient `⟨Ψ|H|Ψ⟩ / ⟨Ψ|Ψ⟩`.
    pub fn expectation(&self, psi: &Field<C64>) -> Result<f64> {
        let v = self.to_symmetric(psi)?;
        let hv = &self.matrix * &v;
        let den = v.norm_squared();
        if den == 0.0 {
            return Err(Error::ZeroState);
        }
        Ok(v.dotc(&hv).re / den)
    }

    /// `‖HΨ − EΨ‖ / (‖Ψ‖ max(|E|, 1))` in the symmetrized representation.
    pub fn eigen_residual(&self, state: &FullState) -> Result<f64> {
        let e = state.energy.ok_or_else(|| Error::MissingInput("state has no energy".into()))?;
        let v = self.to_symmetric(&state.psi)?;
        let r = &self.matrix * &v - &v * C64::new(e, 0.0);
        Ok(r.norm() / (v.norm() * e.abs().max(1.0)))
    }

    fn check(&self, psi: &Field<C64>) -> Result<()> {
        if psi.comps() != self.levels || psi.nodes() != self.sqrt_w.len() {
            return Err(Error::shape(format!(
                "state is {}x{}, operator expects {}x{}",
                psi.nodes(),
                psi.comps(),
                self.sqrt_w.len(),
                self.levels
            )));
        }
        Ok(())
    }
}

/// The `k` lowest eigenstates, normalized with the volume-weighted quadrature.
pub fn solve_eigenstates(h: &FullHamiltonian, disc: &Discretization, k: usize) -> Result<Vec<FullState>> {
    hermitian_eigensolve(&h.matrix, k)?
        .into_iter()
        .map(|p| {
            FullState {
                psi: h.from_symmetric(&p.vector),
                energy: Some(p.value),
            }
            .normalized(disc)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FullState>,
}

/// Iterates Cayley steps, keeping every `stride`-th state (and the initial
/// one). Cayley stepping is unconditionally stable; its phase error per
/// step is `O((dt·‖H‖)³)`, so `dt·‖H‖ ≲ 0.1` is the intended accuracy budget.
pub fn propagate(h: &FullHamiltonian, psi0: &FullState, dt: f64, steps: usize, stride: usize) -> Result<Trajectory> {
    let prop = CayleyPropagator::new(&h.matrix, dt)?;
    let stride = stride.max(1);
    let mut v = h.to_symmetric(&psi0.psi)?;
    let mut out = Trajectory {
        times: vec![0.0],
        states: vec![FullState {
            psi: psi0.psi.clone(),
            energy: None,
        }],
    };
    for s in 1..=steps {
        v = prop.step(&v)?;
        if s % stride == 0 || s == steps {
            out.times.push(s as f64 * dt);
            out.states.push(FullState {
                psi: h.from_symmetric(&v),
                energy: None,
            });
        }
    }
    Ok(out)
}

/// Gradient form `½ ∫ √𝓜 J₀ M^{μν} Σ conj(∂_μΨ) ∂_νΨ`.
///
/// Diagonal terms are summed over cell midpoints with the staggered
/// gradient, cross terms over nodes with the central one, and the cell
/// volume is uniform. Summation by parts makes this equal to
/// `⟨Ψ|T̂Ψ⟩` for the operator of [`build_kinetic_operator`].
pub fn kinetic_energy_expectation(disc: &Discretization, psi: &Field<C64>) -> Result<f64> {
    psi.check_nodes(disc.nodes(), "state")?;
    let d = disc.dim();
    let cell: f64 = disc.grid.axes().iter().map(|a| a.spacing).product();
    let comps = psi.comps();
    let mut total = 0.0;
    for mu in 0..d {
        for mid in staggered_midpoints(disc, mu)? {
            for c in 0..comps {
                let g = mid.coeffs.iter().fold(C64::new(0.0, 0.0), |acc, &(a, ga)| acc + psi.get(a, c) * ga);
                total += 0.5 * mid.weight * g.norm_sqr();
            }
        }
    }
    if d > 1 {
        let grad = disc.diff.gradient(psi, Closure::Dirichlet)?;
        for n in 0..disc.nodes() {
            let k = &disc.samples.inverse_mass[n];
            for mu in 0..d {
                for nu in (0..d).filter(|&nu| nu != mu) {
                    total += 0.5
                        * disc.samples.volume_weight[n]
                        * k[(mu, nu)]
                        * crate::scalar::braket(grad[mu].node(n), grad[nu].node(n)).re;
                }
            }
        }
    }
    Ok(total * cell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Boundary, GridSpec};

    fn disc_1d(n: usize, lo: f64, hi: f64, b: Boundary, m: f64) -> Discretization {
        let grid = Grid::new(&GridSpec::uniform_1d(n, lo, hi, b)).unwrap();
        Discretization::new(grid, MassMetricField::flat(1, m).unwrap(), FdOrder::Fourth).unwrap()
    }

    #[test]
    fn harmonic_oscillator_spectrum() {
        let m = 2.0;
        let k = 8.0;
        let disc = disc_1d(201, -5.0, 5.0, Boundary::Clamped, m);
        let h_bo = BoHamiltonian::new(1, move |q| DMatrix::from_element(1, 1, C64::new(0.5 * k * q[0] * q[0], 0.0)));
        let h = build_full_hamiltonian(&disc, &h_bo).unwrap();
        let omega = (k / m).sqrt();
        let states = solve_eigenstates(&h, &disc, 4).unwrap();
        for (i, s) in states.iter().enumerate() {
            let exact = omega * (i as f64 + 0.5);
            let e = s.energy.unwrap();
            assert!(((e - exact) / exact).abs() < 1e-4, "level {i}: {e} vs {exact}");
            assert!((s.norm_sqr(&disc).unwrap() - 1.0).abs() < 1e-12);
            assert!(h.eigen_residual(s).unwrap() < 1e-9);
        }
    }

    #[test]
    fn kinetic_annihilates_constants_on_rings() {
        let disc = disc_1d(32, 0.0, 1.0, Boundary::Periodic, 3.0);
        let kin = build_kinetic_operator(&disc).unwrap();
        let out = kin.apply(&vec![C64::new(1.0, 0.5); 32]);
        assert!(out.iter().all(|z| z.norm() < 1e-12));
        assert_eq!(kin.asymmetry(), 0.0);
    }

    #[test]
    fn matrix_form_matches_divergence_form() {
        let grid = Grid::new(&GridSpec::uniform_1d(101, -1.0, 1.0, Boundary::Clamped)).unwrap();
        let metric = MassMetricField::new(1, 1.0, |q: &[f64]| Ok(crate::Tensor2::diagonal(&[(-2.0 * q[0]).exp() / 3.0]))).unwrap();
        let disc = Discretization::new(grid, metric, FdOrder::Fourth).unwrap();
        let f = Field::from_fn(disc.nodes(), 1, |n, _| {
            let x = disc.grid.point(n)[0];
            C64::from_polar((-16.0 * x * x).exp(), 0.3 * x)
        });
        let kin = build_kinetic_operator(&disc).unwrap();
        let a = kin.apply(f.data());
        let b = apply_kinetic_divergence(&disc, &f).unwrap();
        let scale = a.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        let err = (0..disc.nodes()).fold(0.0_f64, |m, n| m.max((a[n] - b.get(n, 0)).norm()));
        // Two fourth-order discretizations of the same operator.
        assert!(err < 1e-3 * scale, "{err} vs {scale}");
    }

    #[test]
    fn gradient_form_matches_operator_form() {
        let disc = disc_1d(64, 0.0, 1.0, Boundary::Periodic, 5.0);
        let h = build_full_hamiltonian(&disc, &BoHamiltonian::zero(1)).unwrap();
        let kvec = std::f64::consts::TAU * 2.0;
        let psi = Field::from_fn(64, 1, |n, _| {
            let x = disc.grid.point(n)[0];
            C64::from_polar(1.0, kvec * x) * (1.0 + 0.2 * (std::f64::consts::TAU * x).cos())
        });
        let state = FullState { psi, energy: None }.normalized(&disc).unwrap();
        let grad_form = kinetic_energy_expectation(&disc, &state.psi).unwrap();
        let op_form = h.expectation(&state.psi).unwrap();
        assert!(((grad_form - op_form) / op_form).abs() < 1e-12, "{grad_form} {op_form}");
        let exact = 0.5 * kvec * kvec / 5.0;
        assert!(((op_form - exact) / exact).abs() < 0.05);
    }
}
