//! Residuals of the coupled equations for `χ` and `Φ`.
//!
//! Stationary states are factorized after removing `e^{−iEt}`, so the time
//! derivatives drop out: the nuclear equation is compared against `E χ` and
//! the electronic one against zero. In dynamic mode three factorized
//! snapshots supply `D_tχ` and `D_tΦ` at the middle time.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ef_geometry::{Charge, EfGeometry, Transport};
use crate::error::{Error, Result};
use crate::factorization::{time_covariant_derivatives, Factorization};
use crate::numerics::Closure;
use crate::scalar::{braket, norm_sqr, C64};
use crate::solver::Discretization;
use crate::Field;

const ENERGY_FLOOR: f64 = 1e-12;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// What the left-hand sides are compared against.
#[derive(Debug, Clone)]
pub enum ResidualMode<'a> {
    /// `E χ` and zero.
    Stationary { energy: f64 },
    /// `iD_tχ` and `iD_tΦ` from snapshots at `t ∓ dt`.
    Dynamic {
        prev: &'a Factorization,
        next: &'a Factorization,
        dt: f64,
    },
}

/// `−½M^{μν}∇_μ∇_νχ + (ε_BO + ε_geo)χ − [Eχ | iD_tχ]` at every node.
pub fn nuclear_residual(
    disc: &Discretization,
    fact: &Factorization,
    geo: &EfGeometry,
    mode: &ResidualMode,
) -> Result<Field<C64>> {
    let d = disc.dim();
    let der = &geo.derivatives;
    let dt_chi = match mode {
        ResidualMode::Stationary { .. } => None,
        ResidualMode::Dynamic { prev, next, dt } => Some(time_covariant_derivatives(prev, fact, next, *dt)?.0),
    };
    Ok(Field::from_fn(fact.nodes(), 1, |n, _| {
        let m = &disc.samples.inverse_mass[n];
        let pi = &disc.samples.pi[n];
        let mut lap = ZERO;
        for mu in 0..d {
            for nu in 0..d {
                let mut v = der.dd_chi[mu * d + nu].get(n, 0);
                for l in 0..d {
                    v -= der.d_chi[l].get(n, 0) * pi[(l, mu, nu)];
                }
                lap += v * m[(mu, nu)];
            }
        }
        let chi = fact.chi.get(n, 0);
        let lhs = lap * -0.5 + chi * (geo.eps_bo[n] + geo.eps_geo[n]);
        match (&dt_chi, mode) {
            (Some(dc), _) => lhs - I * dc.get(n, 0),
            (None, ResidualMode::Stationary { energy }) => lhs - chi * *energy,
            (None, _) => unreachable!(),
        }
    }))
}

fn electronic_tail(disc: &Discretization, fact: &Factorization, geo: &EfGeometry, h_bo: &[DMatrix<C64>], n: usize) -> Vec<C64> {
    // −M^{μν}(D_μχ/χ)D_νΦ + (Ĥ^BO − ε_BO − ε_geo)Φ
    let d = disc.dim();
    let levels = fact.levels();
    let m = &disc.samples.inverse_mass[n];
    let der = &geo.derivatives;
    let chi = fact.chi.get(n, 0);
    let phi = DVector::from_column_slice(fact.phi.node(n));
    let hphi = &h_bo[n] * &phi;
    let eps = geo.eps_bo[n] + geo.eps_geo[n];
    let mut out: Vec<C64> = (0..levels).map(|c| hphi[c] - phi[c] * eps).collect();
    for mu in 0..d {
        let ratio = der.d_chi[mu].get(n, 0) / chi;
        for nu in 0..d {
            let s = ratio * m[(mu, nu)];
            for c in 0..levels {
                out[c] -= der.d_phi[nu].get(n, c) * s;
            }
        }
    }
    out
}

fn subtract_time(out: &mut Field<C64>, dt_phi: &Option<Field<C64>>) {
    if let Some(dp) = dt_phi {
        for n in 0..out.nodes() {
            for c in 0..out.comps() {
                let v = out.get(n, c) - I * dp.get(n, c);
                out.set(n, c, v);
            }
        }
    }
}

fn time_phi(fact: &Factorization, mode: &ResidualMode) -> Result<Option<Field<C64>>> {
    match mode {
        ResidualMode::Stationary { .. } => Ok(None),
        ResidualMode::Dynamic { prev, next, dt } => Ok(Some(time_covariant_derivatives(prev, fact, next, *dt)?.1)),
    }
}

/// `−½M^{μν}∇_μ∇_νΦ − M^{μν}(D_μχ/χ)D_νΦ + (Ĥ^BO − ε_BO − ε_geo)Φ − [0 | iD_tΦ]`
/// with `∇_μ∇_νΦ = D_μD_νΦ − Π^λ_{μν}D_λΦ`. Masked nodes are zero.
pub fn electronic_residual(
    disc: &Discretization,
    fact: &Factorization,
    geo: &EfGeometry,
    h_bo: &[DMatrix<C64>],
    mode: &ResidualMode,
) -> Result<Field<C64>> {
    check_bo(fact, h_bo)?;
    let d = disc.dim();
    let levels = fact.levels();
    let der = &geo.derivatives;
    let rows: Vec<Vec<C64>> = (0..fact.nodes())
        .into_par_iter()
        .map(|n| {
            if fact.mask[n] {
                return vec![ZERO; levels];
            }
            let m = &disc.samples.inverse_mass[n];
            let pi = &disc.samples.pi[n];
            let mut out = electronic_tail(disc, fact, geo, h_bo, n);
            for mu in 0..d {
                for nu in 0..d {
                    let w = -0.5 * m[(mu, nu)];
                    for c in 0..levels {
                        let mut v = der.dd_phi[mu * d + nu].get(n, c);
                        for l in 0..d {
                            v -= der.d_phi[l].get(n, c) * pi[(l, mu, nu)];
                        }
                        out[c] += v * w;
                    }
                }
            }
            out
        })
        .collect();
    let mut out = Field::from_nodes(&rows)?;
    subtract_time(&mut out, &time_phi(fact, mode)?);
    Ok(out)
}

/// Same residual with the kinetic term in divergence form
/// `−½ w⁻¹ D_μ(w M^{μν} D_νΦ)`, `w = √𝓜 J₀`.
pub fn electronic_residual_divergence(
    disc: &Discretization,
    fact: &Factorization,
    geo: &EfGeometry,
    h_bo: &[DMatrix<C64>],
    mode: &ResidualMode,
) -> Result<Field<C64>> {
    check_bo(fact, h_bo)?;
    let d = disc.dim();
    let levels = fact.levels();
    let t = Transport::new(&disc.diff, &fact.phi, Closure::OneSided)?;
    let w = &disc.samples.volume_weight;
    let mut div = Field::filled(fact.nodes(), levels, ZERO);
    for mu in 0..d {
        let flux = Field::from_fn(fact.nodes(), levels, |n, c| {
            let m = &disc.samples.inverse_mass[n];
            (0..d).fold(ZERO, |acc, nu| acc + geo.derivatives.d_phi[nu].get(n, c) * (w[n] * m[(mu, nu)]))
        });
        let dflux = t.derivative(&flux, mu, Charge::PhiLike)?;
        for n in 0..fact.nodes() {
            for c in 0..levels {
                let v = div.get(n, c) + dflux.get(n, c);
                div.set(n, c, v);
            }
        }
    }
    let rows: Vec<Vec<C64>> = (0..fact.nodes())
        .map(|n| {
            if fact.mask[n] {
                return vec![ZERO; levels];
            }
            let mut out = electronic_tail(disc, fact, geo, h_bo, n);
            for c in 0..levels {
                out[c] -= div.get(n, c) * (0.5 / w[n]);
            }
            out
        })
        .collect();
    let mut out = Field::from_nodes(&rows)?;
    subtract_time(&mut out, &time_phi(fact, mode)?);
    Ok(out)
}

/// Node-wise comparison of the two forms of the nuclear kinetic operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorIdentity {
    pub max_abs: f64,
    /// `max_abs / max |T̂χ|`.
    pub max_rel: f64,
    pub nodes: usize,
}

/// Compares the Podolsky form `T̂χ = ½ w⁻¹ (P_μ + A_μ) w M^{μν} (P_ν + A_ν) χ`
/// with `(−½M^{μν}D_μD_ν + s·½M^{μν}Π^λ_{μν}D_λ)χ` node by node; `s = 1` is
/// the identity, `s = −1` a deliberately wrong sign.
///
/// `T̂` is the solver's kinetic matrix with every entry `T_jk` carried by
/// the link `u_jk`. Nodes within two stencil half-widths of a clamped end
/// are skipped: there the zero extension of `χ` is read differently by the
/// two discretizations.
pub fn kinetic_operator_identity(
    disc: &Discretization,
    fact: &Factorization,
    geo: &EfGeometry,
    pi_sign: f64,
) -> Result<OperatorIdentity> {
    let d = disc.dim();
    let der = &geo.derivatives;
    let t = crate::solver::build_kinetic_operator(disc)?.matrix();
    let nodes = fact.nodes();
    let lhs: Vec<C64> = (0..nodes)
        .into_par_iter()
        .map(|j| {
            (0..nodes)
                .filter(|&k| t[(j, k)] != 0.0)
                .fold(ZERO, |acc, k| {
                    let z = braket(fact.phi.node(j), fact.phi.node(k));
                    let u = if z.norm() > crate::ef_geometry::LINK_FLOOR { z / z.norm() } else { C64::new(1.0, 0.0) };
                    acc + fact.chi.get(k, 0) * u * t[(j, k)]
                })
        })
        .collect();
    let margin = 2 * disc.diff.order().half_width();
    let (mut max_abs, mut scale, mut count) = (0.0_f64, 0.0_f64, 0);
    for n in (0..fact.nodes()).filter(|&n| disc.grid.is_interior(n, margin)) {
        count += 1;
        let m = &disc.samples.inverse_mass[n];
        let pi = &disc.samples.pi[n];
        let lhs = lhs[n];
        let mut rhs = ZERO;
        for mu in 0..d {
            for nu in 0..d {
                rhs -= der.dd_chi[mu * d + nu].get(n, 0) * (0.5 * m[(mu, nu)]);
                for l in 0..d {
                    rhs += der.d_chi[l].get(n, 0) * (pi_sign * 0.5 * m[(mu, nu)] * pi[(l, mu, nu)]);
                }
            }
        }
        max_abs = max_abs.max((lhs - rhs).norm());
        scale = scale.max(lhs.norm());
    }
    Ok(OperatorIdentity {
        max_abs,
        max_rel: if scale > 0.0 { max_abs / scale } else { 0.0 },
        nodes: count,
    })
}

/// Node-wise identities among the geometric objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryIdentities {
    /// `max |h_{λκ}Υ^κ_{μν} − Υ_{λμν}|` off flagged nodes.
    pub christoffel_reconstruction: f64,
    /// `max |Re Υ_{λμν} − Γ_{λμν}[g]| / max |Re Υ|`, `Γ[g]` by differencing `g`.
    pub christoffel_from_metric: f64,
    /// Largest residual of `D_μD_νΦ` expanded on `{Φ, D_λΦ, e_a}`; flagged
    /// nodes use an orthonormal basis of `span{D_λΦ}`.
    pub decomposition: f64,
    /// `max |½M^{μν}g_{μν} − ½Σ_c M^{μν} Re(conj(D_μΦ_c) D_νΦ_c)|`.
    pub eps_geo_contraction: f64,
    /// `max |g_{μν} − Re h_{μν}|`.
    pub metric_vs_qgt: f64,
    /// Nodes entering the differenced and decomposition checks.
    pub nodes: usize,
}

/// Evaluates [`GeometryIdentities`]. The differenced and decomposition
/// checks skip the mask grown by two stencil half-widths, since `g` and
/// `D_μD_νΦ` are read through stencils there; the algebraic ones cover
/// every node.
pub fn geometry_identities(disc: &Discretization, fact: &Factorization, geo: &EfGeometry) -> Result<GeometryIdentities> {
    let d = disc.dim();
    let skip = fact.halo(&disc.grid, 2 * disc.diff.order().half_width());
    let gam = crate::ef_geometry::christoffel_from_metric(disc, &geo.g)?;
    let (mut diff, mut scale, mut dec, mut count) = (0.0_f64, 0.0_f64, 0.0_f64, 0);
    for n in (0..fact.nodes()).filter(|&n| !skip[n]) {
        count += 1;
        for k in 0..d * d * d {
            diff = diff.max((geo.gamma.get(n, k) - gam.get(n, k)).abs());
            scale = scale.max(geo.gamma.get(n, k).abs());
        }
        dec = dec.max(geo.decomposition_residual[n]);
    }
    let der = &geo.derivatives.d_phi;
    let (mut contraction, mut metric) = (0.0_f64, 0.0_f64);
    for n in 0..fact.nodes() {
        let m = &disc.samples.inverse_mass[n];
        let mut direct = 0.0;
        for c in 0..fact.levels() {
            for mu in 0..d {
                for nu in 0..d {
                    direct += 0.5 * m[(mu, nu)] * (der[mu].get(n, c).conj() * der[nu].get(n, c)).re;
                }
            }
        }
        contraction = contraction.max((geo.eps_geo[n] - direct).abs());
        for k in 0..d * d {
            metric = metric.max((geo.g.get(n, k) - geo.h.get(n, k).re).abs());
        }
    }
    Ok(GeometryIdentities {
        christoffel_reconstruction: geo.christoffel_reconstruction,
        christoffel_from_metric: if scale > 0.0 { diff / scale } else { diff },
        decomposition: dec,
        eps_geo_contraction: contraction,
        metric_vs_qgt: metric,
        nodes: count,
    })
}

fn check_bo(fact: &Factorization, h_bo: &[DMatrix<C64>]) -> Result<()> {
    if h_bo.len() != fact.nodes() {
        return Err(Error::shape(format!("{} Ĥ^BO samples for {} nodes", h_bo.len(), fact.nodes())));
    }
    Ok(())
}

/// Nodes left out of residual norms: the mask plus one stencil half-width.
pub fn excluded_nodes(disc: &Discretization, fact: &Factorization) -> Vec<bool> {
    fact.halo(&disc.grid, disc.diff.order().half_width())
}

/// `√(∫ w Σ|f|²)` over nodes outside [`excluded_nodes`], optionally
/// weighted by `|χ|²`.
pub fn weighted_norm(disc: &Discretization, fact: &Factorization, f: &Field<C64>, density_weighted: bool) -> Result<f64> {
    f.check_nodes(fact.nodes(), "residual")?;
    let skip = excluded_nodes(disc, fact);
    let vals: Vec<f64> = (0..f.nodes())
        .map(|n| {
            if skip[n] {
                0.0
            } else {
                let rho = if density_weighted { fact.chi.get(n, 0).norm_sqr() } else { 1.0 };
                rho * norm_sqr(f.node(n))
            }
        })
        .collect();
    Ok(disc.measure.integrate_real(&vals)?.sqrt())
}

/// Density-weighted norm of `⟨Φ|R⟩`.
pub fn projection_identity_check(disc: &Discretization, fact: &Factorization, residual: &Field<C64>) -> Result<f64> {
    residual.check_nodes(fact.nodes(), "residual")?;
    let p = Field::from_fn(fact.nodes(), 1, |n, _| braket(fact.phi.node(n), residual.node(n)));
    weighted_norm(disc, fact, &p, true)
}

/// Projections of the electronic equation onto `|D_κΦ⟩` and `|e_b⟩`.
#[derive(Debug, Clone)]
pub struct ProjectedResiduals {
    /// Right side minus left side of the `D_κΦ` projection (`d` per node).
    pub tangent: Field<C64>,
    /// Same for the frame vectors, per node (ragged).
    pub frame: Vec<Vec<C64>>,
    /// `max |tangent − ⟨D_κΦ|R⟩|` over unflagged nodes outside [`excluded_nodes`].
    pub tangent_mismatch: f64,
    /// Same for `max |frame − ⟨e_b|R⟩|`. At flagged nodes the frame is not
    /// orthogonal to `D_μΦ`, so the frame equation does not apply there.
    pub frame_mismatch: f64,
    /// `max |⟨e_b|e_a⟩ − δ_ab|`.
    pub gram_deviation: f64,
    pub tangent_norm: f64,
    pub frame_norm: f64,
    /// Density-weighted residual norm rebuilt from the `Φ`, tangent and frame
    /// projections, and the direct one, both over the nodes counted above.
    pub reconstructed_norm: f64,
    pub direct_norm: f64,
}

/// Evaluates
/// `i⟨D_κΦ|D_tΦ⟩ = ⟨D_κΦ|Ĥ^BO|Φ⟩ + ½M^{μν}(Π^λ_{μν} − Υ^λ_{μν})h_{κλ} − M^{μν}(D_μχ/χ)h_{κν}`
/// and `i⟨e_b|D_tΦ⟩ = ⟨e_b|Ĥ^BO|Φ⟩ − ½M^{μν}Ω^a_{μν}⟨e_b|e_a⟩`, returning
/// right minus left, and compares both with direct projections of `residual`.
pub fn projected_electronic_equations(
    disc: &Discretization,
    fact: &Factorization,
    geo: &EfGeometry,
    h_bo: &[DMatrix<C64>],
    residual: &Field<C64>,
    mode: &ResidualMode,
) -> Result<ProjectedResiduals> {
    check_bo(fact, h_bo)?;
    residual.check_nodes(fact.nodes(), "residual")?;
    let d = disc.dim();
    let levels = fact.levels();
    let der = &geo.derivatives;
    let dt_phi = time_phi(fact, mode)?;
    let mut tangent = Field::filled(fact.nodes(), d, ZERO);
    let mut frame = Vec::with_capacity(fact.nodes());
    let (mut tmis, mut fmis, mut gdev) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut tan_sq = vec![0.0; fact.nodes()];
    let mut frm_sq = vec![0.0; fact.nodes()];
    let mut rec_sq = vec![0.0; fact.nodes()];
    let mut dir_sq = vec![0.0; fact.nodes()];
    let skip = excluded_nodes(disc, fact);
    for n in 0..fact.nodes() {
        let m = &disc.samples.inverse_mass[n];
        let pi = &disc.samples.pi[n];
        let phi = DVector::from_column_slice(fact.phi.node(n));
        let hphi = &h_bo[n] * &phi;
        let chi = fact.chi.get(n, 0);
        let h = |a: usize, b: usize| geo.h.get(n, a * d + b);
        let fr = &geo.frames[n];
        if fact.mask[n] {
            frame.push(vec![ZERO; fr.count]);
            continue;
        }
        let rho = chi.norm_sqr();
        let counted = !skip[n] && !geo.flagged[n];
        let lhs_t = |v: &[C64]| match &dt_phi {
            Some(dp) => I * braket(v, dp.node(n)),
            None => ZERO,
        };
        for k in 0..d {
            let dk = der.d_phi[k].node(n);
            let mut rhs = braket(dk, hphi.as_slice());
            for mu in 0..d {
                for nu in 0..d {
                    let half_m = 0.5 * m[(mu, nu)];
                    for l in 0..d {
                        let ups = geo.upsilon_second.get(n, (l * d + mu) * d + nu);
                        rhs += (C64::new(pi[(l, mu, nu)], 0.0) - ups) * h(k, l) * half_m;
                    }
                    rhs -= der.d_chi[mu].get(n, 0) / chi * h(k, nu) * m[(mu, nu)];
                }
            }
            let val = rhs - lhs_t(dk);
            tangent.set(n, k, val);
            if counted {
                tmis = tmis.max((val - braket(dk, residual.node(n))).norm());
            }
        }
        let gram = DMatrix::from_fn(fr.count, fr.count, |b, a| braket(fr.vector(b, levels), fr.vector(a, levels)));
        for b in 0..fr.count {
            for a in 0..fr.count {
                let delta = if a == b { 1.0 } else { 0.0 };
                gdev = gdev.max((gram[(b, a)] - delta).norm());
            }
        }
        let mut rows = Vec::with_capacity(fr.count);
        for b in 0..fr.count {
            let eb = fr.vector(b, levels);
            let mut rhs = braket(eb, hphi.as_slice());
            for mu in 0..d {
                for nu in 0..d {
                    for a in 0..fr.count {
                        rhs -= geo.omega[n][(a * d + mu) * d + nu] * gram[(b, a)] * (0.5 * m[(mu, nu)]);
                    }
                }
            }
            let val = rhs - lhs_t(eb);
            if counted {
                fmis = fmis.max((val - braket(eb, residual.node(n))).norm());
            }
            rows.push(val);
        }
        if !skip[n] {
            frm_sq[n] = rho * norm_sqr(&rows);
            tan_sq[n] = rho * norm_sqr(tangent.node(n));
        }
        if counted {
            // ‖R‖² = |⟨Φ|R⟩|² + r† h⁻¹ r + r_e† G⁻¹ r_e
            let p = braket(fact.phi.node(n), residual.node(n));
            let hm = DMatrix::from_fn(d, d, |a, b| h(a, b));
            let r = DVector::from_column_slice(tangent.node(n));
            let x = hm.lu().solve(&r).unwrap_or_else(|| DVector::zeros(d));
            let re = DVector::from_column_slice(&rows);
            let y = if fr.count == 0 {
                DVector::zeros(0)
            } else {
                gram.clone().lu().solve(&re).unwrap_or_else(|| DVector::zeros(fr.count))
            };
            rec_sq[n] = rho * (p.norm_sqr() + r.dotc(&x).re + re.dotc(&y).re);
            dir_sq[n] = rho * norm_sqr(residual.node(n));
        }
        frame.push(rows);
    }
    let integ = |v: &[f64]| disc.measure.integrate_real(v).map(f64::sqrt);
    Ok(ProjectedResiduals {
        tangent,
        frame,
        tangent_mismatch: tmis,
        frame_mismatch: fmis,
        gram_deviation: gdev,
        tangent_norm: integ(&tan_sq)?,
        frame_norm: integ(&frm_sq)?,
        reconstructed_norm: integ(&rec_sq)?,
        direct_norm: integ(&dir_sq)?,
    })
}

/// Residual summary; serializes as the report written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms {
    /// `√(∫ w |R_χ|²)`.
    pub nuclear_norm: f64,
    /// `nuclear_norm / |E|`; stationary mode with `|E| > 10⁻¹²` only.
    pub nuclear_relative: Option<f64>,
    /// `√(∫ w |χ|² ‖R_Φ‖²)`.
    pub electronic_norm: f64,
    /// Density-weighted norm of `⟨Φ|R_Φ⟩`.
    pub phi_projection: f64,
    /// Density-weighted norm of the difference between the two kinetic forms.
    pub form_agreement: f64,
    pub projected: ProjectedSummary,
    pub masked_fraction: f64,
    /// Fraction of nodes left out of the norms (mask plus stencil halo).
    pub excluded_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedSummary {
    pub tangent_norm: f64,
    pub frame_norm: f64,
    pub tangent_mismatch: f64,
    pub frame_mismatch: f64,
    pub gram_deviation: f64,
    pub reconstructed_norm: f64,
    pub direct_norm: f64,
}

/// Full residual evaluation with every field kept.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub nuclear: Field<C64>,
    pub electronic: Field<C64>,
    pub electronic_divergence: Field<C64>,
    pub projected: ProjectedResiduals,
    pub norms: ResidualNorms,
}

pub fn evaluate_residuals(
    disc: &Discretization,
    fact: &Factorization,
    geo: &EfGeometry,
    h_bo: &[DMatrix<C64>],
    mode: &ResidualMode,
) -> Result<ResidualReport> {
    let nuclear = nuclear_residual(disc, fact, geo, mode)?;
    let electronic = electronic_residual(disc, fact, geo, h_bo, mode)?;
    let electronic_divergence = electronic_residual_divergence(disc, fact, geo, h_bo, mode)?;
    let projected = projected_electronic_equations(disc, fact, geo, h_bo, &electronic, mode)?;
    let nuclear_norm = weighted_norm(disc, fact, &nuclear, false)?;
    let diff = Field::from_fn(fact.nodes(), fact.levels(), |n, c| {
        electronic.get(n, c) - electronic_divergence.get(n, c)
    });
    let norms = ResidualNorms {
        nuclear_norm,
        nuclear_relative: match mode {
            ResidualMode::Stationary { energy } if energy.abs() > ENERGY_FLOOR => Some(nuclear_norm / energy.abs()),
            ResidualMode::Stationary { .. } => None,
            ResidualMode::Dynamic { .. } => None,
        },
        electronic_norm: weighted_norm(disc, fact, &electronic, true)?,
        phi_projection: projection_identity_check(disc, fact, &electronic)?,
        form_agreement: weighted_norm(disc, fact, &diff, true)?,
        projected: ProjectedSummary {
            tangent_norm: projected.tangent_norm,
            frame_norm: projected.frame_norm,
            tangent_mismatch: projected.tangent_mismatch,
            frame_mismatch: projected.frame_mismatch,
            gram_deviation: projected.gram_deviation,
            reconstructed_norm: projected.reconstructed_norm,
            direct_norm: projected.direct_norm,
        },
        masked_fraction: fact.masked_fraction(),
        excluded_fraction: {
            let skip = excluded_nodes(disc, fact);
            skip.iter().filter(|&&x| x).count() as f64 / skip.len().max(1) as f64
        },
    };
    Ok(ResidualReport {
        nuclear,
        electronic,
        electronic_divergence,
        projected,
        norms,
    })
}
