//! Quantum geometric tensor, quantum metric, quantum Christoffel symbols,
//! tangent frame and the second-derivative decomposition of `Φ`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::covariant::{Charge, Transport};
use crate::error::{Error, Result};
use crate::factorization::{Factorization, PHI_NORM_TOLERANCE};
use crate::numerics::Closure;
use crate::scalar::{braket, norm_sqr, C64};
use crate::solver::Discretization;
use crate::{Field, MetricSamples};

/// Nodes where `h` has condition number above this are flagged.
pub const CONDITION_CAP: f64 = 1e8;
/// `h` eigenvalues below this fraction of the largest one on the grid count
/// as zero when ranking `{D_μΦ}`.
pub const RANK_FLOOR: f64 = 1e-12;
/// Absolute floor on `h` eigenvalues; rounding alone leaves `h ~ 1e-30`.
pub const H_FLOOR: f64 = 1e-20;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[inline]
fn idx2(d: usize, a: usize, b: usize) -> usize {
    a * d + b
}

/// Covariant first and symmetrized second derivatives of `χ` and `Φ`.
#[derive(Debug, Clone)]
pub struct CovariantDerivatives {
    /// `D_μΦ`, orthogonal to `Φ` at every node.
    pub d_phi: Vec<Field<C64>>,
    /// `½(D_μD_ν + D_νD_μ)Φ` at `μ·d + ν`.
    pub dd_phi: Vec<Field<C64>>,
    /// `D_μχ`.
    pub d_chi: Vec<Field<C64>>,
    /// `½(D_μD_ν + D_νD_μ)χ` at `μ·d + ν`.
    pub dd_chi: Vec<Field<C64>>,
    /// `max |⟨D_λΦ|(D_μD_ν − D_νD_μ)Φ⟩|` before symmetrization.
    pub upsilon_asymmetry: f64,
    pub degenerate_links: usize,
}

/// Link-transported covariant derivatives. `Φ`-like fields use one-sided
/// closures, `χ`-like fields vanish outside the box.
pub fn covariant_derivatives(disc: &Discretization, fact: &Factorization) -> Result<CovariantDerivatives> {
    let dev = fact.phi_norm_deviation();
    if dev > PHI_NORM_TOLERANCE {
        return Err(Error::Unnormalized { deviation: dev });
    }
    let d = disc.dim();
    let tp = Transport::new(&disc.diff, &fact.phi, Closure::OneSided)?;
    let tc = Transport::new(&disc.diff, &fact.phi, Closure::Dirichlet)?;
    let mut d_phi = Vec::with_capacity(d);
    for mu in 0..d {
        let mut raw = tp.derivative(&fact.phi, mu, Charge::PhiLike)?;
        for n in 0..raw.nodes() {
            let along = braket(fact.phi.node(n), raw.node(n));
            for c in 0..raw.comps() {
                let v = raw.get(n, c) - fact.phi.get(n, c) * along;
                raw.set(n, c, v);
            }
        }
        d_phi.push(raw);
    }
    let mut nested_phi = nested(&tp, &d_phi, Charge::PhiLike)?;
    let d_chi: Vec<Field<C64>> = (0..d)
        .map(|mu| tc.derivative(&fact.chi, mu, Charge::ChiLike))
        .collect::<Result<_>>()?;
    let mut nested_chi = nested(&tc, &d_chi, Charge::ChiLike)?;

    let mut asym = 0.0_f64;
    for l in 0..d {
        for mu in 0..d {
            for nu in mu + 1..d {
                for n in (0..fact.nodes()).filter(|&n| !fact.mask[n]) {
                    let a = nested_phi[idx2(d, mu, nu)].node(n);
                    let b = nested_phi[idx2(d, nu, mu)].node(n);
                    let diff: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
                    asym = asym.max(braket(d_phi[l].node(n), &diff).norm());
                }
            }
        }
    }
    // Diagonal entries from compact second differences; their truncation
    // constant is several times smaller than that of a nested pair.
    for mu in 0..d {
        nested_phi[idx2(d, mu, mu)] = tp.second_derivative(&fact.phi, mu, Charge::PhiLike)?;
        nested_chi[idx2(d, mu, mu)] = tc.second_derivative(&fact.chi, mu, Charge::ChiLike)?;
    }
    Ok(CovariantDerivatives {
        dd_phi: symmetrize(&nested_phi, d),
        dd_chi: symmetrize(&nested_chi, d),
        d_phi,
        d_chi,
        upsilon_asymmetry: asym,
        degenerate_links: tp.degenerate_links() + tc.degenerate_links(),
    })
}

// nested[μ·d + ν] = D_μ (D_ν f)
fn nested(t: &Transport, first: &[Field<C64>], charge: Charge) -> Result<Vec<Field<C64>>> {
    let d = first.len();
    let mut out = Vec::with_capacity(d * d);
    for mu in 0..d {
        for f_nu in first {
            out.push(t.derivative(f_nu, mu, charge)?);
        }
    }
    Ok(out)
}

fn symmetrize(raw: &[Field<C64>], d: usize) -> Vec<Field<C64>> {
    let mut out = raw.to_vec();
    for mu in 0..d {
        for nu in mu + 1..d {
            let (a, b) = (&raw[idx2(d, mu, nu)], &raw[idx2(d, nu, mu)]);
            let s = Field::from_fn(a.nodes(), a.comps(), |n, c| (a.get(n, c) + b.get(n, c)) * 0.5);
            out[idx2(d, mu, nu)] = s.clone();
            out[idx2(d, nu, mu)] = s;
        }
    }
    out
}

/// `h_{λκ} = ⟨D_λΦ|D_κΦ⟩`, stored row-major per node.
pub fn quantum_geometric_tensor(d_phi: &[Field<C64>]) -> Result<Field<C64>> {
    let d = d_phi.len();
    let nodes = d_phi.first().map_or(0, Field::nodes);
    if d_phi.iter().any(|f| f.nodes() != nodes) {
        return Err(Error::shape("covariant derivatives on different grids"));
    }
    Ok(Field::from_fn(nodes, d * d, |n, k| {
        braket(d_phi[k / d].node(n), d_phi[k % d].node(n))
    }))
}

/// `g_{μν} = Re⟨(P_μ − A_μ)Φ|(P_ν − A_ν)Φ⟩` with `(P_μ − A_μ)Φ = −i D_μΦ`.
pub fn quantum_metric(d_phi: &[Field<C64>]) -> Result<Field<f64>> {
    let d = d_phi.len();
    let nodes = d_phi.first().map_or(0, Field::nodes);
    if d_phi.iter().any(|f| f.nodes() != nodes) {
        return Err(Error::shape("covariant derivatives on different grids"));
    }
    let minus_i = C64::new(0.0, -1.0);
    let p: Vec<Field<C64>> = d_phi.iter().map(|f| f.map(|z| minus_i * z)).collect();
    Ok(Field::from_fn(nodes, d * d, |n, k| {
        let (mu, nu) = (k / d, k % d);
        p[mu].node(n).iter().zip(p[nu].node(n)).fold(0.0, |acc, (a, b)| acc + a.re * b.re + a.im * b.im)
    }))
}

/// `ε_geo = ½ M^{μν} g_{μν}`.
pub fn epsilon_geo(samples: &MetricSamples, g: &Field<f64>) -> Result<Vec<f64>> {
    let d = samples.dim();
    g.check_nodes(samples.len(), "quantum metric")?;
    if g.comps() != d * d {
        return Err(Error::shape(format!("quantum metric has {} components, expected {}", g.comps(), d * d)));
    }
    Ok((0..g.nodes())
        .map(|n| {
            let m = &samples.inverse_mass[n];
            let mut s = 0.0;
            for mu in 0..d {
                for nu in 0..d {
                    s += m[(mu, nu)] * g.get(n, idx2(d, mu, nu));
                }
            }
            0.5 * s
        })
        .collect())
}

/// `ε_BO = ⟨Φ|Ĥ^BO|Φ⟩` per node, and the largest imaginary part seen.
pub fn epsilon_bo(phi: &Field<C64>, h_bo: &[DMatrix<C64>]) -> Result<(Vec<f64>, f64)> {
    phi.check_nodes(h_bo.len(), "conditional amplitude")?;
    let mut imag = 0.0_f64;
    let mut out = Vec::with_capacity(h_bo.len());
    for (n, h) in h_bo.iter().enumerate() {
        if h.nrows() != phi.comps() || h.ncols() != phi.comps() {
            return Err(Error::shape(format!(
                "Ĥ^BO is {}x{} but Φ has {} levels",
                h.nrows(),
                h.ncols(),
                phi.comps()
            )));
        }
        let v = DVector::from_column_slice(phi.node(n));
        let z = v.dotc(&(h * &v));
        imag = imag.max(z.im.abs());
        out.push(z.re);
    }
    Ok((out, imag))
}

/// `Υ_{λμν} = ⟨D_λΦ|D_μD_νΦ⟩`, index `(λ·d + μ)·d + ν`.
pub fn quantum_christoffel_first(d_phi: &[Field<C64>], dd_phi: &[Field<C64>]) -> Result<Field<C64>> {
    let d = d_phi.len();
    if dd_phi.len() != d * d {
        return Err(Error::shape(format!("{} second derivatives for dimension {d}", dd_phi.len())));
    }
    let nodes = d_phi.first().map_or(0, Field::nodes);
    Ok(Field::from_fn(nodes, d * d * d, |n, k| {
        let (l, mn) = (k / (d * d), k % (d * d));
        braket(d_phi[l].node(n), dd_phi[mn].node(n))
    }))
}

/// `Γ_{λμν} = ½(∂_ν g_{λμ} + ∂_μ g_{λν} − ∂_λ g_{μν})` by finite differences.
pub fn christoffel_from_metric(disc: &Discretization, g: &Field<f64>) -> Result<Field<f64>> {
    let d = disc.dim();
    if g.comps() != d * d {
        return Err(Error::shape(format!("quantum metric has {} components, expected {}", g.comps(), d * d)));
    }
    let dg = disc.diff.gradient(g, Closure::OneSided)?;
    Ok(Field::from_fn(g.nodes(), d * d * d, |n, k| {
        let (l, mu, nu) = (k / (d * d), (k / d) % d, k % d);
        0.5 * (dg[nu].get(n, idx2(d, l, mu)) + dg[mu].get(n, idx2(d, l, nu)) - dg[l].get(n, idx2(d, mu, nu)))
    }))
}

/// Spectral data of `h` at one node.
#[derive(Debug, Clone)]
struct HSpectrum {
    values: Vec<f64>,
    vectors: DMatrix<C64>,
}

fn h_spectrum(h: &Field<C64>, n: usize, d: usize) -> HSpectrum {
    let m = DMatrix::from_fn(d, d, |i, j| {
        // Hermitian part; h is Hermitian up to rounding.
        (h.get(n, idx2(d, i, j)) + h.get(n, idx2(d, j, i)).conj()) * 0.5
    });
    let eig = SymmetricEigen::new(m);
    HSpectrum {
        values: eig.eigenvalues.iter().copied().collect(),
        vectors: eig.eigenvectors,
    }
}

/// Per-node tangent frame with the rank of `{D_μΦ}` projected off `Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub vectors: Vec<C64>,
    pub count: usize,
    pub rank: usize,
}

impl TangentFrame {
    pub fn vector(&self, a: usize, levels: usize) -> &[C64] {
        &self.vectors[a * levels..(a + 1) * levels]
    }
}

fn orthogonalize(v: &mut [C64], basis: &[Vec<C64>]) {
    // Two passes of classical Gram–Schmidt.
    for _ in 0..2 {
        for b in basis {
            let c = braket(b, v);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= y * c);
        }
    }
}

/// Orthonormal basis of the complement of `span{Φ, D_μΦ}` at one node.
///
/// `span{D_μΦ}` is represented by `h`-eigenvectors with eigenvalue above
/// `floor`; standard basis vectors are then orthogonalized in order, taking
/// each whose residual has squared norm at least `½/n`.
pub fn tangent_frame(phi: &[C64], d_phi: &[&[C64]], floor: f64) -> TangentFrame {
    let n = phi.len();
    let d = d_phi.len();
    let h = Field::from_fn(1, d * d, |_, k| braket(d_phi[k / d], d_phi[k % d]));
    let spec = h_spectrum(&h, 0, d);
    let mut basis: Vec<Vec<C64>> = vec![phi.to_vec()];
    let mut rank = 0;
    for (i, &s) in spec.values.iter().enumerate() {
        if s > floor {
            let mut u: Vec<C64> = (0..n)
                .map(|c| (0..d).fold(ZERO, |acc, l| acc + d_phi[l][c] * spec.vectors[(l, i)]))
                .collect();
            orthogonalize(&mut u, &basis);
            let r = norm_sqr(&u).sqrt();
            u.iter_mut().for_each(|z| *z /= r);
            basis.push(u);
            rank += 1;
        }
    }
    let target = n.saturating_sub(1 + rank);
    let mut vectors = Vec::with_capacity(target * n);
    let mut count = 0;
    for k in 0..n {
        if count == target {
            break;
        }
        let mut e = vec![ZERO; n];
        e[k] = C64::new(1.0, 0.0);
        orthogonalize(&mut e, &basis);
        let r2 = norm_sqr(&e);
        if r2 >= 0.5 / n as f64 {
            let r = r2.sqrt();
            e.iter_mut().for_each(|z| *z /= r);
            vectors.extend_from_slice(&e);
            basis.push(e);
            count += 1;
        }
    }
    TangentFrame { vectors, count, rank }
}

/// Everything geometric about one factorization.
#[derive(Debug, Clone)]
pub struct EfGeometry {
    pub derivatives: CovariantDerivatives,
    /// `h_{λκ}` (`d·d` per node).
    pub h: Field<C64>,
    /// `g_{μν}` (`d·d` per node).
    pub g: Field<f64>,
    /// `Υ_{λμν}` (`d³` per node).
    pub upsilon_first: Field<C64>,
    /// `Υ^λ_{μν}`; zero at flagged nodes.
    pub upsilon_second: Field<C64>,
    /// `Γ_{λμν} = Re Υ_{λμν}`.
    pub gamma: Field<f64>,
    /// `C_{λμν} = Im Υ_{λμν}`.
    pub c_tensor: Field<f64>,
    pub eps_bo: Vec<f64>,
    pub eps_bo_imag: f64,
    pub eps_geo: Vec<f64>,
    pub frames: Vec<TangentFrame>,
    /// `Ω^a_{μν}`, index `(a·d + μ)·d + ν`, per node.
    pub omega: Vec<Vec<C64>>,
    /// `⟨Φ|D_μD_νΦ⟩` (`d·d` per node).
    pub phi_projection: Field<C64>,
    /// `h` singular or above the condition cap.
    pub flagged: Vec<bool>,
    /// `max |h_{λκ}Υ^κ_{μν} − Υ_{λμν}|` over unflagged unmasked nodes.
    pub christoffel_reconstruction: f64,
    /// Norm of `D_μD_νΦ` minus its expansion on `{Φ, D_λΦ, e_a}`, max over `(μ, ν)`.
    pub decomposition_residual: Vec<f64>,
    /// `max |⟨Φ|e_a⟩|, |⟨D_μΦ|e_a⟩|` over all nodes.
    pub frame_orthogonality: f64,
}

impl EfGeometry {
    pub fn dim(&self) -> usize {
        self.derivatives.d_phi.len()
    }
}

/// Computes every geometric object of `Φ` on the grid.
pub fn compute_geometry(disc: &Discretization, fact: &Factorization, h_bo: &[DMatrix<C64>]) -> Result<EfGeometry> {
    compute_geometry_with(disc, fact, h_bo, CONDITION_CAP)
}

/// [`compute_geometry`] with nodes flagged once `cond(h)` exceeds `condition_cap`.
pub fn compute_geometry_with(
    disc: &Discretization,
    fact: &Factorization,
    h_bo: &[DMatrix<C64>],
    condition_cap: f64,
) -> Result<EfGeometry> {
    if !(condition_cap > 1.0) {
        return Err(Error::InvalidArgument(format!("condition cap {condition_cap} must exceed 1")));
    }
    let d = disc.dim();
    let levels = fact.levels();
    let nodes = fact.nodes();
    let derivatives = covariant_derivatives(disc, fact)?;
    let h = quantum_geometric_tensor(&derivatives.d_phi)?;
    let g = quantum_metric(&derivatives.d_phi)?;
    let upsilon_first = quantum_christoffel_first(&derivatives.d_phi, &derivatives.dd_phi)?;
    let (eps_bo, eps_bo_imag) = epsilon_bo(&fact.phi, h_bo)?;
    let eps_geo = epsilon_geo(&disc.samples, &g)?;

    let spectra: Vec<HSpectrum> = (0..nodes).map(|n| h_spectrum(&h, n, d)).collect();
    let global = (0..nodes)
        .filter(|&n| !fact.mask[n])
        .flat_map(|n| spectra[n].values.iter().copied())
        .fold(0.0_f64, f64::max);
    let floor = (global * RANK_FLOOR).max(H_FLOOR);

    let per_node: Vec<_> = (0..nodes)
        .into_par_iter()
        .map(|n| {
            let spec = &spectra[n];
            let max = spec.values.iter().copied().fold(0.0_f64, f64::max);
            let min = spec.values.iter().copied().fold(f64::INFINITY, f64::min);
            let flagged = !(max > floor && min > max / condition_cap);
            let mut ups2 = vec![ZERO; d * d * d];
            let mut recon = 0.0_f64;
            if !flagged {
                // h⁻¹ = V diag(1/σ) V†
                let inv = DMatrix::from_fn(d, d, |i, j| {
                    (0..d).fold(ZERO, |acc, k| {
                        acc + spec.vectors[(i, k)] * spec.vectors[(j, k)].conj() / spec.values[k]
                    })
                });
                for l in 0..d {
                    for mn in 0..d * d {
                        ups2[l * d * d + mn] =
                            (0..d).fold(ZERO, |acc, k| acc + inv[(l, k)] * upsilon_first.get(n, k * d * d + mn));
                    }
                }
                for l in 0..d {
                    for mn in 0..d * d {
                        let back = (0..d).fold(ZERO, |acc, k| acc + h.get(n, idx2(d, l, k)) * ups2[k * d * d + mn]);
                        recon = recon.max((back - upsilon_first.get(n, l * d * d + mn)).norm());
                    }
                }
            }
            let dphi: Vec<&[C64]> = derivatives.d_phi.iter().map(|f| f.node(n)).collect();
            let frame = tangent_frame(fact.phi.node(n), &dphi, floor);

            let mut ortho = 0.0_f64;
            for a in 0..frame.count {
                let e = frame.vector(a, levels);
                ortho = ortho.max(braket(fact.phi.node(n), e).norm());
                for v in &dphi {
                    ortho = ortho.max(braket(v, e).norm());
                }
            }

            // Ω^a_{μν} = G⁻¹_{ab} ⟨e_b|D_μD_νΦ⟩
            let gram = DMatrix::from_fn(frame.count, frame.count, |a, b| {
                braket(frame.vector(a, levels), frame.vector(b, levels))
            });
            let lu = gram.clone().lu();
            let mut omega = vec![ZERO; frame.count * d * d];
            let mut proj = vec![ZERO; d * d];
            let mut resid = 0.0_f64;
            for mn in 0..d * d {
                let s = derivatives.dd_phi[mn].node(n);
                proj[mn] = braket(fact.phi.node(n), s);
                if frame.count > 0 {
                    let rhs = DVector::from_fn(frame.count, |b, _| braket(frame.vector(b, levels), s));
                    let sol = lu.solve(&rhs).unwrap_or(rhs);
                    for a in 0..frame.count {
                        omega[a * d * d + mn] = sol[a];
                    }
                }
                let mut r: Vec<C64> = s.iter().zip(fact.phi.node(n)).map(|(x, p)| x - p * proj[mn]).collect();
                if flagged {
                    // Orthonormal stand-in for span{D_λΦ}.
                    let mut basis: Vec<Vec<C64>> = Vec::new();
                    for (i, &sv) in spec.values.iter().enumerate() {
                        if sv > floor {
                            let mut u: Vec<C64> = (0..levels)
                                .map(|c| (0..d).fold(ZERO, |acc, l| acc + dphi[l][c] * spec.vectors[(l, i)]))
                                .collect();
                            orthogonalize(&mut u, &basis);
                            let nr = norm_sqr(&u).sqrt();
                            u.iter_mut().for_each(|z| *z /= nr);
                            basis.push(u);
                        }
                    }
                    for u in &basis {
                        let c = braket(u, &r);
                        r.iter_mut().zip(u).for_each(|(x, y)| *x -= y * c);
                    }
                } else {
                    for (l, v) in dphi.iter().enumerate() {
                        let c = ups2[l * d * d + mn];
                        r.iter_mut().zip(v.iter()).for_each(|(x, y)| *x -= y * c);
                    }
                }
                for a in 0..frame.count {
                    let c = omega[a * d * d + mn];
                    r.iter_mut().zip(frame.vector(a, levels)).for_each(|(x, y)| *x -= y * c);
                }
                resid = resid.max(norm_sqr(&r).sqrt());
            }
            (flagged, ups2, recon, frame, omega, proj, resid, ortho)
        })
        .collect();

    let mut flagged = Vec::with_capacity(nodes);
    let mut ups2 = Vec::with_capacity(nodes * d * d * d);
    let mut recon = 0.0_f64;
    let mut frames = Vec::with_capacity(nodes);
    let mut omega = Vec::with_capacity(nodes);
    let mut proj = Vec::with_capacity(nodes * d * d);
    let mut decomposition_residual = Vec::with_capacity(nodes);
    let mut frame_orthogonality = 0.0_f64;
    for (n, (f, u, r, fr, om, pr, res, orth)) in per_node.into_iter().enumerate() {
        if !f && !fact.mask[n] {
            recon = recon.max(r);
        }
        flagged.push(f);
        ups2.extend(u);
        frames.push(fr);
        omega.push(om);
        proj.extend(pr);
        decomposition_residual.push(res);
        frame_orthogonality = frame_orthogonality.max(orth);
    }
    Ok(EfGeometry {
        gamma: upsilon_first.re(),
        c_tensor: upsilon_first.im(),
        h,
        g,
        upsilon_first,
        upsilon_second: Field::new(d * d * d, ups2)?,
        eps_bo,
        eps_bo_imag,
        eps_geo,
        frames,
        omega,
        phi_projection: Field::new(d * d, proj)?,
        flagged,
        christoffel_reconstruction: recon,
        decomposition_residual,
        frame_orthogonality,
        derivatives,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::MassMetricField;
    use crate::numerics::{Boundary, FdOrder, GridSpec};
    use crate::Grid;

    fn ring(n: usize) -> Discretization {
        let g = Grid::new(&GridSpec::uniform_1d(n, 0.0, std::f64::consts::TAU, Boundary::Periodic)).unwrap();
        Discretization::new(g, MassMetricField::flat(1, 2.0).unwrap(), FdOrder::Fourth).unwrap()
    }

    fn fact_from(phi: Field<C64>) -> Factorization {
        let n = phi.nodes();
        Factorization {
            chi: Field::filled(n, 1, C64::new(1.0, 0.0)),
            phi,
            mask: vec![false; n],
        }
    }

    fn rotating(d: &Discretization, theta: impl Fn(f64) -> f64) -> Factorization {
        fact_from(Field::from_fn(d.nodes(), 2, |n, c| {
            let t = theta(d.grid.point(n)[0]);
            C64::new(if c == 0 { t.cos() } else { t.sin() }, 0.0)
        }))
    }

    fn sample_bo(d: &Discretization, levels: usize) -> Vec<DMatrix<C64>> {
        (0..d.nodes())
            .map(|n| {
                let x = d.grid.point(n)[0];
                DMatrix::from_fn(levels, levels, |i, j| {
                    if i == j {
                        C64::new(i as f64 + x.cos(), 0.0)
                    } else {
                        C64::new(0.2, 0.1 * (i as f64 - j as f64))
                    }
                })
            })
            .collect()
    }

    #[test]
    fn constant_phi_has_no_geometry() {
        let d = ring(64);
        let f = rotating(&d, |_| 0.4);
        let geo = compute_geometry(&d, &f, &sample_bo(&d, 2)).unwrap();
        assert!(geo.h.data().iter().all(|z| z.norm() < 1e-14));
        assert!(geo.upsilon_first.data().iter().all(|z| z.norm() < 1e-14));
        assert!(geo.flagged.iter().all(|&f| f));
        assert!(geo.decomposition_residual.iter().all(|&r| r < 1e-13));
        // Complement of span{Φ} in C² is one vector.
        assert!(geo.frames.iter().all(|fr| fr.count == 1 && fr.rank == 0));
    }

    #[test]
    fn rotating_two_level_metric() {
        let d = ring(128);
        let th = |x: f64| 0.5 * x + 0.3 * x.sin();
        let dth = |x: f64| 0.5 + 0.3 * x.cos();
        let f = rotating(&d, th);
        let geo = compute_geometry(&d, &f, &sample_bo(&d, 2)).unwrap();
        for n in 0..d.nodes() {
            let x = d.grid.point(n)[0];
            let exact = dth(x).powi(2);
            assert!((geo.h.get(n, 0).re - exact).abs() < 1e-4 * exact, "{n}");
            assert!((geo.g.get(n, 0) - geo.h.get(n, 0).re).abs() < 1e-14);
            assert!((geo.eps_geo[n] - 0.25 * geo.g.get(n, 0)).abs() < 1e-15);
            assert!(geo.c_tensor.get(n, 0).abs() < 1e-8);
            assert!(geo.frames[n].count == 0 && geo.frames[n].rank == 1);
            assert!(geo.decomposition_residual[n] < 1e-10);
            // d = 1: Υ¹₁₁ = Υ₁₁₁ / h₁₁
            let u = geo.upsilon_first.get(n, 0) / geo.h.get(n, 0);
            assert!((geo.upsilon_second.get(n, 0) - u).norm() < 1e-12 * u.norm().max(1.0));
        }
        assert!(!geo.flagged.iter().any(|&f| f));
        assert!(geo.christoffel_reconstruction < 1e-10);
        let gam = christoffel_from_metric(&d, &geo.g).unwrap();
        let scale = geo.gamma.data().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        for n in 0..d.nodes() {
            assert!((gam.get(n, 0) - geo.gamma.get(n, 0)).abs() < 1e-4 * scale);
        }
        let (eps, imag) = (&geo.eps_bo, geo.eps_bo_imag);
        assert!(imag < 1e-12);
        let bo = sample_bo(&d, 2);
        for n in 0..d.nodes() {
            let ev = SymmetricEigen::new(bo[n].clone()).eigenvalues;
            let (lo, hi) = (ev.min(), ev.max());
            assert!(eps[n] >= lo - 1e-12 && eps[n] <= hi + 1e-12);
        }
    }

    #[test]
    fn three_level_frame_and_gauge_invariance() {
        let d = ring(96);
        let phi = Field::from_fn(96, 3, |n, c| {
            let x = d.grid.point(n)[0];
            let a = 0.6 + 0.2 * x.sin();
            let b = 0.4 * x.cos();
            let v = [C64::new(a.cos() * b.cos(), 0.0), C64::from_polar(a.sin() * b.cos(), x), C64::new(b.sin(), 0.0)];
            v[c]
        });
        let f = fact_from(phi);
        let bo = sample_bo(&d, 3);
        let geo = compute_geometry(&d, &f, &bo).unwrap();
        assert!(geo.frames.iter().all(|fr| fr.count == 1 && fr.rank == 1));
        assert!(geo.frame_orthogonality < 1e-10);
        assert!(geo.decomposition_residual.iter().all(|&r| r < 1e-8));

        let lam: Vec<f64> = (0..96).map(|n| 1.5 * d.grid.point(n)[0].sin() + 0.7).collect();
        let f2 = crate::factorization::gauge_transform(&f, &lam).unwrap();
        let geo2 = compute_geometry(&d, &f2, &bo).unwrap();
        for n in 0..96 {
            assert!((geo.h.get(n, 0) - geo2.h.get(n, 0)).norm() < 1e-10);
            assert!((geo.g.get(n, 0) - geo2.g.get(n, 0)).abs() < 1e-10);
            assert!((geo.eps_bo[n] - geo2.eps_bo[n]).abs() < 1e-12);
            assert!((geo.upsilon_first.get(n, 0) - geo2.upsilon_first.get(n, 0)).norm() < 1e-10);
            let (e1, e2) = (geo.frames[n].vector(0, 3), geo2.frames[n].vector(0, 3));
            assert!((braket(e1, e2).norm() - 1.0).abs() < 1e-8);
            for c in 0..3 {
                let expect = geo.derivatives.d_phi[0].get(n, c) * C64::from_polar(1.0, lam[n]);
                assert!((geo2.derivatives.d_phi[0].get(n, c) - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unnormalized_phi_rejected() {
        let d = ring(32);
        let f = fact_from(Field::filled(32, 2, C64::new(1.0, 0.0)));
        assert!(matches!(compute_geometry(&d, &f, &sample_bo(&d, 2)), Err(Error::Unnormalized { .. })));
    }
}
