//! Inverse mass tensor fields, their volume weight and Π symbols.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use super::chart::{parse_expr, CoordinateChart};
use super::tensor::{Tensor2, Tensor3};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::numerics::grid::Grid;
use crate::numerics::stencil::FdOrder;
use crate::scalar::Real;

/// Ratio below which the smallest eigenvalue of `M^{μν}` counts as degenerate.
pub const PD_FLOOR: f64 = 1e-12;

type InverseMassFn<T> = dyn Fn(&[T]) -> Result<Tensor2<T>> + Send + Sync;

/// `Q -> M^{μν}(Q)` together with the constant `J₀`.
///
/// Derivatives of the metric are taken by central differences of order
/// `fd_order` with step `fd_step * max(1, |q|)`.
#[derive(Clone)]
pub struct MassMetricField<T> {
    dim: usize,
    inverse_mass: Arc<InverseMassFn<T>>,
    j0: T,
    fd_order: FdOrder,
    fd_step: T,
}

impl<T> fmt::Debug for MassMetricField<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MassMetricField")
            .field("dim", &self.dim)
            .field("fd_order", &self.fd_order)
            .finish_non_exhaustive()
    }
}

fn default_step<T: Real>(order: FdOrder) -> T {
    T::epsilon().powf(T::one() / T::lit(order.as_usize() as f64 + 1.0))
}

impl<T: Real> MassMetricField<T> {
    pub fn new(dim: usize, j0: T, f: impl Fn(&[T]) -> Result<Tensor2<T>> + Send + Sync + 'static) -> Result<Self> {
        if !(j0 > T::zero() && j0.is_finite()) {
            return Err(Error::InvalidArgument(format!("j0 must be positive, got {j0}")));
        }
        Ok(Self {
            dim,
            inverse_mass: Arc::new(f),
            j0,
            fd_order: FdOrder::Fourth,
            fd_step: default_step(FdOrder::Fourth),
        })
    }

    /// Position-independent metric.
    pub fn constant(inverse_mass: Tensor2<T>, j0: T) -> Result<Self> {
        Self::new(inverse_mass.dim(), j0, move |_| Ok(inverse_mass.clone()))
    }

    /// Flat metric `M^{μν} = δ^{μν}/m`.
    pub fn flat(dim: usize, mass: T) -> Result<Self> {
        Self::constant(Tensor2::identity(dim).scale(T::one() / mass), T::one())
    }

    /// Metric whose entries are expressions over `q1..qd`.
    pub fn from_exprs(entries: &[Vec<String>], j0: T, field: &str) -> Result<Self> {
        let dim = entries.len();
        let mut exprs: Vec<Expr> = Vec::with_capacity(dim * dim);
        for (i, row) in entries.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::schema(format!("{field}[{i}]"), format!("expected {dim} entries, found {}", row.len())));
            }
            for (j, s) in row.iter().enumerate() {
                exprs.push(parse_expr(s, dim, &format!("{field}[{i}][{j}]"))?);
            }
        }
        Self::new(dim, j0, move |q| Ok(Tensor2::from_fn(dim, |i, j| exprs[i * dim + j].eval(q))))
    }

    pub fn with_fd(mut self, order: FdOrder, step: Option<T>) -> Self {
        self.fd_order = order;
        self.fd_step = step.unwrap_or_else(|| default_step(order));
        self
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn j0(&self) -> T {
        self.j0
    }

    pub fn fd_order(&self) -> FdOrder {
        self.fd_order
    }

    /// Raw `M^{μν}(q)` as supplied, without checks.
    pub fn inverse_mass_unchecked(&self, q: &[T]) -> Result<Tensor2<T>> {
        (self.inverse_mass)(q)
    }

    /// `M^{μν}(q)`, required symmetric and positive definite.
    pub fn inverse_mass(&self, q: &[T]) -> Result<Tensor2<T>> {
        let m = (self.inverse_mass)(q)?;
        let degenerate = |detail: String| Error::MetricDegeneracy {
            location: format!("{q:?}"),
            detail,
        };
        if m.dim() != self.dim {
            return Err(Error::shape(format!("metric at {q:?} is {}x{}, expected dimension {}", m.dim(), m.dim(), self.dim)));
        }
        let scale = m.max_abs();
        if !scale.is_finite() || scale == T::zero() {
            return Err(degenerate("inverse mass tensor is zero or not finite".into()));
        }
        let asym = m.asymmetry();
        if asym > T::lit(PD_FLOOR) * scale {
            return Err(degenerate(format!("inverse mass tensor not symmetric (|M - Mᵀ| = {asym:e})")));
        }
        let ev = m.symmetric_eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if !(lo > T::lit(PD_FLOOR) * hi) {
            return Err(degenerate(format!("eigenvalues in [{lo:e}, {hi:e}] violate the positive-definite floor")));
        }
        Ok(m)
    }

    /// `M_{μν}(q)`.
    pub fn mass(&self, q: &[T]) -> Result<Tensor2<T>> {
        let m = self.inverse_mass(q)?;
        m.inverse().ok_or_else(|| Error::MetricDegeneracy {
            location: format!("{q:?}"),
            detail: "inverse mass tensor is singular".into(),
        })
    }

    /// `𝓜 = det M_{μν}`.
    pub fn det_mass(&self, q: &[T]) -> Result<T> {
        let det = self.mass(q)?.det();
        if !(det > T::zero()) {
            return Err(Error::MetricDegeneracy {
                location: format!("{q:?}"),
                detail: format!("det M = {det:e}"),
            });
        }
        Ok(det)
    }

    /// `∂_κ M_{μν}` for every κ.
    fn mass_gradient(&self, q: &[T]) -> Result<Vec<Tensor2<T>>> {
        let weights = self.fd_order.central_weights();
        let p = self.fd_order.half_width() as i64;
        let mut grad = Vec::with_capacity(self.dim);
        let mut probe = q.to_vec();
        for k in 0..self.dim {
            let h = self.fd_step * T::one().max(q[k].abs());
            let mut acc = Tensor2::zeros(self.dim);
            // Antisymmetric weights: pair the offsets so constants cancel exactly.
            for off in 1..=p {
                let w = T::lit(weights[(p + off) as usize]);
                probe[k] = q[k] + T::lit(off as f64) * h;
                let plus = self.mass(&probe)?;
                probe[k] = q[k] - T::lit(off as f64) * h;
                let minus = self.mass(&probe)?;
                for i in 0..self.dim {
                    for j in 0..self.dim {
                        acc[(i, j)] += w * (plus[(i, j)] - minus[(i, j)]);
                    }
                }
            }
            probe[k] = q[k];
            grad.push(acc.scale(T::one() / h));
        }
        Ok(grad)
    }

    /// `Π^λ_{μν} = ½ M^{λκ}(∂_ν M_{μκ} + ∂_μ M_{κν} − ∂_κ M_{μν})`.
    pub fn pi(&self, q: &[T]) -> Result<Tensor3<T>> {
        let minv = self.inverse_mass(q)?;
        let dm = self.mass_gradient(q)?;
        let d = self.dim;
        let half = T::lit(0.5);
        let mut pi = Tensor3::from_fn(d, |l, mu, nu| {
            let mut s = T::zero();
            for k in 0..d {
                s += minv[(l, k)] * (dm[nu][(mu, k)] + dm[mu][(k, nu)] - dm[k][(mu, nu)]);
            }
            half * s
        });
        // The formula is symmetric in (μ, ν); remove rounding asymmetry.
        for l in 0..d {
            for mu in 0..d {
                for nu in (mu + 1)..d {
                    let s = half * (pi[(l, mu, nu)] + pi[(l, nu, mu)]);
                    pi[(l, mu, nu)] = s;
                    pi[(l, nu, mu)] = s;
                }
            }
        }
        Ok(pi)
    }

    /// `√𝓜 · J₀`.
    pub fn volume_weight(&self, q: &[T]) -> Result<T> {
        Ok(self.det_mass(q)?.sqrt() * self.j0)
    }

    /// Evaluates `M^{μν}`, the volume weight and Π at every node.
    pub fn sample(&self, grid: &Grid<T>) -> Result<MetricSamples<T>> {
        if grid.dim() != self.dim {
            return Err(Error::shape(format!("metric dimension {} vs grid dimension {}", self.dim, grid.dim())));
        }
        let rows: Vec<(Tensor2<T>, T, Tensor3<T>)> = (0..grid.len())
            .into_par_iter()
            .map(|n| {
                let q = grid.point(n);
                Ok((self.inverse_mass(&q)?, self.volume_weight(&q)?, self.pi(&q)?))
            })
            .collect::<Result<_>>()?;
        let mut out = MetricSamples {
            inverse_mass: Vec::with_capacity(rows.len()),
            volume_weight: Vec::with_capacity(rows.len()),
            pi: Vec::with_capacity(rows.len()),
            j0: self.j0,
        };
        for (m, w, p) in rows {
            out.inverse_mass.push(m);
            out.volume_weight.push(w);
            out.pi.push(p);
        }
        Ok(out)
    }
}

/// Metric data evaluated at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSamples<T> {
    pub inverse_mass: Vec<Tensor2<T>>,
    pub volume_weight: Vec<T>,
    pub pi: Vec<Tensor3<T>>,
    pub j0: T,
}

impl<T: Real> MetricSamples<T> {
    pub fn dim(&self) -> usize {
        self.inverse_mass.first().map_or(0, Tensor2::dim)
    }

    pub fn len(&self) -> usize {
        self.volume_weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volume_weight.is_empty()
    }
}

/// Free-function form of [`MassMetricField::pi`].
pub fn compute_pi<T: Real>(metric: &MassMetricField<T>, q: &[T]) -> Result<Tensor3<T>> {
    metric.pi(q)
}

/// Free-function form of [`MassMetricField::volume_weight`].
pub fn volume_weight<T: Real>(metric: &MassMetricField<T>, q: &[T]) -> Result<T> {
    metric.volume_weight(q)
}

/// Π in barred coordinates at `Q̄(q)` from Π at the unbarred point `q`:
/// `Π̄^λ_{μν} = J^λ_ρ Π^ρ_{στ} (J⁻¹)^σ_μ (J⁻¹)^τ_ν + J^λ_ρ ∂²Q^ρ/∂Q̄^μ∂Q̄^ν`.
pub fn transform_pi<T: Real>(chart: &CoordinateChart, pi: &Tensor3<T>, q: &[T]) -> Result<Tensor3<T>> {
    let d = chart.dim();
    if pi.dim() != d {
        return Err(Error::shape(format!("Π has dimension {}, chart {d}", pi.dim())));
    }
    let j = chart.jacobian(q)?;
    let ji = chart.inverse_jacobian(q)?;
    let ih = chart.inverse_hessian(q)?;
    let mut low = Tensor3::zeros(d);
    for rho in 0..d {
        for mu in 0..d {
            for nu in 0..d {
                let mut s = ih[(rho, mu, nu)];
                for sg in 0..d {
                    for tau in 0..d {
                        s += pi[(rho, sg, tau)] * ji[(sg, mu)] * ji[(tau, nu)];
                    }
                }
                low[(rho, mu, nu)] = s;
            }
        }
    }
    Ok(Tensor3::from_fn(d, |l, mu, nu| {
        (0..d).fold(T::zero(), |s, rho| s + j[(l, rho)] * low[(rho, mu, nu)])
    }))
}

/// Metric in barred coordinates: `M̄^{μν}(Q̄) = J M^{στ} Jᵀ` at `Q = Q(Q̄)`.
pub fn pullback_metric<T: Real>(chart: &CoordinateChart, metric: &MassMetricField<T>) -> Result<MassMetricField<T>> {
    if chart.dim() != metric.dim() {
        return Err(Error::shape(format!("chart dimension {} vs metric dimension {}", chart.dim(), metric.dim())));
    }
    let chart = Arc::new(chart.clone());
    let base = metric.clone();
    let out = MassMetricField::new(metric.dim(), metric.j0(), move |qbar| {
        let q = chart.inverse(qbar);
        let j = chart.jacobian(&q)?;
        let m = base.inverse_mass_unchecked(&q)?;
        Ok(j.matmul(&m).matmul(&j.transpose()))
    })?;
    Ok(out.with_fd(metric.fd_order, Some(metric.fd_step)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::chart::ChartSpec;

    fn exp_metric(m: f64) -> MassMetricField<f64> {
        MassMetricField::new(1, 1.0, move |q: &[f64]| Ok(Tensor2::diagonal(&[(-2.0 * q[0]).exp() / m]))).unwrap()
    }

    fn polar(m: f64) -> MassMetricField<f64> {
        MassMetricField::from_exprs(
            &[vec![format!("1/{m}"), "0".into()], vec!["0".into(), format!("1/({m}*q1^2)")]],
            1.0,
            "metric",
        )
        .unwrap()
    }

    #[test]
    fn constant_metric_has_vanishing_pi() {
        let g = MassMetricField::constant(Tensor2::diagonal(&[0.5, 0.25]), 1.0).unwrap();
        assert_eq!(g.pi(&[0.3, 0.7]).unwrap(), Tensor3::zeros(2));
    }

    #[test]
    fn exponential_metric_pi_is_one() {
        let g = exp_metric(3.0);
        for q in [-1.0, 0.0, 0.4, 2.0] {
            let pi = compute_pi(&g, &[q]).unwrap();
            assert!((pi[(0, 0, 0)] - 1.0).abs() < 1e-9, "{}", pi[(0, 0, 0)]);
        }
    }

    #[test]
    fn polar_metric_pi_and_weight() {
        let g = polar(2.0);
        let q1 = 1.7;
        let pi = g.pi(&[q1, 0.4]).unwrap();
        for l in 0..2 {
            for mu in 0..2 {
                for nu in 0..2 {
                    let expect = match (l, mu, nu) {
                        (0, 1, 1) => -q1,
                        (1, 0, 1) | (1, 1, 0) => 1.0 / q1,
                        _ => 0.0,
                    };
                    assert!((pi[(l, mu, nu)] - expect).abs() < 1e-9, "Π[{l}{mu}{nu}]");
                }
            }
        }
        assert!((volume_weight(&g, &[q1, 0.4]).unwrap() - 2.0 * q1).abs() < 1e-12);
        assert!((volume_weight(&g, &[-q1, 0.4]).unwrap() - 2.0 * q1).abs() < 1e-12);
    }

    #[test]
    fn volume_weight_scaling() {
        let m = Tensor2::<f64>::from_rows(&[vec![0.7, 0.1], vec![0.1, 0.4]]).unwrap();
        let c = 3.0_f64;
        let a = MassMetricField::constant(m.clone(), 1.0).unwrap();
        let b = MassMetricField::constant(m.scale(1.0 / c), 1.0).unwrap();
        let ratio = b.volume_weight(&[0.0, 0.0]).unwrap() / a.volume_weight(&[0.0, 0.0]).unwrap();
        assert!((ratio - c).abs() < 1e-12);
        let mass = a.mass(&[0.0, 0.0]).unwrap();
        let id = mass.matmul(&m);
        assert!((id[(0, 0)] - 1.0).abs() < 1e-15 && id[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn indefinite_metric_is_rejected() {
        let g = MassMetricField::constant(Tensor2::diagonal(&[1.0, -1.0]), 1.0).unwrap();
        assert!(matches!(g.pi(&[0.0, 0.0]), Err(Error::MetricDegeneracy { .. })));
        let tiny = MassMetricField::constant(Tensor2::diagonal(&[1.0, 1e-13]), 1.0).unwrap();
        assert!(tiny.volume_weight(&[0.0, 0.0]).is_err());
    }

    fn cubic_chart() -> CoordinateChart {
        // Q̄ = Q^3 + 2Q, inverse by Cardano.
        let u = "(q1/2 + sqrt(q1^2/4 + 8/27))^(1/3)";
        CoordinateChart::new(ChartSpec {
            dim: 1,
            forward: vec!["q1^3 + 2*q1".into()],
            inverse: vec![format!("{u} - 2/(3*{u})")],
            jacobian: vec![vec!["3*q1^2 + 2".into()]],
            hessian: vec![vec![vec!["6*q1".into()]]],
            metric_inverse: None,
            j0: None,
        })
        .unwrap()
    }

    #[test]
    fn cubic_pullback_and_transformed_pi() {
        let m = 20.0_f64;
        let flat = MassMetricField::flat(1, m).unwrap();
        let chart = cubic_chart();
        let bar = pullback_metric(&chart, &flat).unwrap();
        for q in [1.0_f64, 1.25, 1.5, 2.0] {
            let qbar = chart.forward(&[q]);
            let mbar = bar.inverse_mass(&qbar).unwrap()[(0, 0)];
            let expect = (3.0 * q * q + 2.0).powi(2) / m;
            assert!((mbar - expect).abs() < 1e-11 * expect);
            let direct = bar.pi(&qbar).unwrap();
            let moved = transform_pi(&chart, &Tensor3::zeros(1), &[q]).unwrap();
            assert!((direct[(0, 0, 0)] - moved[(0, 0, 0)]).abs() < 1e-7, "{direct:?} {moved:?}");
        }
    }

    #[test]
    fn identity_pullback_is_identical() {
        let g = polar(1.5);
        let id = CoordinateChart::identity(2);
        let bar = pullback_metric(&id, &g).unwrap();
        let q = [0.8, -0.3];
        assert_eq!(bar.inverse_mass(&q).unwrap(), g.inverse_mass(&q).unwrap());
        let pi = g.pi(&q).unwrap();
        assert_eq!(transform_pi(&id, &pi, &q).unwrap(), pi);
    }

    #[test]
    fn f32_metric_evaluates() {
        let g = MassMetricField::<f32>::flat(2, 4.0).unwrap();
        assert!((g.volume_weight(&[0.0, 0.0]).unwrap() - 4.0).abs() < 1e-6);
    }
}
