//! Coordinate charts defined by closed-form expressions.

use serde::{Deserialize, Serialize};

use super::tensor::{Tensor2, Tensor3};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::scalar::Real;

/// Default lower bound on `|det J|` of a chart jacobian.
pub const DEFAULT_DET_FLOOR: f64 = 1e-12;

/// On-disk chart definition. Strings are kept verbatim so that
/// `to_json(from_json(to_json(spec)))` is byte-identical.
///
/// `jacobian[mu][nu] = ∂Q̄^mu/∂Q^nu` and
/// `hessian[mu][nu][la] = ∂²Q̄^mu/∂Q^nu∂Q^la`, all as functions of the
/// unbarred coordinates. `inverse` is a function of the barred ones.
/// The optional `metric_inverse`/`j0` describe the unbarred mass metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub dim: usize,
    pub forward: Vec<String>,
    pub inverse: Vec<String>,
    pub jacobian: Vec<Vec<String>>,
    pub hessian: Vec<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric_inverse: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j0: Option<f64>,
}

fn lit(x: f64) -> String {
    format!("{x:?}")
}

impl ChartSpec {
    pub fn identity(dim: usize) -> Self {
        let var = |i: usize| format!("q{}", i + 1);
        let delta = |i: usize, j: usize| if i == j { "1".to_string() } else { "0".to_string() };
        Self {
            dim,
            forward: (0..dim).map(var).collect(),
            inverse: (0..dim).map(var).collect(),
            jacobian: (0..dim).map(|i| (0..dim).map(|j| delta(i, j)).collect()).collect(),
            hessian: vec![vec![vec!["0".to_string(); dim]; dim]; dim],
            metric_inverse: None,
            j0: None,
        }
    }

    /// `Q̄ = T Q` for an invertible constant matrix `T`.
    pub fn linear(t: &Tensor2<f64>) -> Result<Self> {
        let dim = t.dim();
        let inv = t.inverse().ok_or_else(|| Error::ChartDegeneracy {
            location: "linear chart".into(),
            detail: "matrix is singular".into(),
        })?;
        let combo = |m: &Tensor2<f64>, i: usize| {
            (0..dim)
                .map(|j| format!("({})*q{}", lit(m[(i, j)]), j + 1))
                .collect::<Vec<_>>()
                .join(" + ")
        };
        Ok(Self {
            dim,
            forward: (0..dim).map(|i| combo(t, i)).collect(),
            inverse: (0..dim).map(|i| combo(&inv, i)).collect(),
            jacobian: (0..dim).map(|i| (0..dim).map(|j| lit(t[(i, j)])).collect()).collect(),
            hessian: vec![vec![vec!["0".to_string(); dim]; dim]; dim],
            metric_inverse: None,
            j0: None,
        })
    }

    pub fn with_metric(mut self, metric_inverse: Vec<Vec<String>>, j0: f64) -> Self {
        self.metric_inverse = Some(metric_inverse);
        self.j0 = Some(j0);
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ChartSpec = serde_json::from_str(text)
            .map_err(|e| Error::schema(format!("chart (line {}, column {})", e.line(), e.column()), e.to_string()))?;
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("chart spec serializes");
        s.push('\n');
        s
    }

    fn check_shape(&self) -> Result<()> {
        let d = self.dim;
        if d == 0 {
            return Err(Error::schema("chart.dim", "must be positive"));
        }
        let vec_len = |name: &str, len: usize| {
            if len != d {
                Err(Error::schema(format!("chart.{name}"), format!("expected {d} entries, found {len}")))
            } else {
                Ok(())
            }
        };
        vec_len("forward", self.forward.len())?;
        vec_len("inverse", self.inverse.len())?;
        vec_len("jacobian", self.jacobian.len())?;
        vec_len("hessian", self.hessian.len())?;
        for (i, row) in self.jacobian.iter().enumerate() {
            vec_len(&format!("jacobian[{i}]"), row.len())?;
        }
        for (i, mat) in self.hessian.iter().enumerate() {
            vec_len(&format!("hessian[{i}]"), mat.len())?;
            for (j, row) in mat.iter().enumerate() {
                vec_len(&format!("hessian[{i}][{j}]"), row.len())?;
            }
        }
        if let Some(m) = &self.metric_inverse {
            vec_len("metric_inverse", m.len())?;
            for (i, row) in m.iter().enumerate() {
                vec_len(&format!("metric_inverse[{i}]"), row.len())?;
            }
        }
        if let Some(j0) = self.j0 {
            if !(j0.is_finite() && j0 > 0.0) {
                return Err(Error::schema("chart.j0", "must be a positive finite number"));
            }
        }
        Ok(())
    }
}

pub(crate) fn parse_expr(src: &str, dim: usize, field: &str) -> Result<Expr> {
    Expr::parse(src, dim).map_err(|source| Error::Expr {
        field: field.to_string(),
        source,
    })
}

/// Smooth invertible map `Q -> Q̄` with analytic first and second derivatives.
#[derive(Debug, Clone)]
pub struct CoordinateChart {
    spec: ChartSpec,
    forward: Vec<Expr>,
    inverse: Vec<Expr>,
    jacobian: Vec<Expr>,
    hessian: Vec<Expr>,
    det_floor: f64,
}

impl CoordinateChart {
    pub fn new(spec: ChartSpec) -> Result<Self> {
        spec.check_shape()?;
        let d = spec.dim;
        let parse_list = |name: &str, items: &[String]| -> Result<Vec<Expr>> {
            items
                .iter()
                .enumerate()
                .map(|(i, s)| parse_expr(s, d, &format!("chart.{name}[{i}]")))
                .collect()
        };
        let forward = parse_list("forward", &spec.forward)?;
        let inverse = parse_list("inverse", &spec.inverse)?;
        let mut jacobian = Vec::with_capacity(d * d);
        for (i, row) in spec.jacobian.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                jacobian.push(parse_expr(s, d, &format!("chart.jacobian[{i}][{j}]"))?);
            }
        }
        let mut hessian = Vec::with_capacity(d * d * d);
        for (i, mat) in spec.hessian.iter().enumerate() {
            for (j, row) in mat.iter().enumerate() {
                for (k, s) in row.iter().enumerate() {
                    hessian.push(parse_expr(s, d, &format!("chart.hessian[{i}][{j}][{k}]"))?);
                }
            }
        }
        Ok(Self {
            spec,
            forward,
            inverse,
            jacobian,
            hessian,
            det_floor: DEFAULT_DET_FLOOR,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(ChartSpec::identity(dim)).expect("identity chart is well formed")
    }

    pub fn with_det_floor(mut self, floor: f64) -> Self {
        self.det_floor = floor;
        self
    }

    pub fn spec(&self) -> &ChartSpec {
        &self.spec
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn forward<T: Real>(&self, q: &[T]) -> Vec<T> {
        self.forward.iter().map(|e| e.eval(q)).collect()
    }

    pub fn inverse<T: Real>(&self, qbar: &[T]) -> Vec<T> {
        self.inverse.iter().map(|e| e.eval(qbar)).collect()
    }

    /// `∂Q̄^mu/∂Q^nu` at `q`, without the degeneracy check.
    pub fn jacobian_unchecked<T: Real>(&self, q: &[T]) -> Tensor2<T> {
        let d = self.dim();
        Tensor2::from_fn(d, |i, j| self.jacobian[i * d + j].eval(q))
    }

    /// `∂Q̄^mu/∂Q^nu` at `q`; fails when `|det| <= det_floor`.
    pub fn jacobian<T: Real>(&self, q: &[T]) -> Result<Tensor2<T>> {
        let j = self.jacobian_unchecked(q);
        let det = j.det();
        if !(det.abs() > T::lit(self.det_floor)) {
            return Err(Error::ChartDegeneracy {
                location: format!("{q:?}"),
                detail: format!("|det J| = {:e} not above floor {:e}", det.abs().to_f64_lossy(), self.det_floor),
            });
        }
        Ok(j)
    }

    /// `∂Q^mu/∂Q̄^nu` at `q` (unbarred point).
    pub fn inverse_jacobian<T: Real>(&self, q: &[T]) -> Result<Tensor2<T>> {
        let j = self.jacobian(q)?;
        j.inverse().ok_or_else(|| Error::ChartDegeneracy {
            location: format!("{q:?}"),
            detail: "jacobian not invertible".into(),
        })
    }

    pub fn hessian<T: Real>(&self, q: &[T]) -> Tensor3<T> {
        let d = self.dim();
        Tensor3::from_fn(d, |i, j, k| self.hessian[(i * d + j) * d + k].eval(q))
    }

    /// `∂²Q^rho/∂Q̄^mu∂Q̄^nu` at unbarred point `q`, from the forward
    /// derivatives: `-(J⁻¹)^rho_a H^a_bc (J⁻¹)^b_mu (J⁻¹)^c_nu`.
    pub fn inverse_hessian<T: Real>(&self, q: &[T]) -> Result<Tensor3<T>> {
        let ji = self.inverse_jacobian(q)?;
        let h = self.hessian(q);
        let d = self.dim();
        // First contract the lower indices, then the upper one.
        let mut low = Tensor3::zeros(d);
        for a in 0..d {
            for mu in 0..d {
                for nu in 0..d {
                    let mut s = T::zero();
                    for b in 0..d {
                        for c in 0..d {
                            s += h[(a, b, c)] * ji[(b, mu)] * ji[(c, nu)];
                        }
                    }
                    low[(a, mu, nu)] = s;
                }
            }
        }
        Ok(Tensor3::from_fn(d, |rho, mu, nu| {
            -(0..d).fold(T::zero(), |s, a| s + ji[(rho, a)] * low[(a, mu, nu)])
        }))
    }

    /// Checks the chart invariants at `points` (unbarred coordinates).
    pub fn validate<T: Real>(&self, points: &[Vec<T>]) -> Result<ChartReport> {
        let mut report = ChartReport::default();
        report.min_abs_det = f64::INFINITY;
        for q in points {
            let j = self.jacobian(q)?;
            report.min_abs_det = report.min_abs_det.min(j.det().abs().to_f64_lossy());
            let back = self.inverse(&self.forward(q));
            let err = back
                .iter()
                .zip(q)
                .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            report.max_roundtrip_error = report.max_roundtrip_error.max(err.to_f64_lossy());
            report.max_hessian_asymmetry = report
                .max_hessian_asymmetry
                .max(self.hessian(q).lower_asymmetry().to_f64_lossy());
        }
        Ok(report)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ChartReport {
    pub min_abs_det: f64,
    pub max_roundtrip_error: f64,
    pub max_hessian_asymmetry: f64,
}
