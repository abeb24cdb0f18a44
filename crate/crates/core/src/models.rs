//! Model specifications and the built-in model systems.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::{pullback_metric, ChartSpec, CoordinateChart};
use crate::numerics::{Boundary, FdOrder, GridSpec};
use crate::solver::{BoHamiltonian, Discretization, EntryExpr};
use crate::{Grid, MassMetricField};

/// Matrix element of `Ĥ^BO`: a real expression or a `{re, im}` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EntrySpec {
    Real(String),
    Complex {
        re: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        im: Option<String>,
    },
}

impl EntrySpec {
    fn parts(&self) -> (&str, Option<&str>) {
        match self {
            EntrySpec::Real(s) => (s, None),
            EntrySpec::Complex { re, im } => (re, im.as_deref()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSpec {
    /// `M^{μν}` expressions.
    pub inverse_mass: Vec<Vec<String>>,
    #[serde(default = "one")]
    pub j0: f64,
}

fn one() -> f64 {
    1.0
}

/// Known values a model should reproduce, with where they come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValues {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_energy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric_phase: Option<f64>,
    pub source: String,
}

/// A model system.
///
/// Expressions use `q1..qd` and may name entries of `parameters`. With a
/// `chart`, `metric` and `h_bo` are written in the unbarred coordinates and
/// the grid lives in the barred ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub grid: GridSpec,
    pub metric: MetricSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
    pub h_bo: Vec<Vec<EntrySpec>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceValues>,
}

/// A model ready for discretization.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub grid: Grid,
    pub metric: MassMetricField,
    pub h_bo: BoHamiltonian,
    pub chart: Option<CoordinateChart>,
}

impl Model {
    pub fn levels(&self) -> usize {
        self.h_bo.levels()
    }

    pub fn discretize(&self, order: FdOrder) -> Result<Discretization> {
        Discretization::new(self.grid.clone(), self.metric.clone(), order)
    }

    /// Same model on a grid with `n` nodes per axis.
    pub fn with_points(&self, n: usize) -> Result<Model> {
        let mut spec = self.spec.clone();
        spec.grid = spec.grid.with_points(n);
        spec.instantiate()
    }
}

const RESERVED: [&str; 4] = ["sin", "cos", "exp", "sqrt"];

fn is_variable(name: &str) -> bool {
    name.len() > 1 && name.starts_with('q') && name[1..].bytes().all(|b| b.is_ascii_digit())
}

/// Replaces parameter names in `src` by their parenthesized values.
fn substitute(src: &str, params: &BTreeMap<String, f64>) -> String {
    let mut out = String::with_capacity(src.len());
    let mut chars = src.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if c.is_ascii_alphabetic() || c == '_' {
            let mut end = i + c.len_utf8();
            while let Some(&(j, d)) = chars.peek() {
                if d.is_ascii_alphanumeric() || d == '_' {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            let word = &src[i..end];
            match params.get(word) {
                Some(v) => out.push_str(&format!("({v:?})")),
                None => out.push_str(word),
            }
        } else {
            out.push(c);
        }
    }
    out
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)
            .map_err(|e| Error::schema(format!("model (line {}, column {})", e.line(), e.column()), e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model spec serializes");
        s.push('\n');
        s
    }

    pub fn dim(&self) -> usize {
        self.grid.axes.len()
    }

    pub fn levels(&self) -> usize {
        self.h_bo.len()
    }

    fn sub(&self, s: &str) -> String {
        substitute(s, &self.parameters)
    }

    /// Parsed `Ĥ^BO` entries.
    fn entries(&self) -> Result<Vec<Vec<EntryExpr>>> {
        let d = self.dim();
        self.h_bo
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, e)| {
                        let (re, im) = e.parts();
                        let im = im.map(|s| self.sub(s));
                        EntryExpr::parse(&self.sub(re), im.as_deref(), d, &format!("h_bo[{i}][{j}]"))
                    })
                    .collect()
            })
            .collect()
    }

    /// Structural checks plus the expression-level Hermiticity test:
    /// `re[i][j] ≡ re[j][i]`, `im[i][j] ≡ −im[j][i]`, no imaginary diagonal.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 {
            return Err(Error::schema("grid.axes", "at least one axis required"));
        }
        for name in self.parameters.keys() {
            let ok = name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            if !ok || RESERVED.contains(&name.as_str()) || is_variable(name) {
                return Err(Error::schema(format!("parameters.{name}"), "not a usable parameter name"));
            }
        }
        if self.metric.inverse_mass.len() != d {
            return Err(Error::schema(
                "metric.inverse_mass",
                format!("expected {d} rows, found {}", self.metric.inverse_mass.len()),
            ));
        }
        if let Some(chart) = &self.chart {
            if chart.dim != d {
                return Err(Error::schema("chart.dim", format!("expected {d}, found {}", chart.dim)));
            }
        }
        let n = self.levels();
        if n == 0 {
            return Err(Error::schema("h_bo", "at least one level required"));
        }
        if let Some(i) = self.h_bo.iter().position(|r| r.len() != n) {
            return Err(Error::schema(format!("h_bo[{i}]"), format!("expected {n} entries, found {}", self.h_bo[i].len())));
        }
        let e = self.entries()?;
        let is_zero = |x: &Option<Expr>| x.as_ref().is_none_or(Expr::is_literal_zero);
        for i in 0..n {
            if !is_zero(&e[i][i].im) {
                return Err(Error::schema(format!("h_bo[{i}][{i}].im"), "diagonal entries must be real"));
            }
            for j in i + 1..n {
                let re_ok = e[i][j].re == e[j][i].re;
                let im_ok = match (&e[i][j].im, &e[j][i].im) {
                    (a, b) if is_zero(a) && is_zero(b) => true,
                    (Some(a), Some(b)) => a.is_negation_of(b) || b.is_negation_of(a),
                    _ => false,
                };
                if !(re_ok && im_ok) {
                    return Err(Error::schema(
                        format!("h_bo[{i}][{j}]"),
                        format!("not the conjugate of h_bo[{j}][{i}]; Ĥ^BO must be Hermitian"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn instantiate(&self) -> Result<Model> {
        self.validate()?;
        let grid = Grid::new(&self.grid)?;
        let inv: Vec<Vec<String>> = self
            .metric
            .inverse_mass
            .iter()
            .map(|row| row.iter().map(|s| self.sub(s)).collect())
            .collect();
        let base_metric = MassMetricField::from_exprs(&inv, self.metric.j0, "metric.inverse_mass")?;
        let base_bo = BoHamiltonian::from_exprs(self.entries()?)?;
        match &self.chart {
            None => Ok(Model {
                spec: self.clone(),
                grid,
                metric: base_metric,
                h_bo: base_bo,
                chart: None,
            }),
            Some(c) => {
                let subst = |v: &Vec<String>| v.iter().map(|s| self.sub(s)).collect::<Vec<_>>();
                let spec = ChartSpec {
                    dim: c.dim,
                    forward: subst(&c.forward),
                    inverse: subst(&c.inverse),
                    jacobian: c.jacobian.iter().map(subst).collect(),
                    hessian: c.hessian.iter().map(|m| m.iter().map(subst).collect()).collect(),
                    metric_inverse: None,
                    j0: None,
                };
                let chart = CoordinateChart::new(spec)?;
                let metric = pullback_metric(&chart, &base_metric)?;
                let h_bo = base_bo.composed_with_inverse(&chart);
                Ok(Model {
                    spec: self.clone(),
                    grid,
                    metric,
                    h_bo,
                    chart: Some(chart),
                })
            }
        }
    }

    /// The model with its chart removed: same physics on the unbarred
    /// coordinates, grid mapped back through the chart's inverse.
    pub fn unbarred(&self) -> Option<ModelSpec> {
        let chart = CoordinateChart::new(self.chart.clone()?).ok()?;
        let mut spec = self.clone();
        spec.chart = None;
        spec.grid.axes = self
            .grid
            .axes
            .iter()
            .enumerate()
            .map(|(mu, a)| {
                let mut lo = vec![0.0; self.dim()];
                let mut hi = vec![0.0; self.dim()];
                lo[mu] = a.lo;
                hi[mu] = a.hi;
                crate::numerics::AxisSpec {
                    lo: chart.inverse(&lo)[mu],
                    hi: chart.inverse(&hi)[mu],
                    ..a.clone()
                }
            })
            .collect();
        Some(spec)
    }
}

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 5] = [
    "free-ring",
    "avoided-crossing",
    "jahn-teller-ring",
    "curvilinear-remap",
    "coupled-harmonic",
];

fn s(x: &str) -> String {
    x.to_string()
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn real(x: &str) -> EntrySpec {
    EntrySpec::Real(s(x))
}

fn avoided_crossing_h() -> Vec<Vec<EntrySpec>> {
    vec![
        vec![real("0.5*k*(q1 - a)^2"), real("c*q1")],
        vec![real("c*q1"), real("0.5*k*(q1 + a)^2 + gap")],
    ]
}

/// Chart `Q̄(Q)` inverting `Q = Q̄³ + 2Q̄` (Cardano; the radicand is positive).
pub fn cubic_remap_chart() -> ChartSpec {
    let y = "((q1/2 + sqrt(q1^2/4 + 8/27))^(1/3) - 2/(3*(q1/2 + sqrt(q1^2/4 + 8/27))^(1/3)))";
    ChartSpec {
        dim: 1,
        forward: vec![s(y)],
        inverse: vec![s("q1^3 + 2*q1")],
        jacobian: vec![vec![format!("1/(3*{y}^2 + 2)")]],
        hessian: vec![vec![vec![format!("-6*{y}/(3*{y}^2 + 2)^3")]]],
        metric_inverse: None,
        j0: None,
    }
}

/// Largest `y` with `y³ + 2y = x`.
fn cubic_root_of(x: f64) -> f64 {
    let r = (x * x / 4.0 + 8.0 / 27.0).sqrt();
    let u = (x / 2.0 + r).cbrt();
    u - 2.0 / (3.0 * u)
}

/// Fully parameterized built-in model.
pub fn builtin(name: &str) -> Result<ModelSpec> {
    use std::f64::consts::{PI, TAU};
    let spec = match name {
        "free-ring" => ModelSpec {
            name: s(name),
            description: s("Free particle on a ring; spectrum k²/2m for integer k."),
            grid: GridSpec::uniform_1d(200, 0.0, TAU, Boundary::Periodic),
            metric: MetricSpec {
                inverse_mass: vec![vec![s("1/m")]],
                j0: 1.0,
            },
            chart: None,
            h_bo: vec![vec![real("0")]],
            parameters: params(&[("m", 1.0)]),
            reference: Some(ReferenceValues {
                ground_energy: Some(0.0),
                geometric_phase: None,
                source: s("analytic spectrum k²/2m"),
            }),
        },
        "avoided-crossing" => ModelSpec {
            name: s(name),
            description: s("Shifted diabatic parabolas with linear coupling."),
            grid: GridSpec::uniform_1d(201, -3.5, 3.5, Boundary::Clamped),
            metric: MetricSpec {
                inverse_mass: vec![vec![s("1/m")]],
                j0: 1.0,
            },
            chart: None,
            h_bo: avoided_crossing_h(),
            parameters: params(&[("k", 1.0), ("a", 1.0), ("gap", 0.5), ("c", 0.3), ("m", 20.0)]),
            reference: None,
        },
        "jahn-teller-ring" => ModelSpec {
            name: s(name),
            description: s("Linear E⊗e coupling at frozen radius; the adiabatic states change sign around the ring."),
            grid: GridSpec::uniform_1d(200, 0.0, TAU, Boundary::Periodic),
            metric: MetricSpec {
                inverse_mass: vec![vec![s("1/(m*rho^2)")]],
                j0: 1.0,
            },
            chart: None,
            h_bo: vec![
                vec![real("kappa*rho*sin(q1)"), real("kappa*rho*cos(q1)")],
                vec![real("kappa*rho*cos(q1)"), real("-kappa*rho*sin(q1)")],
            ],
            parameters: params(&[("kappa", 1.0), ("rho", 1.0), ("m", 20.0)]),
            reference: Some(ReferenceValues {
                ground_energy: None,
                geometric_phase: Some(PI),
                source: s("sign change of real adiabatic states encircling a conical intersection"),
            }),
        },
        "curvilinear-remap" => {
            let (lo, hi) = (cubic_root_of(-3.5), cubic_root_of(3.5));
            let mut base = builtin("avoided-crossing")?;
            base.name = s(name);
            base.description = s("The avoided-crossing model on the coordinate Q̄ with Q = Q̄³ + 2Q̄.");
            base.grid = GridSpec::uniform_1d(201, lo, hi, Boundary::Clamped);
            base.chart = Some(cubic_remap_chart());
            base
        }
        "coupled-harmonic" => ModelSpec {
            name: s(name),
            description: s("Oscillator coupled bilinearly to a two-level system through c·Q·σ_z, with gap Δ."),
            grid: GridSpec::uniform_1d(201, -6.0, 6.0, Boundary::Clamped),
            metric: MetricSpec {
                inverse_mass: vec![vec![s("1/m")]],
                j0: 1.0,
            },
            chart: None,
            h_bo: vec![
                vec![real("0.5*k*q1^2 + c*q1"), real("0")],
                vec![real("0"), real("0.5*k*q1^2 - c*q1 + gap")],
            ],
            parameters: params(&[("k", 1.0), ("m", 1.0), ("c", 0.5), ("gap", 1.0)]),
            reference: Some(ReferenceValues {
                ground_energy: Some(0.5 - 0.125),
                geometric_phase: None,
                source: s("lower displaced oscillator: ω/2 − c²/2k with ω = √(k/m)"),
            }),
        },
        other => return Err(Error::UnknownModel(other.to_string())),
    };
    Ok(spec)
}

/// Loads a model from a JSON file.
pub fn load_model(path: &std::path::Path) -> Result<ModelSpec> {
    ModelSpec::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::compute_pi;

    #[test]
    fn every_builtin_instantiates() {
        for name in BUILTIN_NAMES {
            let spec = builtin(name).unwrap();
            let model = spec.instantiate().unwrap();
            model.h_bo.sample(&model.grid).unwrap();
            assert_eq!(ModelSpec::from_json(&spec.to_json()).unwrap(), spec);
        }
        assert!(matches!(builtin("nope"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn avoided_crossing_matrix() {
        let m = builtin("avoided-crossing").unwrap().instantiate().unwrap();
        let h = m.h_bo.at(&[0.7]);
        assert!((h[(0, 0)].re - 0.5 * 0.09).abs() < 1e-15);
        assert!((h[(1, 1)].re - (0.5 * 1.7 * 1.7 + 0.5)).abs() < 1e-15);
        assert!((h[(0, 1)].re - 0.21).abs() < 1e-15 && h[(0, 1)] == h[(1, 0)]);
    }

    #[test]
    fn free_ring_has_zero_coupling() {
        let m = builtin("free-ring").unwrap().instantiate().unwrap();
        assert_eq!(m.levels(), 1);
        assert_eq!(m.h_bo.at(&[1.0])[(0, 0)].norm(), 0.0);
    }

    #[test]
    fn curvilinear_pi_matches_chart() {
        let m = builtin("curvilinear-remap").unwrap().instantiate().unwrap();
        let chart = m.chart.as_ref().unwrap();
        for &y in &[-1.0_f64, -0.3, 0.2, 0.9] {
            let x = chart.inverse(&[y])[0];
            assert!((x - (y * y * y + 2.0 * y)).abs() < 1e-14);
            assert!((chart.forward(&[x])[0] - y).abs() < 1e-12);
            // M̄ = 1/(m (3y²+2)²), Π̄ = ½M̄⁻¹∂M̄ ... = −6y/(3y²+2) for this metric.
            let pi = compute_pi(&m.metric, &[y]).unwrap()[(0, 0, 0)];
            let exact = 6.0 * y / (3.0 * y * y + 2.0);
            assert!((pi - exact).abs() < 1e-7, "{y}: {pi} vs {exact}");
        }
        let lo = m.grid.axes()[0].lo;
        assert!((lo.powi(3) + 2.0 * lo + 3.5).abs() < 1e-12);
    }

    #[test]
    fn hermiticity_is_checked_on_expressions() {
        let mut spec = builtin("avoided-crossing").unwrap();
        spec.h_bo[0][1] = real("c*q1 + 1");
        let err = spec.instantiate().unwrap_err();
        assert!(matches!(err, Error::Schema { ref path, .. } if path == "h_bo[0][1]"), "{err}");
        let mut spec = builtin("avoided-crossing").unwrap();
        spec.h_bo[0][1] = EntrySpec::Complex {
            re: s("c*q1"),
            im: Some(s("0.1*q1")),
        };
        spec.h_bo[1][0] = EntrySpec::Complex {
            re: s("c*q1"),
            im: Some(s("-(0.1*q1)")),
        };
        spec.validate().unwrap();
        spec.h_bo[0][0] = EntrySpec::Complex {
            re: s("q1"),
            im: Some(s("1")),
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let text = "{\n  \"name\": \"x\",\n  \"grid\": 3\n}";
        match ModelSpec::from_json(text) {
            Err(Error::Schema { path, .. }) => assert!(path.contains("line 3"), "{path}"),
            other => panic!("{other:?}"),
        }
        let text = builtin("free-ring").unwrap().to_json().replace("\"description\"", "\"descr\"");
        assert!(matches!(ModelSpec::from_json(&text), Err(Error::Schema { .. })));
    }

    #[test]
    fn parameter_substitution_is_word_based() {
        let p = params(&[("a", 2.0), ("ab", 3.0)]);
        assert_eq!(substitute("a*ab + q1 - exp(a)", &p), "(2.0)*(3.0) + q1 - exp((2.0))");
    }
}
