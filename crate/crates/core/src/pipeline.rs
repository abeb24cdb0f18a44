//! Config-driven end-to-end runs: solve, factorize, geometry, residuals and
//! the invariance sweeps, with every achieved value and check recorded in
//! `manifest.json`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::dynamics::dynamics_check;
use crate::ef_geometry::compute_geometry_with;
use crate::error::{Error, Result};
use crate::factorization::{
    compute_vector_potential, factorize_with, wrap_phase, GaugeConvention, MAX_GAUGE_MODES, NODE_RATIO,
};
use crate::geometry::ChartSpec;
use crate::io::{write_complex_field, write_csv, write_factorization, write_geometry, write_json, Cell};
use crate::models::{builtin, load_model, ModelSpec};
use crate::numerics::FdOrder;
use crate::residuals::{evaluate_residuals, geometry_identities, kinetic_operator_identity, ResidualMode};
use crate::solver::{build_full_hamiltonian, nodeless_combination, solve_eigenstates};
use crate::sweep::{adiabatic_loop_phase, chart_sweep, gauge_sweep};

/// Where the model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRef {
    Builtin(String),
    Path(PathBuf),
    Inline(Box<ModelSpec>),
}

impl ModelRef {
    pub fn load(&self) -> Result<ModelSpec> {
        match self {
            ModelRef::Builtin(name) => builtin(name),
            ModelRef::Path(p) => load_model(p),
            ModelRef::Inline(spec) => {
                spec.validate()?;
                Ok((**spec).clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Solve,
    Factorize,
    Geometry,
    Residuals,
    Identities,
    OperatorIdentity,
    GaugeSweep,
    ChartSweep,
    LoopPhase,
    Dynamics,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Solve,
        Stage::Factorize,
        Stage::Geometry,
        Stage::Residuals,
        Stage::Identities,
        Stage::OperatorIdentity,
        Stage::GaugeSweep,
        Stage::ChartSweep,
        Stage::LoopPhase,
        Stage::Dynamics,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Solve => "solve",
            Stage::Factorize => "factorize",
            Stage::Geometry => "geometry",
            Stage::Residuals => "residuals",
            Stage::Identities => "identities",
            Stage::OperatorIdentity => "operator-identity",
            Stage::GaugeSweep => "gauge-sweep",
            Stage::ChartSweep => "chart-sweep",
            Stage::LoopPhase => "loop-phase",
            Stage::Dynamics => "dynamics",
        }
    }

    /// Stages whose results this one reads.
    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Solve | Stage::ChartSweep | Stage::LoopPhase => &[],
            Stage::Factorize | Stage::Dynamics => &[Stage::Solve],
            Stage::Geometry => &[Stage::Factorize],
            Stage::Residuals | Stage::Identities | Stage::OperatorIdentity | Stage::GaugeSweep => &[Stage::Geometry],
        }
    }

    /// `stages` plus everything they need, in pipeline order.
    pub fn closure(stages: &[Stage]) -> Vec<Stage> {
        let mut out: Vec<Stage> = Vec::new();
        let mut todo: Vec<Stage> = stages.to_vec();
        while let Some(s) = todo.pop() {
            if !out.contains(&s) {
                out.push(s);
                todo.extend_from_slice(s.requires());
            }
        }
        out.sort();
        out
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            let names: Vec<_> = Stage::ALL.iter().map(|s| s.name()).collect();
            Error::InvalidArgument(format!("unknown stage `{s}` (expected one of {})", names.join(", ")))
        })
    }
}

/// Pass thresholds. Every check passes when `value ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `max |χΦ − Ψ|` off the mask.
    pub reconstruction: f64,
    /// Nuclear residual norm over `|E|` (over 1 when `E = 0`).
    pub nuclear_relative: f64,
    /// Density-weighted electronic residual norm.
    pub electronic: f64,
    /// Density-weighted norm of `⟨Φ|R_Φ⟩`.
    pub phi_projection: f64,
    /// Projected equations against direct projections of `R_Φ`.
    pub projected_match: f64,
    pub christoffel_reconstruction: f64,
    pub decomposition: f64,
    /// `ε_geo` contraction and `g = Re h`.
    pub algebraic: f64,
    /// Largest node-wise mismatch of the two kinetic operator forms.
    pub operator_identity: f64,
    pub gauge_spread: f64,
    /// Relative agreement of a finite-difference quantity with its exact value.
    pub fd_relative: f64,
    pub chart_energy: f64,
    pub chart_fields: f64,
    pub loop_phase: f64,
    pub loop_gauge: f64,
    pub norm_drift: f64,
    pub energy_drift: f64,
    /// `C` in `|A₀ + E| ≤ C dt²`.
    pub a0_dt2: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            reconstruction: 1e-12,
            nuclear_relative: 1e-5,
            electronic: 1e-4,
            phi_projection: 1e-6,
            projected_match: 1e-8,
            christoffel_reconstruction: 1e-10,
            decomposition: 1e-8,
            algebraic: 1e-10,
            operator_identity: 1e-6,
            gauge_spread: 1e-8,
            fd_relative: 1e-4,
            chart_energy: 1e-5,
            chart_fields: 1e-4,
            loop_phase: 1e-3,
            loop_gauge: 1e-8,
            norm_drift: 1e-12,
            energy_drift: 1e-8,
            a0_dt2: 1.0,
        }
    }
}

impl Tolerances {
    pub const PROFILES: [&'static str; 2] = ["default", "negative-control"];

    /// `default`, or `negative-control` where every tolerance is zero so
    /// that any run with a nonzero error fails.
    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Tolerances::default()),
            "negative-control" => {
                let mut v = serde_json::to_value(Tolerances::default())?;
                if let Value::Object(m) = &mut v {
                    m.values_mut().for_each(|x| *x = json!(0.0));
                }
                Ok(serde_json::from_value(v)?)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown tolerance profile `{other}` (expected one of {})",
                Tolerances::PROFILES.join(", ")
            ))),
        }
    }
}

/// A complete, serializable run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelRef,
    /// Overrides the node count of every grid axis.
    #[serde(default)]
    pub points: Option<usize>,
    pub stages: Vec<Stage>,
    #[serde(default)]
    pub fd_order: FdOrder,
    /// Nodes with `|χ|² < node_ratio · max|χ|²` are masked.
    #[serde(default = "default_node_ratio")]
    pub node_ratio: f64,
    /// `h` is treated as singular beyond this condition number.
    #[serde(default = "default_cond_cap")]
    pub cond_cap: f64,
    #[serde(default = "default_states")]
    pub states: usize,
    /// A ground pair closer than `degeneracy_tol · max(|E₀|, 1)` is replaced
    /// by its nodeless combination before factorization.
    #[serde(default = "default_degeneracy_tol")]
    pub degeneracy_tol: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_convention")]
    pub convention: GaugeConvention,
    /// Chart for the chart sweep; a model with its own chart is swept
    /// against its unbarred form when this is absent.
    #[serde(default)]
    pub chart: Option<ChartSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_gauge_count")]
    pub gauge_count: usize,
    #[serde(default = "default_gauge_modes")]
    pub gauge_modes: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_node_ratio() -> f64 {
    NODE_RATIO
}
fn default_cond_cap() -> f64 {
    crate::ef_geometry::CONDITION_CAP
}
fn default_states() -> usize {
    3
}
fn default_degeneracy_tol() -> f64 {
    1e-8
}
fn default_dt() -> f64 {
    0.1
}
fn default_steps() -> usize {
    1000
}
fn default_convention() -> GaugeConvention {
    GaugeConvention::ChiRealPositive
}
fn default_gauge_count() -> usize {
    5
}
fn default_gauge_modes() -> usize {
    MAX_GAUGE_MODES
}

impl RunConfig {
    pub fn new(model: ModelRef, stages: Vec<Stage>) -> Self {
        RunConfig {
            model,
            points: None,
            stages,
            fd_order: FdOrder::default(),
            node_ratio: default_node_ratio(),
            cond_cap: default_cond_cap(),
            states: default_states(),
            degeneracy_tol: default_degeneracy_tol(),
            dt: default_dt(),
            steps: default_steps(),
            convention: default_convention(),
            chart: None,
            seed: 0,
            gauge_count: default_gauge_count(),
            gauge_modes: default_gauge_modes(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema {
            path: format!("config (line {}, column {})", e.line(), e.column()),
            detail: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// What [`run`] produced; `manifest` is also written to disk.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub checks: Vec<Check>,
    pub manifest: Value,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }
}

struct Recorder {
    checks: Vec<Check>,
    metrics: Map<String, Value>,
}

impl Recorder {
    fn check(&mut self, name: &str, value: f64, tolerance: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            tolerance,
            // NaN fails.
            passed: value <= tolerance,
        });
    }

    fn metrics<T: Serialize>(&mut self, stage: Stage, value: &T) -> Result<()> {
        self.metrics.insert(stage.name().to_string(), serde_json::to_value(value)?);
        Ok(())
    }
}

fn tagged<T>(stage: Stage, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: stage.name().to_string(),
        source: Box::new(e),
    })
}

fn stage_dir(out: &Path, stage: Stage) -> Result<PathBuf> {
    let d = out.join(stage.name());
    std::fs::create_dir_all(&d)?;
    Ok(d)
}

/// Runs the enabled stages (plus their prerequisites) and writes per-stage
/// files and `manifest.json` under `out`. Errors carry the failing stage;
/// check failures are reported in the outcome, not as errors.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunOutcome> {
    if config.stages.is_empty() {
        return Err(Error::InvalidArgument("no stages enabled".into()));
    }
    if config.gauge_modes == 0 || config.gauge_modes > MAX_GAUGE_MODES {
        return Err(Error::InvalidArgument(format!(
            "gauge_modes {} outside 1..={MAX_GAUGE_MODES}",
            config.gauge_modes
        )));
    }
    let stages = Stage::closure(&config.stages);
    let on = |s: Stage| stages.contains(&s);
    std::fs::create_dir_all(out)?;
    let tol = &config.tolerances;
    let mut rec = Recorder {
        checks: Vec::new(),
        metrics: Map::new(),
    };
    let mut skipped: Map<String, Value> = Map::new();

    let mut spec = config.model.load()?;
    if let Some(n) = config.points {
        spec.grid = spec.grid.with_points(n);
    }
    let model = spec.instantiate()?;
    let disc = model.discretize(config.fd_order)?;
    let order = config.fd_order;

    let mut solved = None;
    if on(Stage::Solve) {
        let st = Stage::Solve;
        let (h, mut states) = tagged(st, (|| {
            let h = build_full_hamiltonian(&disc, &model.h_bo)?;
            let states = solve_eigenstates(&h, &disc, config.states.max(1))?;
            Ok((h, states))
        })())?;
        let rotation = nodeless_combination(&states, config.degeneracy_tol).map(|(s, r)| {
            states[0] = s;
            json!({
                "theta": r.theta,
                "phase": r.phase,
                "min_density_before": r.min_density_before,
                "min_density": r.min_density,
            })
        });
        let dir = stage_dir(out, st)?;
        let mut rows = Vec::new();
        let mut energies = Vec::new();
        for (k, s) in states.iter().enumerate() {
            let e = s.energy.unwrap_or(f64::NAN);
            energies.push(e);
            rows.push(vec![Cell::from(k), Cell::from(e), Cell::from(tagged(st, h.eigen_residual(s))?)]);
        }
        write_csv(&dir.join("eigenvalues.csv"), &["index", "energy", "eigen_residual"], &rows)?;
        write_complex_field(&dir.join("psi.csv"), &disc.grid, &states[0].psi, "level")?;
        rec.metrics(
            st,
            &json!({
                "energies": energies,
                "kinetic_asymmetry": h.kinetic_asymmetry(),
                "asymmetry": h.asymmetry(),
                "degenerate_rotation": rotation,
            }),
        )?;
        solved = Some((h, states));
    }

    let mut factored = None;
    if on(Stage::Factorize) {
        let st = Stage::Factorize;
        let (_, states) = solved.as_ref().expect("solve runs before factorize");
        let (fact, gauge, recon) = tagged(st, (|| {
            let fact = factorize_with(&states[0], &disc, &config.convention, config.node_ratio)?;
            let gauge = compute_vector_potential(&disc, &fact)?;
            let recon = fact.reconstruction_error(&states[0].psi)?;
            Ok((fact, gauge, recon))
        })())?;
        write_factorization(&stage_dir(out, st)?, &disc.grid, &fact, &gauge)?;
        rec.check("reconstruction", recon, tol.reconstruction);
        rec.metrics(
            st,
            &json!({
                "reconstruction": recon,
                "masked_fraction": fact.masked_fraction(),
                "phi_norm_deviation": fact.phi_norm_deviation(),
                "imag_residue": gauge.imag_residue,
                "degenerate_links": gauge.degenerate_links,
            }),
        )?;
        factored = Some(fact);
    }

    let mut geometry = None;
    if on(Stage::Geometry) {
        let st = Stage::Geometry;
        let (h, _) = solved.as_ref().expect("solve runs before geometry");
        let fact = factored.as_ref().expect("factorize runs before geometry");
        let geo = tagged(st, compute_geometry_with(&disc, fact, h.bo_samples(), config.cond_cap))?;
        write_geometry(&stage_dir(out, st)?, &disc.grid, &geo)?;
        rec.metrics(
            st,
            &json!({
                "flagged": geo.flagged.iter().filter(|&&f| f).count(),
                "eps_bo_imag": geo.eps_bo_imag,
                "upsilon_asymmetry": geo.derivatives.upsilon_asymmetry,
                "frame_orthogonality": geo.frame_orthogonality,
                "degenerate_links": geo.derivatives.degenerate_links,
            }),
        )?;
        geometry = Some(geo);
    }

    if on(Stage::Residuals) {
        let st = Stage::Residuals;
        let (h, states) = solved.as_ref().expect("solve runs first");
        let (fact, geo) = (factored.as_ref().unwrap(), geometry.as_ref().unwrap());
        let energy = states[0].energy.unwrap_or(f64::NAN);
        let r = tagged(
            st,
            evaluate_residuals(&disc, fact, geo, h.bo_samples(), &ResidualMode::Stationary { energy }),
        )?;
        let n = &r.norms;
        match n.nuclear_relative {
            Some(v) => rec.check("nuclear_relative", v, tol.nuclear_relative),
            None => rec.check("nuclear_norm", n.nuclear_norm, tol.nuclear_relative),
        }
        rec.check("electronic", n.electronic_norm, tol.electronic);
        rec.check("phi_projection", n.phi_projection, tol.phi_projection);
        let p = &n.projected;
        rec.check(
            "projected_match",
            p.tangent_mismatch.max(p.frame_mismatch).max((p.reconstructed_norm - p.direct_norm).abs()),
            tol.projected_match,
        );
        let dir = stage_dir(out, st)?;
        let mut report = serde_json::to_value(n)?;
        report["grid"] = serde_json::to_value(disc.grid.spec())?;
        write_json(&dir.join("report.json"), &report)?;
        write_complex_field(&dir.join("nuclear.csv"), &disc.grid, &r.nuclear, "component")?;
        write_complex_field(&dir.join("electronic.csv"), &disc.grid, &r.electronic, "level")?;
        rec.metrics(st, n)?;
    }

    if on(Stage::Identities) {
        let st = Stage::Identities;
        let (fact, geo) = (factored.as_ref().unwrap(), geometry.as_ref().unwrap());
        let id = tagged(st, geometry_identities(&disc, fact, geo))?;
        rec.check("christoffel_reconstruction", id.christoffel_reconstruction, tol.christoffel_reconstruction);
        rec.check("decomposition", id.decomposition, tol.decomposition);
        rec.check("eps_geo_contraction", id.eps_geo_contraction, tol.algebraic);
        rec.check("metric_vs_qgt", id.metric_vs_qgt, tol.algebraic);
        write_json(&stage_dir(out, st)?.join("identities.json"), &id)?;
        rec.metrics(st, &id)?;
    }

    if on(Stage::OperatorIdentity) {
        let st = Stage::OperatorIdentity;
        let (fact, geo) = (factored.as_ref().unwrap(), geometry.as_ref().unwrap());
        let right = tagged(st, kinetic_operator_identity(&disc, fact, geo, 1.0))?;
        let wrong = tagged(st, kinetic_operator_identity(&disc, fact, geo, -1.0))?;
        rec.check("operator_identity", right.max_abs, tol.operator_identity);
        let v = json!({ "identity": right, "wrong_pi_sign": wrong });
        write_json(&stage_dir(out, st)?.join("report.json"), &v)?;
        rec.metrics(st, &v)?;
    }

    if on(Stage::GaugeSweep) {
        let st = Stage::GaugeSweep;
        let (h, states) = solved.as_ref().unwrap();
        let fact = factored.as_ref().unwrap();
        let energy = states[0].energy.unwrap_or(f64::NAN);
        let r = tagged(
            st,
            gauge_sweep(&disc, fact, h.bo_samples(), energy, config.seed, config.gauge_count, config.gauge_modes),
        )?;
        if config.gauge_count > 0 {
            rec.check("gauge_spread", r.max_spread, tol.gauge_spread);
            rec.check("gauge_a_shift_grid", r.max_a_shift_grid, tol.gauge_spread);
            rec.check("gauge_a_shift_exact", r.max_a_shift_exact, tol.fd_relative);
        }
        let dir = stage_dir(out, st)?;
        let rows: Vec<Vec<Cell>> = r
            .samples
            .iter()
            .map(|s| {
                vec![
                    Cell::from(s.seed as usize),
                    s.eps_bo.into(),
                    s.eps_geo.into(),
                    s.g.into(),
                    s.h.into(),
                    s.residual_norms.into(),
                    s.a_shift_grid.into(),
                    s.a_shift_exact.into(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("samples.csv"),
            &["seed", "eps_bo", "eps_geo", "g", "h", "residual_norms", "a_shift_grid", "a_shift_exact"],
            &rows,
        )?;
        write_json(&dir.join("report.json"), &r)?;
        rec.metrics(st, &r)?;
    }

    if on(Stage::ChartSweep) {
        let st = Stage::ChartSweep;
        let pair = match (&config.chart, spec.chart.is_some()) {
            (Some(c), false) => Some((spec.clone(), c.clone())),
            (_, true) => spec.unbarred().zip(spec.chart.clone()),
            (None, false) => None,
        };
        match pair {
            None => {
                skipped.insert(st.name().into(), json!("no chart configured and the model has none"));
            }
            Some((base, chart)) => {
                let r = tagged(st, chart_sweep(&base, &chart, order, config.states.max(1)))?;
                rec.check("chart_energy", r.max_energy_delta, tol.chart_energy);
                rec.check("chart_eps_bo", r.eps_bo_delta, tol.chart_fields);
                rec.check("chart_eps_geo", r.eps_geo_delta, tol.chart_fields);
                rec.check(
                    "chart_pi",
                    r.pi_residual / r.pi_scale.max(f64::MIN_POSITIVE),
                    tol.fd_relative,
                );
                let dir = stage_dir(out, st)?;
                let rows: Vec<Vec<Cell>> = (0..r.energies.len())
                    .map(|k| {
                        vec![
                            Cell::from(k),
                            r.energies[k].into(),
                            r.barred_energies[k].into(),
                            r.energy_deltas[k].into(),
                        ]
                    })
                    .collect();
                write_csv(&dir.join("energies.csv"), &["index", "energy", "barred_energy", "relative_delta"], &rows)?;
                write_json(&dir.join("report.json"), &r)?;
                rec.metrics(st, &r)?;
            }
        }
    }

    if on(Stage::LoopPhase) {
        let st = Stage::LoopPhase;
        if disc.dim() == 1 && disc.grid.all_periodic() {
            let bo = tagged(st, model.h_bo.sample(&disc.grid))?;
            let lp = tagged(
                st,
                adiabatic_loop_phase(&disc, &bo, 0, config.seed, config.gauge_count, config.gauge_modes),
            )?;
            if let Some(reference) = spec.reference.as_ref().and_then(|r| r.geometric_phase) {
                rec.check("loop_phase", wrap_phase(lp.wilson - reference).abs(), tol.loop_phase);
                rec.check("loop_line_integral", wrap_phase(lp.line_integral - reference).abs(), tol.loop_phase);
            }
            rec.check("loop_gauge", lp.gauge_spread, tol.loop_gauge);
            write_json(&stage_dir(out, st)?.join("report.json"), &lp)?;
            rec.metrics(st, &lp)?;
        } else {
            skipped.insert(st.name().into(), json!("needs a one-dimensional periodic grid"));
        }
    }

    if on(Stage::Dynamics) {
        let st = Stage::Dynamics;
        let (h, states) = solved.as_ref().unwrap();
        let d = tagged(st, dynamics_check(&disc, h, states, config.dt, config.steps))?;
        rec.check("norm_drift", d.norm_drift_per_step, tol.norm_drift);
        rec.check("energy_drift", d.energy_drift, tol.energy_drift);
        rec.check("a0", d.a0_error / (config.dt * config.dt), tol.a0_dt2);
        let dir = stage_dir(out, st)?;
        let rows: Vec<Vec<Cell>> = d
            .series
            .iter()
            .enumerate()
            .map(|(s, [t, n, e])| vec![Cell::from(s), (*t).into(), (*n).into(), (*e).into()])
            .collect();
        write_csv(&dir.join("observables.csv"), &["step", "time", "norm", "energy"], &rows)?;
        write_json(&dir.join("report.json"), &d)?;
        rec.metrics(st, &d)?;
    }

    let Recorder { checks, metrics } = rec;
    let passed = checks.iter().all(|c| c.passed);
    let manifest = json!({
        "tool": "efgeo",
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "model": {
            "name": spec.name,
            "nodes": disc.nodes(),
            "levels": spec.levels(),
            "dim": spec.dim(),
        },
        "stages": stages.iter().map(|s| s.name()).collect::<Vec<_>>(),
        "skipped": skipped,
        "metrics": metrics,
        "checks": checks,
        "passed": passed,
    });
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(RunOutcome { checks, manifest })
}
