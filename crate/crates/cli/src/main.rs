//! `efgeo` command-line front end.
//!
//! Exit status: 0 when everything ran and every enabled check passed, 1 when
//! a check failed, 2 on usage errors, 3 when a stage failed to run.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use efgeo::ef_geometry::compute_geometry_with;
use efgeo::factorization::{compute_vector_potential, factorize_with, Factorization, GaugeConvention};
use efgeo::geometry::ChartSpec;
use efgeo::io::{read_complex_field, read_mask, write_complex_field, write_csv, write_factorization, write_geometry, write_json, Cell};
use efgeo::models::{builtin, cubic_remap_chart, Model, BUILTIN_NAMES};
use efgeo::numerics::FdOrder;
use efgeo::pipeline::{run, Check, ModelRef, RunConfig, Stage, Tolerances};
use efgeo::residuals::{evaluate_residuals, ResidualMode};
use efgeo::solver::{build_full_hamiltonian, nodeless_combination, solve_eigenstates, FullState};
use efgeo::Field;

#[derive(Parser, Debug)]
#[command(name = "efgeo", version, about = "Exact-factorization geometry on a grid")]
struct Cli {
    /// Output directory (for `residuals`, a `.json` path is the report file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for the random gauge functions.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Finite-difference order: 2, 4 or 6.
    #[arg(long, global = true, value_parser = parse_order)]
    fd_order: Option<FdOrder>,
    /// Worker threads (0 = all cores). Results do not depend on it.
    #[arg(long, global = true, env = "EFGEO_THREADS")]
    threads: Option<usize>,
    #[arg(long, global = true, value_parser = ["default", "negative-control"])]
    tolerance_profile: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run pipeline stages and write a manifest.
    Run(RunArgs),
    /// Lowest eigenstates of the full Hamiltonian.
    Solve {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        states: usize,
    },
    /// Split a wavefunction into χ and Φ.
    Factorize {
        /// Wavefunction CSV (`node, q…, level, re, im`).
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = ConventionArg::ChiRealPositive)]
        convention: ConventionArg,
        /// Reference level for `reference-overlap`.
        #[arg(long = "ref", default_value_t = 0)]
        reference: usize,
        #[arg(long, default_value_t = efgeo::factorization::NODE_RATIO)]
        node_ratio: f64,
    },
    /// Geometric objects of a conditional amplitude Φ.
    Geometry {
        /// Φ CSV (`node, q…, level, re, im`).
        #[arg(long = "in")]
        input: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Mask CSV from `factorize`; default: nothing masked.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, default_value_t = efgeo::ef_geometry::CONDITION_CAP)]
        cond_cap: f64,
    },
    /// Residuals of the coupled equations for a wavefunction.
    Residuals {
        #[arg(long)]
        psi: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = ModeArg::Stationary)]
        mode: ModeArg,
        /// Energy for stationary mode; default: the Rayleigh quotient.
        #[arg(long)]
        energy: Option<f64>,
        /// Snapshots at t − dt and t + dt for dynamic mode.
        #[arg(long, requires = "next")]
        prev: Option<PathBuf>,
        #[arg(long, requires = "prev")]
        next: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Gauge-invariance sweep with seeded random λ.
    GaugeSweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 5)]
        count: usize,
        #[arg(long, default_value_t = efgeo::factorization::MAX_GAUGE_MODES)]
        modes: usize,
    },
    /// Compare a model with its version in barred coordinates.
    ChartSweep {
        #[command(flatten)]
        model: ModelArgs,
        /// Chart JSON file, or `identity` / `cubic-remap`.
        #[arg(long)]
        chart: Option<String>,
        #[arg(long, default_value_t = 3)]
        states: usize,
    },
    /// Builtin models.
    Models {
        #[command(subcommand)]
        action: ModelsAction,
    },
}

#[derive(Subcommand, Debug)]
enum ModelsAction {
    List,
    Show {
        name: String,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Saved run configuration (e.g. `config.json` from an earlier run).
    #[arg(long, conflicts_with_all = ["builtin", "model"])]
    config: Option<PathBuf>,
    /// Enable every stage.
    #[arg(long, conflicts_with = "stages")]
    all: bool,
    /// Comma-separated stages; prerequisites are added.
    #[arg(long, value_delimiter = ',')]
    stages: Vec<String>,
    /// Eigenstates to solve for (default 3).
    #[arg(long)]
    states: Option<usize>,
    /// Time step of the dynamics check (default 0.1).
    #[arg(long)]
    dt: Option<f64>,
    /// Propagation steps (default 1000).
    #[arg(long)]
    steps: Option<usize>,
    /// Chart JSON file, or `identity` / `cubic-remap`, for the chart sweep.
    #[arg(long)]
    chart: Option<String>,
    /// Random gauge functions in the sweep (default 5).
    #[arg(long)]
    gauge_count: Option<usize>,
    /// Modes per axis of each gauge function (default 5).
    #[arg(long)]
    gauge_modes: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Builtin model name (see `efgeo models list`).
    #[arg(long, conflicts_with = "model")]
    builtin: Option<String>,
    /// Model JSON file.
    #[arg(long, visible_alias = "metric")]
    model: Option<PathBuf>,
    /// Nodes per axis, overriding the model grid.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ConventionArg {
    ChiRealPositive,
    ReferenceOverlap,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Stationary,
    Dynamic,
}

fn parse_order(s: &str) -> Result<FdOrder, String> {
    let n: usize = s.parse().map_err(|_| format!("`{s}` is not an integer"))?;
    FdOrder::try_from(n).map_err(|e| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(efgeo::Error),
    Checks(usize),
}

impl From<efgeo::Error> for Failure {
    fn from(e: efgeo::Error) -> Self {
        match e {
            efgeo::Error::UnknownModel(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

struct Globals {
    out: Option<PathBuf>,
    seed: Option<u64>,
    fd_order: Option<FdOrder>,
    tolerances: Option<Tolerances>,
}

impl Globals {
    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("efgeo-out"))
    }

    fn order(&self) -> FdOrder {
        self.fd_order.unwrap_or_default()
    }
}

impl ModelArgs {
    fn model_ref(&self) -> Result<ModelRef, Failure> {
        match (&self.builtin, &self.model) {
            (Some(b), None) => Ok(ModelRef::Builtin(b.clone())),
            (None, Some(p)) => Ok(ModelRef::Path(p.clone())),
            _ => Err(Failure::Usage("give a model with --builtin NAME or --model FILE".into())),
        }
    }

    fn load(&self) -> Result<Model, Failure> {
        let mut spec = self.model_ref()?.load()?;
        if let Some(n) = self.points {
            spec.grid = spec.grid.with_points(n);
        }
        Ok(spec.instantiate()?)
    }
}

fn chart_arg(s: &str) -> Result<ChartSpec, Failure> {
    match s {
        "identity" => Ok(ChartSpec::identity(1)),
        "cubic-remap" => Ok(cubic_remap_chart()),
        path => Ok(ChartSpec::from_json(&std::fs::read_to_string(path)?)?),
    }
}

fn print_checks(checks: &[Check]) -> usize {
    let mut failed = 0;
    for c in checks {
        if !c.passed {
            failed += 1;
        }
        println!(
            "{} {} {:e} (tolerance {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    failed
}

fn run_config(config: &RunConfig, g: &Globals) -> Outcome {
    let out = g.out_dir();
    let outcome = run(config, &out).map_err(|e| match e {
        efgeo::Error::InvalidArgument(m) => Failure::Usage(m),
        e => Failure::from(e),
    })?;
    write_json(&out.join("config.json"), config)?;
    let m = &outcome.manifest["model"];
    println!("model {} ({} nodes, {} levels)", m["name"].as_str().unwrap_or("?"), m["nodes"], m["levels"]);
    if let Some(s) = outcome.manifest["skipped"].as_object() {
        for (stage, why) in s {
            println!("SKIP {stage}: {}", why.as_str().unwrap_or(""));
        }
    }
    let failed = print_checks(&outcome.checks);
    println!("manifest {}", out.join("manifest.json").display());
    if failed > 0 {
        return Err(Failure::Checks(failed));
    }
    Ok(())
}

fn base_config(model: &ModelArgs, stages: Vec<Stage>, g: &Globals) -> Result<RunConfig, Failure> {
    let mut c = RunConfig::new(model.model_ref()?, stages);
    c.points = model.points;
    apply_globals(&mut c, g);
    Ok(c)
}

fn apply_globals(c: &mut RunConfig, g: &Globals) {
    if let Some(s) = g.seed {
        c.seed = s;
    }
    if let Some(o) = g.fd_order {
        c.fd_order = o;
    }
    if let Some(t) = &g.tolerances {
        c.tolerances = t.clone();
    }
}

fn cmd_run(a: RunArgs, g: &Globals) -> Outcome {
    let mut c = match &a.config {
        Some(p) => {
            let mut c = RunConfig::from_json(&std::fs::read_to_string(p)?).map_err(|e| Failure::Usage(e.to_string()))?;
            apply_globals(&mut c, g);
            if let Some(n) = a.model.points {
                c.points = Some(n);
            }
            c
        }
        None => base_config(&a.model, Stage::ALL.to_vec(), g)?,
    };
    if !a.stages.is_empty() {
        c.stages = a
            .stages
            .iter()
            .map(|s| s.trim().parse::<Stage>())
            .collect::<efgeo::Result<Vec<_>>>()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    } else if a.all {
        c.stages = Stage::ALL.to_vec();
    }
    if let Some(v) = a.states {
        c.states = v;
    }
    if let Some(v) = a.dt {
        c.dt = v;
    }
    if let Some(v) = a.steps {
        c.steps = v;
    }
    if let Some(s) = &a.chart {
        c.chart = Some(chart_arg(s)?);
    }
    if let Some(v) = a.gauge_count {
        c.gauge_count = v;
    }
    if let Some(v) = a.gauge_modes {
        c.gauge_modes = v;
    }
    run_config(&c, g)
}

fn cmd_solve(model: &ModelArgs, states: usize, g: &Globals) -> Outcome {
    let m = model.load()?;
    let disc = m.discretize(g.order())?;
    let h = build_full_hamiltonian(&disc, &m.h_bo)?;
    let mut sts = solve_eigenstates(&h, &disc, states.max(1))?;
    if let Some((s, r)) = nodeless_combination(&sts, 1e-8) {
        eprintln!(
            "note: degenerate ground pair; state 0 is the nodeless combination (θ = {:.6}, φ = {:.6})",
            r.theta, r.phase
        );
        sts[0] = s;
    }
    let out = g.out_dir();
    std::fs::create_dir_all(&out)?;
    let mut rows = Vec::new();
    for (k, s) in sts.iter().enumerate() {
        let e = s.energy.unwrap_or(f64::NAN);
        rows.push(vec![Cell::from(k), Cell::from(e), Cell::from(h.eigen_residual(s)?)]);
        println!("E{k} = {e:?}");
        let name = if k == 0 { "psi.csv".to_string() } else { format!("psi_{k}.csv") };
        write_complex_field(&out.join(name), &disc.grid, &s.psi, "level")?;
    }
    write_csv(&out.join("eigenvalues.csv"), &["index", "energy", "eigen_residual"], &rows)?;
    Ok(())
}

fn read_state(path: &Path, m: &Model) -> Result<FullState, Failure> {
    let psi = read_complex_field(path, "level", Some(m.grid.len()))?;
    if psi.comps() != m.levels() {
        return Err(Failure::Runtime(efgeo::Error::ShapeMismatch(format!(
            "{} has {} levels, model `{}` has {}",
            path.display(),
            psi.comps(),
            m.spec.name,
            m.levels()
        ))));
    }
    Ok(FullState { psi, energy: None })
}

fn cmd_factorize(
    input: &Path,
    model: &ModelArgs,
    convention: ConventionArg,
    reference: usize,
    node_ratio: f64,
    g: &Globals,
) -> Outcome {
    let m = model.load()?;
    let disc = m.discretize(g.order())?;
    let psi = read_state(input, &m)?;
    let conv = match convention {
        ConventionArg::ChiRealPositive => GaugeConvention::ChiRealPositive,
        ConventionArg::ReferenceOverlap => {
            GaugeConvention::reference_level(reference, m.levels()).map_err(|e| Failure::Usage(e.to_string()))?
        }
    };
    let fact = factorize_with(&psi, &disc, &conv, node_ratio)?;
    let gauge = compute_vector_potential(&disc, &fact)?;
    let out = g.out_dir();
    std::fs::create_dir_all(&out)?;
    write_factorization(&out, &disc.grid, &fact, &gauge)?;
    println!("reconstruction error {:e}", fact.reconstruction_error(&psi.psi)?);
    println!("masked fraction {:?}", fact.masked_fraction());
    Ok(())
}

fn cmd_geometry(input: &Path, model: &ModelArgs, mask: Option<&Path>, cond_cap: f64, g: &Globals) -> Outcome {
    let m = model.load()?;
    let disc = m.discretize(g.order())?;
    let phi = read_state(input, &m)?.psi;
    let nodes = m.grid.len();
    let mask = match mask {
        Some(p) => read_mask(p, nodes)?,
        None => vec![false; nodes],
    };
    let fact = Factorization {
        chi: Field::filled(nodes, 1, efgeo::C64::new(1.0, 0.0)),
        phi,
        mask,
    };
    let bo = m.h_bo.sample(&m.grid)?;
    let geo = compute_geometry_with(&disc, &fact, &bo, cond_cap)?;
    let out = g.out_dir();
    std::fs::create_dir_all(&out)?;
    write_geometry(&out, &m.grid, &geo)?;
    println!("flagged nodes {}", geo.flagged.iter().filter(|&&f| f).count());
    println!("christoffel reconstruction {:e}", geo.christoffel_reconstruction);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_residuals(
    psi: &Path,
    model: &ModelArgs,
    mode: ModeArg,
    energy: Option<f64>,
    prev: Option<&Path>,
    next: Option<&Path>,
    dt: Option<f64>,
    g: &Globals,
) -> Outcome {
    let m = model.load()?;
    let disc = m.discretize(g.order())?;
    let h = build_full_hamiltonian(&disc, &m.h_bo)?;
    let conv = GaugeConvention::ChiRealPositive;
    let state = read_state(psi, &m)?;
    let fact = factorize_with(&state, &disc, &conv, efgeo::factorization::NODE_RATIO)?;
    let geo = compute_geometry_with(&disc, &fact, h.bo_samples(), efgeo::ef_geometry::CONDITION_CAP)?;
    let report = match mode {
        ModeArg::Stationary => {
            let e = match energy {
                Some(e) => e,
                None => h.expectation(&state.psi)?,
            };
            evaluate_residuals(&disc, &fact, &geo, h.bo_samples(), &ResidualMode::Stationary { energy: e })?
        }
        ModeArg::Dynamic => {
            let (Some(p), Some(n), Some(dt)) = (prev, next, dt) else {
                return Err(Failure::Usage("dynamic mode needs --prev, --next and --dt".into()));
            };
            let fp = factorize_with(&read_state(p, &m)?, &disc, &conv, efgeo::factorization::NODE_RATIO)?;
            let fnx = factorize_with(&read_state(n, &m)?, &disc, &conv, efgeo::factorization::NODE_RATIO)?;
            let mode = ResidualMode::Dynamic { prev: &fp, next: &fnx, dt };
            evaluate_residuals(&disc, &fact, &geo, h.bo_samples(), &mode)?
        }
    };
    let mut v = serde_json::to_value(&report.norms).map_err(efgeo::Error::from)?;
    v["grid"] = serde_json::to_value(disc.grid.spec()).map_err(efgeo::Error::from)?;
    let path = match &g.out {
        Some(p) if p.extension().is_some_and(|e| e == "json") => p.clone(),
        _ => g.out_dir().join("report.json"),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_json(&path, &v)?;
    println!("nuclear_norm {:e}", report.norms.nuclear_norm);
    println!("electronic_norm {:e}", report.norms.electronic_norm);
    println!("report {}", path.display());
    Ok(())
}

fn cmd_models(action: ModelsAction) -> Outcome {
    match action {
        ModelsAction::List => {
            for name in BUILTIN_NAMES {
                let s = builtin(name)?;
                println!("{name}\t{}", s.description);
            }
        }
        ModelsAction::Show { name, json } => {
            let s = builtin(&name)?;
            if json {
                print!("{}", s.to_json());
            } else {
                println!("{}: {}", s.name, s.description);
                println!("dimension {}, levels {}", s.dim(), s.levels());
                for (k, ax) in s.grid.axes.iter().enumerate() {
                    println!("axis q{}: {} nodes on [{}, {}] ({:?})", k + 1, ax.n, ax.lo, ax.hi, ax.boundary);
                }
                for (k, v) in &s.parameters {
                    println!("{k} = {v}");
                }
                if s.chart.is_some() {
                    println!("chart: yes");
                }
            }
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(format!("threads: {e}")))?;
    }
    let g = Globals {
        out: cli.out,
        seed: cli.seed,
        fd_order: cli.fd_order,
        tolerances: cli
            .tolerance_profile
            .as_deref()
            .map(Tolerances::profile)
            .transpose()
            .map_err(|e| Failure::Usage(e.to_string()))?,
    };
    match cli.command {
        Command::Run(a) => cmd_run(a, &g),
        Command::Solve { model, states } => cmd_solve(&model, states, &g),
        Command::Factorize {
            input,
            model,
            convention,
            reference,
            node_ratio,
        } => cmd_factorize(&input, &model, convention, reference, node_ratio, &g),
        Command::Geometry {
            input,
            model,
            mask,
            cond_cap,
        } => cmd_geometry(&input, &model, mask.as_deref(), cond_cap, &g),
        Command::Residuals {
            psi,
            model,
            mode,
            energy,
            prev,
            next,
            dt,
        } => cmd_residuals(&psi, &model, mode, energy, prev.as_deref(), next.as_deref(), dt, &g),
        Command::GaugeSweep { model, count, modes } => {
            let mut c = base_config(&model, vec![Stage::GaugeSweep], &g)?;
            c.gauge_count = count;
            c.gauge_modes = modes;
            run_config(&c, &g)
        }
        Command::ChartSweep { model, chart, states } => {
            let mut c = base_config(&model, vec![Stage::ChartSweep], &g)?;
            c.states = states;
            c.chart = chart.as_deref().map(chart_arg).transpose()?;
            run_config(&c, &g)
        }
        Command::Models { action } => cmd_models(action),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks(n)) => {
            eprintln!("{n} check(s) failed");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
