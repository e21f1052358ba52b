//! Command-line front end.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::geometry::{self, Point};
use crate::labeling::{LabelRule, LabelingStrategy};
use crate::mesh::Mesh;
use crate::oracle;
use crate::problems::{self, AffineSpec, KnownFixedPoints, Problem, ProblemError};
use crate::solver::{self, SolveError, SolverConfig};
use crate::trace::{SolveTrace, TraceError, TraceEvent};
use crate::transform::{self, TransformError, ZeroProblem};

/// Samples used to estimate the zero-search scales.
const C_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Domain(String),
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Domain(_) => 3,
            CliError::Verify(_) => 4,
            CliError::Io { .. } => 5,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

impl From<ProblemError> for CliError {
    fn from(e: ProblemError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TransformError> for CliError {
    fn from(e: TransformError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::DomainViolation { .. } | SolveError::ImageDimension { .. } => CliError::Domain(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "knaster", version, about = "Derivative-free fixed-point solver on the simplex")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a built-in or affine problem.
    Solve(SolveArgs),
    /// List the built-in problems.
    List,
    /// Grid-search fixed points and optionally cross-check a solve trace.
    Verify(VerifyArgs),
    /// Write the vertices and cells of one step of a trace as CSV.
    ExportPlot(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    FixedPoint,
    ZeroSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Domain {
    Simplex,
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Labeling {
    NotCloser,
    MaxGain,
    FirstIndex,
}

impl From<Labeling> for LabelRule {
    fn from(l: Labeling) -> Self {
        match l {
            Labeling::NotCloser => LabelRule::NotCloser,
            Labeling::MaxGain => LabelRule::MaxGain,
            Labeling::FirstIndex => LabelRule::FirstIndexReduced,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    /// Built-in problem name (see `list`).
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    pub problem: Option<String>,
    /// JSON file `{"dimension": d, "A": [[...]], "b": [...]}` describing x -> Ax + b.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dimension for built-in problems.
    #[arg(long, default_value_t = 2)]
    pub d: usize,
    /// Comma-separated perturbation for `contraction-eps`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub epsilon: Option<Vec<f64>>,
    /// Treat the map as F (fixed-point) or as G whose zeros are sought.
    #[arg(long, value_enum, default_value_t = Mode::FixedPoint)]
    pub mode: Mode,
    /// Domain the map is defined on.
    #[arg(long, value_enum, default_value_t = Domain::Simplex)]
    pub domain: Domain,
    /// Seed for the zero-search scale estimate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_evals: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub target_diameter: f64,
    #[arg(long, value_enum, default_value_t = Labeling::NotCloser)]
    pub labeling: Labeling,
    #[arg(long, default_value_t = 0)]
    pub initial_refinement: usize,
    /// Write the event trace (JSON lines) here.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Write all evaluated vertices (CSV) here.
    #[arg(long)]
    pub points_out: Option<PathBuf>,
    /// Number of candidates to print.
    #[arg(long, default_value_t = 5)]
    pub show: usize,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    /// Trace whose candidates must lie near grid minima.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Point (comma-separated) that must be near a grid minimum.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub expect: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub trace: PathBuf,
    #[arg(long)]
    pub step: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Builds the problem described by the flags.
pub fn build_problem(args: &ProblemArgs) -> Result<Problem, CliError> {
    let base = match (&args.problem, &args.config) {
        (Some(name), None) => problems::builtin(name, args.d, args.epsilon.as_deref())?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let spec: AffineSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let mut p = problems::from_affine(spec)?;
            p.name = path.file_stem().map_or("affine".into(), |s| s.to_string_lossy().into_owned());
            p
        }
        _ => return Err(CliError::Config("exactly one of --problem and --config is required".into())),
    };

    let on_simplex = match args.domain {
        Domain::Simplex => base,
        Domain::Cube => {
            let known = match (&base.known, args.mode) {
                (Some(KnownFixedPoints::Points(ps)), Mode::FixedPoint) => {
                    Some(KnownFixedPoints::Points(ps.iter().map(geometry::cube_to_simplex).collect()))
                }
                _ => None,
            };
            let mut p = if args.mode == Mode::FixedPoint {
                transform::wrap_cube(format!("cube:{}", base.name), base.map)
            } else {
                // G is only pulled back; its values are not mapped
                let g = base.map.clone();
                let d = base.dimension;
                Problem::new(
                    format!("cube:{}", base.name),
                    Arc::new(problems::FnMap::new(d, move |x: &[f64]| {
                        let y = geometry::simplex_to_cube(&Point::new(x.to_vec()).expect("finite"));
                        g.eval(&y).image
                    })),
                )
            };
            p.known = known;
            p
        }
    };

    match args.mode {
        Mode::FixedPoint => Ok(on_simplex),
        Mode::ZeroSearch => {
            let mut zp = ZeroProblem::new(on_simplex.name.clone(), on_simplex.map);
            zp.c = transform::estimate_c(&zp, C_SAMPLES, args.seed)?;
            log::info!("zero-search scales c = {:?}", zp.c);
            Ok(transform::to_fixed_point(zp)?)
        }
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|x| format!("{x:.6}")).collect();
    format!("({})", parts.join(", "))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// CSV of evaluated vertices: `id,x_0..x_{d-1},labels,residual`.
pub fn write_points<W: Write>(mesh: &Mesh, mut w: W) -> std::io::Result<()> {
    let d = mesh.dim();
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..d).map(|i| format!("x_{i}")))
        .chain(["labels".to_string(), "residual".to_string()])
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (i, v) in mesh.vertices().iter().enumerate() {
        let Some(e) = v.eval() else { continue };
        let coords: Vec<String> = v.position().coords().iter().map(f64::to_string).collect();
        writeln!(w, "{i},{},{},{}", coords.join(","), e.labels, e.residual())?;
    }
    w.flush()
}

/// CSV of alive cells: `id,v_0..v_d,sperner`.
pub fn write_cells<W: Write>(mesh: &Mesh, mut w: W) -> std::io::Result<()> {
    let d = mesh.dim();
    let header: Vec<String> = std::iter::once("id".to_string())
        .chain((0..=d).map(|i| format!("v_{i}")))
        .chain(std::iter::once("sperner".to_string()))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let sperner = solver::sperner_cells(mesh);
    for c in mesh.alive_cells() {
        let vs: Vec<String> = mesh
            .cell(c)
            .expect("alive")
            .vertex_ids
            .iter()
            .map(|v| v.0.to_string())
            .collect();
        writeln!(w, "{},{},{}", c.0, vs.join(","), u8::from(sperner.contains(&c)))?;
    }
    w.flush()
}

pub fn cmd_solve<W: Write>(args: &SolveArgs, out: &mut W) -> Result<(), CliError> {
    let problem = build_problem(&args.problem)?;
    let config = SolverConfig {
        max_steps: args.steps,
        max_evaluations: args.max_evals,
        target_diameter: args.target_diameter,
        labeling: LabelingStrategy::from(LabelRule::from(args.labeling)),
        initial_refinement: args.initial_refinement,
        record_trace: args.trace_out.is_some(),
        seed: Some(args.problem.seed),
    };
    let name = problem.name.clone();
    let d = problem.dimension;
    let known = problem.known.clone();
    let res = solver::solve(problem, config)?;

    if let Some(path) = &args.trace_out {
        res.trace.write_jsonl(create(path)?).map_err(|e| match e {
            TraceError::Io(source) => CliError::io(path, source),
            other => CliError::Config(other.to_string()),
        })?;
    }
    if let Some(path) = &args.points_out {
        write_points(&res.mesh, create(path)?).map_err(|e| CliError::io(path, e))?;
    }

    let w = |e: std::io::Error| CliError::io(Path::new("<stdout>"), e);
    writeln!(out, "problem {name} (d={d}, labeling {})", LabelRule::from(args.labeling)).map_err(w)?;
    writeln!(
        out,
        "stopped ({}) after {} steps, {} evaluations, {} Sperner cells",
        res.stop_reason,
        res.steps_used,
        res.evaluations_used,
        res.candidates.len()
    )
    .map_err(w)?;
    writeln!(out, "{:>4}  {:>12}  {:>12}  point", "rank", "residual", "diameter").map_err(w)?;
    for (rank, c) in res.candidates.iter().take(args.show).enumerate() {
        let tag = c.spurious.map(|s| format!("  [spurious: {s}]")).unwrap_or_default();
        writeln!(out, "{rank:>4}  {:>12.3e}  {:>12.3e}  {}{tag}", c.residual, c.diameter, fmt_point(c.point.coords()))
            .map_err(w)?;
    }
    if let (Some(k), Some(best)) = (known, res.best()) {
        writeln!(out, "distance of best candidate to known fixed points: {:.3e}", k.distance(&best.point)).map_err(w)?;
    }
    Ok(())
}

pub fn cmd_list<W: Write>(out: &mut W) -> Result<(), CliError> {
    let rows = [
        ("half", "x -> x/2", "any d", "0"),
        ("swap", "(x, y) -> (y, x)", "d = 2", "the diagonal x = y"),
        ("contraction", "x -> x/(2d) + 1/(2d)", "any d", "1/(2d-1) in every coordinate"),
        ("contraction-eps", "x -> x/(2d) + 1/(2d) + eps", "d >= 2", "(1 + 2d eps_i)/(2d-1)"),
    ];
    let w = |e: std::io::Error| CliError::io(Path::new("<stdout>"), e);
    writeln!(out, "{:<16} {:<28} {:<8} fixed points", "name", "map", "dims").map_err(w)?;
    for (name, map, dims, fixed) in rows {
        writeln!(out, "{name:<16} {map:<28} {dims:<8} {fixed}").map_err(w)?;
    }
    Ok(())
}

fn read_trace(path: &Path) -> Result<SolveTrace, CliError> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    SolveTrace::read_jsonl(BufReader::new(f)).map_err(|e| match e {
        TraceError::Io(source) => CliError::io(path, source),
        other => CliError::Config(format!("{}: {other}", path.display())),
    })
}

pub fn cmd_verify<W: Write>(args: &VerifyArgs, out: &mut W) -> Result<(), CliError> {
    let problem = build_problem(&args.problem)?;
    let report = oracle::grid_fixed_points(&problem, args.resolution).map_err(|e| CliError::Config(e.to_string()))?;
    let w = |e: std::io::Error| CliError::io(Path::new("<stdout>"), e);
    writeln!(
        out,
        "grid resolution {}: {} points, smallest residual {:.3e}, {} local minima",
        report.resolution,
        report.points_evaluated,
        report.min_residual,
        report.minima.len()
    )
    .map_err(w)?;
    writeln!(out, "{:>4}  {:>12}  point", "#", "residual").map_err(w)?;
    for (i, m) in report.minima.iter().take(20).enumerate() {
        writeln!(out, "{i:>4}  {:>12.3e}  {}", m.residual, fmt_point(&m.point)).map_err(w)?;
    }
    if report.minima.len() > 20 {
        writeln!(out, "   ... {} more", report.minima.len() - 20).map_err(w)?;
    }

    let mut failures = Vec::new();
    if report.minima.is_empty() {
        failures.push("no grid minima below 2/resolution".to_string());
    }
    if let Some(p) = &args.expect {
        if p.len() != problem.dimension {
            return Err(CliError::Config(format!("--expect needs {} coordinates", problem.dimension)));
        }
        let cells = report.cells_to_nearest(p);
        if cells > 2.0 {
            failures.push(format!("expected point {} is {cells:.1} grid cells from the nearest minimum", fmt_point(p)));
        }
    } else {
        match &problem.known {
            Some(KnownFixedPoints::Points(ps)) => {
                for p in ps {
                    if report.cells_to_nearest(p.coords()) > 2.0 {
                        failures.push(format!("known fixed point {} has no grid minimum nearby", fmt_point(p.coords())));
                    }
                }
            }
            Some(KnownFixedPoints::Diagonal) => {
                let h = 1.0 / report.resolution as f64;
                if report.minima.iter().any(|m| (m.point[0] - m.point[1]).abs() > 2.0 * h) {
                    failures.push("grid minimum off the diagonal".into());
                }
            }
            None => {}
        }
    }
    if let Some(path) = &args.trace {
        let trace = read_trace(path)?;
        let mut checked = 0;
        for c in trace.candidates() {
            if let TraceEvent::Candidate { point, residual, rank, .. } = c {
                if *residual < 1e-3 {
                    checked += 1;
                    let cells = report.cells_to_nearest(point);
                    if cells > 2.0 {
                        failures.push(format!("candidate {rank} at {} is {cells:.1} grid cells from a minimum", fmt_point(point)));
                    }
                }
            }
        }
        writeln!(out, "checked {checked} trace candidates with residual < 1e-3").map_err(w)?;
    }
    if failures.is_empty() {
        writeln!(out, "PASS").map_err(w)?;
        Ok(())
    } else {
        for f in &failures {
            writeln!(out, "FAIL: {f}").map_err(w)?;
        }
        Err(CliError::Verify(failures.join("; ")))
    }
}

pub fn cmd_export_plot<W: Write>(args: &ExportArgs, out: &mut W) -> Result<(), CliError> {
    let trace = read_trace(&args.trace)?;
    let mesh = trace.replay(args.step).map_err(|e| match e {
        TraceError::MissingStep { requested, .. } => {
            let steps = trace.steps();
            CliError::Config(format!(
                "step {requested} not in trace; available steps: {}",
                match (steps.first(), steps.last()) {
                    (Some(a), Some(b)) => format!("{a}..={b}"),
                    _ => "none".into(),
                }
            ))
        }
        other => CliError::Config(other.to_string()),
    })?;
    fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let vpath = args.out_dir.join("vertices.csv");
    let cpath = args.out_dir.join("cells.csv");
    write_points(&mesh, create(&vpath)?).map_err(|e| CliError::io(&vpath, e))?;
    write_cells(&mesh, create(&cpath)?).map_err(|e| CliError::io(&cpath, e))?;
    writeln!(
        out,
        "step {}: {} vertices, {} cells written to {}",
        args.step,
        mesh.vertices().iter().filter(|v| v.eval().is_some()).count(),
        mesh.num_alive_cells(),
        args.out_dir.display()
    )
    .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    Ok(())
}

pub fn run<W: Write>(cli: &Cli, out: &mut W) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a, out),
        Command::List => cmd_list(out),
        Command::Verify(a) => cmd_verify(a, out),
        Command::ExportPlot(a) => cmd_export_plot(a, out),
    }
}
