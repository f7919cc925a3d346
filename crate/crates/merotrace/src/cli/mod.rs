//! File-driven front end: ingest metric and path description files, run
//! the analyses, and emit traces, classifications, and certificates.
//!
//! Exit codes: 0 success; 2 input error; 3 numeric failure (underflow,
//! divergence, exhausted budgets); 4 witness found (probe only, for
//! scripting). All diagnostics go to standard error. Output files embed
//! the tool version and the full resolved configuration, floats carry 17
//! significant digits, and identical configurations over identical inputs
//! produce byte-identical files.

mod io;

pub use io::{
    fmt17, parse_class_spec_file, parse_complex, parse_metric_file, parse_path_file, parse_point,
    write_atomic, InputError,
};

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::coercivity::{
    certify_coercive, incompleteness_probe, ProbeConfig, Verdict, WitnessKind,
};
use crate::continuation::{
    classify_singularity, monodromy_probe, ClassifyOpts, MonodromyError, MonodromyResult,
    OdeSystem, SingularityClass, Terminal,
};
use crate::expr::Pole;
use crate::geodesic::{geodesic_rhs, trace_geodesic, GeodesicState};
use crate::metric::{christoffel_generic, christoffel_warped, MetricSpec};
use crate::quad::{QuadBranch, QuadCase, QuadError};
use crate::C64;

const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Environment variable overriding the default tolerance.
pub const TOL_ENV: &str = "MEROTRACE_TOL";

#[derive(Debug, Parser)]
#[command(name = "merotrace", version, about = "Geodesic tracing for meromorphic warped-product metrics")]
pub struct Cli {
    /// Local error tolerance per step (default 1e-10, or MEROTRACE_TOL)
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Directory for output files
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Output file format
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Seed for randomized fixtures
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }

    fn as_str(self) -> &'static str {
        self.extension()
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Christoffel symbols by the closed formulas and the generic oracle
    Christoffel {
        metric: PathBuf,
        /// Evaluation point, one complex literal per factor
        #[arg(long)]
        at: String,
    },
    /// Trace a geodesic along a path
    Trace {
        metric: PathBuf,
        path: PathBuf,
        /// Initial coordinates
        #[arg(long)]
        u0: String,
        /// Initial velocity
        #[arg(long)]
        udot0: String,
    },
    /// Continue a germ around a closed loop and report its monodromy
    Monodromy {
        /// Metric file, or one of: sqrt-germ, log-germ, const-germ
        system: String,
        /// Closed loop path file
        r#loop: PathBuf,
        #[arg(long, default_value_t = 8)]
        max_loops: u32,
        #[arg(long)]
        u0: Option<String>,
        #[arg(long)]
        udot0: Option<String>,
    },
    /// Classify the obstruction at a point approached along a path
    Classify {
        /// Metric file, or one of: sqrt-germ, log-germ, const-germ
        system: String,
        /// Approach path file ending at the suspected obstruction
        approach: PathBuf,
        /// The suspected obstruction
        #[arg(long)]
        center: String,
        #[arg(long)]
        u0: Option<String>,
        #[arg(long)]
        udot0: Option<String>,
    },
    /// Coercivity certificate for a quadrature-class spec
    Coercive { spec: PathBuf },
    /// Ray-fan incompleteness probe
    Probe {
        metric: PathBuf,
        #[arg(long, default_value_t = 32)]
        rays: usize,
        #[arg(long, default_value_t = 50.0)]
        radius: f64,
        #[arg(long)]
        u0: String,
        #[arg(long)]
        udot0: String,
    },
    /// Antiderivative self-test for quadratic coefficients a,b,c
    Quadcheck {
        /// Three complex literals separated by commas
        coefficients: String,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Christoffel { .. } => "christoffel",
            Command::Trace { .. } => "trace",
            Command::Monodromy { .. } => "monodromy",
            Command::Classify { .. } => "classify",
            Command::Coercive { .. } => "coercive",
            Command::Probe { .. } => "probe",
            Command::Quadcheck { .. } => "quadcheck",
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug)]
pub struct RunConfig {
    pub command: Command,
    pub tol: f64,
    pub out_dir: PathBuf,
    pub format: Format,
    pub seed: u64,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, InputError> {
        let tol = match cli.tol {
            Some(t) => t,
            None => match std::env::var(TOL_ENV) {
                Ok(v) => v
                    .parse()
                    .map_err(|_| InputError::new(format!("{TOL_ENV} is not a number")))?,
                Err(_) => 1e-10,
            },
        };
        if !(tol > 0.0 && tol <= 1e-2) {
            return Err(InputError::new(format!(
                "tolerance must lie in (0, 1e-2], got {tol}"
            )));
        }
        Ok(RunConfig {
            command: cli.command,
            tol,
            out_dir: cli.out,
            format: cli.format,
            seed: cli.seed,
        })
    }
}

enum CliError {
    /// Unusable inputs: exit code 2.
    Input(String),
    /// Underflow, divergence, exhausted budget: exit code 3.
    Numeric(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e.0)
    }
}

/// Entry point: parses arguments and runs. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the same path
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let config = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    run(&config)
}

/// Executes the configured command; returns the exit code.
pub fn run(config: &RunConfig) -> i32 {
    let result = match &config.command {
        Command::Christoffel { metric, at } => run_christoffel(config, metric, at),
        Command::Trace { metric, path, u0, udot0 } => run_trace(config, metric, path, u0, udot0),
        Command::Monodromy { system, r#loop, max_loops, u0, udot0 } => {
            run_monodromy(config, system, r#loop, *max_loops, u0.as_deref(), udot0.as_deref())
        }
        Command::Classify { system, approach, center, u0, udot0 } => {
            run_classify(config, system, approach, center, u0.as_deref(), udot0.as_deref())
        }
        Command::Coercive { spec } => run_coercive(config, spec),
        Command::Probe { metric, rays, radius, u0, udot0 } => {
            run_probe(config, metric, *rays, *radius, u0, udot0)
        }
        Command::Quadcheck { coefficients } => run_quadcheck(config, coefficients),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

// ---------------------------------------------------------------------
// report assembly

#[derive(Debug, Clone)]
enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => fmt17(*v),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Num(v) => {
                if v.is_finite() {
                    fmt17(*v)
                } else {
                    "null".to_string()
                }
            }
            Cell::Text(s) => format!("\"{}\"", io::json_escape(s)),
        }
    }
}

struct Report {
    config: Vec<(String, String)>,
    notes: Vec<(String, String)>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

impl Report {
    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = String::new();
                out.push_str(&format!("# merotrace {VERSION}\n"));
                for (k, v) in self.config.iter().chain(&self.notes) {
                    out.push_str(&format!("# {k} = {v}\n"));
                }
                out.push_str(&self.columns.join(","));
                out.push('\n');
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(Cell::csv).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Format::Json => {
                let mut out = String::new();
                out.push_str("{\n");
                out.push_str(&format!("  \"version\": \"{}\",\n", io::json_escape(VERSION)));
                out.push_str("  \"config\": {");
                let pairs: Vec<String> = self
                    .config
                    .iter()
                    .map(|(k, v)| format!("\"{}\": \"{}\"", io::json_escape(k), io::json_escape(v)))
                    .collect();
                out.push_str(&pairs.join(", "));
                out.push_str("},\n");
                out.push_str("  \"notes\": {");
                let pairs: Vec<String> = self
                    .notes
                    .iter()
                    .map(|(k, v)| format!("\"{}\": \"{}\"", io::json_escape(k), io::json_escape(v)))
                    .collect();
                out.push_str(&pairs.join(", "));
                out.push_str("},\n");
                let cols: Vec<String> = self.columns.iter().map(|c| format!("\"{c}\"")).collect();
                out.push_str(&format!("  \"columns\": [{}],\n", cols.join(", ")));
                out.push_str("  \"rows\": [\n");
                for (i, row) in self.rows.iter().enumerate() {
                    let cells: Vec<String> = row.iter().map(Cell::json).collect();
                    let sep = if i + 1 == self.rows.len() { "" } else { "," };
                    out.push_str(&format!("    [{}]{sep}\n", cells.join(", ")));
                }
                out.push_str("  ]\n}\n");
                out
            }
        }
    }
}

fn base_config(config: &RunConfig, inputs: &[(&str, String)]) -> Vec<(String, String)> {
    let mut out = vec![
        ("command".to_string(), config.command.name().to_string()),
        ("tol".to_string(), fmt17(config.tol)),
        ("format".to_string(), config.format.as_str().to_string()),
        ("seed".to_string(), config.seed.to_string()),
    ];
    for (k, v) in inputs {
        out.push((k.to_string(), v.clone()));
    }
    out
}

fn write_report(
    config: &RunConfig,
    name: &str,
    report: &Report,
) -> Result<PathBuf, CliError> {
    let path = config
        .out_dir
        .join(format!("{name}.{}", config.format.extension()));
    let contents = report.render(config.format);
    write_atomic(&path, &contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

fn complex_cells(z: C64) -> [Cell; 2] {
    [Cell::Num(z.re), Cell::Num(z.im)]
}

// ---------------------------------------------------------------------
// commands

fn run_christoffel(config: &RunConfig, metric: &Path, at: &str) -> Result<i32, CliError> {
    let m = parse_metric_file(&read_file(metric)?)?;
    let point = parse_point(at)?;
    if point.len() != m.dim() {
        return Err(CliError::Input(format!(
            "point has {} coordinates, metric has {}",
            point.len(),
            m.dim()
        )));
    }
    let warped = christoffel_warped(&m, &point)
        .map_err(|e| CliError::Input(format!("closed-form route: {e}")))?;
    let generic = christoffel_generic(&m, &point)
        .map_err(|e| CliError::Input(format!("generic route: {e}")))?;
    let deviation = warped.max_relative_deviation(&generic);

    let mut keys: Vec<(usize, usize, usize)> = warped
        .iter()
        .map(|(k, _)| *k)
        .chain(generic.iter().map(|(k, _)| *k))
        .collect();
    keys.sort();
    keys.dedup();
    let rows = keys
        .iter()
        .map(|&(i, j, k)| {
            let w = warped.get(i, j, k);
            let g = generic.get(i, j, k);
            let scale = 1.0f64.max(w.norm()).max(g.norm());
            vec![
                Cell::Int(i as i64 + 1),
                Cell::Int(j as i64 + 1),
                Cell::Int(k as i64 + 1),
                Cell::Num(w.re),
                Cell::Num(w.im),
                Cell::Num(g.re),
                Cell::Num(g.im),
                Cell::Num((w - g).norm() / scale),
            ]
        })
        .collect();
    let report = Report {
        config: base_config(
            config,
            &[("metric", metric.display().to_string()), ("at", at.to_string())],
        ),
        notes: vec![("max_relative_deviation".to_string(), fmt17(deviation))],
        columns: vec![
            "i", "j", "k", "re_warped", "im_warped", "re_generic", "im_generic", "deviation",
        ],
        rows,
    };
    let path = write_report(config, "christoffel", &report)?;
    println!(
        "christoffel: {} nonzero symbols, max relative deviation {} -> {}",
        report.rows.len(),
        fmt17(deviation),
        path.display()
    );
    Ok(0)
}

fn trace_columns(n: usize) -> Vec<&'static str> {
    // the per-factor column names are leaked once per process; the set of
    // dimensions in play is tiny
    let mut cols: Vec<&'static str> = vec!["t", "re_z", "im_z"];
    for k in 1..=n {
        for base in ["re_u", "im_u", "re_udot", "im_udot"] {
            cols.push(Box::leak(format!("{base}_{k}").into_boxed_str()));
        }
    }
    for k in 1..=n {
        cols.push(Box::leak(format!("residual_{k}").into_boxed_str()));
    }
    cols.push("re_speed");
    cols.push("im_speed");
    cols
}

fn terminal_notes(terminal: &Terminal) -> Vec<(String, String)> {
    match terminal {
        Terminal::Completed => vec![("terminal".to_string(), "completed".to_string())],
        Terminal::SingularStop { z, class } => vec![
            ("terminal".to_string(), "singular_stop".to_string()),
            ("stop_re_z".to_string(), fmt17(z.re)),
            ("stop_im_z".to_string(), fmt17(z.im)),
            ("classification".to_string(), class.to_string()),
        ],
        Terminal::DomainExit { z, factor } => vec![
            ("terminal".to_string(), "domain_exit".to_string()),
            ("stop_re_z".to_string(), fmt17(z.re)),
            ("stop_im_z".to_string(), fmt17(z.im)),
            ("factor".to_string(), (factor + 1).to_string()),
        ],
    }
}

fn run_trace(
    config: &RunConfig,
    metric: &Path,
    path_file: &Path,
    u0: &str,
    udot0: &str,
) -> Result<i32, CliError> {
    let m = parse_metric_file(&read_file(metric)?)?;
    let path = parse_path_file(&read_file(path_file)?)?;
    let u0v = parse_point(u0)?;
    let udot0v = parse_point(udot0)?;
    if u0v.len() != m.dim() || udot0v.len() != m.dim() {
        return Err(CliError::Input(format!(
            "seed needs {} coordinates per field",
            m.dim()
        )));
    }
    let s0 = GeodesicState::new(path.start(), u0v, udot0v);
    let trace = trace_geodesic(&m, &s0, &path, config.tol)
        .map_err(|e| CliError::Input(e.to_string()))?;

    let n = m.dim();
    let rows = trace
        .samples
        .iter()
        .map(|s| {
            let mut row = vec![Cell::Num(s.t)];
            row.extend(complex_cells(s.z));
            for k in 0..n {
                row.extend(complex_cells(s.u[k]));
                row.extend(complex_cells(s.udot[k]));
            }
            for k in 0..n {
                row.push(Cell::Num(s.residual[k]));
            }
            row.extend(complex_cells(s.speed));
            row
        })
        .collect();
    let mut notes = terminal_notes(&trace.terminal);
    notes.push(("accepted_steps".to_string(), trace.accepted.to_string()));
    notes.push(("rejected_steps".to_string(), trace.rejected.to_string()));
    notes.push(("min_step".to_string(), fmt17(trace.min_step)));
    notes.push(("max_step".to_string(), fmt17(trace.max_step)));
    let report = Report {
        config: base_config(
            config,
            &[
                ("metric", metric.display().to_string()),
                ("path", path_file.display().to_string()),
                ("u0", u0.to_string()),
                ("udot0", udot0.to_string()),
            ],
        ),
        notes,
        columns: trace_columns(n),
        rows,
    };
    let out = write_report(config, "trace", &report)?;
    let terminal_text = match &trace.terminal {
        Terminal::Completed => "completed".to_string(),
        Terminal::SingularStop { z, class } => format!("singular stop at {z} ({class})"),
        Terminal::DomainExit { z, factor } => {
            format!("domain exit at {z} (factor {})", factor + 1)
        }
    };
    println!(
        "trace: {} samples, terminal {terminal_text} -> {}",
        trace.samples.len(),
        out.display()
    );
    if trace.budget_exhausted {
        eprintln!("warning: step budget exhausted before the path end");
        return Ok(3);
    }
    Ok(0)
}

/// A germ source for the monodromy and classification commands: either a
/// geodesic system from a metric file or a builtin test germ.
enum SystemSource {
    Metric(Box<MetricSpec>, Vec<C64>),
    Sqrt,
    Log,
    Const,
}

impl SystemSource {
    fn resolve(
        system: &str,
        u0: Option<&str>,
        udot0: Option<&str>,
    ) -> Result<SystemSource, CliError> {
        match system {
            "sqrt-germ" => Ok(SystemSource::Sqrt),
            "log-germ" => Ok(SystemSource::Log),
            "const-germ" => Ok(SystemSource::Const),
            path => {
                let m = parse_metric_file(&read_file(Path::new(path))?)?;
                let (Some(u0), Some(udot0)) = (u0, udot0) else {
                    return Err(CliError::Input(
                        "metric systems need --u0 and --udot0".to_string(),
                    ));
                };
                let u0v = parse_point(u0)?;
                let udot0v = parse_point(udot0)?;
                if u0v.len() != m.dim() || udot0v.len() != m.dim() {
                    return Err(CliError::Input(format!(
                        "seed needs {} coordinates per field",
                        m.dim()
                    )));
                }
                let mut y0 = u0v;
                y0.extend(udot0v);
                Ok(SystemSource::Metric(Box::new(m), y0))
            }
        }
    }

    fn system(&self) -> OdeSystem<'_> {
        match self {
            SystemSource::Metric(m, _) => geodesic_rhs(m),
            SystemSource::Sqrt => OdeSystem::new(1, |y, z| {
                let den = 2.0 * y[0];
                if den.norm() < 1e-12 {
                    Err(Pole { at: z })
                } else {
                    Ok(vec![C64::new(1.0, 0.0) / den])
                }
            }),
            SystemSource::Log => OdeSystem::new(1, |_y, z| {
                if z.norm() < 1e-12 {
                    Err(Pole { at: z })
                } else {
                    Ok(vec![C64::new(1.0, 0.0) / z])
                }
            }),
            SystemSource::Const => OdeSystem::new(1, |_y, _z| Ok(vec![C64::new(0.0, 0.0)])),
        }
    }

    fn initial_state(&self, start: C64) -> Result<Vec<C64>, CliError> {
        match self {
            SystemSource::Metric(_, y0) => Ok(y0.clone()),
            SystemSource::Sqrt => {
                if start.norm() < 1e-9 {
                    return Err(CliError::Input(
                        "sqrt-germ cannot start at the branch point 0".to_string(),
                    ));
                }
                Ok(vec![start.sqrt()])
            }
            SystemSource::Log => {
                if start.norm() < 1e-9 {
                    return Err(CliError::Input(
                        "log-germ cannot start at 0".to_string(),
                    ));
                }
                Ok(vec![start.ln()])
            }
            SystemSource::Const => Ok(vec![C64::new(0.0, 0.0)]),
        }
    }
}

fn run_monodromy(
    config: &RunConfig,
    system: &str,
    loop_file: &Path,
    max_loops: u32,
    u0: Option<&str>,
    udot0: Option<&str>,
) -> Result<i32, CliError> {
    let source = SystemSource::resolve(system, u0, udot0)?;
    let loop_path = parse_path_file(&read_file(loop_file)?)?;
    if !loop_path.is_closed() {
        return Err(CliError::Input("loop path is not closed".to_string()));
    }
    let y0 = source.initial_state(loop_path.start())?;
    let sys = source.system();
    let outcome = monodromy_probe(&sys, &y0, &loop_path, max_loops, config.tol).map_err(|e| {
        match e {
            MonodromyError::SingularStop { .. } => CliError::Numeric(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    })?;

    let dim = sys.dim();
    let mut columns: Vec<&'static str> = vec!["circuit"];
    for k in 1..=dim {
        columns.push(Box::leak(format!("re_displacement_{k}").into_boxed_str()));
        columns.push(Box::leak(format!("im_displacement_{k}").into_boxed_str()));
    }
    let (summary, rows) = match &outcome {
        MonodromyResult::ReturnsAfter(k) => (format!("returns_after {k}"), Vec::new()),
        MonodromyResult::NoReturn { displacements } => {
            let rows = displacements
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let mut row = vec![Cell::Int(i as i64 + 1)];
                    for v in d {
                        row.extend(complex_cells(*v));
                    }
                    row
                })
                .collect();
            ("no_return".to_string(), rows)
        }
    };
    let report = Report {
        config: base_config(
            config,
            &[
                ("system", system.to_string()),
                ("loop", loop_file.display().to_string()),
                ("max_loops", max_loops.to_string()),
            ],
        ),
        notes: vec![("result".to_string(), summary.clone())],
        columns,
        rows,
    };
    let out = write_report(config, "monodromy", &report)?;
    println!("monodromy: {summary} -> {}", out.display());
    Ok(0)
}

fn run_classify(
    config: &RunConfig,
    system: &str,
    approach_file: &Path,
    center: &str,
    u0: Option<&str>,
    udot0: Option<&str>,
) -> Result<i32, CliError> {
    let source = SystemSource::resolve(system, u0, udot0)?;
    let approach = parse_path_file(&read_file(approach_file)?)?;
    let center = parse_complex(center)?;
    if (approach.end() - center).norm() > 1e-9 * (1.0 + center.norm()) {
        return Err(CliError::Input(format!(
            "approach ends at {} but the center is {center}",
            approach.end()
        )));
    }
    let y0 = source.initial_state(approach.start())?;
    let sys = source.system();
    let opts = ClassifyOpts {
        tol: (config.tol * 100.0).clamp(1e-12, 1e-6),
        ..ClassifyOpts::default()
    };
    let class = classify_singularity(&sys, &y0, center, &approach, opts);
    let (label, parameter) = match class {
        SingularityClass::Removable => ("removable", 0i64),
        SingularityClass::PoleLike { order } => ("pole_like", order as i64),
        SingularityClass::BranchLike { sheets } => ("branch_like", sheets as i64),
        SingularityClass::Logarithmic => ("logarithmic", 0),
        SingularityClass::Undetermined => ("undetermined", 0),
    };
    let report = Report {
        config: base_config(
            config,
            &[
                ("system", system.to_string()),
                ("approach", approach_file.display().to_string()),
                ("center", center.to_string()),
            ],
        ),
        notes: vec![("classification".to_string(), class.to_string())],
        columns: vec!["re_center", "im_center", "class", "parameter"],
        rows: vec![vec![
            Cell::Num(center.re),
            Cell::Num(center.im),
            Cell::Text(label.to_string()),
            Cell::Int(parameter),
        ]],
    };
    let out = write_report(config, "classify", &report)?;
    println!("classify: {class} -> {}", out.display());
    Ok(0)
}

fn run_coercive(config: &RunConfig, spec_file: &Path) -> Result<i32, CliError> {
    let spec = parse_class_spec_file(&read_file(spec_file)?)?;
    let cert = certify_coercive(&spec);
    let verdict = match cert.verdict {
        Verdict::Coercive => "coercive",
        Verdict::NotCertified => "not_certified",
    };

    // human-readable report
    let mut text = format!("merotrace {VERSION}\nspec = {}\nverdict = {verdict}\n", spec_file.display());
    for (i, reason) in cert.reasons.iter().enumerate() {
        text.push_str(&format!("condition {}: {reason}\n", i + 1));
    }
    let txt_path = config.out_dir.join("certificate.txt");
    write_atomic(&txt_path, &text)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", txt_path.display())))?;

    // machine-readable record
    let report = Report {
        config: base_config(config, &[("spec", spec_file.display().to_string())]),
        notes: vec![("verdict".to_string(), verdict.to_string())],
        columns: vec!["index", "condition"],
        rows: cert
            .reasons
            .iter()
            .enumerate()
            .map(|(i, r)| vec![Cell::Int(i as i64 + 1), Cell::Text(r.clone())])
            .collect(),
    };
    let json_path = config.out_dir.join("certificate.json");
    write_atomic(&json_path, &report.render(Format::Json))
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", json_path.display())))?;

    print!("{text}");
    println!("-> {} and {}", txt_path.display(), json_path.display());
    Ok(0)
}

fn run_probe(
    config: &RunConfig,
    metric: &Path,
    rays: usize,
    radius: f64,
    u0: &str,
    udot0: &str,
) -> Result<i32, CliError> {
    if rays == 0 || radius.is_nan() || radius <= 0.0 {
        return Err(CliError::Input("need rays >= 1 and radius > 0".to_string()));
    }
    let m = parse_metric_file(&read_file(metric)?)?;
    let u0v = parse_point(u0)?;
    let udot0v = parse_point(udot0)?;
    if u0v.len() != m.dim() || udot0v.len() != m.dim() {
        return Err(CliError::Input(format!(
            "seed needs {} coordinates per field",
            m.dim()
        )));
    }
    let seed = GeodesicState::new(C64::new(0.0, 0.0), u0v, udot0v);
    let cfg = ProbeConfig {
        rays,
        radius,
        tol: config.tol,
        ..ProbeConfig::default()
    };
    let report_data = incompleteness_probe(&m, &[seed], cfg)
        .map_err(|e| CliError::Input(e.to_string()))?;

    let mut rows = Vec::new();
    for w in &report_data.witnesses {
        let (kind, detail) = match w.kind {
            WitnessKind::DomainExit { factor } => ("domain_exit", factor as i64 + 1),
            WitnessKind::UnrestartablePole { order } => ("unrestartable_pole", order as i64),
            WitnessKind::Undetermined => ("undetermined", 0),
        };
        rows.push(vec![
            Cell::Text("witness".to_string()),
            Cell::Int(w.ray as i64),
            Cell::Num(w.direction),
            Cell::Num(w.z.re),
            Cell::Num(w.z.im),
            Cell::Text(kind.to_string()),
            Cell::Int(detail),
        ]);
    }
    for s in &report_data.soft_stops {
        rows.push(vec![
            Cell::Text("soft_stop".to_string()),
            Cell::Int(s.ray as i64),
            Cell::Num(std::f64::consts::TAU * s.ray as f64 / rays as f64),
            Cell::Num(s.z.re),
            Cell::Num(s.z.im),
            Cell::Text(s.class.to_string()),
            Cell::Int(s.restarted as i64),
        ]);
    }
    let report = Report {
        config: base_config(
            config,
            &[
                ("metric", metric.display().to_string()),
                ("rays", rays.to_string()),
                ("radius", fmt17(radius)),
                ("u0", u0.to_string()),
                ("udot0", udot0.to_string()),
            ],
        ),
        notes: vec![
            ("witnesses".to_string(), report_data.witnesses.len().to_string()),
            ("soft_stops".to_string(), report_data.soft_stops.len().to_string()),
            ("rays_run".to_string(), report_data.rays_run.to_string()),
            (
                "budget_exhausted".to_string(),
                report_data.budget_exhausted.to_string(),
            ),
        ],
        columns: vec!["kind", "ray", "direction", "re_z", "im_z", "class", "detail"],
        rows,
    };
    let out = write_report(config, "probe", &report)?;
    println!(
        "probe: {} witnesses, {} soft stops over {} rays -> {}",
        report_data.witnesses.len(),
        report_data.soft_stops.len(),
        report_data.rays_run,
        out.display()
    );
    if !report_data.witnesses.is_empty() {
        return Ok(4);
    }
    if report_data.budget_exhausted {
        eprintln!("warning: probe budget exhausted; results are partial");
        return Ok(3);
    }
    Ok(0)
}

fn run_quadcheck(config: &RunConfig, coefficients: &str) -> Result<i32, CliError> {
    let coeffs = parse_point(coefficients)?;
    if coeffs.len() != 3 {
        return Err(CliError::Input(
            "quadcheck needs exactly three coefficients a,b,c".to_string(),
        ));
    }
    let branch = QuadBranch::new(coeffs[0], coeffs[1], coeffs[2], C64::new(0.0, 0.0))
        .map_err(|e| CliError::Input(e.to_string()))?;
    let case = match branch.case() {
        QuadCase::Log => "log",
        QuadCase::DegenerateLog => "degenerate_log",
        QuadCase::Sqrt => "sqrt",
        QuadCase::Linear => "linear",
    };

    // deterministic sampling of branch-safe points in |η| <= 5
    let mut state = config.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let mut rows = Vec::new();
    let mut worst = 0.0f64;
    let mut attempts = 0;
    while rows.len() < 100 && attempts < 10_000 {
        attempts += 1;
        let r = 5.0 * next().sqrt();
        let phi = std::f64::consts::TAU * next();
        let eta = C64::from_polar(r, phi);
        match branch.check_derivative(eta) {
            Ok(dev) => {
                worst = worst.max(dev);
                rows.push(vec![Cell::Num(eta.re), Cell::Num(eta.im), Cell::Num(dev)]);
            }
            Err(QuadError::BranchCutCrossing { .. }) => continue,
            Err(e) => return Err(CliError::Numeric(e.to_string())),
        }
    }
    if rows.is_empty() {
        return Err(CliError::Numeric(
            "no branch-safe sample points found".to_string(),
        ));
    }
    let report = Report {
        config: base_config(config, &[("coefficients", coefficients.to_string())]),
        notes: vec![
            ("case".to_string(), case.to_string()),
            ("samples".to_string(), rows.len().to_string()),
            ("max_deviation".to_string(), fmt17(worst)),
        ],
        columns: vec!["re_eta", "im_eta", "deviation"],
        rows,
    };
    let out = write_report(config, "quadcheck", &report)?;
    println!(
        "quadcheck: case {case}, {} samples, max derivative deviation {} -> {}",
        report.rows.len(),
        fmt17(worst),
        out.display()
    );
    Ok(0)
}
