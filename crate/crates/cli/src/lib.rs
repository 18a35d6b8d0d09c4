//! Command-line front end: `solve`, `generate`, `compare` and `check`.
//!
//! Exit codes: 0 optimal (or success), 2 time or iteration limit,
//! 3 infeasible, 1 any error.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mibpsd::instance::{self, GeneratorParams, MibpsdInstance, ObjectiveMode};
use mibpsd::master::{self, IterationRecord, Method, SolveLog, SolveOptions, SolveResult, SolveStatus};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_LIMIT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mibpsd", version, about = "Benders decomposition for bilevel programs with an LP follower")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance.
    Solve {
        path: PathBuf,
        #[arg(long, default_value = "dedicated", value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        run: RunArgs,
        /// Result document (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Iteration log (one JSON record per line).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write a seeded random instance.
    Generate(GenerateArgs),
    /// Solve one instance with several methods and tabulate the runs.
    Compare {
        path: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "dedicated,standard", value_parser = parse_method)]
        methods: Vec<Method>,
        #[command(flatten)]
        run: RunArgs,
        /// Comparison document (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate an instance file.
    Check {
        path: PathBuf,
        /// Also run the LP-based well-posedness checks.
        #[arg(long)]
        lps: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long = "gap", default_value_t = 1e-6)]
    pub gap_tol: f64,
    /// Wall-clock limit in seconds.
    #[arg(long = "time-limit", default_value_t = 3600.0)]
    pub time_limit: f64,
    #[arg(long = "iters", default_value_t = 10_000)]
    pub iteration_cap: usize,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub no_inout: bool,
    /// Accepted for reproducible scripts; the solvers are deterministic.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl Default for RunArgs {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            time_limit: 3600.0,
            iteration_cap: 10_000,
            no_normalize: false,
            no_inout: false,
            seed: 0,
        }
    }
}

impl RunArgs {
    pub fn options(&self) -> SolveOptions {
        SolveOptions {
            gap_tol: self.gap_tol,
            time_limit: Some(Duration::from_secs_f64(self.time_limit.max(0.0))),
            iteration_cap: self.iteration_cap,
            normalize: !self.no_normalize,
            in_out: !self.no_inout,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Independent,
    DEqualsCy,
    CyZero,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 4)]
    pub n1: usize,
    #[arg(long, default_value_t = 4)]
    pub n2: usize,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = 3)]
    pub nbin: usize,
    #[arg(long, default_value_t = 0.6)]
    pub density: f64,
    #[arg(long, default_value_t = 5)]
    pub range: i64,
    /// Add a dual-side block (two rows unless `--q` says otherwise).
    #[arg(long)]
    pub extension: bool,
    /// Rows of the dual-side block.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long, value_enum, default_value = "independent")]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl GenerateArgs {
    pub fn params(&self) -> GeneratorParams {
        GeneratorParams {
            n1: self.n1,
            n2: self.n2,
            m: self.m,
            p: self.p,
            nbin: self.nbin,
            density: self.density,
            range: self.range,
            q: self.q.unwrap_or(if self.extension { 2 } else { 0 }),
            objective: match self.objective {
                ObjectiveArg::Independent => ObjectiveMode::Independent,
                ObjectiveArg::DEqualsCy => ObjectiveMode::DEqualsCy,
                ObjectiveArg::CyZero => ObjectiveMode::CyZero,
            },
        }
    }
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse()
}

pub fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "OPTIMAL",
        SolveStatus::TimeLimit => "TIME_LIMIT",
        SolveStatus::Infeasible => "INFEASIBLE",
    }
}

pub fn exit_code(s: SolveStatus) -> i32 {
    match s {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::TimeLimit => EXIT_LIMIT,
        SolveStatus::Infeasible => EXIT_INFEASIBLE,
    }
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Result document. Holds no timings, so equal inputs give equal bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultDocument {
    pub method: String,
    pub status: String,
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub objective: Option<f64>,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub gap: Option<f64>,
    pub iterations: usize,
}

impl ResultDocument {
    pub fn new(method: Method, res: &SolveResult) -> Self {
        Self {
            method: method.name().into(),
            status: status_name(res.status).into(),
            x_star: res.x_star.clone(),
            y_star: res.y_star.clone(),
            objective: finite(res.objective),
            lower_bound: finite(res.lower_bound),
            upper_bound: finite(res.upper_bound),
            gap: finite(res.gap),
            iterations: res.log.records.len(),
        }
    }
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum LogLine {
    Iteration(IterationRecord),
    Summary(ResultDocument),
}

pub fn write_log(w: &mut impl Write, method: Method, res: &SolveResult) -> std::io::Result<()> {
    for r in &res.log.records {
        serde_json::to_writer(&mut *w, &LogLine::Iteration(r.clone()))?;
        writeln!(w)?;
    }
    serde_json::to_writer(&mut *w, &LogLine::Summary(ResultDocument::new(method, res)))?;
    writeln!(w)
}

/// Reads a log written by [`write_log`].
pub fn read_log(path: &Path) -> Result<(SolveLog, Option<ResultDocument>), String> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut log = SolveLog::default();
    let mut summary = None;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line).map_err(|e| format!("log line {}: {e}", n + 1))? {
            LogLine::Iteration(r) => log.records.push(r),
            LogLine::Summary(s) => summary = Some(s),
        }
    }
    Ok((log, summary))
}

fn read_instance(path: &Path) -> Result<MibpsdInstance, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    instance::load(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn cmd_solve(
    path: &Path,
    method: Method,
    run: &RunArgs,
    out: Option<&Path>,
    log: Option<&Path>,
) -> Result<i32, String> {
    let inst = read_instance(path)?;
    let res = master::solve(&inst, method, &run.options()).map_err(|e| e.to_string())?;
    let doc = ResultDocument::new(method, &res);
    println!(
        "{} {} objective {} bounds [{}, {}] gap {} iterations {}",
        method.name(),
        doc.status,
        show(doc.objective),
        show(doc.lower_bound),
        show(doc.upper_bound),
        show(doc.gap),
        doc.iterations
    );
    if let Some(out) = out {
        let text = serde_json::to_string_pretty(&doc).map_err(|e| e.to_string())?;
        write_file(out, &(text + "\n"))?;
    }
    if let Some(log) = log {
        let mut buf = Vec::new();
        write_log(&mut buf, method, &res).map_err(|e| e.to_string())?;
        fs::write(log, buf).map_err(|e| format!("{}: {e}", log.display()))?;
    }
    Ok(exit_code(res.status))
}

fn show(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<i32, String> {
    let inst = instance::generate_random(&args.params(), args.seed).map_err(|e| e.to_string())?;
    let text = instance::save(&inst);
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    Ok(EXIT_OK)
}

/// One row of a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub status: String,
    pub seconds: f64,
    pub objective: Option<f64>,
    pub gap: Option<f64>,
    pub iterations: usize,
    pub mean_separation_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<CompareRow>,
    /// Mean separation time of the dedicated method over that of the
    /// standard one, when both ran.
    pub separation_ratio: Option<f64>,
}

/// Runs each method in turn on the same instance.
pub fn compare(inst: &MibpsdInstance, methods: &[Method], run: &RunArgs) -> Result<Comparison, String> {
    let mut rows = Vec::new();
    for &m in methods {
        let start = Instant::now();
        let res = master::solve(inst, m, &run.options()).map_err(|e| format!("{}: {e}", m.name()))?;
        let seconds = start.elapsed().as_secs_f64();
        let status = match res.status {
            SolveStatus::TimeLimit if !res.upper_bound.is_finite() => "NO_INCUMBENT".to_string(),
            s => status_name(s).to_string(),
        };
        rows.push(CompareRow {
            method: m.name().into(),
            status,
            seconds,
            objective: finite(res.objective),
            gap: finite(res.gap),
            iterations: res.log.records.len(),
            mean_separation_seconds: res.log.mean_separation_seconds(),
        });
    }
    let mean = |name: &str| {
        rows.iter()
            .find(|r| r.method == name)
            .and_then(|r| r.mean_separation_seconds)
    };
    let separation_ratio = match (mean("dedicated"), mean("standard")) {
        (Some(d), Some(s)) if s > 0.0 => Some(d / s),
        _ => None,
    };
    Ok(Comparison { rows, separation_ratio })
}

/// Plain-text table in the layout of a solver comparison: a row per
/// method, `TIME_LIMIT` in place of the time when the limit was hit.
pub fn render_table(c: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>12} {:>14} {:>10} {:>6} {:>14}  status",
        "method", "time [s]", "objective", "gap", "iters", "sep/iter [ms]"
    );
    for r in &c.rows {
        let time = if r.status == "TIME_LIMIT" || r.status == "NO_INCUMBENT" {
            "TIME_LIMIT".to_string()
        } else {
            format!("{:.3}", r.seconds)
        };
        let _ = writeln!(
            s,
            "{:<10} {:>12} {:>14} {:>10} {:>6} {:>14}  {}",
            r.method,
            time,
            r.objective.map_or("-".into(), |v| format!("{v:.6}")),
            r.gap.map_or("-".into(), |v| format!("{v:.2e}")),
            r.iterations,
            r.mean_separation_seconds
                .map_or("-".into(), |v| format!("{:.3}", v * 1e3)),
            r.status
        );
    }
    if let Some(ratio) = c.separation_ratio {
        let _ = writeln!(s, "separation time ratio dedicated / standard: {ratio:.3}");
    }
    s
}

pub fn cmd_compare(path: &Path, methods: &[Method], run: &RunArgs, out: Option<&Path>) -> Result<i32, String> {
    if methods.len() < 2 {
        return Err("compare needs at least two methods".into());
    }
    let inst = read_instance(path)?;
    let c = compare(&inst, methods, run)?;
    print!("{}", render_table(&c));
    if let Some(out) = out {
        let text = serde_json::to_string_pretty(&c).map_err(|e| e.to_string())?;
        write_file(out, &(text + "\n"))?;
    }
    Ok(EXIT_OK)
}

pub fn cmd_check(path: &Path, lps: bool) -> Result<i32, String> {
    let inst = read_instance(path)?;
    let report = instance::validate(&inst, lps);
    println!("dimensions: {}", if report.dimension_ok { "ok" } else { "FAILED" });
    println!("follower sees binaries only: {}", if report.assumption2_ok { "ok" } else { "FAILED" });
    if lps {
        println!("relaxation bounded and feasible: {:?}", report.assumption4_status);
        println!("feasible binary assignment: {:?}", report.assumption5_status);
    }
    for m in &report.messages {
        println!("  {m}");
    }
    Ok(if report.is_ok() { EXIT_OK } else { EXIT_ERROR })
}

/// Dispatches a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match &cli.command {
        Command::Solve {
            path,
            method,
            run,
            out,
            log,
        } => cmd_solve(path, *method, run, out.as_deref(), log.as_deref()),
        Command::Generate(args) => cmd_generate(args),
        Command::Compare { path, methods, run, out } => cmd_compare(path, methods, run, out.as_deref()),
        Command::Check { path, lps } => cmd_check(path, *lps),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    })
}
