use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use owp::driver::{prepare, run_pop, OwpOptions, OwpStatus};
use owp::io::{read_csv_matrix, read_problem, serialize_problem, ResultReport};
use owp::moment::assemble_sdp;
use owp::mtl::{gen_mimo, gen_miso, random_mimo_data, random_miso_data};
use owp::oracle::{sample_wp, LspOptions};
use owp::representation::{RepChoice, RepKind, Representation};
use owp::MopProblem;

#[derive(Parser)]
#[command(name = "owp", version, about = "Optimize over the weakly Pareto set of a convex polynomial multiobjective program")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the Moment-SOS hierarchy and print a JSON report.
    Solve(SolveArgs),
    /// Print the eliminated weight / multiplier expressions.
    Represent(RepresentArgs),
    /// Sample the weakly Pareto set by linear scalarization (CSV output).
    Oracle(OracleArgs),
    /// Build a multi-input single-output regression problem.
    GenMiso(MisoArgs),
    /// Build a one-layer autoencoder problem.
    GenMimo(MimoArgs),
    /// Write one relaxation as a sparse text SDP.
    ExportSdp(ExportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RepArg {
    Auto,
    Xw,
    Xlambda,
    Xonly,
}

impl From<RepArg> for RepChoice {
    fn from(r: RepArg) -> Self {
        match r {
            RepArg::Auto => RepChoice::Auto,
            RepArg::Xw => RepChoice::Fixed(RepKind::XW),
            RepArg::Xlambda => RepChoice::Fixed(RepKind::XLambda),
            RepArg::Xonly => RepChoice::Fixed(RepKind::XOnly),
        }
    }
}

#[derive(Args)]
struct RepFlags {
    /// Representation of the weakly Pareto set.
    #[arg(long, value_enum, default_value = "auto")]
    rep: RepArg,
    /// Degree cap for the polynomial left-inverse search.
    #[arg(long, default_value_t = 2)]
    inverse_degree: u32,
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    #[command(flatten)]
    rep: RepFlags,
    /// Highest relaxation order (default d0 + 3).
    #[arg(long)]
    kmax: Option<u32>,
    /// Relative singular value cutoff for numeric rank.
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    /// SDP feasibility and gap tolerance.
    #[arg(long, default_value_t = 1e-8)]
    sdp_tol: f64,
    /// Divide the SDP objective by its largest coefficient.
    #[arg(long)]
    scale_objective: bool,
    /// Print solver iterations to stderr.
    #[arg(long, short)]
    verbose: bool,
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RepresentArgs {
    problem: PathBuf,
    #[command(flatten)]
    rep: RepFlags,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct OracleArgs {
    problem: PathBuf,
    /// Grid resolution N; weights are multiples of 1/N on the simplex.
    #[arg(long, default_value_t = 20)]
    resolution: usize,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MisoArgs {
    /// Design matrix CSV, one per task (repeatable).
    #[arg(long = "x", value_name = "CSV")]
    xs: Vec<PathBuf>,
    /// Label vector CSV (one column or one row).
    #[arg(long = "y", value_name = "CSV", requires = "xs")]
    y: Option<PathBuf>,
    /// Number of random tasks when no CSV is given.
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 10)]
    n1: usize,
    #[arg(long, default_value_t = 10)]
    n2: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct MimoArgs {
    /// Inputs CSV, one sample per row.
    #[arg(long = "x", value_name = "CSV")]
    x: Option<PathBuf>,
    /// Number of random samples when no CSV is given.
    #[arg(long, default_value_t = 3)]
    p: usize,
    /// Input width for random data.
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Order of the tanh Taylor polynomial (3 or 5).
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(3..=5))]
    tanh_degree: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    problem: PathBuf,
    #[command(flatten)]
    rep: RepFlags,
    /// Relaxation order (default: the smallest valid one).
    #[arg(long)]
    order: Option<u32>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>, String> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| format!("{}: {e}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn load(path: &Path) -> Result<MopProblem, String> {
    let (file, prob) = read_problem(path).map_err(|e| e.to_string())?;
    if file.convex != Some(true) {
        for w in prob.convexity_warnings(64, 0) {
            eprintln!("warning: {w}");
        }
    }
    Ok(prob)
}

fn rep_options(flags: &RepFlags) -> OwpOptions {
    OwpOptions {
        rep: flags.rep.into(),
        inverse_degree: flags.inverse_degree,
        ..Default::default()
    }
}

fn solve(args: SolveArgs) -> Result<ExitCode, String> {
    let prob = load(&args.problem)?;
    let mut opts = rep_options(&args.rep);
    opts.k_max = args.kmax;
    opts.rank_tol = args.rank_tol;
    opts.sdp.feas_tol = args.sdp_tol;
    opts.sdp.gap_tol = args.sdp_tol;
    opts.sdp.verbose = args.verbose;
    opts.scale_objective = args.scale_objective;
    let started = Instant::now();
    let (rep, pop) = prepare(&prob, &opts).map_err(|e| e.to_string())?;
    let result = run_pop(&prob, &rep, &pop, &opts).map_err(|e| e.to_string())?;
    let report = ResultReport::new(&result, started.elapsed().as_secs_f64());
    let mut out = open_out(args.output.as_deref())?;
    writeln!(out, "{}", report.to_json()).map_err(|e| e.to_string())?;
    Ok(ExitCode::from(match result.status {
        OwpStatus::Solved => 0,
        OwpStatus::InfeasibleNoWPP => 2,
        OwpStatus::OrderLimitReached => 3,
    }))
}

fn represent(args: RepresentArgs) -> Result<ExitCode, String> {
    let prob = load(&args.problem)?;
    let (rep, pop) = prepare(&prob, &rep_options(&args.rep)).map_err(|e| e.to_string())?;
    let names = &pop.layout.names;
    let (weights, lambda): (&[_], &[_]) = match &rep {
        Representation::XW { lambda } => (&[], lambda),
        Representation::XLambda { weights } => (weights, &[]),
        Representation::XOnly { weights, lambda } => (weights, lambda),
    };
    let mut out = io::stdout().lock();
    let res = if args.json {
        let doc = json!({
            "representation": rep.kind(),
            "variables": names,
            "weights": weights,
            "lambda": lambda,
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).unwrap())
    } else {
        let mut text = format!("representation {} in ({})\n", rep.kind().name(), names.join(", "));
        for (j, w) in weights.iter().enumerate() {
            text += &format!("w{} = {}\n", j + 1, w.display_with(names));
        }
        for (i, l) in lambda.iter().enumerate() {
            text += &format!("lambda{} = {}\n", i + 1, l.display_with(names));
        }
        write!(out, "{text}")
    };
    res.map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn oracle(args: OracleArgs) -> Result<ExitCode, String> {
    let prob = load(&args.problem)?;
    let opts = LspOptions {
        tol: args.tol,
        max_iter: args.max_iter,
    };
    let report = sample_wp(&prob, args.resolution, &opts);
    for w in &report.skipped {
        eprintln!("warning: no convergence at w = {w:?}");
    }
    if let Some(s) = report.best_sample() {
        eprintln!("best f0 = {:.8} at w = {:?}", s.f0, s.w);
    }
    let out = open_out(args.output.as_deref())?;
    report
        .write_csv(out, &prob.var_names)
        .map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn write_problem(prob: &MopProblem, path: Option<&Path>) -> Result<ExitCode, String> {
    let mut out = open_out(path)?;
    writeln!(out, "{}", serialize_problem(prob)).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn gen_miso_cmd(args: MisoArgs) -> Result<ExitCode, String> {
    let (sources, y) = if args.xs.is_empty() {
        random_miso_data(args.p, args.n1, args.n2, args.seed)
    } else {
        let y_path = args.y.as_ref().ok_or("--y is required with --x")?;
        let sources = args
            .xs
            .iter()
            .map(|p| read_csv_matrix(p))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let y: Vec<f64> = read_csv_matrix(y_path)
            .map_err(|e| e.to_string())?
            .into_iter()
            .flatten()
            .collect();
        (sources, y)
    };
    let prob = gen_miso(&sources, &y).map_err(|e| e.to_string())?;
    write_problem(&prob, args.output.as_deref())
}

fn gen_mimo_cmd(args: MimoArgs) -> Result<ExitCode, String> {
    let inputs = match &args.x {
        Some(p) => read_csv_matrix(p).map_err(|e| e.to_string())?,
        None => random_mimo_data(args.p, args.n, args.seed),
    };
    let prob = gen_mimo(&inputs, args.tanh_degree).map_err(|e| e.to_string())?;
    write_problem(&prob, args.output.as_deref())
}

fn export_sdp(args: ExportArgs) -> Result<ExitCode, String> {
    let prob = load(&args.problem)?;
    let opts = rep_options(&args.rep);
    let (_, pop) = prepare(&prob, &opts).map_err(|e| e.to_string())?;
    let k = args.order.unwrap_or_else(|| pop.min_order());
    let msdp = assemble_sdp(&pop, k, opts.equality_mode).map_err(|e| e.to_string())?;
    let mut out = open_out(args.output.as_deref())?;
    write!(out, "{}", msdp.export_text()).map_err(|e| e.to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let res = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Represent(a) => represent(a),
        Command::Oracle(a) => oracle(a),
        Command::GenMiso(a) => gen_miso_cmd(a),
        Command::GenMimo(a) => gen_mimo_cmd(a),
        Command::ExportSdp(a) => export_sdp(a),
    };
    match res {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
