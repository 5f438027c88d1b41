//! `ksubmax`: solve, check and benchmark constrained k-submodular
//! maximization problems from the command line.

mod bench;
mod problem;

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ksubmax::dcg::{solve, SolveConfig, SolveReport, SolveStatus, XiPolicy, TABLE_HEADER};
use ksubmax::instances::{
    default_bins, discretize, sample_instance, save_instance, synthetic_readings, tenth_bounds, InstanceSpec,
    RawReadings, SyntheticConfig,
};
use ksubmax::milp::Branching;
use ksubmax::oracle::LogBase;
use ksubmax::verify::{
    check_c1_c2_with, check_k_submodular_def1_with, check_monotone_with, count_exact_feasible, exhaustive_max,
    VerificationReport, VerifyConfig, Witness, DEFAULT_CHECK_CAP,
};
use ksubmax::KSet;
use serde::Serialize;
use serde_json::{json, Value};

use crate::bench::{run_bench, BenchPlan};
use crate::problem::{load_problem, resolve_region, OracleKind};

const EXIT_OK: u8 = 0;
const EXIT_ERROR: u8 = 1;
const EXIT_LIMIT: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "ksubmax", version, about = "Exact constrained k-submodular maximization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Maximize over the feasible region by delayed constraint generation.
    Solve(SolveArgs),
    /// Check k-submodularity and monotonicity by enumeration or sampling.
    Verify(VerifyArgs),
    /// Exhaustive search over the feasible region.
    Enumerate(EnumerateArgs),
    /// Exact number of k-sets with |S_q| = B_q.
    Count(CountArgs),
    /// Discretize raw readings into bins, optionally sampling an instance.
    Discretize(DiscretizeArgs),
    /// Run a benchmark matrix and print one CSV row per cell and trial.
    Bench(BenchArgs),
    /// Generate synthetic sensor readings.
    Gen(GenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
    Human,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum XiArg {
    Auto,
    Exact,
    Zeta,
}

impl From<XiArg> for XiPolicy {
    fn from(x: XiArg) -> Self {
        match x {
            XiArg::Auto => XiPolicy::Auto,
            XiArg::Exact => XiPolicy::Exact,
            XiArg::Zeta => XiPolicy::Zeta,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BranchArg {
    MostFractional,
    PseudoCost,
}

impl From<BranchArg> for Branching {
    fn from(b: BranchArg) -> Self {
        match b {
            BranchArg::MostFractional => Branching::MostFractional,
            BranchArg::PseudoCost => Branching::PseudoCost,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BaseArg {
    E,
    #[value(name = "2")]
    Two,
}

impl From<BaseArg> for LogBase {
    fn from(b: BaseArg) -> Self {
        match b {
            BaseArg::E => LogBase::Natural,
            BaseArg::Two => LogBase::Two,
        }
    }
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// Oracle family stored in the instance file.
    #[arg(long, value_enum, default_value = "entropy", env = "KSUBMAX_ORACLE")]
    oracle: OracleKind,
    /// Instance JSON (entropy) or oracle JSON (modular, coverage, table).
    #[arg(long, env = "KSUBMAX_INSTANCE")]
    instance: PathBuf,
    /// Per-type bounds B_1,...,B_k; overrides the bounds stored in the file.
    #[arg(long = "B", value_delimiter = ',')]
    bounds: Option<Vec<usize>>,
    /// Bound on the total number of assigned elements.
    #[arg(long)]
    total: Option<usize>,
    /// Logarithm base of the entropy oracle.
    #[arg(long, value_enum, default_value = "e", env = "KSUBMAX_LOG_BASE")]
    log_base: BaseArg,
    #[arg(long, value_enum, default_value = "json", env = "KSUBMAX_FORMAT")]
    format: Format,
    #[arg(long, default_value_t = 0, env = "KSUBMAX_SEED")]
    seed: u64,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Relative optimality gap at which to stop.
    #[arg(long, default_value_t = 1e-6, env = "KSUBMAX_EPSILON")]
    epsilon: f64,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 3600.0, env = "KSUBMAX_TIME_LIMIT")]
    time_limit: f64,
    #[arg(long, value_enum, default_value = "auto", env = "KSUBMAX_XI_POLICY")]
    xi_policy: XiArg,
    #[arg(long, value_enum, default_value = "most-fractional", env = "KSUBMAX_BRANCHING")]
    branching: BranchArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Check {
    Def1,
    C1c2,
    Monotone,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "def1,c1c2,monotone")]
    checks: Vec<Check>,
    /// Largest (k+1)^n checked exhaustively.
    #[arg(long, default_value_t = DEFAULT_CHECK_CAP as u64, env = "KSUBMAX_CAP")]
    cap: u64,
    /// Sample random inequalities when the ground set is above the cap.
    #[arg(long)]
    sample: bool,
    #[arg(long, default_value_t = 200_000)]
    samples: u64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Stop after this many oracle evaluations and report the best so far.
    #[arg(long, env = "KSUBMAX_BUDGET")]
    budget: Option<u64>,
}

#[derive(Args, Debug)]
struct CountArgs {
    #[arg(long)]
    n: usize,
    /// Defaults to the number of bounds.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long = "B", value_delimiter = ',', required = true)]
    bounds: Vec<usize>,
    #[arg(long, value_enum, default_value = "json", env = "KSUBMAX_FORMAT")]
    format: Format,
}

#[derive(Args, Debug)]
struct DiscretizeArgs {
    /// Raw readings CSV (long or wide form).
    #[arg(long)]
    input: PathBuf,
    /// Bins per feature; defaults to 2,3,2,...
    #[arg(long, value_delimiter = ',')]
    bins: Option<Vec<u32>>,
    /// With --t, sample an instance of this many locations instead of
    /// writing the whole observation matrix.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    /// Instance bounds; defaults to one tenth of n per type.
    #[arg(long = "B", value_delimiter = ',')]
    bounds: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0, env = "KSUBMAX_SEED")]
    seed: u64,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long = "n", value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    #[arg(long = "t", value_delimiter = ',', required = true)]
    ts: Vec<usize>,
    /// A bound vector such as 2,2; repeat for several. Defaults to one
    /// tenth of n per type.
    #[arg(long = "B")]
    bounds: Vec<String>,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 3)]
    trials: usize,
    #[arg(long, default_value_t = 0, env = "KSUBMAX_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 1e-6, env = "KSUBMAX_EPSILON")]
    epsilon: f64,
    #[arg(long, default_value_t = 3600.0, env = "KSUBMAX_TIME_LIMIT")]
    time_limit: f64,
    #[arg(long, value_enum, default_value = "auto", env = "KSUBMAX_XI_POLICY")]
    xi_policy: XiArg,
    #[arg(long, value_enum, default_value = "most-fractional", env = "KSUBMAX_BRANCHING")]
    branching: BranchArg,
    #[arg(long, value_enum, default_value = "e", env = "KSUBMAX_LOG_BASE")]
    log_base: BaseArg,
    /// Also time exhaustive search on every cell.
    #[arg(long)]
    es: bool,
    #[arg(long)]
    es_budget: Option<u64>,
    /// Raw readings CSV; synthetic readings are generated when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    bins: Option<Vec<u32>>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0, env = "KSUBMAX_THREADS")]
    threads: usize,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 54)]
    locations: usize,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 2)]
    features: usize,
    #[arg(long, default_value_t = 3)]
    components: usize,
    #[arg(long, default_value_t = 0, env = "KSUBMAX_SEED")]
    seed: u64,
    /// With --t, write a sampled instance of n locations instead of raw readings.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long = "B", value_delimiter = ',')]
    bounds: Option<Vec<usize>>,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

/// The resolved run settings echoed into every report.
#[derive(Debug, Serialize)]
struct RunConfig {
    subcommand: &'static str,
    instance: String,
    oracle: OracleKind,
    epsilon: Option<f64>,
    time_limit_s: Option<f64>,
    xi_policy: Option<XiPolicy>,
    seed: u64,
    format: Format,
}

impl RunConfig {
    fn new(subcommand: &'static str, p: &ProblemArgs) -> Self {
        RunConfig {
            subcommand,
            instance: p.instance.display().to_string(),
            oracle: p.oracle,
            epsilon: None,
            time_limit_s: None,
            xi_policy: None,
            seed: p.seed,
            format: p.format,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("KSUBMAX_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { EXIT_OK });
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Count(a) => cmd_count(a),
        Command::Discretize(a) => cmd_discretize(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn to_json_line(v: &Value) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// `report` as a JSON object with the run settings under `run`.
fn with_run<T: Serialize>(report: &T, run: &RunConfig) -> Result<Value> {
    let mut v = serde_json::to_value(report)?;
    if let Value::Object(map) = &mut v {
        map.insert("run".into(), serde_json::to_value(run)?);
    }
    Ok(v)
}

fn text_or_none(s: Option<&KSet>) -> String {
    s.map_or_else(|| "none".into(), |s| s.to_string())
}

fn cmd_solve(a: SolveArgs) -> Result<u8> {
    ensure!(a.epsilon > 0.0 && a.epsilon.is_finite(), "--epsilon must be positive, got {}", a.epsilon);
    ensure!(a.time_limit > 0.0, "--time-limit must be positive, got {}", a.time_limit);
    let p = &a.problem;
    let problem = load_problem(p.oracle, &p.instance, p.log_base.into())?;
    let region = resolve_region(problem.region, p.bounds.clone(), p.total);
    let mut config = SolveConfig::default()
        .with_epsilon(a.epsilon)
        .with_time_limit(a.time_limit)
        .with_xi_policy(a.xi_policy.into());
    config.branching = a.branching.into();
    let report = solve(problem.oracle.as_ref(), &region, &config)?;
    let mut run = RunConfig::new("solve", p);
    run.epsilon = Some(a.epsilon);
    run.time_limit_s = Some(a.time_limit);
    run.xi_policy = Some(config.xi_policy);
    let text = match p.format {
        Format::Json => to_json_line(&with_run(&report, &run)?)?,
        Format::Csv => format!("{TABLE_HEADER}\n{}\n", report.table_row(problem.t)),
        Format::Human => human_solve(&report),
    };
    emit(None, &text)?;
    Ok(match report.status {
        SolveStatus::Optimal => EXIT_OK,
        SolveStatus::GapLimit | SolveStatus::TimeLimit => EXIT_LIMIT,
        SolveStatus::Infeasible => {
            eprintln!("error: no feasible k-set");
            EXIT_ERROR
        }
    })
}

fn human_solve(r: &SolveReport) -> String {
    let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(str::to_owned));
    format!(
        "status      {}\nplacement   {}\nvalue       {:.9}\nupper bound {:.9}\ngap         {:.3e}\ncuts        {}\nnodes       {}\niterations  {}\ntime        {:.3} s\n",
        status.unwrap_or_default(),
        text_or_none(r.incumbent.as_ref()),
        r.lb,
        r.ub,
        r.gap,
        r.cuts_added,
        r.total_bb_nodes,
        r.iterations,
        r.wall_time_s,
    )
}

fn describe_witness(w: &Witness) -> String {
    match w {
        Witness::Pair { x, y } => format!("X = {x}, Y = {y}"),
        Witness::Partition { x, i, qi, j, qj } => format!(
            "adding {} to subset {} at {x} gains less than after adding {} to subset {}",
            i + 1,
            qi + 1,
            j + 1,
            qj + 1
        ),
        Witness::CrossMarginal { x, i, q, q2 } => format!(
            "at {x}, the marginals of {} in subsets {} and {} sum below zero",
            i + 1,
            q + 1,
            q2 + 1
        ),
        Witness::Decrease { x, i, q } => format!("adding {} to subset {} decreases the value at {x}", i + 1, q + 1),
    }
}

fn cmd_verify(a: VerifyArgs) -> Result<u8> {
    let p = &a.problem;
    let problem = load_problem(p.oracle, &p.instance, p.log_base.into())?;
    let cfg = VerifyConfig {
        cap: a.cap as u128,
        sample_above_cap: a.sample,
        samples: a.samples,
        seed: p.seed,
        tol: a.tol,
    };
    let o = problem.oracle.as_ref();
    let mut reports: Vec<VerificationReport> = Vec::new();
    for check in &a.checks {
        let r = match check {
            Check::Def1 => check_k_submodular_def1_with(o, &cfg),
            Check::C1c2 => check_c1_c2_with(o, &cfg),
            Check::Monotone => check_monotone_with(o, &cfg),
        };
        reports.push(r.with_context(|| format!("{check:?} check (pass --sample to sample above the cap)"))?);
    }
    let passed = reports.iter().all(|r| r.passed);
    let run = RunConfig::new("verify", p);
    let text = match p.format {
        Format::Json => to_json_line(&json!({ "passed": passed, "reports": reports, "run": run }))?,
        Format::Csv => {
            let mut s = String::from("check,passed,checked_pairs,sampled,witness\n");
            for r in &reports {
                let w = r.witness.as_ref().map(describe_witness).unwrap_or_default();
                s += &format!("{},{},{},{},\"{}\"\n", r.check, r.passed, r.checked_pairs, r.sampled, w.replace('"', "\"\""));
            }
            s
        }
        Format::Human => {
            let mut s = String::new();
            for r in &reports {
                let how = if r.sampled { "sampled" } else { "checked" };
                match &r.witness {
                    None => s += &format!("{:<9} pass ({} inequalities {how})\n", r.check, r.checked_pairs),
                    Some(w) => s += &format!("{:<9} FAIL: {}\n", r.check, describe_witness(w)),
                }
            }
            s
        }
    };
    emit(None, &text)?;
    Ok(if passed { EXIT_OK } else { EXIT_ERROR })
}

fn cmd_enumerate(a: EnumerateArgs) -> Result<u8> {
    let p = &a.problem;
    let problem = load_problem(p.oracle, &p.instance, p.log_base.into())?;
    let region = resolve_region(problem.region, p.bounds.clone(), p.total);
    let es = exhaustive_max(problem.oracle.as_ref(), &region, a.budget)?;
    let best_text = es.best.as_ref().map(KSet::to_string);
    let run = RunConfig::new("enumerate", p);
    let text = match p.format {
        Format::Json => {
            let mut v = with_run(&es, &run)?;
            v["best_text"] = json!(best_text);
            to_json_line(&v)?
        }
        Format::Csv => format!(
            "value,best,evaluations,complete,time_s\n{},\"{}\",{},{},{:.6}\n",
            es.value,
            best_text.clone().unwrap_or_default(),
            es.evaluations,
            es.complete,
            es.wall_time_s
        ),
        Format::Human => format!(
            "{}value       {:.9}\nplacement   {}\nevaluations {}\ntime        {:.3} s\n",
            if es.complete { "" } else { "budget exhausted, best so far\n" },
            es.value,
            text_or_none(es.best.as_ref()),
            es.evaluations,
            es.wall_time_s
        ),
    };
    emit(None, &text)?;
    if es.best.is_none() {
        if es.complete {
            eprintln!("error: no feasible k-set");
            return Ok(EXIT_ERROR);
        }
        return Ok(EXIT_LIMIT);
    }
    Ok(if es.complete { EXIT_OK } else { EXIT_LIMIT })
}

fn cmd_count(a: CountArgs) -> Result<u8> {
    let k = a.k.unwrap_or(a.bounds.len());
    let count = count_exact_feasible(a.n, k, &a.bounds)?;
    let exact = count.to_string();
    let approx: f64 = exact.parse()?;
    let bounds = a.bounds.iter().map(usize::to_string).collect::<Vec<_>>().join(";");
    let text = match a.format {
        Format::Json => to_json_line(&json!({
            "n": a.n,
            "k": k,
            "B": a.bounds,
            "count": exact,
            "approx": approx,
        }))?,
        Format::Csv => format!("n,k,B,count\n{},{k},{bounds},{exact}\n", a.n),
        Format::Human => format!("{exact} (about {approx:.3e})\n"),
    };
    emit(None, &text)?;
    Ok(EXIT_OK)
}

fn read_raw(path: &Path) -> Result<RawReadings> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    RawReadings::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn write_instance(
    raw: &RawReadings,
    n: usize,
    t: usize,
    bounds: Option<Vec<usize>>,
    bins: Vec<u32>,
    seed: u64,
    output: Option<&Path>,
) -> Result<()> {
    let b = bounds.unwrap_or_else(|| tenth_bounds(n, raw.k_features()));
    let inst = sample_instance(raw, &InstanceSpec::new(n, t, b, bins, seed))?;
    match output {
        Some(path) => save_instance(path, &inst)?,
        None => emit(None, &ksubmax::instances::instance_to_json(&inst)?)?,
    }
    Ok(())
}

fn cmd_discretize(a: DiscretizeArgs) -> Result<u8> {
    let raw = read_raw(&a.input)?;
    let bins = a.bins.unwrap_or_else(|| default_bins(raw.k_features()));
    match (a.n, a.t) {
        (Some(n), Some(t)) => write_instance(&raw, n, t, a.bounds, bins, a.seed, a.output.as_deref())?,
        (None, None) => {
            let obs = discretize(&raw, &bins)?;
            let mut buf = Vec::new();
            obs.write_csv(&mut buf)?;
            emit(a.output.as_deref(), std::str::from_utf8(&buf)?)?;
        }
        _ => bail!("--n and --t must be given together"),
    }
    Ok(EXIT_OK)
}

fn parse_bounds(text: &str) -> Result<Vec<usize>> {
    text.split([',', ';'])
        .map(|s| s.trim().parse::<usize>().with_context(|| format!("bad bound `{s}` in `{text}`")))
        .collect()
}

fn cmd_bench(a: BenchArgs) -> Result<u8> {
    ensure!(a.epsilon > 0.0, "--epsilon must be positive");
    ensure!(a.time_limit > 0.0, "--time-limit must be positive");
    let bounds = a.bounds.iter().map(|b| parse_bounds(b)).collect::<Result<Vec<_>>>()?;
    if let Some(b) = bounds.iter().find(|b| b.len() != a.k) {
        bail!("bound vector {b:?} does not have k = {} entries", a.k);
    }
    let raw = a.data.as_deref().map(read_raw).transpose()?;
    let k = raw.as_ref().map_or(a.k, RawReadings::k_features);
    ensure!(k == a.k, "data has {k} features but --k is {}", a.k);
    let mut solve = SolveConfig::default()
        .with_epsilon(a.epsilon)
        .with_time_limit(a.time_limit)
        .with_xi_policy(a.xi_policy.into());
    solve.branching = a.branching.into();
    let plan = BenchPlan {
        ns: a.ns,
        ts: a.ts,
        bounds,
        k,
        trials: a.trials,
        seed: a.seed,
        bins: a.bins.unwrap_or_else(|| default_bins(k)),
        es: a.es,
        es_budget: a.es_budget,
        solve,
        base: a.log_base.into(),
    };
    log::info!("bench plan: {}", serde_json::to_string(&plan)?);
    let mut buf = Vec::new();
    let rows = run_bench(&plan, raw, a.threads, &mut buf)?;
    emit(a.output.as_deref(), std::str::from_utf8(&buf)?)?;
    let limited = rows.iter().any(|r| r.end_gap.starts_with("error") || r.end_gap.parse::<f64>().is_ok_and(|g| g > plan.solve.epsilon));
    Ok(if limited { EXIT_LIMIT } else { EXIT_OK })
}

fn cmd_gen(a: GenArgs) -> Result<u8> {
    let raw = synthetic_readings(&SyntheticConfig {
        locations: a.locations,
        samples: a.samples,
        features: a.features,
        components: a.components,
        seed: a.seed,
        ..Default::default()
    })?;
    match (a.n, a.t) {
        (Some(n), Some(t)) => {
            ensure!(n <= a.locations && t <= a.samples, "n and t must not exceed --locations and --samples");
            write_instance(&raw, n, t, a.bounds, default_bins(a.features), a.seed, a.output.as_deref())?;
        }
        (None, None) => {
            let mut buf = Vec::new();
            raw.write_csv(&mut buf)?;
            emit(a.output.as_deref(), std::str::from_utf8(&buf)?)?;
        }
        _ => bail!("--n and --t must be given together"),
    }
    Ok(EXIT_OK)
}
