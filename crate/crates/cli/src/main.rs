use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use edgefair::exitpolicy::{threshold_sweep, write_sweep_csv};
use edgefair::fairopt::{lower_bound, relative_gap, solve_alternating, upper_bound, AssignmentMode, SolveOptions};
use edgefair::scenario::{load_scenario, random_scenario, write_bundle, RandomScenarioParams, ResultBundle};
use edgefair::trace::load_stream;
use edgefair::Error;
use serde_json::json;

mod verify;

#[derive(Parser)]
#[command(name = "edgefair", version, about = "Fair early-exit offloading: generate, solve, bound, verify, sweep")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Omit timestamps so identical inputs give byte-identical output.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random scenario document and its trace files.
    Gen(GenArgs),
    /// Solve a scenario and write a result bundle.
    Solve(SolveArgs),
    /// Reference values and the relative gap of the solver's objective.
    Bounds(SolveArgs),
    /// Run oracle checks against the solvers.
    Verify(verify::VerifyArgs),
    /// Evaluate every threshold pair on a grid for one trace file.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Output directory (receives scenario.toml and traces/).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    ues: usize,
    #[arg(long, default_value_t = 3)]
    ens: usize,
    #[arg(long, default_value_t = 3)]
    levels: u32,
    /// Probability that a UE's channel beats its eavesdropper.
    #[arg(long, default_value_t = 1.0)]
    advantage: f64,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 40)]
    events_min: usize,
    #[arg(long, default_value_t = 80)]
    events_max: usize,
    #[arg(long, default_value_t = 5)]
    compute_min: u64,
    #[arg(long, default_value_t = 20)]
    compute_max: u64,
}

#[derive(Args)]
struct SolveArgs {
    scenario: PathBuf,
    #[arg(long, default_value = "exhaustive")]
    mode: AssignmentMode,
    /// Write JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    trace: PathBuf,
    /// Grid points per axis.
    #[arg(long, default_value_t = 19)]
    resolution: usize,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub(crate) struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. }
            | Error::TraceParse { .. }
            | Error::Json(_)
            | Error::Schema(_)
            | Error::SchemaVersion { .. }
            | Error::Io { .. }
            | Error::InvalidInput(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl Failure {
    pub(crate) fn check(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
}

type Outcome = Result<(), Failure>;

fn emit(text: &str, out: Option<&Path>) -> Outcome {
    match out {
        Some(path) => {
            fs::write(path, text).map_err(|e| Failure { code: 2, message: format!("{}: {e}", path.display()) })
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()).map_err(|e| Failure::check(e.to_string()))
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn cmd_gen(args: &GenArgs, seed: u64) -> Outcome {
    let params = RandomScenarioParams {
        ues: args.ues,
        ens: args.ens,
        security_levels: args.levels,
        advantage_prob: args.advantage,
        events_min: args.events_min,
        events_max: args.events_max,
        layer_count: args.layers,
        compute_min: args.compute_min,
        compute_max: args.compute_max,
    };
    let config = random_scenario(&params, seed)?;
    fs::create_dir_all(&args.out).map_err(|e| Failure { code: 2, message: format!("{}: {e}", args.out.display()) })?;
    let config = config.materialize_traces(&args.out)?;
    let path = args.out.join("scenario.toml");
    emit(&config.to_toml()?, Some(&path))?;
    eprintln!("wrote {} with {} UEs and {} ENs (seed {seed})", path.display(), config.ues.len(), config.ens.len());
    let traces: Vec<_> = config.ues.iter().filter_map(|u| u.trace.file.clone()).collect();
    emit(&pretty(&json!({ "scenario": "scenario.toml", "traces": traces, "seed": seed })), None)
}

fn timestamp(deterministic: bool) -> Option<u64> {
    (!deterministic).then(|| SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()))
}

fn cmd_solve(args: &SolveArgs, deterministic: bool) -> Outcome {
    let loaded = load_scenario(&args.scenario)?;
    let opts = SolveOptions { mode: args.mode, ..Default::default() };
    let (plan, report) = solve_alternating(&loaded.scenario, &opts)?;
    let feasible = report.feasible;
    eprintln!(
        "objective {:.6} after {} rounds ({:?} search), feasible: {feasible}",
        report.objective, report.iterations, report.mode_used
    );
    for (i, u) in report.per_user_utility.iter().enumerate() {
        let en = plan.assigned_ens().map(|a| a[i]);
        match (u, en) {
            (Some(u), Some(j)) => eprintln!("  ue {i}: en {j}, utility {u:.4}"),
            (None, Some(j)) => eprintln!("  ue {i}: en {j}, utility undefined (no critical events)"),
            _ => eprintln!("  ue {i}: unassigned"),
        }
    }
    let bundle = ResultBundle::new(&loaded.document, &loaded.scenario, plan, report, timestamp(deterministic))?;
    match &args.out {
        Some(path) => {
            write_bundle(&bundle, path)?;
            eprintln!("bundle written to {}", path.display());
        }
        None => emit(&pretty(&bundle), None)?,
    }
    if feasible {
        Ok(())
    } else {
        Err(Failure::check("solution violates constraints"))
    }
}

fn cmd_bounds(args: &SolveArgs) -> Outcome {
    let loaded = load_scenario(&args.scenario)?;
    let s = &loaded.scenario;
    let (lb, ub) = (lower_bound(s), upper_bound(s));
    let opts = SolveOptions { mode: args.mode, ..Default::default() };
    let solved = solve_alternating(s, &opts);
    let objective = solved.as_ref().ok().map(|(_, r)| r.objective);
    let gap = objective.and_then(|o| relative_gap(o, lb.value).ok());
    eprintln!("lower bound (grouped by security level) {:.6}", lb.value);
    if !lb.floored_levels.is_empty() {
        eprintln!("  levels counted at the utility floor: {:?}", lb.floored_levels);
    }
    eprintln!("upper bound (all ENs pooled) {:.6}", ub.value);
    match (objective, gap) {
        (Some(o), Some(g)) => eprintln!("solver objective {o:.6}, relative gap {g:.4}%"),
        (Some(o), None) => eprintln!("solver objective {o:.6}, relative gap undefined"),
        _ => {}
    }
    let out = json!({
        "lower_bound": lb.value,
        "lower_bound_floored_levels": lb.floored_levels,
        "upper_bound": ub.value,
        "upper_bound_floored_levels": ub.floored_levels,
        "objective": objective,
        "relative_gap_pct": gap,
        "mode": args.mode,
    });
    emit(&pretty(&out), args.out.as_deref())?;
    solved.map(|_| ()).map_err(Failure::from)
}

fn cmd_sweep(args: &SweepArgs) -> Outcome {
    let stream = load_stream(&args.trace)?;
    let rows = threshold_sweep(&stream, args.resolution)?;
    let mut buf = Vec::new();
    write_sweep_csv(&rows, &mut buf).map_err(|e| Failure::check(e.to_string()))?;
    eprintln!("{} threshold pairs over {} events", rows.len(), stream.len());
    emit(&String::from_utf8(buf).expect("csv is utf-8"), args.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Gen(a) => cmd_gen(a, cli.seed),
        Command::Solve(a) => cmd_solve(a, cli.deterministic),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Verify(a) => verify::run(a, cli.seed),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
