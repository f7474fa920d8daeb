use std::path::PathBuf;

use clap::{Args, ValueEnum};
use edgefair::exitpolicy::{evaluate, optimal_thresholds, ThresholdPair};
use edgefair::fairopt::{solve_alternating, AssignmentMode, Scenario, SolveOptions};
use edgefair::oracle::{brute_force_candidates, brute_force_grid, brute_force_plan, check_monotonicity, OracleBudget};
use edgefair::scenario::{load_scenario, random_scenario, RandomScenarioParams};
use edgefair::trace::{generate_stream, EventStream, GeneratorParams};
use edgefair::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{emit, pretty, Failure};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Monotonicity,
    Thresholds,
    Plan,
    Accounting,
}

#[derive(Args)]
pub struct VerifyArgs {
    /// Scenario to check; a random one is generated from --seed when absent.
    scenario: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    /// Streams per stream-based suite.
    #[arg(long, default_value_t = 20)]
    streams: usize,
    /// Perturbation samples per stream for the monotonicity suite.
    #[arg(long, default_value_t = 50)]
    samples: usize,
    /// Write the JSON summary here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
#[serde(rename_all = "lowercase")]
enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Serialize)]
struct SuiteResult {
    suite: Suite,
    status: Status,
    checks: usize,
    detail: String,
}

fn random_stream(rng: &mut ChaCha8Rng, layer_count: usize, events: usize) -> Result<EventStream, Error> {
    let p = GeneratorParams {
        layer_count,
        critical_prior: rng.random_range(0.2..0.6),
        critical_drift: rng.random_range(0.3..1.5),
        normal_drift: -rng.random_range(0.3..1.5),
        noise_std: rng.random_range(0.5..1.5),
        seed: rng.random(),
    };
    generate_stream(&p, events)
}

fn monotonicity(args: &VerifyArgs, seed: u64) -> Result<SuiteResult, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = 0;
    for k in 0..args.streams {
        let layers = [3, 4, 6][k % 3];
        let events = rng.random_range(100..=500);
        let stream = random_stream(&mut rng, layers, events)?;
        let report = check_monotonicity(&stream, args.samples.max(1), rng.random());
        checks += report.comparisons;
        if let Some(c) = report.counterexamples.first() {
            let detail = format!("stream {k}: {}", serde_json::to_string(c)?);
            return Ok(SuiteResult { suite: Suite::Monotonicity, status: Status::Fail, checks, detail });
        }
    }
    let detail = format!("{} streams, no threshold increase raised true positives", args.streams);
    Ok(SuiteResult { suite: Suite::Monotonicity, status: Status::Pass, checks, detail })
}

fn thresholds(args: &VerifyArgs, seed: u64) -> Result<SuiteResult, Error> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let budget = OracleBudget::default();
    let mut checks = 0;
    for k in 0..args.streams {
        let events = rng.random_range(10..=60);
        let stream = random_stream(&mut rng, 4, events)?;
        let w = rng.random_range(0..=events);
        let fast = optimal_thresholds(&stream, w);
        let (exact, grid) =
            match (brute_force_candidates(&stream, w, &budget), brute_force_grid(&stream, w, 101, &budget)) {
                (Ok(e), Ok(g)) => (e, g),
                (Err(Error::UndefinedMetric(_)), _) => continue,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            };
        checks += 1;
        if exact.true_pos != fast.true_pos || grid.true_pos > fast.true_pos {
            let detail = format!(
                "stream {k} budget {w}: search {} true positives, all candidate pairs {}, grid {}",
                fast.true_pos, exact.true_pos, grid.true_pos
            );
            return Ok(SuiteResult { suite: Suite::Thresholds, status: Status::Fail, checks, detail });
        }
    }
    let detail = format!("{checks} streams match the exhaustive candidate search and dominate a 101x101 grid");
    Ok(SuiteResult { suite: Suite::Thresholds, status: Status::Pass, checks, detail })
}

fn plan(scenario: &Scenario) -> Result<SuiteResult, Error> {
    let oracle = match brute_force_plan(scenario, &OracleBudget::default()) {
        Err(Error::OracleSize { what, needed, limit }) => {
            let detail = format!("{what}: {needed} exceeds oracle limit {limit}");
            return Ok(SuiteResult { suite: Suite::Plan, status: Status::Skipped, checks: 0, detail });
        }
        other => other,
    };
    let opts = SolveOptions { mode: AssignmentMode::Exhaustive, ..Default::default() };
    let solved = solve_alternating(scenario, &opts);
    let (status, detail) = match (oracle, solved) {
        (Ok((_, best)), Ok((_, report))) => {
            let diff = (best - report.objective).abs();
            let monotone = report.objective_history.windows(2).all(|w| w[1] >= w[0]);
            let ok = diff <= 1e-9 && monotone;
            let detail = format!(
                "exhaustive optimum {best:.9}, solver {:.9}, history non-decreasing: {monotone}",
                report.objective
            );
            (if ok { Status::Pass } else { Status::Fail }, detail)
        }
        (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => {
            (Status::Pass, "both report the scenario infeasible".to_string())
        }
        (o, s) => (Status::Fail, format!("oracle: {:?}, solver: {:?}", o.map(|x| x.1), s.map(|x| x.1.objective))),
    };
    Ok(SuiteResult { suite: Suite::Plan, status, checks: 1, detail })
}

fn accounting(streams: &[&EventStream]) -> SuiteResult {
    let pairs = [(0.1, 0.9), (0.3, 0.7), (0.5, 0.5), (0.05, 0.2), (0.8, 0.95)];
    let mut checks = 0;
    for (k, s) in streams.iter().enumerate() {
        let stats = s.stats();
        for (l, u) in pairs {
            let (c, _) = evaluate(s, ThresholdPair::new(l, u).expect("valid pair"));
            checks += 1;
            if c.true_pos + c.false_neg != stats.critical || c.true_neg + c.false_pos != stats.normal {
                let detail = format!("stream {k} at ({l}, {u}): {c:?} vs {stats:?}");
                return SuiteResult { suite: Suite::Accounting, status: Status::Fail, checks, detail };
            }
        }
    }
    let detail = format!("{} streams x {} threshold pairs", streams.len(), pairs.len());
    SuiteResult { suite: Suite::Accounting, status: Status::Pass, checks, detail }
}

pub fn run(args: &VerifyArgs, seed: u64) -> Result<(), Failure> {
    let scenario = match &args.scenario {
        Some(path) => load_scenario(path)?.scenario,
        None => {
            let p = RandomScenarioParams {
                ues: 3,
                ens: 2,
                events_min: 20,
                events_max: 40,
                layer_count: 3,
                compute_min: 1,
                compute_max: 8,
                ..Default::default()
            };
            random_scenario(&p, seed)?.build(std::path::Path::new("."))?
        }
    };
    let wants = |s: Suite| args.suite == Suite::All || args.suite == s;
    let mut results = Vec::new();
    if wants(Suite::Monotonicity) {
        results.push(monotonicity(args, seed)?);
    }
    if wants(Suite::Thresholds) {
        results.push(thresholds(args, seed)?);
    }
    if wants(Suite::Plan) {
        results.push(plan(&scenario)?);
    }
    if wants(Suite::Accounting) {
        let streams: Vec<&EventStream> = scenario.ues().iter().map(|u| &u.stream).collect();
        results.push(accounting(&streams));
    }

    for r in &results {
        let tag = match r.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let name = serde_json::to_value(r.suite).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        eprintln!("{tag} {name:<13} {}", r.detail);
    }
    let failed = results.iter().filter(|r| matches!(r.status, Status::Fail)).count();
    let summary = serde_json::json!({ "seed": seed, "passed": failed == 0, "suites": results });
    emit(&pretty(&summary), args.out.as_deref())?;
    if failed == 0 {
        Ok(())
    } else {
        Err(Failure::check(format!("{failed} suite(s) failed")))
    }
}
