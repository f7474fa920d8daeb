//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use edgefair::exitpolicy::{
    evaluate, optimal_thresholds, soft_utility, utility_curve, SoftParams, ThresholdPair, UtilityCurve,
};
use edgefair::fairopt::{
    allocate_compute_dp, lower_bound, relative_gap, solve_alternating, upper_bound, AssignmentMode, Scenario,
    SolveOptions, UTILITY_FLOOR,
};
use edgefair::link::{
    eavesdropper_rate, offload_time, secrecy_rate, uplink_rate, ChannelState, LinkAllocation, OffloadDemand,
};
use edgefair::oracle::{brute_force_candidates, brute_force_grid, brute_force_plan, check_monotonicity, OracleBudget};
use edgefair::scenario::{random_scenario, read_bundle, RandomScenarioParams};
use edgefair::trace::{generate_stream, EventStream, GeneratorParams};
use edgefair::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

#[derive(Default)]
struct Collected {
    streams: Vec<EventStream>,
    histories: Vec<Vec<f64>>,
}

fn stream(seed: u64, layers: usize, events: usize) -> EventStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = GeneratorParams {
        layer_count: layers,
        critical_prior: rng.random_range(0.2..0.6),
        critical_drift: rng.random_range(0.3..1.5),
        normal_drift: -rng.random_range(0.3..1.5),
        noise_std: rng.random_range(0.5..1.5),
        seed: rng.random(),
    };
    generate_stream(&p, events).unwrap()
}

fn within(start: Instant, limit: Duration, summary: String) -> Check {
    let took = start.elapsed();
    if took < limit {
        Ok(format!("{summary} in {:.1}s", took.as_secs_f64()))
    } else {
        Err(format!("{summary} but took {:.1}s (limit {}s)", took.as_secs_f64(), limit.as_secs()))
    }
}

fn monotonicity(c: &mut Collected) -> Check {
    let start = Instant::now();
    let mut comparisons = 0;
    for k in 0..200u64 {
        let layers = [3, 4, 6][k as usize % 3];
        let events = 100 + (k as usize * 37) % 401;
        let s = stream(1000 + k, layers, events);
        let report = check_monotonicity(&s, 50, k);
        comparisons += report.comparisons;
        if let Some(ce) = report.counterexamples.first() {
            return Err(format!("stream {k}: {ce:?}"));
        }
        c.streams.push(s);
    }
    within(start, Duration::from_secs(30), format!("200 streams, {comparisons} perturbations, 0 counterexamples"))
}

fn threshold_exactness(c: &mut Collected) -> Check {
    let start = Instant::now();
    let budget = OracleBudget::default();
    for k in 0..50u64 {
        let events = 10 + (k as usize * 7) % 51;
        let s = stream(2000 + k, 4, events);
        let w = (k as usize * 5) % (events + 1);
        let fast = optimal_thresholds(&s, w);
        let realized = evaluate(&s, fast.thresholds).0;
        if realized.true_pos != fast.true_pos || realized.offloads() > w {
            return Err(format!("stream {k}: returned pair does not realize its claim"));
        }
        let undefined = |r: Result<_, Error>| match r {
            Ok(o) => Ok(Some(o)),
            Err(Error::UndefinedMetric(_)) => Ok(None),
            Err(e) => Err(e.to_string()),
        };
        let exact = undefined(brute_force_candidates(&s, w, &budget))?;
        let grid = undefined(brute_force_grid(&s, w, 101, &budget))?;
        if exact.map(|o| o.utility) != fast.utility {
            return Err(format!(
                "stream {k} budget {w}: search {:?} vs all pairs {:?}",
                fast.utility,
                exact.map(|o| o.utility)
            ));
        }
        if let (Some(g), Some(u)) = (grid, fast.utility) {
            if g.utility > u {
                return Err(format!("stream {k}: grid {} beats search {u}", g.utility));
            }
        }
        c.streams.push(s);
    }
    within(start, Duration::from_secs(60), "50 streams equal to the all-pairs optimum and >= the 101x101 grid".into())
}

fn surrogate(c: &mut Collected) -> Check {
    let soft = SoftParams::new(200.0).unwrap();
    let mut worst = 0.0_f64;
    let mut instances = 0;
    let mut seed = 3000u64;
    while instances < 50 {
        seed += 1;
        let s = stream(seed, 3, 20 + (seed as usize % 21));
        if s.stats().critical == 0 {
            continue;
        }
        let scores: Vec<f64> = s.traces().iter().flat_map(|t| t.confidences().iter().copied()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clear = |x: f64| scores.iter().all(|&c| (c - x).abs() >= 0.02);
        let pair = (0..10_000).find_map(|_| {
            let a = rng.random_range(0.02..0.98);
            let b = rng.random_range(0.02..0.98);
            let (l, u) = if a <= b { (a, b) } else { (b, a) };
            (clear(l) && clear(u)).then_some((l, u))
        });
        let Some((l, u)) = pair else { continue };
        let thr = ThresholdPair::new(l, u).unwrap();
        let exact = evaluate(&s, thr).1.utility.unwrap();
        let smooth = soft_utility(&s, thr, soft).map_err(|e| e.to_string())?;
        let err = (smooth - exact).abs();
        worst = worst.max(err);
        if err > 0.05 {
            return Err(format!("seed {seed} at ({l:.4}, {u:.4}): soft {smooth:.4} vs exact {exact:.4}"));
        }
        instances += 1;
        c.streams.push(s);
    }
    Ok(format!("50 instances, max |soft - exact| = {worst:.4}"))
}

fn secrecy() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let (b_max, p_max) = (1e6, 0.2);
    let mut grid_points = 0;
    for k in 0..40 {
        let noise = 10f64.powf(rng.random_range(-13.5..-12.5));
        let gain = 10f64.powf(rng.random_range(-7.0..-6.0));
        let eav_noise = 10f64.powf(rng.random_range(-13.5..-12.5));
        let ratio = [0.3, 1.0, 1.7, 0.0, 1.0 - 1e-15][k % 5];
        let ch = if k % 10 == 1 {
            ChannelState::new(gain, noise, gain, noise).unwrap()
        } else {
            ChannelState::new(gain, noise, gain / noise * ratio * eav_noise, eav_noise).unwrap()
        };
        let insecure = ch.eav_gnr() >= ch.legit_gnr();
        for i in 1..=100 {
            for j in 1..=100 {
                let a = LinkAllocation { bandwidth: b_max * i as f64 / 100.0, power: p_max * j as f64 / 100.0 };
                let (rse, rn) = (secrecy_rate(a, &ch), uplink_rate(a, &ch));
                grid_points += 1;
                if (rse == 0.0) != insecure {
                    return Err(format!("channel {k}: r_se = {rse} with insecure = {insecure}"));
                }
                if !(0.0 <= rse && rse <= rn) {
                    return Err(format!("channel {k}: r_se {rse} outside [0, {rn}]"));
                }
                if ch.eav_gnr() == 0.0 && (rse != rn || eavesdropper_rate(a, &ch) != 0.0) {
                    return Err(format!("channel {k}: no eavesdropper but r_se {rse} != r_n {rn}"));
                }
                if rse > 0.0 {
                    let d = OffloadDemand::new(1e4 * (1 + k) as f64, 1.0).unwrap();
                    let t = offload_time(&d, a, &ch).unwrap();
                    let rel = (t * rse - d.feature_bits).abs() / d.feature_bits;
                    if rel > 1e-12 {
                        return Err(format!("channel {k}: offload_time * r_se off by {rel:e}"));
                    }
                }
            }
        }
    }
    Ok(format!("40 channels x 100x100 grid ({grid_points} points)"))
}

fn small_params(seed: u64) -> RandomScenarioParams {
    RandomScenarioParams {
        ues: 1 + (seed % 3) as usize,
        ens: 1 + ((seed / 3) % 2) as usize,
        security_levels: 2,
        advantage_prob: 1.0,
        events_min: 15,
        events_max: 40,
        layer_count: 3,
        compute_min: 1,
        compute_max: 8,
    }
}

fn build(params: &RandomScenarioParams, seed: u64) -> Scenario {
    random_scenario(params, seed).unwrap().build(Path::new(".")).unwrap()
}

fn solver_optimality(c: &mut Collected) -> Check {
    let start = Instant::now();
    let opts = SolveOptions { mode: AssignmentMode::Exhaustive, ..Default::default() };
    let mut worst = 0.0_f64;
    let mut infeasible = 0;
    for seed in 0..20u64 {
        let s = build(&small_params(seed), 5000 + seed);
        match (brute_force_plan(&s, &OracleBudget::default()), solve_alternating(&s, &opts)) {
            (Ok((_, best)), Ok((_, report))) => {
                let diff = (best - report.objective).abs();
                worst = worst.max(diff);
                if diff > 1e-9 {
                    return Err(format!("seed {seed}: oracle {best} vs solver {}", report.objective));
                }
                c.histories.push(report.objective_history);
            }
            (Err(Error::Infeasible { .. }), Err(Error::Infeasible { .. })) => infeasible += 1,
            (o, r) => {
                return Err(format!(
                    "seed {seed}: oracle {:?} vs solver {:?}",
                    o.map(|x| x.1),
                    r.map(|x| x.1.objective)
                ))
            }
        }
        c.streams.extend(s.ues().iter().map(|u| u.stream.clone()));
    }
    within(
        start,
        Duration::from_secs(120),
        format!("20 scenarios ({infeasible} infeasible for both), max |difference| = {worst:e}"),
    )
}

fn sandwich(c: &mut Collected) -> Check {
    let opts = SolveOptions::default();
    let mut gaps = Vec::new();
    let mut solved = 0;
    for seed in 0..100u64 {
        let params = RandomScenarioParams {
            ues: 2 + (seed % 5) as usize,
            ens: 1 + (seed % 4) as usize,
            events_min: 20,
            events_max: 60,
            ..Default::default()
        };
        let s = build(&params, 6000 + seed);
        let ub = upper_bound(&s).value;
        let lb = lower_bound(&s).value;
        match solve_alternating(&s, &opts) {
            Ok((_, report)) => {
                if report.objective > ub + 1e-9 {
                    return Err(format!("seed {seed}: objective {} above upper bound {ub}", report.objective));
                }
                if let Ok(g) = relative_gap(report.objective, lb) {
                    gaps.push(g);
                }
                solved += 1;
                c.histories.push(report.objective_history);
            }
            Err(Error::Infeasible { .. }) => {}
            Err(e) => return Err(format!("seed {seed}: {e}")),
        }
        c.streams.extend(s.ues().iter().map(|u| u.stream.clone()));
    }
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = gaps.get(gaps.len() / 2).copied().unwrap_or(f64::NAN);
    Ok(format!(
        "{solved}/100 solved, all <= upper bound; gap vs grouped bound: min {:.2}%, median {median:.2}%, max {:.2}%",
        gaps.first().copied().unwrap_or(f64::NAN),
        gaps.last().copied().unwrap_or(f64::NAN)
    ))
}

fn history_monotone(c: &Collected) -> Check {
    for (k, h) in c.histories.iter().enumerate() {
        if let Some(w) = h.windows(2).find(|w| w[1] < w[0]) {
            return Err(format!("run {k}: objective fell from {} to {}", w[0], w[1]));
        }
    }
    Ok(format!("{} solver runs non-decreasing", c.histories.len()))
}

fn accounting(c: &Collected) -> Check {
    let pairs = [(0.05, 0.95), (0.2, 0.8), (0.5, 0.5), (0.1, 0.3), (0.7, 0.9), (1e-6, 1.0 - 1e-6)];
    let mut checks = 0;
    for (k, s) in c.streams.iter().enumerate() {
        let stats = s.stats();
        let optimal = optimal_thresholds(s, s.len() / 3).thresholds;
        for thr in pairs.iter().map(|&(l, u)| ThresholdPair::new(l, u).unwrap()).chain([optimal]) {
            let (cc, _) = evaluate(s, thr);
            checks += 1;
            if cc.true_pos + cc.false_neg != stats.critical || cc.true_neg + cc.false_pos != stats.normal {
                return Err(format!("stream {k}: {cc:?} vs {stats:?}"));
            }
        }
    }
    Ok(format!("{checks} evaluations over {} streams", c.streams.len()))
}

fn enumerate_splits(users: &[(f64, &UtilityCurve)], capacity: u64) -> f64 {
    let n = users.len();
    let mut best = f64::NEG_INFINITY;
    let mut w = vec![0u64; n];
    loop {
        if w.iter().sum::<u64>() <= capacity {
            let mut v = 0.0;
            for (i, (rho, curve)) in users.iter().enumerate() {
                v += rho * curve.utility(w[i] as usize).unwrap_or(0.0).max(UTILITY_FLOOR).ln();
            }
            best = best.max(v);
        }
        let mut k = n;
        loop {
            if k == 0 {
                return best;
            }
            k -= 1;
            w[k] += 1;
            if w[k] <= capacity {
                break;
            }
            w[k] = 0;
        }
    }
}

fn dp_exactness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    let mut instances = 0;
    for n in 1..=4usize {
        for capacity in 0..=12u64 {
            for _ in 0..6 {
                let curves: Vec<UtilityCurve> = (0..n)
                    .map(|_| {
                        let events = rng.random_range(5..=20);
                        let s = stream(rng.random(), 3, events);
                        utility_curve(&s, s.len())
                    })
                    .collect();
                let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.25..3.0)).collect();
                let users: Vec<(f64, &UtilityCurve)> = weights.iter().copied().zip(curves.iter()).collect();
                let dp = allocate_compute_dp(&users, capacity);
                let brute = enumerate_splits(&users, capacity);
                if dp.value != brute || dp.units.iter().sum::<u64>() > capacity {
                    return Err(format!("n={n} W={capacity}: dp {} vs enumeration {brute}", dp.value));
                }
                instances += 1;
            }
        }
    }
    Ok(format!("{instances} instances with exact equality"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_edgefair")).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("edgefair {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(dir: &Path) -> Result<Vec<(PathBuf, Vec<u8>)>, String> {
    let d = dir.to_str().unwrap();
    let scenario = format!("{d}/scenario.toml");
    run_cli(&["gen", "--deterministic", "--seed", "42", "--out", d])?;
    run_cli(&["solve", &scenario, "--deterministic", "--seed", "42", "--out", &format!("{d}/bundle.json")])?;
    run_cli(&["bounds", &scenario, "--deterministic", "--seed", "42", "--out", &format!("{d}/bounds.json")])?;
    let mut files = Vec::new();
    for entry in [
        "scenario.toml",
        "bundle.json",
        "bounds.json",
        "traces/ue0.csv",
        "traces/ue1.csv",
        "traces/ue2.csv",
        "traces/ue3.csv",
    ] {
        let bytes = std::fs::read(dir.join(entry)).map_err(|e| format!("{entry}: {e}"))?;
        files.push((PathBuf::from(entry), bytes));
    }
    Ok(files)
}

fn reproducibility() -> Check {
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/example");
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = pipeline(a.path())?;
    let second = pipeline(b.path())?;
    for ((name, x), (_, y)) in first.iter().zip(&second) {
        if x != y {
            return Err(format!("{} differs between runs", name.display()));
        }
    }
    for (name, bytes) in &first {
        if let Ok(shipped) = std::fs::read(example.join(name)) {
            if &shipped != bytes {
                return Err(format!("bundled example {} differs from `gen --seed 42`", name.display()));
            }
        }
    }
    let read = read_bundle(a.path().join("bundle.json")).map_err(|e| e.to_string())?;
    read.bundle.validate().map_err(|e| e.to_string())?;
    let doc = std::fs::read_to_string(a.path().join("scenario.toml")).unwrap();
    if !read.warnings.is_empty() || !read.bundle.matches_document(&doc) {
        return Err(format!("bundle integrity: {:?}", read.warnings));
    }
    let bundled = a.path().join("bundled.json");
    run_cli(&[
        "solve",
        example.join("scenario.toml").to_str().unwrap(),
        "--deterministic",
        "--out",
        bundled.to_str().unwrap(),
    ])?;
    if std::fs::read(&bundled).unwrap() != first[1].1 {
        return Err("solving the bundled example differs from the regenerated pipeline".into());
    }
    Ok(format!("{} files byte-identical across two runs; bundle validates", first.len()))
}

fn main() {
    let mut collected = Collected::default();
    let results: Vec<(&str, Check)> = vec![
        ("monotonicity of true positives in both thresholds", monotonicity(&mut collected)),
        ("exact threshold search", threshold_exactness(&mut collected)),
        ("smooth surrogate consistency", surrogate(&mut collected)),
        ("secrecy rate properties", secrecy()),
        ("solver optimality on small instances", solver_optimality(&mut collected)),
        ("relaxation sandwich", sandwich(&mut collected)),
        ("alternating solver monotonicity", history_monotone(&collected)),
        ("confusion accounting identities", accounting(&collected)),
        ("compute allocation DP exactness", dp_exactness()),
        ("CLI reproducibility", reproducibility()),
    ];

    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(detail) => println!("PASS  {:>2}. {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
