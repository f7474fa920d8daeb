use edgefair::exitpolicy::{evaluate, optimal_thresholds, utility_curve};
use edgefair::fairopt::{check_feasibility, objective, solve_alternating, upper_bound, AssignmentMode, SolveOptions};
use edgefair::oracle::{brute_force_candidates, direct_counts, OracleBudget};
use edgefair::scenario::{parse_bundle, random_scenario, RandomScenarioParams, ResultBundle};
use edgefair::trace::{generate_stream, read_stream, write_stream, GeneratorParams};
use proptest::prelude::*;
use std::path::Path;

fn params() -> impl Strategy<Value = (GeneratorParams, usize)> {
    (1usize..6, 0.0..1.0f64, 0.0..2.0f64, 0.0..2.0f64, 0.1..2.0f64, any::<u64>(), 0usize..40).prop_map(
        |(layer_count, critical_prior, cd, nd, noise_std, seed, n)| {
            let p =
                GeneratorParams { layer_count, critical_prior, critical_drift: cd, normal_drift: -nd, noise_std, seed };
            (p, n)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_matches_oracle((p, n) in params(), frac in 0.0..1.0f64) {
        let s = generate_stream(&p, n).unwrap();
        let w = (frac * n as f64) as usize;
        let fast = optimal_thresholds(&s, w);
        match brute_force_candidates(&s, w, &OracleBudget::default()) {
            Ok(o) => prop_assert_eq!(o.true_pos, fast.true_pos),
            Err(_) => prop_assert!(fast.utility.is_none()),
        }
        let (tp, offloads) = direct_counts(&s, fast.thresholds.lower(), fast.thresholds.upper());
        prop_assert_eq!(tp, fast.true_pos);
        prop_assert!(offloads <= w);
    }

    #[test]
    fn curve_points_are_realizable((p, n) in params()) {
        let s = generate_stream(&p, n).unwrap();
        let curve = utility_curve(&s, n);
        for (w, point) in curve.points().iter().enumerate() {
            let (c, _) = evaluate(&s, point.thresholds);
            prop_assert_eq!(c.true_pos, point.true_pos);
            prop_assert!(c.offloads() <= w);
        }
    }

    #[test]
    fn csv_round_trip((p, n) in params()) {
        let s = generate_stream(&p, n).unwrap();
        let mut buf = Vec::new();
        write_stream(&s, &mut buf).unwrap();
        let back = read_stream(buf.as_slice()).unwrap();
        prop_assert_eq!(back.stats(), s.stats());
        for (a, b) in s.traces().iter().zip(back.traces()) {
            prop_assert_eq!((a.event_id, a.true_label), (b.event_id, b.true_label));
            for (x, y) in a.confidences().iter().zip(b.confidences()) {
                prop_assert!((x - y).abs() <= 1e-11 * x);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solved_plans_are_feasible_and_bounded(seed in any::<u64>(), ues in 1usize..5, ens in 1usize..4, local in any::<bool>()) {
        let cfg = random_scenario(&RandomScenarioParams { ues, ens, events_min: 10, events_max: 40, ..Default::default() }, seed).unwrap();
        let s = cfg.build(Path::new(".")).unwrap();
        let mode = if local { AssignmentMode::Local } else { AssignmentMode::Exhaustive };
        let (plan, report) = solve_alternating(&s, &SolveOptions { mode, ..Default::default() }).unwrap();
        prop_assert!(check_feasibility(&plan, &s).unwrap().is_empty());
        prop_assert_eq!(objective(&plan, &s).unwrap(), report.objective);
        prop_assert!(report.objective <= upper_bound(&s).value + 1e-9);
        prop_assert!(report.objective_history.windows(2).all(|w| w[1] >= w[0]));

        let doc = cfg.to_toml().unwrap();
        let bundle = ResultBundle::new(&doc, &s, plan, report, None).unwrap();
        let read = parse_bundle(&serde_json::to_string_pretty(&bundle).unwrap()).unwrap();
        prop_assert!(read.warnings.is_empty());
        prop_assert_eq!(read.bundle, bundle);
    }
}
