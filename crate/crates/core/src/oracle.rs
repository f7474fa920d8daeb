//! Deliberately naive reference implementations used by tests and `edgefair verify`.
//!
//! Nothing here calls into the fast paths it checks: classification is re-evaluated from the
//! label rule with an explicit "every earlier layer is inside the band" quantifier, threshold
//! search enumerates every pair, and plans enumerate every assignment and compute split.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exitpolicy::ThresholdPair;
use crate::fairopt::{AllocationPlan, Scenario, UTILITY_FLOOR};
use crate::link::min_bandwidth_for_deadline;
use crate::trace::{ConfidenceTrace, EventStream};

/// Largest per-EN compute capacity accepted by [`brute_force_plan`].
pub const PLAN_COMPUTE_LIMIT: u64 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleBudget {
    pub max_candidate_pairs: u128,
    pub max_plan_enumerations: u128,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_candidate_pairs: 5_000_000, max_plan_enumerations: 1_000_000 }
    }
}

/// Label rule evaluated literally: critical iff some layer reaches the upper threshold while
/// every earlier layer sits strictly inside the band and no earlier case fired.
pub fn is_critical(trace: &ConfidenceTrace, lower: f64, upper: f64) -> bool {
    let c = trace.confidences();
    for q in 0..c.len() {
        let earlier_in_band = c[..q].iter().all(|&x| lower < x && x < upper);
        if !earlier_in_band {
            return false;
        }
        if c[q] <= lower {
            return false;
        }
        if c[q] >= upper {
            return true;
        }
    }
    false
}

/// `(true positives, offloads)` by direct evaluation.
pub fn direct_counts(stream: &EventStream, lower: f64, upper: f64) -> (usize, usize) {
    let mut tp = 0;
    let mut offloads = 0;
    for t in stream.traces() {
        if is_critical(t, lower, upper) {
            offloads += 1;
            if t.true_label.is_critical() {
                tp += 1;
            }
        }
    }
    (tp, offloads)
}

fn scores_with_sentinels(stream: &EventStream) -> Vec<f64> {
    let mut v: Vec<f64> = Vec::new();
    for t in stream.traces() {
        for &c in t.confidences() {
            if !v.contains(&c) {
                v.push(c);
            }
        }
    }
    if v.is_empty() {
        return vec![0.5];
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = v[0] - 1e-6;
    let hi = v[v.len() - 1] + 1e-6;
    v.insert(0, if lo > 0.0 { lo } else { v[0] / 2.0 });
    v.push(if hi < 1.0 { hi } else { (v[v.len() - 1] + 1.0) / 2.0 });
    v
}

/// Uniform grid on `[0, 1]` with `resolution` points, endpoints nudged into `(0, 1)`.
pub fn uniform_grid(resolution: usize) -> Vec<f64> {
    (0..resolution).map(|i| (i as f64 / (resolution - 1) as f64).clamp(1e-9, 1.0 - 1e-9)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleThresholds {
    pub lower: f64,
    pub upper: f64,
    pub true_pos: usize,
    pub offloads: usize,
    pub utility: f64,
}

fn best_over_pairs(
    stream: &EventStream,
    offload_budget: usize,
    values: &[f64],
    budget: &OracleBudget,
) -> Result<OracleThresholds> {
    let positives = stream.traces().iter().filter(|t| t.true_label.is_critical()).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("utility"));
    }
    let pairs = values.len() as u128 * (values.len() as u128 + 1) / 2;
    if pairs > budget.max_candidate_pairs {
        return Err(Error::OracleSize { what: "threshold pairs", needed: pairs, limit: budget.max_candidate_pairs });
    }
    let mut best: Option<OracleThresholds> = None;
    for (i, &lower) in values.iter().enumerate() {
        for &upper in &values[i..] {
            let (tp, offloads) = direct_counts(stream, lower, upper);
            if offloads > offload_budget {
                continue;
            }
            if best.is_none_or(|b| tp > b.true_pos) {
                best = Some(OracleThresholds {
                    lower,
                    upper,
                    true_pos: tp,
                    offloads,
                    utility: tp as f64 / positives as f64,
                });
            }
        }
    }
    Ok(best.expect("the pair above every score offloads nothing"))
}

/// Best feasible pair drawn from the observed scores plus sentinels.
pub fn brute_force_candidates(
    stream: &EventStream,
    offload_budget: usize,
    budget: &OracleBudget,
) -> Result<OracleThresholds> {
    best_over_pairs(stream, offload_budget, &scores_with_sentinels(stream), budget)
}

/// Best feasible pair on a `resolution x resolution` uniform grid (pairs with lower <= upper).
pub fn brute_force_grid(
    stream: &EventStream,
    offload_budget: usize,
    resolution: usize,
    budget: &OracleBudget,
) -> Result<OracleThresholds> {
    if resolution < 2 {
        return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
    }
    best_over_pairs(stream, offload_budget, &uniform_grid(resolution), budget)
}

/// Best of the candidate-score pairs and the uniform grid.
pub fn brute_force_thresholds(
    stream: &EventStream,
    offload_budget: usize,
    resolution: usize,
    budget: &OracleBudget,
) -> Result<OracleThresholds> {
    let grid = brute_force_grid(stream, offload_budget, resolution, budget)?;
    let cand = brute_force_candidates(stream, offload_budget, budget)?;
    Ok(if grid.true_pos > cand.true_pos { grid } else { cand })
}

/// For every offload budget `0..=max_w`, the best `(true positives, lower, upper)`.
fn direct_budget_table(stream: &EventStream, max_w: usize) -> Vec<(usize, f64, f64)> {
    let values = scores_with_sentinels(stream);
    let mut by_offloads: Vec<Option<(usize, f64, f64)>> = vec![None; stream.len() + 1];
    for (i, &lower) in values.iter().enumerate() {
        for &upper in &values[i..] {
            let (tp, o) = direct_counts(stream, lower, upper);
            if by_offloads[o].is_none_or(|b| tp > b.0) {
                by_offloads[o] = Some((tp, lower, upper));
            }
        }
    }
    let mut table = Vec::with_capacity(max_w + 1);
    let mut best: Option<(usize, f64, f64)> = None;
    for w in 0..=max_w {
        if let Some(Some(e)) = by_offloads.get(w) {
            if best.is_none_or(|b| e.0 > b.0) {
                best = Some(*e);
            }
        }
        table.push(best.expect("zero offloads is always reachable"));
    }
    table
}

/// Exact optimum of the joint problem by enumerating every assignment and every integer
/// compute split. Bandwidth is the per-UE minimum meeting the deadline at `p_max`.
pub fn brute_force_plan(scenario: &Scenario, budget: &OracleBudget) -> Result<(AllocationPlan, f64)> {
    let (n, m) = (scenario.ues().len(), scenario.ens().len());
    let assignments = (m as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if assignments > budget.max_plan_enumerations {
        return Err(Error::OracleSize {
            what: "assignments",
            needed: assignments,
            limit: budget.max_plan_enumerations,
        });
    }
    if let Some(w) = scenario.ens().iter().map(|e| e.compute_cap).find(|&w| w > PLAN_COMPUTE_LIMIT) {
        return Err(Error::OracleSize {
            what: "compute units per EN",
            needed: w as u128,
            limit: PLAN_COMPUTE_LIMIT as u128,
        });
    }

    let mut bandwidth = Vec::with_capacity(n);
    for (i, ue) in scenario.ues().iter().enumerate() {
        match min_bandwidth_for_deadline(&ue.channel, scenario.p_max(), &ue.demand, scenario.b_max()) {
            Ok(b) => bandwidth.push(b),
            Err(e) => return Err(Error::Infeasible { users: vec![i], reason: e.to_string() }),
        }
    }
    let max_w = scenario.ens().iter().map(|e| e.compute_cap).max().unwrap() as usize;
    let tables: Vec<Vec<(usize, f64, f64)>> =
        scenario.ues().iter().map(|u| direct_budget_table(&u.stream, max_w)).collect();
    let positives: Vec<usize> = scenario
        .ues()
        .iter()
        .map(|u| u.stream.traces().iter().filter(|t| t.true_label.is_critical()).count())
        .collect();

    let term = |i: usize, w: usize| {
        let u = if positives[i] == 0 { 0.0 } else { tables[i][w].0 as f64 / positives[i] as f64 };
        scenario.ues()[i].weight * u.max(UTILITY_FLOOR).ln()
    };

    let mut best: Option<(Vec<usize>, Vec<usize>, f64)> = None;
    let mut assign = vec![0usize; n];
    loop {
        let feasible = (0..n).all(|i| scenario.ens()[assign[i]].security <= scenario.ues()[i].security)
            && (0..m).all(|j| {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == j).collect();
                let used: f64 = members.iter().map(|&i| bandwidth[i]).sum();
                used <= scenario.ens()[j].bandwidth_cap
                    && scenario.ens()[j].power_pool.is_none_or(|p| members.len() as f64 * scenario.p_max() <= p)
            });
        if feasible {
            let mut units = vec![0usize; n];
            loop {
                let within = (0..m).all(|j| {
                    (0..n).filter(|&i| assign[i] == j).map(|i| units[i] as u64).sum::<u64>()
                        <= scenario.ens()[j].compute_cap
                });
                if within {
                    let value: f64 = (0..n).map(|i| term(i, units[i])).sum();
                    if best.as_ref().is_none_or(|b| value > b.2) {
                        best = Some((assign.clone(), units.clone(), value));
                    }
                }
                if !advance(&mut units, |k| scenario.ens()[assign[k]].compute_cap as usize + 1) {
                    break;
                }
            }
        }
        if !advance(&mut assign, |_| m) {
            break;
        }
    }

    let (assign, units, value) = best.ok_or_else(|| Error::Infeasible {
        users: (0..n).collect(),
        reason: "no assignment satisfies security, bandwidth and power constraints".into(),
    })?;
    let thresholds = units
        .iter()
        .enumerate()
        .map(|(i, &w)| ThresholdPair::new(tables[i][w].1, tables[i][w].2))
        .collect::<Result<Vec<_>>>()?;
    let power = vec![scenario.p_max(); n];
    let units: Vec<u64> = units.iter().map(|&u| u as u64).collect();
    let plan = AllocationPlan::from_assignment(m, &assign, &bandwidth, &power, &units, thresholds);
    Ok((plan, value))
}

/// Odometer step over digits `d[k] < radix(k)`, last digit fastest. False once it wraps.
fn advance(digits: &mut [usize], radix: impl Fn(usize) -> usize) -> bool {
    for k in (0..digits.len()).rev() {
        digits[k] += 1;
        if digits[k] < radix(k) {
            return true;
        }
        digits[k] = 0;
    }
    false
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub base: (f64, f64),
    pub raised: (f64, f64),
    pub base_true_pos: usize,
    pub raised_true_pos: usize,
    /// A critical event detected under the raised pair but not under the base pair.
    pub trace: Option<ConfidenceTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub comparisons: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Draws `samples` random threshold pairs and, for each, raises the lower and then the upper
/// threshold by a random non-negative amount (keeping `lower <= upper < 1`). Any increase in
/// true positives is recorded as a counterexample. Half of the draws snap thresholds to
/// observed scores so the inclusive boundaries get exercised.
pub fn check_monotonicity(stream: &EventStream, samples: usize, seed: u64) -> MonotonicityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores: Vec<f64> = stream.traces().iter().flat_map(|t| t.confidences().iter().copied()).collect();
    let top = 1.0 - 1e-9;
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> f64 {
        if !scores.is_empty() && rng.random::<bool>() {
            let s = scores[rng.random_range(0..scores.len())];
            if (lo..=hi).contains(&s) {
                return s;
            }
        }
        lo + (hi - lo) * rng.random::<f64>()
    };

    let mut report = MonotonicityReport { comparisons: 0, counterexamples: Vec::new() };
    for _ in 0..samples {
        let lower = draw(&mut rng, 1e-9, top);
        let upper = draw(&mut rng, lower, top);
        let base_tp = direct_counts(stream, lower, upper).0;
        let raised_lower = draw(&mut rng, lower, upper);
        let raised_upper = draw(&mut rng, upper, top);
        for raised in [(raised_lower, upper), (lower, raised_upper)] {
            report.comparisons += 1;
            let tp = direct_counts(stream, raised.0, raised.1).0;
            if tp > base_tp {
                let trace = stream
                    .traces()
                    .iter()
                    .find(|t| {
                        t.true_label.is_critical()
                            && is_critical(t, raised.0, raised.1)
                            && !is_critical(t, lower, upper)
                    })
                    .cloned();
                report.counterexamples.push(Counterexample {
                    base: (lower, upper),
                    raised,
                    base_true_pos: base_tp,
                    raised_true_pos: tp,
                    trace,
                });
            }
        }
    }
    report
}
