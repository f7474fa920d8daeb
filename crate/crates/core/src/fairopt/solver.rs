use serde::{Deserialize, Serialize};

use super::bounds::{lower_bound_with, upper_bound_with};
use super::{allocate_compute_dp, check_feasibility, objective, relative_gap, AllocationPlan, Scenario, Violation};
use crate::error::{Error, Result};
use crate::exitpolicy::{utility_curve, UtilityCurve};
use crate::link::{local_inference_energy, min_bandwidth_for_deadline, offload_energy, offload_time, LinkAllocation};

/// Largest `N * log2(M)` for which assignments are enumerated exhaustively.
pub const EXHAUSTIVE_LOG2_LIMIT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AssignmentMode {
    /// Enumerate every security-feasible assignment (falls back to `Local` on large inputs).
    Exhaustive,
    /// Greedy start followed by single-UE reassignment moves.
    Local,
}

impl std::str::FromStr for AssignmentMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "exhaustive" => Ok(Self::Exhaustive),
            "local" => Ok(Self::Local),
            _ => Err(format!("unknown mode `{s}` (expected exhaustive or local)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub mode: AssignmentMode,
    pub max_rounds: usize,
    /// Stop once a round improves the objective by less than this.
    pub tolerance: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { mode: AssignmentMode::Exhaustive, max_rounds: 50, tolerance: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDiagnostics {
    pub offloads: usize,
    /// Offload time of one event, s.
    pub offload_time_s: f64,
    /// Transmit energy of one offloaded event, J.
    pub offload_energy_j: f64,
    /// Local inference energy of one event, J.
    pub local_energy_j: f64,
    /// All events run locally plus all offloads, J.
    pub total_energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective: f64,
    pub per_user_utility: Vec<Option<f64>>,
    pub iterations: usize,
    /// Objective after initialisation and after every round.
    pub objective_history: Vec<f64>,
    pub feasible: bool,
    pub violations: Vec<Violation>,
    pub mode_used: AssignmentMode,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub relative_gap_pct: Option<f64>,
    pub diagnostics: Vec<UserDiagnostics>,
}

/// Per-UE data that does not depend on the assignment.
pub(crate) struct Prepared<'a> {
    pub scenario: &'a Scenario,
    pub curves: Vec<UtilityCurve>,
    /// Minimum bandwidth meeting the deadline at `p_max`, or why there is none.
    pub min_bandwidth: Vec<std::result::Result<f64, String>>,
}

impl<'a> Prepared<'a> {
    pub fn new(scenario: &'a Scenario) -> Self {
        let curves = scenario.ues().iter().map(|u| utility_curve(&u.stream, u.stream.len())).collect();
        Self::with_curves(scenario, curves)
    }

    pub fn with_curves(scenario: &'a Scenario, curves: Vec<UtilityCurve>) -> Self {
        let min_bandwidth = scenario
            .ues()
            .iter()
            .map(|u| {
                min_bandwidth_for_deadline(&u.channel, scenario.p_max(), &u.demand, scenario.b_max())
                    .map_err(|e| e.to_string())
            })
            .collect();
        Self { scenario, curves, min_bandwidth }
    }

    pub fn weighted_curves(&self, users: &[usize]) -> Vec<(f64, &UtilityCurve)> {
        users.iter().map(|&i| (self.scenario.ues()[i].weight, &self.curves[i])).collect()
    }
}

struct Search<'p, 'a> {
    prep: &'p Prepared<'a>,
    bandwidth: Vec<f64>,
    /// ENs each UE can use on its own: security, bandwidth and power pool allow it.
    eligible: Vec<Vec<usize>>,
}

impl<'p, 'a> Search<'p, 'a> {
    fn new(prep: &'p Prepared<'a>) -> Result<Self> {
        let s = prep.scenario;
        let link_blocked: Vec<(usize, &String)> =
            prep.min_bandwidth.iter().enumerate().filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e))).collect();
        if !link_blocked.is_empty() {
            let reason = link_blocked.iter().map(|(i, e)| format!("ue {i}: {e}")).collect::<Vec<_>>().join("; ");
            return Err(Error::Infeasible { users: link_blocked.iter().map(|(i, _)| *i).collect(), reason });
        }
        let bandwidth: Vec<f64> = prep.min_bandwidth.iter().map(|r| *r.as_ref().unwrap()).collect();
        let eligible: Vec<Vec<usize>> = (0..s.ues().len())
            .map(|i| {
                (0..s.ens().len())
                    .filter(|&j| {
                        let en = &s.ens()[j];
                        s.security_allows(i, j)
                            && bandwidth[i] <= en.bandwidth_cap
                            && en.power_pool.is_none_or(|p| s.p_max() <= p)
                    })
                    .collect()
            })
            .collect();
        let stranded: Vec<usize> = (0..eligible.len()).filter(|&i| eligible[i].is_empty()).collect();
        if !stranded.is_empty() {
            return Err(Error::Infeasible {
                users: stranded,
                reason: "no edge node satisfies security, bandwidth and power requirements".into(),
            });
        }
        Ok(Self { prep, bandwidth, eligible })
    }

    fn n(&self) -> usize {
        self.eligible.len()
    }

    fn m(&self) -> usize {
        self.prep.scenario.ens().len()
    }

    /// Total objective and per-UE compute units of an assignment, `None` if some EN's
    /// bandwidth or power pool is exceeded.
    fn evaluate(&self, assign: &[usize]) -> Option<(f64, Vec<u64>)> {
        let s = self.prep.scenario;
        let mut units = vec![0u64; self.n()];
        let mut total = 0.0;
        for (j, en) in s.ens().iter().enumerate() {
            let members: Vec<usize> = (0..self.n()).filter(|&i| assign[i] == j).collect();
            let used: f64 = members.iter().map(|&i| self.bandwidth[i]).sum();
            if used > en.bandwidth_cap {
                return None;
            }
            if en.power_pool.is_some_and(|pool| members.len() as f64 * s.p_max() > pool) {
                return None;
            }
            let alloc = allocate_compute_dp(&self.prep.weighted_curves(&members), en.compute_cap);
            for (&i, &w) in members.iter().zip(&alloc.units) {
                units[i] = w;
            }
            total += alloc.value;
        }
        Some((total, units))
    }

    /// Each UE in turn takes the most secure eligible EN with room left, preferring more
    /// compute, then the lower index.
    fn greedy(&self) -> Option<Vec<usize>> {
        let s = self.prep.scenario;
        let mut bw_left: Vec<f64> = s.ens().iter().map(|e| e.bandwidth_cap).collect();
        let mut pow_left: Vec<Option<f64>> = s.ens().iter().map(|e| e.power_pool).collect();
        let mut assign = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let pick = self.eligible[i]
                .iter()
                .copied()
                .filter(|&j| self.bandwidth[i] <= bw_left[j] && pow_left[j].is_none_or(|p| s.p_max() <= p))
                .min_by_key(|&j| (s.ens()[j].security, std::cmp::Reverse(s.ens()[j].compute_cap), j))?;
            bw_left[pick] -= self.bandwidth[i];
            if let Some(p) = pow_left[pick].as_mut() {
                *p -= s.p_max();
            }
            assign.push(pick);
        }
        Some(assign)
    }

    fn exhaustive_allowed(&self) -> bool {
        self.n() as f64 * (self.m() as f64).log2() <= EXHAUSTIVE_LOG2_LIMIT
    }

    /// Best feasible assignment over all eligible combinations; the first one found wins ties.
    fn exhaustive(&self) -> Option<(Vec<usize>, f64)> {
        let n = self.n();
        let mut digits = vec![0usize; n];
        let mut best: Option<(Vec<usize>, f64)> = None;
        loop {
            let assign: Vec<usize> = (0..n).map(|i| self.eligible[i][digits[i]]).collect();
            if let Some((v, _)) = self.evaluate(&assign) {
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((assign, v));
                }
            }
            // odometer, last UE fastest
            let mut k = n;
            loop {
                if k == 0 {
                    return best;
                }
                k -= 1;
                digits[k] += 1;
                if digits[k] < self.eligible[k].len() {
                    break;
                }
                digits[k] = 0;
            }
        }
    }

    /// Best-improvement single-UE reassignment until no move helps.
    fn local(&self, mut assign: Vec<usize>) -> (Vec<usize>, f64) {
        let mut value = self.evaluate(&assign).expect("local search starts from a feasible assignment").0;
        loop {
            let mut best_move: Option<(Vec<usize>, f64)> = None;
            for i in 0..self.n() {
                for &j in &self.eligible[i] {
                    if j == assign[i] {
                        continue;
                    }
                    let mut cand = assign.clone();
                    cand[i] = j;
                    if let Some((v, _)) = self.evaluate(&cand) {
                        let bar = best_move.as_ref().map_or(value, |(_, b)| *b);
                        if v > bar + improvement_margin(bar) {
                            best_move = Some((cand, v));
                        }
                    }
                }
            }
            match best_move {
                Some((a, v)) => {
                    assign = a;
                    value = v;
                }
                None => return (assign, value),
            }
        }
    }

    fn search(&self, mode: AssignmentMode, start: Option<Vec<usize>>) -> Result<(Vec<usize>, f64)> {
        let found = match mode {
            AssignmentMode::Exhaustive => self.exhaustive(),
            AssignmentMode::Local => match start.or_else(|| self.greedy()) {
                Some(a) => Some(self.local(a)),
                None if self.exhaustive_allowed() => self.exhaustive().map(|(a, _)| self.local(a)),
                None => None,
            },
        };
        found.ok_or_else(|| Error::Infeasible {
            users: (0..self.n()).collect(),
            reason: "no assignment fits every edge node's bandwidth and power capacity".into(),
        })
    }
}

/// Moves must beat the incumbent by more than float noise.
fn improvement_margin(reference: f64) -> f64 {
    1e-12 * reference.abs().max(1.0)
}

fn effective_mode(search: &Search, requested: AssignmentMode) -> AssignmentMode {
    match requested {
        AssignmentMode::Exhaustive if search.exhaustive_allowed() => AssignmentMode::Exhaustive,
        _ => AssignmentMode::Local,
    }
}

/// Searches UE-to-EN assignments given fixed utility curves, with exact compute allocation
/// inside every evaluated assignment. Returns the EN index of every UE.
pub fn assignment_search(scenario: &Scenario, curves: &[UtilityCurve], mode: AssignmentMode) -> Result<Vec<usize>> {
    if curves.len() != scenario.ues().len() {
        return Err(Error::InvalidInput("one utility curve per UE is required".into()));
    }
    let prep = Prepared::with_curves(scenario, curves.to_vec());
    let search = Search::new(&prep)?;
    Ok(search.search(effective_mode(&search, mode), None)?.0)
}

fn build_plan(prep: &Prepared, search: &Search, assign: &[usize], units: &[u64]) -> AllocationPlan {
    let s = prep.scenario;
    let thresholds = units.iter().enumerate().map(|(i, &w)| prep.curves[i].at(w as usize).thresholds).collect();
    let power = vec![s.p_max(); assign.len()];
    AllocationPlan::from_assignment(s.ens().len(), assign, &search.bandwidth, &power, units, thresholds)
}

/// Block coordinate ascent over thresholds, assignment and resources.
///
/// Each round picks an assignment (exhaustively or by local search from the current one),
/// then allocates bandwidth (the per-UE minimum meeting the deadline at `p_max`) and compute
/// (exact DP per EN), then sets every UE's thresholds to the exact optimum under its compute
/// budget. The objective never decreases from one round to the next.
pub fn solve_alternating(scenario: &Scenario, opts: &SolveOptions) -> Result<(AllocationPlan, SolveReport)> {
    let prep = Prepared::new(scenario);
    let search = Search::new(&prep)?;
    let mode = effective_mode(&search, opts.mode);

    let mut assign = match search.greedy() {
        Some(a) if search.evaluate(&a).is_some() => a,
        _ => search.search(mode, None)?.0,
    };
    let (mut value, mut units) = search.evaluate(&assign).expect("start assignment is feasible");
    let mut plan = build_plan(&prep, &search, &assign, &units);
    let mut history = vec![objective(&plan, scenario)?];

    let mut iterations = 0;
    for _ in 0..opts.max_rounds.max(1) {
        iterations += 1;
        let (candidate, cand_value) = search.search(mode, Some(assign.clone()))?;
        if cand_value > value + improvement_margin(value) {
            assign = candidate;
        }
        (value, units) = search.evaluate(&assign).expect("accepted assignment is feasible");
        plan = build_plan(&prep, &search, &assign, &units);
        let obj = objective(&plan, scenario)?;
        let prev = *history.last().unwrap();
        history.push(obj);
        if obj - prev < opts.tolerance {
            break;
        }
    }

    let violations = check_feasibility(&plan, scenario)?;
    let per_user_utility = super::plan_utilities(&plan, scenario)?;
    let lb = lower_bound_with(&prep);
    let ub = upper_bound_with(&prep);
    let objective = *history.last().unwrap();
    let diagnostics = diagnostics(scenario, &plan, &assign, &search.bandwidth);

    let report = SolveReport {
        objective,
        per_user_utility,
        iterations,
        objective_history: history,
        feasible: violations.is_empty(),
        violations,
        mode_used: mode,
        lower_bound: lb.value,
        upper_bound: ub.value,
        relative_gap_pct: relative_gap(objective, lb.value).ok(),
        diagnostics,
    };
    Ok((plan, report))
}

fn diagnostics(
    scenario: &Scenario,
    plan: &AllocationPlan,
    assign: &[usize],
    bandwidth: &[f64],
) -> Vec<UserDiagnostics> {
    scenario
        .ues()
        .iter()
        .enumerate()
        .map(|(i, ue)| {
            let alloc = LinkAllocation { bandwidth: bandwidth[i], power: plan.power[i][assign[i]] };
            let offloads = crate::exitpolicy::confusion(&ue.stream, plan.thresholds[i]).offloads();
            let offload_time_s = offload_time(&ue.demand, alloc, &ue.channel).unwrap_or(f64::INFINITY);
            let offload_energy_j = offload_energy(&ue.demand, alloc, &ue.channel).unwrap_or(f64::INFINITY);
            let local_energy_j = local_inference_energy(&ue.energy);
            UserDiagnostics {
                offloads,
                offload_time_s,
                offload_energy_j,
                local_energy_j,
                total_energy_j: local_energy_j * ue.stream.len() as f64 + offload_energy_j * offloads as f64,
            }
        })
        .collect()
}
