//! The joint threshold / assignment / resource allocation problem.
//!
//! A scenario has `N` devices (UEs) and `M` edge nodes (ENs). Each UE picks exactly one EN
//! whose security level number is at most its own (1 is the most secure level), receives a
//! bandwidth/power pair that meets its offload deadline, and a number of compute units that
//! caps how many events it may offload. The goal is to maximise `sum_n rho_n ln(U_n)` where
//! `U_n` is the UE's true positive rate under its chosen early-exit thresholds.
//!
//! The utility of a UE depends on its resources only through the offload budget, so the
//! resource step reduces to integer compute allocation over per-UE [`UtilityCurve`](crate::exitpolicy::UtilityCurve)s plus an
//! independent per-UE minimum-bandwidth computation.

mod alloc;
mod bounds;
mod solver;

use serde::{Deserialize, Serialize};

pub use alloc::{allocate_compute_dp, ComputeAllocation};
pub use bounds::{lower_bound, relative_gap, upper_bound, BoundReport};
pub use solver::{assignment_search, solve_alternating, AssignmentMode, SolveOptions, SolveReport, UserDiagnostics};

use crate::error::{Error, Result};
use crate::exitpolicy::{evaluate, ThresholdPair};
use crate::link::{offload_time, ChannelState, EnergyModel, LinkAllocation, OffloadDemand};
use crate::trace::EventStream;

/// Utilities are floored at this value inside the logarithm only.
pub const UTILITY_FLOOR: f64 = 1e-6;

/// `rho * ln(max(u, floor))`; an undefined utility (no critical events) is floored too.
pub fn log_utility(weight: f64, utility: Option<f64>) -> f64 {
    weight * utility.unwrap_or(0.0).max(UTILITY_FLOOR).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UeProfile {
    pub weight: f64,
    pub security: u32,
    pub demand: OffloadDemand,
    pub channel: ChannelState,
    pub energy: EnergyModel,
    pub stream: EventStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnProfile {
    /// Hz.
    pub bandwidth_cap: f64,
    pub compute_cap: u64,
    pub security: u32,
    /// Total transmit power the EN accepts from its UEs, W. Unlimited when absent.
    pub power_pool: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    ues: Vec<UeProfile>,
    ens: Vec<EnProfile>,
    b_max: f64,
    p_max: f64,
    security_levels: u32,
}

impl Scenario {
    pub fn new(ues: Vec<UeProfile>, ens: Vec<EnProfile>, b_max: f64, p_max: f64, security_levels: u32) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if ues.is_empty() || ens.is_empty() {
            return bad("a scenario needs at least one UE and one EN".into());
        }
        if security_levels == 0 {
            return bad("security level count must be at least 1".into());
        }
        if !(b_max > 0.0 && b_max.is_finite() && p_max > 0.0 && p_max.is_finite()) {
            return bad(format!("per-link caps must be positive (b_max={b_max}, p_max={p_max})"));
        }
        let level_ok = |s: u32| (1..=security_levels).contains(&s);
        for (i, ue) in ues.iter().enumerate() {
            if !(ue.weight > 0.0 && ue.weight.is_finite()) {
                return bad(format!("ue {i}: weight must be positive"));
            }
            if !level_ok(ue.security) {
                return bad(format!("ue {i}: security level {} not in [1, {security_levels}]", ue.security));
            }
        }
        for (j, en) in ens.iter().enumerate() {
            if !(en.bandwidth_cap >= 0.0 && en.bandwidth_cap.is_finite()) {
                return bad(format!("en {j}: bandwidth cap must be finite and >= 0"));
            }
            if !level_ok(en.security) {
                return bad(format!("en {j}: security level {} not in [1, {security_levels}]", en.security));
            }
            if en.power_pool.is_some_and(|p| !(p >= 0.0 && p.is_finite())) {
                return bad(format!("en {j}: power pool must be finite and >= 0"));
            }
        }
        Ok(Self { ues, ens, b_max, p_max, security_levels })
    }

    pub fn ues(&self) -> &[UeProfile] {
        &self.ues
    }

    pub fn ens(&self) -> &[EnProfile] {
        &self.ens
    }

    pub fn b_max(&self) -> f64 {
        self.b_max
    }

    pub fn p_max(&self) -> f64 {
        self.p_max
    }

    pub fn security_levels(&self) -> u32 {
        self.security_levels
    }

    /// Whether UE `i` may connect to EN `j` (numeric level of the EN at most the UE's).
    pub fn security_allows(&self, i: usize, j: usize) -> bool {
        self.ens[j].security <= self.ues[i].security
    }
}

/// One complete candidate solution. All matrices are `N x M`, row = UE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub assignment: Vec<Vec<u8>>,
    pub bandwidth: Vec<Vec<f64>>,
    pub power: Vec<Vec<f64>>,
    pub compute: Vec<Vec<u64>>,
    pub thresholds: Vec<ThresholdPair>,
}

impl AllocationPlan {
    /// Builds a plan from a per-UE EN index and per-UE resources.
    pub fn from_assignment(
        m: usize,
        assigned: &[usize],
        bandwidth: &[f64],
        power: &[f64],
        compute: &[u64],
        thresholds: Vec<ThresholdPair>,
    ) -> Self {
        let n = assigned.len();
        let mut plan = AllocationPlan {
            assignment: vec![vec![0; m]; n],
            bandwidth: vec![vec![0.0; m]; n],
            power: vec![vec![0.0; m]; n],
            compute: vec![vec![0; m]; n],
            thresholds,
        };
        for (i, &j) in assigned.iter().enumerate() {
            plan.assignment[i][j] = 1;
            plan.bandwidth[i][j] = bandwidth[i];
            plan.power[i][j] = power[i];
            plan.compute[i][j] = compute[i];
        }
        plan
    }

    /// EN index of every UE, if each row has exactly one connection.
    pub fn assigned_ens(&self) -> Option<Vec<usize>> {
        self.assignment
            .iter()
            .map(|row| {
                let mut ones = row.iter().enumerate().filter(|(_, x)| **x == 1);
                match (ones.next(), ones.next()) {
                    (Some((j, _)), None) if row.iter().all(|x| *x <= 1) => Some(j),
                    _ => None,
                }
            })
            .collect()
    }

    fn check_dims(&self, scenario: &Scenario) -> Result<()> {
        let (n, m) = (scenario.ues.len(), scenario.ens.len());
        fn shape<T>(rows: &[Vec<T>]) -> Vec<usize> {
            rows.iter().map(Vec::len).collect()
        }
        let want = vec![m; n];
        let ok = shape(&self.assignment) == want
            && shape(&self.bandwidth) == want
            && shape(&self.power) == want
            && shape(&self.compute) == want
            && self.thresholds.len() == n;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("plan dimensions do not match a {n}x{m} scenario")))
        }
    }
}

/// A violated constraint of the allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    LinkBandwidthCap {
        ue: usize,
        en: usize,
        bandwidth: f64,
        cap: f64,
    },
    LinkPowerCap {
        ue: usize,
        en: usize,
        power: f64,
        cap: f64,
    },
    SingleAssignment {
        ue: usize,
        connections: u64,
    },
    EnBandwidthCapacity {
        en: usize,
        used: f64,
        capacity: f64,
    },
    EnComputeCapacity {
        en: usize,
        used: u64,
        capacity: u64,
    },
    EnPowerPool {
        en: usize,
        used: f64,
        pool: f64,
    },
    Security {
        ue: usize,
        en: usize,
        ue_level: u32,
        en_level: u32,
    },
    /// `time_s` is `None` when the link has no positive secrecy rate.
    Deadline {
        ue: usize,
        time_s: Option<f64>,
        deadline_s: f64,
    },
    OffloadCompute {
        ue: usize,
        offloads: usize,
        allocated: u64,
    },
    NegativeResource {
        ue: usize,
        en: usize,
    },
    NonBinaryAssignment {
        ue: usize,
        en: usize,
        value: u8,
    },
    ResourcesWithoutConnection {
        ue: usize,
        en: usize,
    },
}

/// Evaluates every constraint of the problem literally. Empty result means feasible.
pub fn check_feasibility(plan: &AllocationPlan, scenario: &Scenario) -> Result<Vec<Violation>> {
    plan.check_dims(scenario)?;
    let (n, m) = (scenario.ues.len(), scenario.ens.len());
    let mut v = Vec::new();

    for i in 0..n {
        for j in 0..m {
            let (x, b, p, w) = (plan.assignment[i][j], plan.bandwidth[i][j], plan.power[i][j], plan.compute[i][j]);
            if x > 1 {
                v.push(Violation::NonBinaryAssignment { ue: i, en: j, value: x });
            }
            if !(b >= 0.0) || !(p >= 0.0) {
                v.push(Violation::NegativeResource { ue: i, en: j });
            }
            if b > scenario.b_max {
                v.push(Violation::LinkBandwidthCap { ue: i, en: j, bandwidth: b, cap: scenario.b_max });
            }
            if p > scenario.p_max {
                v.push(Violation::LinkPowerCap { ue: i, en: j, power: p, cap: scenario.p_max });
            }
            if x == 0 && (b != 0.0 || p != 0.0 || w != 0) {
                v.push(Violation::ResourcesWithoutConnection { ue: i, en: j });
            }
        }
        let connections: u64 = plan.assignment[i].iter().map(|&x| x as u64).sum();
        if connections != 1 {
            v.push(Violation::SingleAssignment { ue: i, connections });
        }
    }

    for j in 0..m {
        let en = &scenario.ens[j];
        let used_b: f64 = (0..n).map(|i| plan.assignment[i][j] as f64 * plan.bandwidth[i][j]).sum();
        if used_b > en.bandwidth_cap {
            v.push(Violation::EnBandwidthCapacity { en: j, used: used_b, capacity: en.bandwidth_cap });
        }
        let used_w: u64 = (0..n).map(|i| plan.assignment[i][j] as u64 * plan.compute[i][j]).sum();
        if used_w > en.compute_cap {
            v.push(Violation::EnComputeCapacity { en: j, used: used_w, capacity: en.compute_cap });
        }
        if let Some(pool) = en.power_pool {
            let used_p: f64 = (0..n).map(|i| plan.assignment[i][j] as f64 * plan.power[i][j]).sum();
            if used_p > pool {
                v.push(Violation::EnPowerPool { en: j, used: used_p, pool });
            }
        }
    }

    for (i, ue) in scenario.ues.iter().enumerate() {
        let en_level: u64 = (0..m).map(|j| plan.assignment[i][j] as u64 * scenario.ens[j].security as u64).sum();
        if en_level > ue.security as u64 {
            for j in (0..m).filter(|&j| plan.assignment[i][j] != 0) {
                v.push(Violation::Security { ue: i, en: j, ue_level: ue.security, en_level: scenario.ens[j].security });
            }
        }

        let bandwidth: f64 = (0..m).map(|j| plan.assignment[i][j] as f64 * plan.bandwidth[i][j]).sum();
        let power: f64 = (0..m).map(|j| plan.assignment[i][j] as f64 * plan.power[i][j]).sum();
        match offload_time(&ue.demand, LinkAllocation { bandwidth, power }, &ue.channel) {
            Ok(t) if t <= ue.demand.deadline_s => {}
            Ok(t) => v.push(Violation::Deadline { ue: i, time_s: Some(t), deadline_s: ue.demand.deadline_s }),
            Err(_) => v.push(Violation::Deadline { ue: i, time_s: None, deadline_s: ue.demand.deadline_s }),
        }

        let allocated: u64 = (0..m).map(|j| plan.assignment[i][j] as u64 * plan.compute[i][j]).sum();
        let offloads = evaluate(&ue.stream, plan.thresholds[i]).0.offloads();
        if offloads as u64 > allocated {
            v.push(Violation::OffloadCompute { ue: i, offloads, allocated });
        }
    }
    Ok(v)
}

/// Per-UE true positive rate of a plan (`None` for UEs without critical events).
pub fn plan_utilities(plan: &AllocationPlan, scenario: &Scenario) -> Result<Vec<Option<f64>>> {
    plan.check_dims(scenario)?;
    Ok(scenario.ues.iter().zip(&plan.thresholds).map(|(ue, thr)| evaluate(&ue.stream, *thr).1.utility).collect())
}

/// `sum_n rho_n ln(max(U_n, floor))`.
pub fn objective(plan: &AllocationPlan, scenario: &Scenario) -> Result<f64> {
    let utilities = plan_utilities(plan, scenario)?;
    Ok(weighted_log_sum(scenario.ues.iter().map(|u| u.weight).zip(utilities)))
}

/// Sums `rho ln(max(u, floor))` in iteration order.
pub fn weighted_log_sum(terms: impl IntoIterator<Item = (f64, Option<f64>)>) -> f64 {
    terms.into_iter().map(|(w, u)| log_utility(w, u)).sum()
}

/// Aggregated proportional change `sum_n rho_n (u*_n - u_n) / u_n` from `current` to each
/// alternative. `current` is proportionally fair with respect to the alternatives when every
/// aggregate is non-positive (see [`is_proportionally_fair`]).
pub fn fairness_check(current: &[f64], alternatives: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    if weights.len() != current.len() {
        return Err(Error::InvalidInput("weights and utilities differ in length".into()));
    }
    if let Some(i) = current.iter().position(|u| !(*u > 0.0)) {
        return Err(Error::InvalidInput(format!("utility of user {i} is not positive")));
    }
    alternatives
        .iter()
        .map(|alt| {
            if alt.len() != current.len() {
                return Err(Error::InvalidInput("alternative has the wrong length".into()));
            }
            Ok(current.iter().zip(alt).zip(weights).map(|((u, a), r)| r * (a - u) / u).sum())
        })
        .collect()
}

pub fn is_proportionally_fair(aggregates: &[f64]) -> bool {
    aggregates.iter().all(|a| *a <= 1e-9)
}


#[cfg(test)]
mod tests {
    use super::test_support::*;
    use super::*;
    use crate::exitpolicy::optimal_thresholds;
    use crate::link::min_bandwidth_for_deadline;

    fn feasible_single() -> (Scenario, AllocationPlan) {
        let s = scenario(vec![ue(1, 2, 1.0)], vec![en(1, 100)]);
        let u = &s.ues()[0];
        let b = min_bandwidth_for_deadline(&u.channel, s.p_max(), &u.demand, s.b_max()).unwrap();
        let choice = optimal_thresholds(&u.stream, 100);
        let plan = AllocationPlan::from_assignment(1, &[0], &[b], &[s.p_max()], &[100], vec![choice.thresholds]);
        (s, plan)
    }

    #[test]
    fn single_pair_is_feasible() {
        let (s, plan) = feasible_single();
        assert_eq!(check_feasibility(&plan, &s).unwrap(), vec![]);
    }

    #[test]
    fn missing_connection_is_reported() {
        let (s, mut plan) = feasible_single();
        plan.assignment[0][0] = 0;
        plan.bandwidth[0][0] = 0.0;
        plan.power[0][0] = 0.0;
        plan.compute[0][0] = 0;
        let v = check_feasibility(&plan, &s).unwrap();
        assert!(v.contains(&Violation::SingleAssignment { ue: 0, connections: 0 }));
    }

    #[test]
    fn security_is_numeric_at_most() {
        let s = scenario(vec![ue(1, 1, 1.0)], vec![en(2, 100)]);
        let u = &s.ues()[0];
        let b = min_bandwidth_for_deadline(&u.channel, s.p_max(), &u.demand, s.b_max()).unwrap();
        let thr = optimal_thresholds(&u.stream, 100).thresholds;
        let plan = AllocationPlan::from_assignment(1, &[0], &[b], &[s.p_max()], &[100], vec![thr]);
        let v = check_feasibility(&plan, &s).unwrap();
        assert_eq!(v, vec![Violation::Security { ue: 0, en: 0, ue_level: 1, en_level: 2 }]);
    }

    #[test]
    fn caps_and_budgets_are_checked() {
        let (s, mut plan) = feasible_single();
        plan.bandwidth[0][0] = 3e6;
        plan.compute[0][0] = 0;
        plan.assignment[0][0] = 2;
        let v = check_feasibility(&plan, &s).unwrap();
        assert!(v.iter().any(|x| matches!(x, Violation::LinkBandwidthCap { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::NonBinaryAssignment { value: 2, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::EnBandwidthCapacity { .. })));

        let (s, mut plan) = feasible_single();
        plan.compute[0][0] = 0;
        plan.bandwidth[0][0] *= 0.5;
        let v = check_feasibility(&plan, &s).unwrap();
        assert!(v.iter().any(|x| matches!(x, Violation::OffloadCompute { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::Deadline { time_s: Some(_), .. })));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (s, mut plan) = feasible_single();
        plan.thresholds.clear();
        assert!(matches!(check_feasibility(&plan, &s), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn objective_values() {
        assert_eq!(weighted_log_sum([(1.0, Some(1.0)), (3.0, Some(1.0))]), 0.0);
        let v = weighted_log_sum([(2.0, Some((-1.0f64).exp()))]);
        assert!((v + 2.0).abs() < 1e-15);
        // ln(0.4) from mpmath.
        let v = weighted_log_sum([(1.0, Some(0.5)), (1.0, Some(0.8))]);
        assert!((v - (-0.916_290_731_874_155_1)).abs() < 1e-15);
        assert_eq!(log_utility(1.0, Some(0.0)), UTILITY_FLOOR.ln());
        assert_eq!(log_utility(1.0, None), UTILITY_FLOOR.ln());
    }

    #[test]
    fn objective_of_plan() {
        let (s, plan) = feasible_single();
        let u = plan_utilities(&plan, &s).unwrap()[0];
        assert_eq!(objective(&plan, &s).unwrap(), log_utility(1.0, u));
    }

    #[test]
    fn fairness_aggregates() {
        assert_eq!(fairness_check(&[0.5, 0.8], &[vec![0.5, 0.8]], &[1.0, 1.0]).unwrap(), vec![0.0]);
        let a = fairness_check(&[0.5, 0.5], &[vec![0.6, 0.4]], &[1.0, 1.0]).unwrap();
        assert!(a[0].abs() < 1e-15);
        let a = fairness_check(&[0.5, 0.8], &[vec![0.55, 0.72]], &[1.0, 2.0]).unwrap();
        assert!((a[0] + 0.1).abs() < 1e-12);
        assert!(is_proportionally_fair(&a));
        assert!(fairness_check(&[0.0, 0.5], &[], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn scenario_validation() {
        assert!(Scenario::new(vec![], vec![en(1, 1)], 1.0, 1.0, 1).is_err());
        assert!(Scenario::new(vec![ue(0, 4, 1.0)], vec![en(1, 1)], 1.0, 1.0, 3).is_err());
        assert!(Scenario::new(vec![ue(0, 1, 0.0)], vec![en(1, 1)], 1.0, 1.0, 3).is_err());
        assert!(Scenario::new(vec![ue(0, 1, 1.0)], vec![en(1, 1)], -1.0, 1.0, 3).is_err());
    }
}
