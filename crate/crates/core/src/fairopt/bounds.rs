//! Reference values for the joint problem.
//!
//! The grouped bound pools the capacities of all ENs sharing a security level and serves only
//! the UEs of exactly that level. Exact-level matching is stricter than the real security rule
//! while pooling is looser than per-EN capacities, so its position relative to the solver's
//! objective is not fixed. The fully relaxed bound pools everything and ignores security and
//! assignment; it dominates every feasible plan.

use serde::{Deserialize, Serialize};

use super::solver::Prepared;
use super::{allocate_compute_dp, log_utility, Scenario};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub value: f64,
    /// Security levels (grouped bound) whose UEs could not be served and were counted at the
    /// utility floor. For the relaxed bound a non-empty list means even the relaxation is
    /// infeasible.
    pub floored_levels: Vec<u32>,
}

struct Pool {
    bandwidth: f64,
    compute: u64,
    /// `None` when some pooled EN has no power limit.
    power: Option<f64>,
}

impl Pool {
    fn of<'e>(ens: impl Iterator<Item = &'e super::EnProfile>) -> Option<Self> {
        let mut pool = Pool { bandwidth: 0.0, compute: 0, power: Some(0.0) };
        let mut any = false;
        for en in ens {
            any = true;
            pool.bandwidth += en.bandwidth_cap;
            pool.compute += en.compute_cap;
            pool.power = match (pool.power, en.power_pool) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
        any.then_some(pool)
    }
}

/// Best pooled value for `users`, or `None` if the pool cannot carry their links.
fn pooled_value(prep: &Prepared, users: &[usize], pool: &Pool) -> Option<f64> {
    let mut bandwidth = 0.0;
    for &i in users {
        bandwidth += *prep.min_bandwidth[i].as_ref().ok()?;
    }
    if bandwidth > pool.bandwidth {
        return None;
    }
    if pool.power.is_some_and(|p| users.len() as f64 * prep.scenario.p_max() > p) {
        return None;
    }
    Some(allocate_compute_dp(&prep.weighted_curves(users), pool.compute).value)
}

fn floor_value(scenario: &Scenario, users: &[usize]) -> f64 {
    users.iter().map(|&i| log_utility(scenario.ues()[i].weight, None)).sum()
}

pub(crate) fn lower_bound_with(prep: &Prepared) -> BoundReport {
    let s = prep.scenario;
    let mut value = 0.0;
    let mut floored_levels = Vec::new();
    for level in 1..=s.security_levels() {
        let users: Vec<usize> = (0..s.ues().len()).filter(|&i| s.ues()[i].security == level).collect();
        if users.is_empty() {
            continue;
        }
        let group =
            Pool::of(s.ens().iter().filter(|e| e.security == level)).and_then(|pool| pooled_value(prep, &users, &pool));
        match group {
            Some(v) => value += v,
            None => {
                value += floor_value(s, &users);
                floored_levels.push(level);
            }
        }
    }
    BoundReport { value, floored_levels }
}

pub(crate) fn upper_bound_with(prep: &Prepared) -> BoundReport {
    let s = prep.scenario;
    let users: Vec<usize> = (0..s.ues().len()).collect();
    let pool = Pool::of(s.ens().iter()).expect("scenario has at least one EN");
    match pooled_value(prep, &users, &pool) {
        Some(value) => BoundReport { value, floored_levels: vec![] },
        None => BoundReport { value: floor_value(s, &users), floored_levels: (1..=s.security_levels()).collect() },
    }
}

/// Grouped-by-security-level reference value.
pub fn lower_bound(scenario: &Scenario) -> BoundReport {
    lower_bound_with(&Prepared::new(scenario))
}

/// Fully relaxed reference value (all ENs pooled, no security or assignment constraints).
pub fn upper_bound(scenario: &Scenario) -> BoundReport {
    upper_bound_with(&Prepared::new(scenario))
}

/// `(u_alg - u_lb) / |u_lb| * 100`.
pub fn relative_gap(u_alg: f64, u_lb: f64) -> Result<f64> {
    if u_lb == 0.0 {
        return Err(Error::UndefinedGap);
    }
    Ok((u_alg - u_lb) / u_lb.abs() * 100.0)
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::fairopt::EnProfile;

    #[test]
    fn gap_values() {
        assert_eq!(relative_gap(-3.0, -3.0).unwrap(), 0.0);
        assert_eq!(relative_gap(-1.0, -2.0).unwrap(), 50.0);
        assert!((relative_gap(1.1, 1.0).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(relative_gap(1.0, 0.0), Err(Error::UndefinedGap)));
    }

    #[test]
    fn single_level_bounds_coincide() {
        let s = scenario(vec![ue(1, 2, 1.0), ue(2, 2, 1.5)], vec![en(2, 5), en(2, 3)]);
        let (lb, ub) = (lower_bound(&s), upper_bound(&s));
        assert_eq!(lb.value, ub.value);
        assert!(lb.floored_levels.is_empty());

        let one = scenario(vec![ue(1, 1, 1.0)], vec![en(1, 7)]);
        assert_eq!(lower_bound(&one), upper_bound(&one));
    }

    #[test]
    fn pooled_capacities_are_sums() {
        let a = EnProfile { power_pool: Some(1.0), ..en(1, 3) };
        let b = EnProfile { power_pool: Some(0.5), ..en(2, 4) };
        let p = Pool::of([a, b].iter()).unwrap();
        assert_eq!((p.bandwidth, p.compute, p.power), (1e7, 7, Some(1.5)));
        let p = Pool::of([a, en(1, 1)].iter()).unwrap();
        assert_eq!(p.power, None);
        assert!(Pool::of(std::iter::empty()).is_none());
    }

    #[test]
    fn empty_group_contributes_nothing() {
        let s = scenario(vec![ue(1, 1, 1.0)], vec![en(1, 7)]);
        let prep = Prepared::new(&s);
        let pool = Pool::of(s.ens().iter()).unwrap();
        assert_eq!(pooled_value(&prep, &[], &pool), Some(0.0));
    }

    #[test]
    fn two_levels_sum_of_groups() {
        let (u1, u2, u3) = (ue(1, 1, 1.0), ue(2, 2, 2.0), ue(3, 2, 1.0));
        let (e1, e2, e3) = (en(1, 4), en(2, 3), en(2, 5));
        let full = scenario(vec![u1.clone(), u2.clone(), u3.clone()], vec![e1, e2, e3]);
        let g1 = scenario(vec![u1], vec![e1]);
        let g2 = scenario(vec![u2, u3], vec![e2, e3]);
        let expected = upper_bound(&g1).value + upper_bound(&g2).value;
        assert!((lower_bound(&full).value - expected).abs() < 1e-12);
    }

    #[test]
    fn level_without_edge_nodes_is_floored() {
        let s = scenario(vec![ue(1, 1, 1.0), ue(2, 3, 2.0)], vec![en(1, 4)]);
        let lb = lower_bound(&s);
        assert_eq!(lb.floored_levels, vec![3]);
    }
}
