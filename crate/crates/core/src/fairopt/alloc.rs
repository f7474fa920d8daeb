use serde::{Deserialize, Serialize};

use super::{log_utility, weighted_log_sum};
use crate::exitpolicy::UtilityCurve;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputeAllocation {
    /// Compute units per user, in input order.
    pub units: Vec<u64>,
    /// `sum rho ln(max(curve(w), floor))` summed in user order.
    pub value: f64,
}

/// Exact integer split of `capacity` compute units among users with weights and utility
/// curves, maximising the weighted log utility.
///
/// Dynamic programme over (user, remaining units). A user never receives more than its
/// curve's saturation budget. Among optimal splits the earliest user gets the smallest share.
pub fn allocate_compute_dp(users: &[(f64, &UtilityCurve)], capacity: u64) -> ComputeAllocation {
    let n = users.len();
    let caps: Vec<usize> = users.iter().map(|(_, c)| c.saturation_budget()).collect();
    let total_need: u64 = caps.iter().map(|&c| c as u64).sum();
    let cap = capacity.min(total_need) as usize;

    // value_of[i][w] for w in 0..=min(cap_i, cap)
    let value_of: Vec<Vec<f64>> = users
        .iter()
        .zip(&caps)
        .map(|((weight, curve), &c)| (0..=c.min(cap)).map(|w| log_utility(*weight, curve.utility(w))).collect())
        .collect();

    // best[i][r]: optimum for users i.. with r units; choice[i][r]: units given to user i.
    let mut best = vec![vec![0.0_f64; cap + 1]; n + 1];
    let mut choice = vec![vec![0usize; cap + 1]; n];
    for i in (0..n).rev() {
        for r in 0..=cap {
            let mut top = f64::NEG_INFINITY;
            let mut arg = 0;
            for (w, v) in value_of[i].iter().enumerate().take(r + 1) {
                let total = v + best[i + 1][r - w];
                if total > top {
                    top = total;
                    arg = w;
                }
            }
            best[i][r] = top;
            choice[i][r] = arg;
        }
    }

    let mut units = Vec::with_capacity(n);
    let mut remaining = cap;
    for row in &choice {
        let w = row[remaining];
        units.push(w as u64);
        remaining -= w;
    }
    let value = weighted_log_sum(users.iter().zip(&units).map(|((wt, c), &u)| (*wt, c.utility(u as usize))));
    ComputeAllocation { units, value }
}
