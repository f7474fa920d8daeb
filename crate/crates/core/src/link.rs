//! FDMA uplink, eavesdropper and secrecy-rate models plus the energy bookkeeping of a device.
//!
//! Units: bandwidth in Hz, power in W, noise power spectral density in W/Hz, data in bits,
//! time in seconds, energy in joules. Channel gains are linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelState {
    pub gain: f64,
    pub noise_psd: f64,
    pub eav_gain: f64,
    pub eav_noise_psd: f64,
}

impl ChannelState {
    pub fn new(gain: f64, noise_psd: f64, eav_gain: f64, eav_noise_psd: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite();
        if !(ok(gain) && gain >= 0.0 && ok(eav_gain) && eav_gain >= 0.0) {
            return Err(Error::InvalidInput("channel gains must be finite and >= 0".into()));
        }
        if !(ok(noise_psd) && noise_psd > 0.0 && ok(eav_noise_psd) && eav_noise_psd > 0.0) {
            return Err(Error::InvalidInput("noise spectral densities must be finite and > 0".into()));
        }
        Ok(Self { gain, noise_psd, eav_gain, eav_noise_psd })
    }

    /// Gain-to-noise ratio `g / sigma^2` of the legitimate link.
    pub fn legit_gnr(&self) -> f64 {
        self.gain / self.noise_psd
    }

    pub fn eav_gnr(&self) -> f64 {
        self.eav_gain / self.eav_noise_psd
    }

    /// True when the legitimate receiver is strictly better off than the eavesdropper, the
    /// only case with a positive secrecy rate.
    pub fn has_secrecy_advantage(&self) -> bool {
        self.legit_gnr() > self.eav_gnr()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkAllocation {
    pub bandwidth: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    /// Energy per memory access, J.
    pub energy_per_access: f64,
    /// Memory accesses per network block.
    pub access_counts: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffloadDemand {
    pub feature_bits: f64,
    pub deadline_s: f64,
}

impl OffloadDemand {
    pub fn new(feature_bits: f64, deadline_s: f64) -> Result<Self> {
        if !(feature_bits > 0.0 && feature_bits.is_finite() && deadline_s > 0.0 && deadline_s.is_finite()) {
            return Err(Error::InvalidInput("feature size and deadline must be positive".into()));
        }
        Ok(Self { feature_bits, deadline_s })
    }
}

/// Shannon rate `b * log2(1 + gnr * p / b)`, taken as 0 at `b = 0`.
fn shannon(bandwidth: f64, power: f64, gnr: f64) -> f64 {
    if bandwidth <= 0.0 {
        return 0.0;
    }
    bandwidth * (gnr * power / bandwidth).ln_1p() / std::f64::consts::LN_2
}

pub fn uplink_rate(alloc: LinkAllocation, channel: &ChannelState) -> f64 {
    shannon(alloc.bandwidth, alloc.power, channel.legit_gnr())
}

pub fn eavesdropper_rate(alloc: LinkAllocation, channel: &ChannelState) -> f64 {
    shannon(alloc.bandwidth, alloc.power, channel.eav_gnr())
}

/// `[r_n - r_ev]^+`. Exactly zero whenever the eavesdropper's gain-to-noise ratio is at least
/// the legitimate one.
pub fn secrecy_rate(alloc: LinkAllocation, channel: &ChannelState) -> f64 {
    if !channel.has_secrecy_advantage() {
        return 0.0;
    }
    let (b, p) = (alloc.bandwidth, alloc.power);
    if b <= 0.0 {
        return 0.0;
    }
    // log2((1 + a p/b) / (1 + e p/b)) = log2(1 + (a - e) p / (b + e p)), free of cancellation.
    let (a, e) = (channel.legit_gnr(), channel.eav_gnr());
    let r = b * ((a - e) * p / (b + e * p)).ln_1p() / std::f64::consts::LN_2;
    r.min(uplink_rate(alloc, channel))
}

/// Time to push one event's features over the secure link.
pub fn offload_time(demand: &OffloadDemand, alloc: LinkAllocation, channel: &ChannelState) -> Result<f64> {
    let r = secrecy_rate(alloc, channel);
    if r <= 0.0 {
        return Err(Error::InsecureLink);
    }
    Ok(demand.feature_bits / r)
}

pub fn offload_energy(demand: &OffloadDemand, alloc: LinkAllocation, channel: &ChannelState) -> Result<f64> {
    Ok(alloc.power * offload_time(demand, alloc, channel)?)
}

/// Per-event local inference energy: energy per access times all block access counts.
pub fn local_inference_energy(model: &EnergyModel) -> f64 {
    model.energy_per_access * model.access_counts.iter().map(|&q| q as f64).sum::<f64>()
}

fn meets_deadline(b: f64, power: f64, demand: &OffloadDemand, channel: &ChannelState) -> bool {
    offload_time(demand, LinkAllocation { bandwidth: b, power }, channel).is_ok_and(|t| t <= demand.deadline_s)
}

const PRECHECK_POINTS: usize = 64;
const FALLBACK_POINTS: usize = 4096;
const BISECTION_REL_TOL: f64 = 1e-9;

/// Smallest bandwidth in `(0, b_max]` whose secrecy rate meets the deadline at power `power`.
///
/// The secrecy rate is checked for monotonicity in `b` on a 64-point grid first; if the check
/// fails the search falls back to a fine grid to bracket the first feasible point. The bracket
/// is then bisected to a relative width of 1e-9, and the feasible end is returned.
pub fn min_bandwidth_for_deadline(
    channel: &ChannelState,
    power: f64,
    demand: &OffloadDemand,
    b_max: f64,
) -> Result<f64> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::InvalidInput(format!("power must be positive, got {power}")));
    }
    if !(b_max > 0.0 && b_max.is_finite()) {
        return Err(Error::InvalidInput(format!("b_max must be positive, got {b_max}")));
    }
    if !channel.has_secrecy_advantage() {
        return Err(Error::InsecureLink);
    }
    if !meets_deadline(b_max, power, demand, channel) {
        let best = offload_time(demand, LinkAllocation { bandwidth: b_max, power }, channel)?;
        return Err(Error::DeadlineInfeasible { best_time_s: best, deadline_s: demand.deadline_s });
    }

    let rate = |b: f64| secrecy_rate(LinkAllocation { bandwidth: b, power }, channel);
    let grid = |n: usize| (1..=n).map(move |k| b_max * k as f64 / n as f64);
    let monotone = grid(PRECHECK_POINTS).map(rate).collect::<Vec<_>>().windows(2).all(|w| w[1] >= w[0]);

    let (mut lo, mut hi) = if monotone {
        (0.0, b_max)
    } else {
        let first =
            grid(FALLBACK_POINTS).position(|b| meets_deadline(b, power, demand, channel)).expect("b_max is feasible");
        (b_max * first as f64 / FALLBACK_POINTS as f64, b_max * (first + 1) as f64 / FALLBACK_POINTS as f64)
    };
    // Invariant: `lo` misses the deadline (or is 0), `hi` meets it.
    while hi - lo > BISECTION_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if meets_deadline(mid, power, demand, channel) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
