//! Browser bindings for the threshold and link models.
//!
//! Every exported function takes plain numbers or trace CSV text and returns a JSON string.
//! The `*_json` functions hold the logic so they can be tested without a browser.

use edgefair::exitpolicy::{evaluate, threshold_sweep, utility_curve, ThresholdPair};
use edgefair::link::{
    min_bandwidth_for_deadline, secrecy_rate, uplink_rate, ChannelState, LinkAllocation, OffloadDemand,
};
use edgefair::trace::{generate_stream, read_stream, write_stream, EventStream, GeneratorParams};
use serde::Serialize;
use serde_json::json;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn to_json(v: &impl Serialize) -> Out {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn parse(csv: &str) -> Result<EventStream, String> {
    read_stream(csv.as_bytes()).map_err(|e| e.to_string())
}

pub fn generate_trace_csv(seed: u64, events: usize, layers: usize, critical_prior: f64) -> Out {
    let p = GeneratorParams { seed, layer_count: layers, critical_prior, ..Default::default() };
    let stream = generate_stream(&p, events).map_err(|e| e.to_string())?;
    let mut buf = Vec::new();
    write_stream(&stream, &mut buf).map_err(|e| e.to_string())?;
    String::from_utf8(buf).map_err(|e| e.to_string())
}

/// Metrics at one threshold pair plus the full sweep grid for the heat map.
pub fn explore_thresholds_json(csv: &str, lower: f64, upper: f64, resolution: usize) -> Out {
    let stream = parse(csv)?;
    let thr = ThresholdPair::new(lower, upper).map_err(|e| e.to_string())?;
    let (counts, metrics) = evaluate(&stream, thr);
    let grid = threshold_sweep(&stream, resolution).map_err(|e| e.to_string())?;
    let cells: Vec<_> = grid
        .iter()
        .map(|r| json!([r.thresholds.lower(), r.thresholds.upper(), r.metrics.utility, r.metrics.ofr]))
        .collect();
    to_json(&json!({ "counts": counts, "metrics": metrics, "grid": cells }))
}

/// Best utility for every offload budget.
pub fn budget_curve_json(csv: &str) -> Out {
    let stream = parse(csv)?;
    let curve = utility_curve(&stream, stream.len());
    let points: Vec<_> = curve
        .points()
        .iter()
        .enumerate()
        .map(|(w, p)| {
            json!({ "budget": w, "utility": p.utility, "lower": p.thresholds.lower(), "upper": p.thresholds.upper() })
        })
        .collect();
    to_json(&json!({ "saturation_budget": curve.saturation_budget(), "points": points }))
}

/// Rates over a bandwidth sweep at fixed power, and the minimum bandwidth meeting a deadline.
#[allow(clippy::too_many_arguments)]
pub fn secrecy_profile_json(
    gain: f64,
    noise_psd: f64,
    eav_gain: f64,
    eav_noise_psd: f64,
    power: f64,
    b_max: f64,
    feature_bits: f64,
    deadline_s: f64,
) -> Out {
    let channel = ChannelState::new(gain, noise_psd, eav_gain, eav_noise_psd).map_err(|e| e.to_string())?;
    if !(b_max > 0.0 && power > 0.0) {
        return Err("bandwidth cap and power must be positive".into());
    }
    let samples: Vec<_> = (1..=100)
        .map(|k| {
            let a = LinkAllocation { bandwidth: b_max * k as f64 / 100.0, power };
            json!([a.bandwidth, uplink_rate(a, &channel), secrecy_rate(a, &channel)])
        })
        .collect();
    let demand = OffloadDemand::new(feature_bits, deadline_s).map_err(|e| e.to_string())?;
    let min_bw = min_bandwidth_for_deadline(&channel, power, &demand, b_max);
    to_json(&json!({
        "secure": channel.has_secrecy_advantage(),
        "samples": samples,
        "min_bandwidth": min_bw.as_ref().ok(),
        "min_bandwidth_error": min_bw.err().map(|e| e.to_string()),
    }))
}

fn js(r: Out) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = generateTrace)]
pub fn generate_trace(seed: u32, events: usize, layers: usize, critical_prior: f64) -> Result<String, JsValue> {
    js(generate_trace_csv(seed as u64, events, layers, critical_prior))
}

#[wasm_bindgen(js_name = exploreThresholds)]
pub fn explore_thresholds(csv: &str, lower: f64, upper: f64, resolution: usize) -> Result<String, JsValue> {
    js(explore_thresholds_json(csv, lower, upper, resolution))
}

#[wasm_bindgen(js_name = budgetCurve)]
pub fn budget_curve(csv: &str) -> Result<String, JsValue> {
    js(budget_curve_json(csv))
}

#[wasm_bindgen(js_name = secrecyProfile)]
#[allow(clippy::too_many_arguments)]
pub fn secrecy_profile(
    gain: f64,
    noise_psd: f64,
    eav_gain: f64,
    eav_noise_psd: f64,
    power: f64,
    b_max: f64,
    feature_bits: f64,
    deadline_s: f64,
) -> Result<String, JsValue> {
    js(secrecy_profile_json(gain, noise_psd, eav_gain, eav_noise_psd, power, b_max, feature_bits, deadline_s))
}
