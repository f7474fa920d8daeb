//! Dual-threshold early-exit classification and threshold selection.
//!
//! Every event is scanned layer by layer. The first layer whose confidence is at or below the
//! lower threshold exits as normal, the first layer at or above the upper threshold exits as
//! critical (and the event is offloaded), and an event that stays strictly inside the band for
//! all layers is classified normal at the last layer. If a confidence equals both thresholds
//! (only possible when `lower == upper`) the normal exit wins.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::{ConfidenceTrace, EventStream, Label};

/// Offset of the two sentinel candidates beyond the smallest and largest observed score.
pub const SENTINEL_OFFSET: f64 = 1e-6;

/// Margin kept from 0 and 1 by the gradient search projection.
pub const PROJECTION_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPair", into = "RawPair")]
pub struct ThresholdPair {
    lower: f64,
    upper: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPair {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawPair> for ThresholdPair {
    type Error = Error;

    fn try_from(raw: RawPair) -> Result<Self> {
        ThresholdPair::new(raw.lower, raw.upper)
    }
}

impl From<ThresholdPair> for RawPair {
    fn from(p: ThresholdPair) -> Self {
        RawPair { lower: p.lower, upper: p.upper }
    }
}

impl ThresholdPair {
    /// Requires `0 < lower <= upper < 1`.
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower > 0.0 && lower <= upper && upper < 1.0) {
            return Err(Error::InvalidInput(format!("thresholds ({lower}, {upper}) violate 0 < lower <= upper < 1")));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub predicted: Label,
    /// 1-based layer at which inference stopped.
    pub exit_layer: usize,
    pub offloaded: bool,
}

pub fn classify(trace: &ConfidenceTrace, thr: ThresholdPair) -> Decision {
    for (q, &c) in trace.confidences().iter().enumerate() {
        if c <= thr.lower {
            return Decision { predicted: Label::Normal, exit_layer: q + 1, offloaded: false };
        }
        if c >= thr.upper {
            return Decision { predicted: Label::Critical, exit_layer: q + 1, offloaded: true };
        }
    }
    Decision { predicted: Label::Normal, exit_layer: trace.layers(), offloaded: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: usize,
    pub false_pos: usize,
    pub true_neg: usize,
    pub false_neg: usize,
}

impl ConfusionCounts {
    pub fn positives(&self) -> usize {
        self.true_pos + self.false_neg
    }

    pub fn negatives(&self) -> usize {
        self.true_neg + self.false_pos
    }

    pub fn total(&self) -> usize {
        self.positives() + self.negatives()
    }

    /// Events classified critical, i.e. offloaded to an edge node.
    pub fn offloads(&self) -> usize {
        self.true_pos + self.false_pos
    }

    fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Critical, Label::Critical) => self.true_pos += 1,
            (Label::Critical, Label::Normal) => self.false_neg += 1,
            (Label::Normal, Label::Critical) => self.false_pos += 1,
            (Label::Normal, Label::Normal) => self.true_neg += 1,
        }
    }

    pub fn report(&self) -> MetricsReport {
        let ratio = |num: usize, den: usize| (den > 0).then(|| num as f64 / den as f64);
        MetricsReport {
            car: ratio(self.true_pos + self.true_neg, self.total()),
            fpr: ratio(self.false_pos, self.negatives()),
            fnr: ratio(self.false_neg, self.positives()),
            ofr: ratio(self.offloads(), self.total()),
            utility: ratio(self.true_pos, self.positives()),
        }
    }
}

/// The five rates. `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub car: Option<f64>,
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub ofr: Option<f64>,
    /// True positive rate.
    pub utility: Option<f64>,
}

impl MetricsReport {
    pub fn require_utility(&self) -> Result<f64> {
        self.utility.ok_or(Error::UndefinedMetric("utility"))
    }
}

pub fn confusion(stream: &EventStream, thr: ThresholdPair) -> ConfusionCounts {
    let mut counts = ConfusionCounts::default();
    for t in stream.traces() {
        counts.record(t.true_label, classify(t, thr).predicted);
    }
    counts
}

pub fn evaluate(stream: &EventStream, thr: ThresholdPair) -> (ConfusionCounts, MetricsReport) {
    let counts = confusion(stream, thr);
    (counts, counts.report())
}

/// Sorted distinct confidence scores of the stream plus one sentinel below the minimum and
/// one above the maximum. Every candidate lies in (0, 1).
pub fn candidate_thresholds(stream: &EventStream) -> Vec<f64> {
    let mut scores: Vec<f64> = stream.traces().iter().flat_map(|t| t.confidences().iter().copied()).collect();
    if scores.is_empty() {
        return vec![0.5];
    }
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let (min, max) = (scores[0], scores[scores.len() - 1]);
    let below = if min - SENTINEL_OFFSET > 0.0 { min - SENTINEL_OFFSET } else { min / 2.0 };
    let above = if max + SENTINEL_OFFSET < 1.0 { max + SENTINEL_OFFSET } else { (max + 1.0) / 2.0 };
    let mut out = Vec::with_capacity(scores.len() + 2);
    out.push(below);
    out.extend(scores);
    out.push(above);
    out
}

/// Best threshold pair found for some offload budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdChoice {
    pub thresholds: ThresholdPair,
    pub true_pos: usize,
    pub offloads: usize,
    pub utility: Option<f64>,
}

/// Ordering key: more true positives first, then larger lower threshold, then larger upper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PairKey {
    true_pos: usize,
    lower_idx: usize,
    upper_idx: usize,
}

/// For each offload count, the best candidate pair producing exactly that many offloads.
struct PairTable {
    candidates: Vec<f64>,
    positives: usize,
    by_offloads: Vec<Option<(PairKey, usize)>>,
}

impl PairTable {
    /// Enumerates every candidate pair `lower <= upper`.
    ///
    /// For a fixed lower threshold, an event is classified critical iff the largest confidence
    /// seen before its first score `<= lower` reaches the upper threshold. That "reach" is
    /// computed once per event, after which sweeping the upper threshold downwards only needs
    /// two sorted lists and a pointer.
    fn build(stream: &EventStream) -> Self {
        let candidates = candidate_thresholds(stream);
        let positives = stream.stats().critical;
        let mut by_offloads: Vec<Option<(PairKey, usize)>> = vec![None; stream.len() + 1];

        let mut pos_reach = Vec::with_capacity(positives);
        let mut neg_reach = Vec::with_capacity(stream.len() - positives);
        for (i, &lower) in candidates.iter().enumerate() {
            pos_reach.clear();
            neg_reach.clear();
            for t in stream.traces() {
                let mut reach = f64::NEG_INFINITY;
                for &c in t.confidences() {
                    if c <= lower {
                        break;
                    }
                    reach = reach.max(c);
                }
                if t.true_label.is_critical() {
                    pos_reach.push(reach);
                } else {
                    neg_reach.push(reach);
                }
            }
            pos_reach.sort_by(|a, b| b.total_cmp(a));
            neg_reach.sort_by(|a, b| b.total_cmp(a));

            let (mut tp, mut fp) = (0usize, 0usize);
            for j in (i..candidates.len()).rev() {
                let upper = candidates[j];
                while tp < pos_reach.len() && pos_reach[tp] >= upper {
                    tp += 1;
                }
                while fp < neg_reach.len() && neg_reach[fp] >= upper {
                    fp += 1;
                }
                let key = PairKey { true_pos: tp, lower_idx: i, upper_idx: j };
                let slot = &mut by_offloads[tp + fp];
                if slot.is_none_or(|(best, _)| key > best) {
                    *slot = Some((key, tp + fp));
                }
            }
        }
        Self { candidates, positives, by_offloads }
    }

    fn choice(&self, key: PairKey, offloads: usize) -> ThresholdChoice {
        ThresholdChoice {
            thresholds: ThresholdPair { lower: self.candidates[key.lower_idx], upper: self.candidates[key.upper_idx] },
            true_pos: key.true_pos,
            offloads,
            utility: (self.positives > 0).then(|| key.true_pos as f64 / self.positives as f64),
        }
    }

    /// Running best over offload counts `0..=max_budget`.
    fn prefix_best(&self, max_budget: usize) -> Vec<ThresholdChoice> {
        let mut out = Vec::with_capacity(max_budget + 1);
        let mut best: Option<(PairKey, usize)> = None;
        for w in 0..=max_budget {
            if let Some(Some(entry)) = self.by_offloads.get(w) {
                if best.is_none_or(|(b, _)| entry.0 > b) {
                    best = Some(*entry);
                }
            }
            // Zero offloads is always reachable (upper sentinel), so `best` is set from w = 0.
            let (key, offloads) = best.expect("zero-offload pair always exists");
            out.push(self.choice(key, offloads));
        }
        out
    }
}

/// Exact dual-threshold selection under an offload budget.
///
/// Enumerates every pair of candidate thresholds (see [`candidate_thresholds`]), drops pairs
/// that offload more than `offload_budget` events and returns the one with the most true
/// positives. Ties go to the larger lower threshold, then the larger upper threshold.
pub fn optimal_thresholds(stream: &EventStream, offload_budget: usize) -> ThresholdChoice {
    let table = PairTable::build(stream);
    *table.prefix_best(offload_budget.min(stream.len())).last().unwrap()
}

/// [`optimal_thresholds`] for every budget in `0..=max_budget`, from one enumeration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityCurve {
    points: Vec<ThresholdChoice>,
}

impl UtilityCurve {
    pub fn max_budget(&self) -> usize {
        self.points.len() - 1
    }

    /// Best choice for budget `w`; budgets past the end reuse the last entry.
    pub fn at(&self, w: usize) -> &ThresholdChoice {
        &self.points[w.min(self.points.len() - 1)]
    }

    pub fn utility(&self, w: usize) -> Option<f64> {
        self.at(w).utility
    }

    pub fn points(&self) -> &[ThresholdChoice] {
        &self.points
    }

    /// Smallest budget that already reaches the curve's maximum true-positive count.
    pub fn saturation_budget(&self) -> usize {
        let top = self.points.last().unwrap().true_pos;
        self.points.iter().position(|p| p.true_pos == top).unwrap()
    }
}

pub fn utility_curve(stream: &EventStream, max_budget: usize) -> UtilityCurve {
    let table = PairTable::build(stream);
    let mut points = table.prefix_best(max_budget.min(stream.len()));
    let last = *points.last().unwrap();
    points.resize(max_budget + 1, last);
    UtilityCurve { points }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftParams {
    pub steepness: f64,
}

impl SoftParams {
    pub fn new(steepness: f64) -> Result<Self> {
        if !(steepness > 0.0 && steepness.is_finite()) {
            return Err(Error::InvalidInput(format!("steepness must be positive, got {steepness}")));
        }
        Ok(Self { steepness })
    }
}

fn sigmoid(t: f64, x: f64) -> f64 {
    1.0 / (1.0 + (-t * x).exp())
}

/// Smooth indicator that `c` lies inside the band: `sigma_t(c - lower) * sigma_t(upper - c)`.
pub fn soft_mask(c: f64, thr: ThresholdPair, soft: SoftParams) -> f64 {
    band_weight(c, thr.lower, thr.upper, soft.steepness)
}

fn band_weight(c: f64, lower: f64, upper: f64, t: f64) -> f64 {
    sigmoid(t, c - lower) * sigmoid(t, upper - c)
}

fn soft_utility_raw(stream: &EventStream, lower: f64, upper: f64, t: f64) -> Option<f64> {
    let mut positives = 0usize;
    let mut total = 0.0;
    for trace in stream.traces().iter().filter(|t| t.true_label.is_critical()) {
        positives += 1;
        // Weight of "still undecided before layer q" times weight of "exits critical at q".
        let mut carried = 1.0;
        let mut best = 0.0_f64;
        for &c in trace.confidences() {
            best = best.max(carried * sigmoid(t, c - upper));
            carried *= band_weight(c, lower, upper, t);
        }
        total += best;
    }
    (positives > 0).then(|| total / positives as f64)
}

/// Differentiable surrogate of the true positive rate.
///
/// Each critical event contributes the largest, over layers `q`, of the smooth weight of
/// exiting critical at `q`: the product of [`soft_mask`] over the earlier layers times
/// `sigma_t(C_q - upper)`. As the steepness grows this tends to the hard utility wherever no
/// score sits on a threshold.
pub fn soft_utility(stream: &EventStream, thr: ThresholdPair, soft: SoftParams) -> Result<f64> {
    soft_utility_raw(stream, thr.lower, thr.upper, soft.steepness).ok_or(Error::UndefinedMetric("soft utility"))
}

/// One projection step: the lower threshold is clamped to `[margin, current upper]`, then the
/// upper threshold to `[new lower, 1 - margin]`.
pub fn project_step(current: ThresholdPair, proposed_lower: f64, proposed_upper: f64) -> ThresholdPair {
    let lower = proposed_lower.clamp(PROJECTION_MARGIN, current.upper);
    let upper = proposed_upper.clamp(lower, 1.0 - PROJECTION_MARGIN);
    ThresholdPair { lower, upper }
}

/// Projected gradient ascent on [`soft_utility`] with central finite differences.
///
/// Returns the iterate with the highest surrogate value seen (the initial pair unless some
/// step strictly improves on it).
pub fn projected_gradient_search(
    stream: &EventStream,
    init: ThresholdPair,
    steps: usize,
    learning_rate: f64,
    soft: SoftParams,
) -> Result<ThresholdPair> {
    if steps == 0 || !(learning_rate > 0.0) {
        return Err(Error::InvalidInput("steps must be >= 1 and learning_rate > 0".into()));
    }
    let t = soft.steepness;
    let h = 1e-4;
    let f = |l: f64, u: f64| soft_utility_raw(stream, l, u, t);
    let mut current = init;
    let mut best = (f(init.lower, init.upper).ok_or(Error::UndefinedMetric("soft utility"))?, init);
    for _ in 0..steps {
        let (l, u) = (current.lower, current.upper);
        let grad_l = (f(l + h, u).unwrap() - f(l - h, u).unwrap()) / (2.0 * h);
        let grad_u = (f(l, u + h).unwrap() - f(l, u - h).unwrap()) / (2.0 * h);
        current = project_step(current, l + learning_rate * grad_l, u + learning_rate * grad_u);
        let value = f(current.lower, current.upper).unwrap();
        if value > best.0 {
            best = (value, current);
        }
    }
    Ok(best.1)
}

/// One row of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub thresholds: ThresholdPair,
    pub counts: ConfusionCounts,
    pub metrics: MetricsReport,
}

/// Evaluates every pair `lower <= upper` from the interior grid `k / (resolution + 1)`,
/// `k = 1..=resolution`.
pub fn threshold_sweep(stream: &EventStream, resolution: usize) -> Result<Vec<SweepRow>> {
    if resolution == 0 {
        return Err(Error::InvalidInput("sweep resolution must be at least 1".into()));
    }
    let grid: Vec<f64> = (1..=resolution).map(|k| k as f64 / (resolution + 1) as f64).collect();
    let mut rows = Vec::with_capacity(resolution * (resolution + 1) / 2);
    for (i, &lower) in grid.iter().enumerate() {
        for &upper in &grid[i..] {
            let thresholds = ThresholdPair { lower, upper };
            let (counts, metrics) = evaluate(stream, thresholds);
            rows.push(SweepRow { thresholds, counts, metrics });
        }
    }
    Ok(rows)
}

/// Writes `alpha_l,alpha_u,car,fpr,fnr,ofr,utility`. Undefined metrics are left empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    writeln!(out, "alpha_l,alpha_u,car,fpr,fnr,ofr,utility")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.thresholds.lower,
            r.thresholds.upper,
            cell(m.car),
            cell(m.fpr),
            cell(m.fnr),
            cell(m.ofr),
            cell(m.utility)
        )?;
    }
    out.flush()
}
