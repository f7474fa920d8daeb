//! Event streams with per-layer confidence scores.
//!
//! A [`ConfidenceTrace`] is what a multi-exit binary classifier produces for one event: the
//! ground-truth label plus the confidence that the event is critical at every exit layer.
//! Streams are either generated synthetically ([`generate_stream`]) or loaded from the trace
//! CSV format so that real classifier outputs can be plugged in.
//!
//! Trace CSV layout (UTF-8, LF line endings):
//!
//! ```text
//! event_id,label,c_1,c_2,...,c_L
//! 0,critical,0.62,0.81,...
//! 1,normal,0.41,0.22,...
//! ```

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Significant digits used when writing confidences to trace files.
pub const CONFIDENCE_DIGITS: usize = 12;

/// Synthetic logit differences are clamped to this magnitude so confidences stay strictly
/// inside (0, 1) after being written with [`CONFIDENCE_DIGITS`] digits.
const MAX_LOGIT_GAP: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Critical,
    Normal,
}

impl Label {
    pub fn is_critical(self) -> bool {
        self == Label::Critical
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Critical => "critical",
            Label::Normal => "normal",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "critical" => Ok(Label::Critical),
            "normal" => Ok(Label::Normal),
            other => Err(format!("unknown label `{other}` (expected `critical` or `normal`)")),
        }
    }
}

/// Raw classifier outputs at one exit layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerLogits {
    pub critical_logit: f64,
    pub normal_logit: f64,
}

/// Softmax probability of the critical class, `e^fc / (e^fc + e^fn)`.
///
/// The larger logit is subtracted before exponentiation, so the result is exact to rounding
/// for any finite pair. Gaps beyond roughly 745 saturate to 0 or 1.
pub fn confidence_from_logits(logits: LayerLogits) -> Result<f64> {
    let LayerLogits { critical_logit: c, normal_logit: n } = logits;
    if !c.is_finite() || !n.is_finite() {
        return Err(Error::InvalidInput(format!("non-finite logits ({c}, {n})")));
    }
    let m = c.max(n);
    let ec = (c - m).exp();
    let en = (n - m).exp();
    Ok(ec / (ec + en))
}

/// One event's label and its confidence score at each exit layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTrace {
    pub event_id: u64,
    pub true_label: Label,
    confidences: Vec<f64>,
}

impl ConfidenceTrace {
    pub fn new(event_id: u64, true_label: Label, confidences: Vec<f64>) -> Result<Self> {
        if confidences.is_empty() {
            return Err(Error::InvalidInput(format!("event {event_id} has no layers")));
        }
        if let Some((q, c)) = confidences.iter().enumerate().find(|(_, c)| !(**c > 0.0 && **c < 1.0)) {
            return Err(Error::InvalidInput(format!(
                "event {event_id}: confidence {c} at layer {} is outside (0, 1)",
                q + 1
            )));
        }
        Ok(Self { event_id, true_label, confidences })
    }

    pub fn confidences(&self) -> &[f64] {
        &self.confidences
    }

    pub fn layers(&self) -> usize {
        self.confidences.len()
    }
}

/// A sequence of independent events observed by one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    layer_count: usize,
    traces: Vec<ConfidenceTrace>,
}

impl EventStream {
    pub fn new(layer_count: usize, traces: Vec<ConfidenceTrace>) -> Result<Self> {
        if layer_count == 0 {
            return Err(Error::InvalidInput("layer count must be at least 1".into()));
        }
        let mut seen = HashSet::with_capacity(traces.len());
        for t in &traces {
            if t.layers() != layer_count {
                return Err(Error::InvalidInput(format!(
                    "event {} has {} layers, stream has {layer_count}",
                    t.event_id,
                    t.layers()
                )));
            }
            if !seen.insert(t.event_id) {
                return Err(Error::InvalidInput(format!("duplicate event id {}", t.event_id)));
            }
        }
        Ok(Self { layer_count, traces })
    }

    pub fn empty(layer_count: usize) -> Result<Self> {
        Self::new(layer_count, Vec::new())
    }

    pub fn layer_count(&self) -> usize {
        self.layer_count
    }

    pub fn traces(&self) -> &[ConfidenceTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn stats(&self) -> StreamStats {
        stream_stats(self)
    }
}

/// Event counts split by ground-truth class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StreamStats {
    pub total: usize,
    pub critical: usize,
    pub normal: usize,
}

pub fn stream_stats(stream: &EventStream) -> StreamStats {
    let critical = stream.traces.iter().filter(|t| t.true_label.is_critical()).count();
    StreamStats { total: stream.len(), critical, normal: stream.len() - critical }
}

/// Parameters of the synthetic trace generator.
///
/// Each event draws its label with probability `critical_prior` of being critical. The logit
/// gap `f_c - f_n` then follows a random walk starting at 0: every layer adds the class drift
/// plus Gaussian noise with standard deviation `noise_std`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub layer_count: usize,
    pub critical_prior: f64,
    pub critical_drift: f64,
    pub normal_drift: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        Self { layer_count: 4, critical_prior: 0.3, critical_drift: 0.9, normal_drift: -0.9, noise_std: 1.0, seed: 0 }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(Error::InvalidInput("layer_count must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.critical_prior) {
            return Err(Error::InvalidInput("critical_prior must lie in [0, 1]".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidInput("noise_std must be finite and non-negative".into()));
        }
        if !self.critical_drift.is_finite() || !self.normal_drift.is_finite() {
            return Err(Error::InvalidInput("drifts must be finite".into()));
        }
        Ok(())
    }
}

/// Draws `count` events with ids `0..count`. Deterministic in `params.seed`.
pub fn generate_stream(params: &GeneratorParams, count: usize) -> Result<EventStream> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut traces = Vec::with_capacity(count);
    for id in 0..count {
        let label = if rng.random::<f64>() < params.critical_prior { Label::Critical } else { Label::Normal };
        let drift = match label {
            Label::Critical => params.critical_drift,
            Label::Normal => params.normal_drift,
        };
        let mut gap = 0.0_f64;
        let mut confidences = Vec::with_capacity(params.layer_count);
        for _ in 0..params.layer_count {
            let noise: f64 = rng.sample(StandardNormal);
            gap = (gap + drift + params.noise_std * noise).clamp(-MAX_LOGIT_GAP, MAX_LOGIT_GAP);
            confidences.push(confidence_from_logits(LayerLogits { critical_logit: gap, normal_logit: 0.0 })?);
        }
        traces.push(ConfidenceTrace::new(id as u64, label, confidences)?);
    }
    EventStream::new(params.layer_count, traces)
}

/// Formats `v` in plain decimal notation with `digits` significant digits.
pub(crate) fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

fn header(layer_count: usize) -> Vec<String> {
    let mut h = vec!["event_id".to_string(), "label".to_string()];
    h.extend((1..=layer_count).map(|q| format!("c_{q}")));
    h
}

pub fn write_stream<W: Write>(stream: &EventStream, writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let csv_err = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
    w.write_record(header(stream.layer_count)).map_err(csv_err)?;
    for t in &stream.traces {
        let mut row = vec![t.event_id.to_string(), t.true_label.to_string()];
        row.extend(t.confidences.iter().map(|c| format_significant(*c, CONFIDENCE_DIGITS)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))?;
    Ok(())
}

pub fn read_stream<R: Read>(reader: R) -> Result<EventStream> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut records = r.records();

    let head = match records.next() {
        None => return Err(Error::TraceParse { line: 1, message: "missing header".into() }),
        Some(rec) => rec.map_err(|e| parse_err(1, e.to_string()))?,
    };
    if head.len() < 3 || &head[0] != "event_id" || &head[1] != "label" {
        return Err(parse_err(1, "header must be `event_id,label,c_1,...,c_L`"));
    }
    let layer_count = head.len() - 2;
    for (q, name) in head.iter().skip(2).enumerate() {
        if name != format!("c_{}", q + 1) {
            return Err(parse_err(1, format!("expected column `c_{}`, found `{name}`", q + 1)));
        }
    }

    let mut traces = Vec::new();
    let mut seen = HashSet::new();
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != layer_count + 2 {
            return Err(parse_err(line, format!("expected {} fields, found {}", layer_count + 2, rec.len())));
        }
        let event_id: u64 = rec[0].parse().map_err(|_| parse_err(line, format!("bad event id `{}`", &rec[0])))?;
        if !seen.insert(event_id) {
            return Err(parse_err(line, format!("duplicate event id {event_id}")));
        }
        let label: Label = rec[1].parse().map_err(|m: String| parse_err(line, m))?;
        let mut confidences = Vec::with_capacity(layer_count);
        for (q, field) in rec.iter().skip(2).enumerate() {
            let c: f64 =
                field.parse().map_err(|_| parse_err(line, format!("bad confidence `{field}` in c_{}", q + 1)))?;
            if !(c > 0.0 && c < 1.0) {
                return Err(parse_err(line, format!("confidence {field} in c_{} is outside (0, 1)", q + 1)));
            }
            confidences.push(c);
        }
        traces.push(ConfidenceTrace { event_id, true_label: label, confidences });
    }
    Ok(EventStream { layer_count, traces })
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::TraceParse { line, message: message.into() }
}

pub fn save_stream(stream: &EventStream, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_stream(stream, std::io::BufWriter::new(file))
}

pub fn load_stream(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_stream(std::io::BufReader::new(file))
}
