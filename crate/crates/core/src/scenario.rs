//! Scenario documents (TOML), random scenario generation and result bundles (JSON).
//!
//! Every physical quantity carries its unit in the field name: `_hz`, `_w`, `_bits`, `_s`,
//! `_j`, `_w_per_hz`. Trace sources are either a CSV file (relative paths resolve against the
//! document's directory) or generator parameters.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exitpolicy::{evaluate, ConfusionCounts, MetricsReport};
use crate::fairopt::{AllocationPlan, EnProfile, Scenario, SolveReport, UeProfile};
use crate::link::{secrecy_rate, ChannelState, EnergyModel, LinkAllocation, OffloadDemand};
use crate::trace::{generate_stream, load_stream, save_stream, GeneratorParams};

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub security_levels: u32,
    pub link: LinkCaps,
    #[serde(rename = "ue", default)]
    pub ues: Vec<UeConfig>,
    #[serde(rename = "en", default)]
    pub ens: Vec<EnConfig>,
}

/// Per-link caps shared by every UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkCaps {
    pub bandwidth_max_hz: f64,
    pub power_max_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UeConfig {
    pub weight: f64,
    pub security: u32,
    pub feature_bits: f64,
    pub deadline_s: f64,
    pub channel: ChannelConfig,
    pub energy: EnergyConfig,
    pub trace: TraceSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub gain: f64,
    pub noise_psd_w_per_hz: f64,
    pub eav_gain: f64,
    pub eav_noise_psd_w_per_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyConfig {
    pub energy_per_access_j: f64,
    pub access_counts: Vec<u64>,
}

/// Exactly one of `file` or `generator` must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub events: usize,
    pub layer_count: usize,
    pub critical_prior: f64,
    pub critical_drift: f64,
    pub normal_drift: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl GeneratorConfig {
    pub fn params(&self) -> GeneratorParams {
        GeneratorParams {
            layer_count: self.layer_count,
            critical_prior: self.critical_prior,
            critical_drift: self.critical_drift,
            normal_drift: self.normal_drift,
            noise_std: self.noise_std,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnConfig {
    pub bandwidth_hz: f64,
    pub compute_units: u64,
    pub security: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_pool_w: Option<f64>,
}

fn check(ok: bool, path: impl FnOnce() -> String, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path(), message))
    }
}

fn positive(v: f64) -> bool {
    v > 0.0 && v.is_finite()
}

fn non_negative(v: f64) -> bool {
    v >= 0.0 && v.is_finite()
}

impl ScenarioConfig {
    pub fn from_toml(document: &str) -> Result<Self> {
        toml::from_str(document).map_err(|e| {
            let line = e.span().map(|s| document[..s.start.min(document.len())].lines().count().max(1));
            let path = match line {
                Some(l) => format!("line {l}"),
                None => "document".to_string(),
            };
            Error::config(path, e.message().trim())
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("document", e.to_string()))
    }

    /// Range checks on every field; errors name the offending field.
    pub fn validate(&self) -> Result<()> {
        let levels = self.security_levels;
        check(levels >= 1, || "security_levels".into(), "must be at least 1")?;
        check(positive(self.link.bandwidth_max_hz), || "link.bandwidth_max_hz".into(), "must be positive")?;
        check(positive(self.link.power_max_w), || "link.power_max_w".into(), "must be positive")?;
        check(!self.ues.is_empty(), || "ue".into(), "at least one UE is required")?;
        check(!self.ens.is_empty(), || "en".into(), "at least one EN is required")?;
        let level_msg = format!("must be in [1, {levels}]");
        for (i, ue) in self.ues.iter().enumerate() {
            let p = |f: &str| format!("ue[{i}].{f}");
            check(positive(ue.weight), || p("weight"), "must be positive")?;
            check((1..=levels).contains(&ue.security), || p("security"), &level_msg)?;
            check(positive(ue.feature_bits), || p("feature_bits"), "must be positive")?;
            check(positive(ue.deadline_s), || p("deadline_s"), "must be positive")?;
            let c = &ue.channel;
            check(non_negative(c.gain), || p("channel.gain"), "must be >= 0")?;
            check(positive(c.noise_psd_w_per_hz), || p("channel.noise_psd_w_per_hz"), "must be positive")?;
            check(non_negative(c.eav_gain), || p("channel.eav_gain"), "must be >= 0")?;
            check(positive(c.eav_noise_psd_w_per_hz), || p("channel.eav_noise_psd_w_per_hz"), "must be positive")?;
            check(non_negative(ue.energy.energy_per_access_j), || p("energy.energy_per_access_j"), "must be >= 0")?;
            match (&ue.trace.file, &ue.trace.generator) {
                (Some(_), None) => {}
                (None, Some(g)) => {
                    g.params().validate().map_err(|e| Error::config(p("trace.generator"), e.to_string()))?;
                }
                _ => return Err(Error::config(p("trace"), "exactly one of `file` or `generator` is required")),
            }
        }
        for (j, en) in self.ens.iter().enumerate() {
            let p = |f: &str| format!("en[{j}].{f}");
            check(non_negative(en.bandwidth_hz), || p("bandwidth_hz"), "must be >= 0")?;
            check((1..=levels).contains(&en.security), || p("security"), &level_msg)?;
            if let Some(pool) = en.power_pool_w {
                check(non_negative(pool), || p("power_pool_w"), "must be >= 0")?;
            }
        }
        Ok(())
    }

    /// Validates, loads or generates every trace and assembles the scenario.
    pub fn build(&self, base_dir: &Path) -> Result<Scenario> {
        self.validate()?;
        let mut ues = Vec::with_capacity(self.ues.len());
        for (i, u) in self.ues.iter().enumerate() {
            let p = |f: &str| format!("ue[{i}].{f}");
            let stream = match (&u.trace.file, &u.trace.generator) {
                (Some(file), _) => {
                    load_stream(base_dir.join(file)).map_err(|e| Error::config(p("trace.file"), e.to_string()))?
                }
                (_, Some(g)) => generate_stream(&g.params(), g.events)?,
                _ => unreachable!("validated above"),
            };
            let c = u.channel;
            ues.push(UeProfile {
                weight: u.weight,
                security: u.security,
                demand: OffloadDemand::new(u.feature_bits, u.deadline_s)?,
                channel: ChannelState::new(c.gain, c.noise_psd_w_per_hz, c.eav_gain, c.eav_noise_psd_w_per_hz)?,
                energy: EnergyModel {
                    energy_per_access: u.energy.energy_per_access_j,
                    access_counts: u.energy.access_counts.clone(),
                },
                stream,
            });
        }
        let ens = self
            .ens
            .iter()
            .map(|e| EnProfile {
                bandwidth_cap: e.bandwidth_hz,
                compute_cap: e.compute_units,
                security: e.security,
                power_pool: e.power_pool_w,
            })
            .collect();
        Scenario::new(ues, ens, self.link.bandwidth_max_hz, self.link.power_max_w, self.security_levels)
    }

    /// Writes every generator-backed trace to `dir/traces/ue<i>.csv` and returns a copy of the
    /// config that points at those files (paths relative to `dir`).
    pub fn materialize_traces(&self, dir: &Path) -> Result<ScenarioConfig> {
        let mut out = self.clone();
        for (i, ue) in out.ues.iter_mut().enumerate() {
            if let Some(g) = ue.trace.generator.take() {
                let rel = PathBuf::from("traces").join(format!("ue{i}.csv"));
                let full = dir.join(&rel);
                if let Some(parent) = full.parent() {
                    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
                }
                save_stream(&generate_stream(&g.params(), g.events)?, &full)?;
                ue.trace.file = Some(rel);
            }
        }
        Ok(out)
    }
}

/// Parses and builds a scenario document. Relative trace paths resolve against `base_dir`.
pub fn parse_scenario(document: &str, base_dir: &Path) -> Result<Scenario> {
    ScenarioConfig::from_toml(document)?.build(base_dir)
}

#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub document: String,
    pub config: ScenarioConfig,
    pub scenario: Scenario,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<LoadedScenario> {
    let path = path.as_ref();
    let document = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = ScenarioConfig::from_toml(&document)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = config.build(base)?;
    Ok(LoadedScenario { document, config, scenario })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomScenarioParams {
    pub ues: usize,
    pub ens: usize,
    pub security_levels: u32,
    /// Probability that a UE's legitimate channel beats its eavesdropper.
    pub advantage_prob: f64,
    pub events_min: usize,
    pub events_max: usize,
    pub layer_count: usize,
    pub compute_min: u64,
    pub compute_max: u64,
}

impl Default for RandomScenarioParams {
    fn default() -> Self {
        Self {
            ues: 4,
            ens: 3,
            security_levels: 3,
            advantage_prob: 1.0,
            events_min: 40,
            events_max: 80,
            layer_count: 4,
            compute_min: 5,
            compute_max: 20,
        }
    }
}

/// Deterministic random scenario. EN 0 always has security level 1, so every UE has at least
/// one admissible EN; UEs with a secrecy advantage get deadlines that are reachable below the
/// per-link bandwidth cap.
pub fn random_scenario(params: &RandomScenarioParams, seed: u64) -> Result<ScenarioConfig> {
    let p = params;
    if p.ues == 0 || p.ens == 0 || p.security_levels == 0 || p.layer_count == 0 {
        return Err(Error::InvalidInput("UE, EN, security level and layer counts must be positive".into()));
    }
    if p.events_min > p.events_max || p.compute_min > p.compute_max || !(0.0..=1.0).contains(&p.advantage_prob) {
        return Err(Error::InvalidInput("invalid random scenario ranges".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let caps = LinkCaps { bandwidth_max_hz: 1e6, power_max_w: 0.2 };
    let full_link = LinkAllocation { bandwidth: caps.bandwidth_max_hz, power: caps.power_max_w };

    let mut ues = Vec::with_capacity(p.ues);
    for _ in 0..p.ues {
        let noise = 10f64.powf(rng.random_range(-13.5..-12.5));
        let gain = 10f64.powf(rng.random_range(-7.0..-6.0));
        let eav_noise = 10f64.powf(rng.random_range(-13.5..-12.5));
        let advantaged = rng.random::<f64>() < p.advantage_prob;
        let ratio = if advantaged { rng.random_range(0.05..0.5) } else { rng.random_range(1.0..2.0) };
        let eav_gain = gain / noise * ratio * eav_noise;
        let channel = ChannelConfig { gain, noise_psd_w_per_hz: noise, eav_gain, eav_noise_psd_w_per_hz: eav_noise };
        let feature_bits: f64 = rng.random_range(5e3..5e4);
        let state = ChannelState::new(gain, noise, eav_gain, eav_noise)?;
        let best_rate = secrecy_rate(full_link, &state);
        let deadline_s = if best_rate > 0.0 {
            feature_bits / (best_rate * rng.random_range(0.15..0.5))
        } else {
            rng.random_range(0.01..0.1)
        };
        let events = rng.random_range(p.events_min..=p.events_max);
        let generator = GeneratorConfig {
            events,
            layer_count: p.layer_count,
            critical_prior: rng.random_range(0.2..0.5),
            critical_drift: rng.random_range(0.6..1.2),
            normal_drift: -rng.random_range(0.6..1.2),
            noise_std: rng.random_range(0.8..1.2),
            seed: rng.random::<u64>() >> 1,
        };
        ues.push(UeConfig {
            weight: rng.random_range(0.5..2.0),
            security: rng.random_range(1..=p.security_levels),
            feature_bits,
            deadline_s,
            channel,
            energy: EnergyConfig {
                energy_per_access_j: rng.random_range(0.5e-9..2e-9),
                access_counts: (0..p.layer_count).map(|_| rng.random_range(100_000..=1_000_000)).collect(),
            },
            trace: TraceSource { file: None, generator: Some(generator) },
        });
    }
    let ens = (0..p.ens)
        .map(|j| EnConfig {
            bandwidth_hz: caps.bandwidth_max_hz * rng.random_range(1.5..4.0),
            compute_units: rng.random_range(p.compute_min..=p.compute_max),
            security: if j == 0 { 1 } else { rng.random_range(1..=p.security_levels) },
            power_pool_w: None,
        })
        .collect();
    Ok(ScenarioConfig { security_levels: p.security_levels, link: caps, ues, ens })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserResult {
    pub counts: ConfusionCounts,
    pub metrics: MetricsReport,
}

/// Solver output plus everything needed to re-check it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultBundle {
    pub schema_version: u32,
    pub generator: String,
    /// SHA-256 of the scenario document the plan was solved for.
    pub config_digest: String,
    /// SHA-256 of this bundle serialised compactly with `content_digest` set to "".
    pub content_digest: String,
    /// Unix seconds, absent in deterministic runs.
    pub created_unix_s: Option<u64>,
    pub plan: AllocationPlan,
    pub report: SolveReport,
    pub users: Vec<UserResult>,
}

impl ResultBundle {
    pub fn new(
        document: &str,
        scenario: &Scenario,
        plan: AllocationPlan,
        report: SolveReport,
        created_unix_s: Option<u64>,
    ) -> Result<Self> {
        if plan.thresholds.len() != scenario.ues().len() {
            return Err(Error::InvalidInput("plan does not match scenario".into()));
        }
        let users = scenario
            .ues()
            .iter()
            .zip(&plan.thresholds)
            .map(|(u, &thr)| {
                let (counts, metrics) = evaluate(&u.stream, thr);
                UserResult { counts, metrics }
            })
            .collect();
        let mut bundle = ResultBundle {
            schema_version: BUNDLE_SCHEMA_VERSION,
            generator: concat!("edgefair ", env!("CARGO_PKG_VERSION")).to_string(),
            config_digest: sha256_hex(document.as_bytes()),
            content_digest: String::new(),
            created_unix_s,
            plan,
            report,
            users,
        };
        bundle.content_digest = bundle.compute_content_digest()?;
        Ok(bundle)
    }

    pub fn compute_content_digest(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.content_digest.clear();
        Ok(sha256_hex(&serde_json::to_vec(&copy)?))
    }

    pub fn matches_document(&self, document: &str) -> bool {
        self.config_digest == sha256_hex(document.as_bytes())
    }

    /// Structural consistency: version, digest shape and matching dimensions.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                found: self.schema_version as u64,
                expected: BUNDLE_SCHEMA_VERSION as u64,
            });
        }
        let is_digest = |d: &str| d.len() == 64 && d.bytes().all(|b| b.is_ascii_hexdigit());
        if !is_digest(&self.config_digest) || !is_digest(&self.content_digest) {
            return Err(Error::Schema("digests must be 64 hex characters".into()));
        }
        let n = self.plan.assignment.len();
        let m = self.plan.assignment.first().map_or(0, Vec::len);
        let rows_ok = [&self.plan.bandwidth, &self.plan.power]
            .iter()
            .all(|rows| rows.len() == n && rows.iter().all(|r| r.len() == m))
            && self.plan.compute.len() == n
            && self.plan.compute.iter().all(|r| r.len() == m)
            && self.plan.assignment.iter().all(|r| r.len() == m);
        if !rows_ok
            || self.plan.thresholds.len() != n
            || self.users.len() != n
            || self.report.per_user_utility.len() != n
            || self.report.diagnostics.len() != n
        {
            return Err(Error::Schema(format!("inconsistent dimensions for {n} UEs")));
        }
        if self.report.objective_history.is_empty() {
            return Err(Error::Schema("objective history is empty".into()));
        }
        Ok(())
    }
}

pub fn write_bundle(bundle: &ResultBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(bundle)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone)]
pub struct BundleRead {
    pub bundle: ResultBundle,
    pub warnings: Vec<String>,
}

/// Parses a bundle. A schema version other than the supported one is an error; a content
/// digest that does not match the contents is reported as a warning.
pub fn parse_bundle(text: &str) -> Result<BundleRead> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let found = value
        .get("schema_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Schema("missing schema_version".into()))?;
    if found != BUNDLE_SCHEMA_VERSION as u64 {
        return Err(Error::SchemaVersion { found, expected: BUNDLE_SCHEMA_VERSION as u64 });
    }
    let bundle: ResultBundle = serde_json::from_value(value).map_err(|e| Error::Schema(e.to_string()))?;
    bundle.validate()?;
    let mut warnings = Vec::new();
    if bundle.compute_content_digest()? != bundle.content_digest {
        warnings.push("content digest does not match bundle contents".to_string());
    }
    Ok(BundleRead { bundle, warnings })
}

pub fn read_bundle(path: impl AsRef<Path>) -> Result<BundleRead> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bundle(&text)
}
