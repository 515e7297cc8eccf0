//! Scenario configuration in TOML.
//!
//! Every section and key is optional; an empty file yields the defaults.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{FailureConfig, MobilityConfig};
use crate::error::{Error, Result};
use crate::policies::{AcoParams, AntIdealParams, PolicyKind};
use crate::topology::{DEFAULT_RATE_BOUNDS, DEFAULT_RATE_HALF_WIDTH, DEFAULT_RATE_NOISE_STD};
use crate::traffic::{FlowSampling, FlowSpec, VirtualRateRule, DEFAULT_BURST_LEN};
use crate::virtualplane::{VirtualParams, DEFAULT_EPSILON, DEFAULT_VIRTUAL_STEPS};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub topology: TopologyConfig,
    pub traffic: TrafficConfig,
    pub policy: PolicyConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failures: Option<FailureConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mobility: Option<MobilityConfig>,
    pub run: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub nodes: usize,
    pub density: f64,
    pub max_retries: usize,
    pub rate_min: f64,
    pub rate_max: f64,
    pub rate_noise_std: f64,
    pub rate_half_width: f64,
    /// Extra conflicts between links whose transmitters are this close.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interference_radius: Option<f64>,
    /// Fixed topology from an adjacency file instead of a random one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<PathBuf>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            nodes: 100,
            density: 8.0 / std::f64::consts::PI,
            max_retries: 1000,
            rate_min: DEFAULT_RATE_BOUNDS.0,
            rate_max: DEFAULT_RATE_BOUNDS.1,
            rate_noise_std: DEFAULT_RATE_NOISE_STD,
            rate_half_width: DEFAULT_RATE_HALF_WIDTH,
            interference_radius: None,
            adjacency: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub p_bursty: f64,
    pub streaming_load: f64,
    pub bursty_load: f64,
    pub horizon: usize,
    pub burst_len: usize,
    pub burst_start_margin: usize,
    /// Fixed flow set instead of a random one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flows: Option<Vec<FlowSpec>>,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            p_bursty: 0.5,
            streaming_load: 1.0,
            bursty_load: 1.0,
            horizon: 1000,
            burst_len: DEFAULT_BURST_LEN,
            burst_start_margin: 100,
            flows: None,
        }
    }
}

impl TrafficConfig {
    pub fn sampling(&self) -> FlowSampling {
        FlowSampling {
            p_bursty: self.p_bursty,
            streaming_load: self.streaming_load,
            bursty_load: self.bursty_load,
            horizon: self.horizon,
            burst_len: self.burst_len,
            burst_start_margin: self.burst_start_margin,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub virtual_steps: usize,
    pub epsilon: f64,
    pub evaporation: f64,
    /// Virtual loads; default to the physical loads.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub virtual_streaming_load: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub virtual_bursty_load: Option<f64>,
    pub virtual_rate_rule: VirtualRateRule,
    pub failure_decay: f64,
    pub aco_init: f64,
    pub aco_evaporation: f64,
    pub aco_deposit: f64,
    pub aco_floor: f64,
    pub ant_interval: u64,
    pub ant_exploration: f64,
    pub ant_hop_cap_factor: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        let aco = AcoParams::default();
        let ideal = AntIdealParams::default();
        Self {
            kind: PolicyKind::AntBp,
            virtual_steps: DEFAULT_VIRTUAL_STEPS,
            epsilon: DEFAULT_EPSILON,
            evaporation: 0.0,
            virtual_streaming_load: None,
            virtual_bursty_load: None,
            virtual_rate_rule: VirtualRateRule::PerFlow,
            failure_decay: crate::dynamics::FAILURE_DECAY,
            aco_init: aco.init,
            aco_evaporation: aco.evaporation,
            aco_deposit: aco.deposit,
            aco_floor: aco.floor,
            ant_interval: ideal.interval,
            ant_exploration: ideal.exploration,
            ant_hop_cap_factor: ideal.hop_cap_factor,
        }
    }
}

impl PolicyConfig {
    pub fn virtual_params(&self) -> VirtualParams {
        VirtualParams {
            steps: self.virtual_steps,
            epsilon: self.epsilon,
            evaporation: self.evaporation,
        }
    }

    pub fn aco_params(&self) -> AcoParams {
        AcoParams {
            init: self.aco_init,
            evaporation: self.aco_evaporation,
            deposit: self.aco_deposit,
            floor: self.aco_floor,
            steps: self.virtual_steps,
        }
    }

    pub fn ant_ideal_params(&self) -> AntIdealParams {
        AntIdealParams {
            interval: self.ant_interval,
            exploration: self.ant_exploration,
            evaporation: self.aco_evaporation,
            hop_cap_factor: self.ant_hop_cap_factor,
            floor: self.aco_floor,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyMode {
    /// Undelivered packets count as the horizon `T`.
    #[default]
    CapAtHorizon,
    /// Undelivered packets count as `T - injected_at`.
    Residency,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root of every derived random stream.
    pub base_seed: u64,
    /// Instance index; topology `seed / realizations`, flows `seed % realizations`.
    pub seed: u64,
    pub realizations: u64,
    pub latency: LatencyMode,
    pub check_invariants: bool,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            base_seed: 0,
            seed: 0,
            realizations: 10,
            latency: LatencyMode::CapAtHorizon,
            check_invariants: false,
            output_dir: PathBuf::from("runs"),
        }
    }
}

fn range(field: &'static str, value: impl ToString, ok: bool, expected: &'static str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ConfigRange {
            field,
            value: value.to_string(),
            expected,
        })
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.topology;
        range("topology.nodes", t.nodes, t.nodes >= 2, ">= 2")?;
        range("topology.density", t.density, t.density > 0.0, "> 0")?;
        range("topology.rate_min", t.rate_min, t.rate_min > 0.0, "> 0")?;
        range("topology.rate_max", t.rate_max, t.rate_max >= t.rate_min, ">= rate_min")?;
        range("topology.rate_noise_std", t.rate_noise_std, t.rate_noise_std >= 0.0, ">= 0")?;
        range("topology.rate_half_width", t.rate_half_width, t.rate_half_width >= 0.0, ">= 0")?;
        if let Some(r) = t.interference_radius {
            range("topology.interference_radius", r, r >= 0.0, ">= 0")?;
        }
        let tr = &self.traffic;
        range("traffic.p_bursty", tr.p_bursty, (0.0..=1.0).contains(&tr.p_bursty), "in [0, 1]")?;
        range("traffic.streaming_load", tr.streaming_load, tr.streaming_load >= 0.0, ">= 0")?;
        range("traffic.bursty_load", tr.bursty_load, tr.bursty_load >= 0.0, ">= 0")?;
        range("traffic.horizon", tr.horizon, tr.horizon >= 1, ">= 1")?;
        if let Some(flows) = &tr.flows {
            for f in flows {
                let ok = f.src < t.nodes && f.dst < t.nodes && f.base_rate >= 0.0 && f.load >= 0.0;
                range("traffic.flows", format!("{}->{}", f.src, f.dst), ok, "endpoints < nodes, nonnegative rates")?;
            }
        }
        let p = &self.policy;
        range("policy.virtual_steps", p.virtual_steps, p.virtual_steps >= 1, ">= 1")?;
        range("policy.epsilon", p.epsilon, p.epsilon > 0.0, "> 0")?;
        range("policy.evaporation", p.evaporation, (0.0..1.0).contains(&p.evaporation), "in [0, 1)")?;
        for (field, v) in [("policy.virtual_streaming_load", p.virtual_streaming_load), ("policy.virtual_bursty_load", p.virtual_bursty_load)] {
            if let Some(v) = v {
                range(field, v, v >= 0.0, ">= 0")?;
            }
        }
        range("policy.failure_decay", p.failure_decay, p.failure_decay > 0.0 && p.failure_decay <= 1.0, "in (0, 1]")?;
        range("policy.aco_init", p.aco_init, p.aco_init > 0.0, "> 0")?;
        range("policy.aco_evaporation", p.aco_evaporation, (0.0..1.0).contains(&p.aco_evaporation), "in [0, 1)")?;
        range("policy.aco_deposit", p.aco_deposit, p.aco_deposit >= 0.0, ">= 0")?;
        range("policy.aco_floor", p.aco_floor, p.aco_floor > 0.0, "> 0")?;
        range("policy.ant_interval", p.ant_interval, p.ant_interval >= 1, ">= 1")?;
        range("policy.ant_exploration", p.ant_exploration, (0.0..=1.0).contains(&p.ant_exploration), "in [0, 1]")?;
        range("policy.ant_hop_cap_factor", p.ant_hop_cap_factor, p.ant_hop_cap_factor >= 1, ">= 1")?;
        if let Some(f) = &self.failures {
            range("failures.max_prob", f.max_prob, (0.0..=1.0).contains(&f.max_prob), "in [0, 1]")?;
            range("failures.mean_duration", f.mean_duration, f.mean_duration >= 1.0, ">= 1")?;
            range("failures.duration_std", f.duration_std, f.duration_std >= 0.0, ">= 0")?;
            range("failures.bw_fraction", f.bw_fraction, (0.0..=1.0).contains(&f.bw_fraction), "in [0, 1]")?;
            let (lo, hi) = f.local_fraction;
            range("failures.local_fraction", format!("{lo}, {hi}"), 0.0 < lo && lo <= hi && hi <= 1.0, "0 < lo <= hi <= 1")?;
        }
        if let Some(m) = &self.mobility {
            range("mobility.mobile_nodes", m.mobile_nodes, m.mobile_nodes <= t.nodes, "<= topology.nodes")?;
            range("mobility.step_std", m.step_std, m.step_std >= 0.0, ">= 0")?;
            range("mobility.max_redraws", m.max_redraws, m.max_redraws >= 1, ">= 1")?;
            range("mobility.update_slot", m.update_slot, m.update_slot >= m.trigger_slot, ">= trigger_slot")?;
        }
        range("run.realizations", self.run.realizations, self.run.realizations >= 1, ">= 1")?;
        Ok(())
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Instance `seed` as `(topology index, flow realization)`.
    pub fn instance(&self) -> (u64, u64) {
        (self.run.seed / self.run.realizations, self.run.seed % self.run.realizations)
    }

    pub fn virtual_loads(&self) -> (f64, f64) {
        (
            self.policy.virtual_streaming_load.unwrap_or(self.traffic.streaming_load),
            self.policy.virtual_bursty_load.unwrap_or(self.traffic.bursty_load),
        )
    }
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigParse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ScenarioConfig::from_toml_str(&text, &path.display().to_string())
}

pub fn save_config(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, cfg.to_toml_string())?;
    Ok(())
}

/// Sets a dotted key such as `traffic.bursty_load` on a config.
pub fn set_path(cfg: &ScenarioConfig, key: &str, value: toml::Value) -> Result<ScenarioConfig> {
    let mut root = toml::Value::try_from(cfg).map_err(|e| Error::invalid(e.to_string()))?;
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::invalid(format!("empty key '{key}'")))?;
    let mut node = &mut root;
    for part in parts {
        let table = node.as_table_mut().ok_or_else(|| Error::invalid(format!("'{key}' is not a table path")))?;
        node = table.entry(part).or_insert_with(|| toml::Value::Table(Default::default()));
    }
    let table = node.as_table_mut().ok_or_else(|| Error::invalid(format!("'{key}' is not a table path")))?;
    // Integers given for float fields are accepted as floats.
    let value = match (table.get(last), value) {
        (Some(toml::Value::Float(_)), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (_, v) => v,
    };
    table.insert(last.to_string(), value);
    let text = toml::to_string(&root).map_err(|e| Error::invalid(e.to_string()))?;
    ScenarioConfig::from_toml_str(&text, key)
}

/// Parses a CLI value as integer, float, bool or string.
pub fn parse_value(text: &str) -> toml::Value {
    if let Ok(i) = text.parse::<i64>() {
        toml::Value::Integer(i)
    } else if let Ok(f) = text.parse::<f64>() {
        toml::Value::Float(f)
    } else if let Ok(b) = text.parse::<bool>() {
        toml::Value::Boolean(b)
    } else {
        toml::Value::String(text.to_string())
    }
}
