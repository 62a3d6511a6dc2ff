use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Tier;

pub const DEFAULT_HEARTBEAT_MS: u64 = 500;
pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_HEARTBEAT_TIMEOUT_INTERVALS: u32 = 3;
pub const DEFAULT_LATENCY_DEGRADED_US: u64 = 2_000;
/// Modeled round-trip latency of the in-process transport.
pub const INPROC_LATENCY_US: u64 = 50;
/// Modeled round-trip latency of the loopback TCP transport.
pub const TCP_LATENCY_US: u64 = 500;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read cluster config: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed cluster config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid cluster config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Inproc,
    Tcp,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Inproc => "inproc",
            Protocol::Tcp => "tcp",
        }
    }

    pub fn default_latency_us(self) -> u64 {
        match self {
            Protocol::Inproc => INPROC_LATENCY_US,
            Protocol::Tcp => TCP_LATENCY_US,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportConfig {
    pub name: Protocol,
    /// Listen address for TCP; `127.0.0.1:0` picks a free port.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub listen: Option<String>,
    /// Overrides the modeled round-trip latency.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_us: Option<u64>,
}

impl TransportConfig {
    pub fn latency_us(&self) -> u64 {
        self.latency_us.unwrap_or(self.name.default_latency_us())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Load,
    Preprocess,
    Extract,
    Classify,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Load, Stage::Preprocess, Stage::Extract, Stage::Classify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Preprocess => "preprocess",
            Stage::Extract => "extract",
            Stage::Classify => "classify",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    pub fn next(self) -> Option<Stage> {
        match self {
            Stage::Load => Some(Stage::Preprocess),
            Stage::Preprocess => Some(Stage::Extract),
            Stage::Extract => Some(Stage::Classify),
            Stage::Classify => None,
        }
    }

    pub fn prev(self) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.next() == Some(self))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: String,
    pub tiers: BTreeSet<Tier>,
    #[serde(default)]
    pub transports: Vec<TransportConfig>,
    #[serde(default = "one")]
    pub worker_count: usize,
    /// Pipeline stage served by this node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    /// Held in reserve until the autonomic manager activates it.
    #[serde(default)]
    pub standby: bool,
}

fn one() -> usize {
    1
}

impl NodeConfig {
    pub fn new(id: impl Into<String>, tiers: impl IntoIterator<Item = Tier>) -> Self {
        NodeConfig {
            id: id.into(),
            tiers: tiers.into_iter().collect(),
            transports: Vec::new(),
            worker_count: 1,
            stage: None,
            standby: false,
        }
    }

    pub fn with_transport(mut self, name: Protocol, listen: Option<&str>) -> Self {
        self.transports.push(TransportConfig {
            name,
            listen: listen.map(str::to_string),
            latency_us: None,
        });
        self
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.worker_count = n;
        self
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.stage = Some(stage);
        self
    }

    pub fn as_standby(mut self) -> Self {
        self.standby = true;
        self
    }

    pub fn has(&self, tier: Tier) -> bool {
        self.tiers.contains(&tier)
    }

    pub fn transport(&self, p: Protocol) -> Option<&TransportConfig> {
        self.transports.iter().find(|t| t.name == p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Replacement {
    RestartSameNode,
    #[default]
    SpawnStandby,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    pub nodes: Vec<NodeConfig>,
    #[serde(default = "heartbeat_ms")]
    pub heartbeat_ms: u64,
    #[serde(default = "max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "timeout_intervals")]
    pub heartbeat_timeout_intervals: u32,
    #[serde(default = "latency_degraded")]
    pub latency_degraded_us: u64,
    #[serde(default)]
    pub replacement: Replacement,
}

fn heartbeat_ms() -> u64 {
    DEFAULT_HEARTBEAT_MS
}
fn max_attempts() -> u32 {
    DEFAULT_MAX_ATTEMPTS
}
fn timeout_intervals() -> u32 {
    DEFAULT_HEARTBEAT_TIMEOUT_INTERVALS
}
fn latency_degraded() -> u64 {
    DEFAULT_LATENCY_DEGRADED_US
}

impl ClusterConfig {
    pub fn new(nodes: Vec<NodeConfig>) -> Self {
        ClusterConfig {
            nodes,
            heartbeat_ms: DEFAULT_HEARTBEAT_MS,
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            heartbeat_timeout_intervals: DEFAULT_HEARTBEAT_TIMEOUT_INTERVALS,
            latency_degraded_us: DEFAULT_LATENCY_DEGRADED_US,
            replacement: Replacement::default(),
        }
    }

    /// One node carrying every tier.
    pub fn single_node() -> Self {
        ClusterConfig::new(vec![NodeConfig::new(
            "n1",
            [Tier::Gmt, Tier::Dst, Tier::Dgt, Tier::Dwt],
        )
        .with_transport(Protocol::Inproc, None)])
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ClusterConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        ClusterConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn node(&self, id: &str) -> Option<&NodeConfig> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.nodes.is_empty() {
            return Err(invalid("no nodes"));
        }
        if self.heartbeat_ms == 0 || self.heartbeat_timeout_intervals == 0 {
            return Err(invalid("heartbeat settings must be positive"));
        }
        if self.latency_degraded_us == 0 {
            return Err(invalid("latency_degraded_us must be positive"));
        }
        if self.max_attempts == 0 {
            return Err(invalid("max_attempts must be at least 1"));
        }
        let mut ids = BTreeSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return Err(invalid("empty node id"));
            }
            if !ids.insert(n.id.as_str()) {
                return Err(invalid(format!("duplicate node id {}", n.id)));
            }
            if n.tiers.is_empty() {
                return Err(invalid(format!("node {} has no tiers", n.id)));
            }
            if n.worker_count == 0 {
                return Err(invalid(format!("node {} has worker_count 0", n.id)));
            }
            let mut protos = BTreeSet::new();
            for t in &n.transports {
                if !protos.insert(t.name) {
                    return Err(invalid(format!("node {} lists {} twice", n.id, t.name.name())));
                }
                if t.name == Protocol::Inproc && t.listen.is_some() {
                    return Err(invalid(format!("node {}: inproc takes no listen address", n.id)));
                }
                if let Some(addr) = &t.listen {
                    if addr.parse::<std::net::SocketAddr>().is_err() {
                        return Err(invalid(format!("node {}: bad listen address {addr}", n.id)));
                    }
                }
            }
        }
        if self.nodes.iter().filter(|n| n.has(Tier::Gmt)).count() > 1 {
            return Err(invalid("at most one GMT node"));
        }
        if !self.nodes.iter().any(|n| n.has(Tier::Dst)) {
            return Err(invalid("no DST node"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_shape() {
        let cfg = ClusterConfig::parse(
            r#"{"nodes":[{"id":"n1","tiers":["GMT","DST"],"transports":[{"name":"tcp","listen":"127.0.0.1:7401"}]},
                        {"id":"n2","tiers":["DGT","DWT"],"worker_count":2}],
                "heartbeat_ms":250,"max_attempts":5}"#,
        )
        .unwrap();
        assert_eq!(cfg.nodes.len(), 2);
        assert_eq!(cfg.heartbeat_ms, 250);
        assert_eq!(cfg.max_attempts, 5);
        assert_eq!(cfg.heartbeat_timeout_intervals, 3);
        assert_eq!(cfg.replacement, Replacement::SpawnStandby);
        assert_eq!(cfg.nodes[1].worker_count, 2);
        assert!(cfg.nodes[0].has(Tier::Dst));
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"nodes":[]}"#,
            r#"{"nodes":[{"id":"a","tiers":[]}]}"#,
            r#"{"nodes":[{"id":"a","tiers":["DST"]},{"id":"a","tiers":["DWT"]}]}"#,
            r#"{"nodes":[{"id":"a","tiers":["DWT"]}]}"#,
            r#"{"nodes":[{"id":"a","tiers":["DST"],"worker_count":0}]}"#,
            r#"{"nodes":[{"id":"a","tiers":["DST"],"transports":[{"name":"tcp","listen":"nowhere"}]}]}"#,
            r#"{"nodes":[{"id":"a","tiers":["DST"],"colour":"red"}]}"#,
            r#"{"nodes":[{"id":"a","tiers":["DST"]}],"heartbeat_ms":0}"#,
        ] {
            assert!(ClusterConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn stage_order() {
        assert_eq!(Stage::Load.next(), Some(Stage::Preprocess));
        assert_eq!(Stage::Classify.next(), None);
        assert_eq!(Stage::parse("extract"), Some(Stage::Extract));
        assert_eq!(Stage::parse("eval"), None);
    }
}
