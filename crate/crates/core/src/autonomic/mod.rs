//! Self-healing: watches heartbeats and transport latency per node, and
//! replaces failed nodes or re-tunes slow ones.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::fabric::ProtocolSwitch;
use crate::tier::{ClusterConfig, Registry, Replacement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct HealthPolicy {
    /// Missed heartbeat intervals before a node counts as down.
    pub heartbeat_timeout: u32,
    pub heartbeat_interval_us: u64,
    pub latency_degraded_threshold_us: u64,
    pub replacement: Replacement,
    /// Degraded nodes grow to at most this multiple of their initial workers.
    pub worker_cap_factor: usize,
}

impl Default for HealthPolicy {
    fn default() -> Self {
        HealthPolicy::from_config(&ClusterConfig::new(Vec::new()))
    }
}

impl HealthPolicy {
    pub fn from_config(cfg: &ClusterConfig) -> Self {
        HealthPolicy {
            heartbeat_timeout: cfg.heartbeat_timeout_intervals,
            heartbeat_interval_us: cfg.heartbeat_ms * 1000,
            latency_degraded_threshold_us: cfg.latency_degraded_us,
            replacement: cfg.replacement,
            worker_cap_factor: 2,
        }
    }

    pub fn timeout_us(&self) -> u64 {
        self.heartbeat_timeout as u64 * self.heartbeat_interval_us
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HealthState {
    Healthy,
    Degraded,
    Down,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evidence {
    Nominal,
    HeartbeatAge { age_us: u64 },
    Latency { latency_us: f64 },
    ReplacedBy { node: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageHealth {
    pub stage: String,
    pub node_id: String,
    pub state: HealthState,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub node_id: String,
    pub stage: String,
    pub from: HealthState,
    pub to: HealthState,
    pub evidence: Evidence,
    pub at_us: u64,
}

/// Latest measurements per node.
#[derive(Debug, Clone, Default)]
pub struct Metrics {
    pub latency_us: BTreeMap<String, f64>,
}

/// Remedies the manager can ask the runtime for.
pub trait HealingActions {
    /// Returns the node's in-flight demands to their queues.
    fn requeue_lost(&mut self, node: &str) -> usize;
    /// Restarts the node's controllers under a fresh registration.
    fn restart_node(&mut self, node: &str) -> Result<String, String>;
    /// Brings up a standby in the failed node's place; `None` when no
    /// standby is left.
    fn activate_standby(&mut self, node: &str) -> Result<Option<String>, String>;
    fn reselect_protocol(&mut self, node: &str) -> Vec<ProtocolSwitch>;
    /// Adds one worker unless the node already has `cap`; returns the new
    /// count when one was added.
    fn scale_workers(&mut self, node: &str, cap_factor: usize) -> Option<usize>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum HealOutcome {
    Healed,
    Failed { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HealReport {
    pub node_id: String,
    pub stage: String,
    pub state: HealthState,
    pub requeued: usize,
    pub replacement: Option<String>,
    pub switches: Vec<ProtocolSwitch>,
    pub workers: Option<usize>,
    #[serde(flatten)]
    pub outcome: HealOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HealError {
    #[error("node {0} is not degraded or down")]
    NotUnhealthy(String),
}

pub struct AutonomicManager {
    policy: HealthPolicy,
    health: BTreeMap<String, StageHealth>,
}

impl AutonomicManager {
    pub fn new(policy: HealthPolicy) -> Self {
        AutonomicManager {
            policy,
            health: BTreeMap::new(),
        }
    }

    pub fn policy(&self) -> &HealthPolicy {
        &self.policy
    }

    pub fn health(&self) -> Vec<StageHealth> {
        self.health.values().cloned().collect()
    }

    pub fn node_health(&self, node: &str) -> Option<&StageHealth> {
        self.health.get(node)
    }

    /// Classifies every registered node and returns the state changes.
    /// Down is held until the node is healed.
    pub fn observe(&mut self, registry: &Registry, metrics: &Metrics) -> Vec<Transition> {
        let now = registry.clock().now_us();
        let records = registry.nodes();
        self.health
            .retain(|id, _| records.iter().any(|r| &r.config.id == id));
        let mut out = Vec::new();
        for r in records {
            let id = r.config.id.clone();
            let stage = r.config.stage.map_or("eval", |s| s.name()).to_string();
            let age = now.saturating_sub(r.last_heartbeat_us);
            let latency = metrics.latency_us.get(&id).copied();
            let (state, evidence) = if age > self.policy.timeout_us() {
                (HealthState::Down, Evidence::HeartbeatAge { age_us: age })
            } else if let Some(l) = latency.filter(|l| *l > self.policy.latency_degraded_threshold_us as f64) {
                (HealthState::Degraded, Evidence::Latency { latency_us: l })
            } else {
                (HealthState::Healthy, Evidence::Nominal)
            };
            let entry = self.health.entry(id.clone()).or_insert_with(|| StageHealth {
                stage: stage.clone(),
                node_id: id.clone(),
                state: HealthState::Healthy,
                evidence: Evidence::Nominal,
            });
            let from = entry.state;
            if from == state || matches!(from, HealthState::Down | HealthState::Replaced) {
                continue;
            }
            entry.state = state;
            entry.evidence = evidence.clone();
            out.push(Transition {
                node_id: id,
                stage,
                from,
                to: state,
                evidence,
                at_us: now,
            });
        }
        out
    }

    pub fn heal(&mut self, health: &StageHealth, actions: &mut dyn HealingActions) -> Result<HealReport, HealError> {
        let node = health.node_id.as_str();
        let mut report = HealReport {
            node_id: node.to_string(),
            stage: health.stage.clone(),
            state: health.state,
            requeued: 0,
            replacement: None,
            switches: Vec::new(),
            workers: None,
            outcome: HealOutcome::Healed,
        };
        match health.state {
            HealthState::Down => {
                report.requeued = actions.requeue_lost(node);
                let replaced = match self.policy.replacement {
                    Replacement::RestartSameNode => actions.restart_node(node).map(Some),
                    Replacement::SpawnStandby => actions.activate_standby(node),
                };
                match replaced {
                    Ok(Some(by)) => {
                        if let Some(h) = self.health.get_mut(node) {
                            h.state = HealthState::Replaced;
                            h.evidence = Evidence::ReplacedBy { node: by.clone() };
                        }
                        // the replacement registers fresh
                        if by == node {
                            self.health.remove(node);
                        }
                        report.replacement = Some(by);
                    }
                    Ok(None) => {
                        report.outcome = HealOutcome::Failed {
                            reason: "no standby available".into(),
                        }
                    }
                    Err(reason) => report.outcome = HealOutcome::Failed { reason },
                }
            }
            HealthState::Degraded => {
                report.switches = actions.reselect_protocol(node);
                report.workers = actions.scale_workers(node, self.policy.worker_cap_factor);
            }
            HealthState::Healthy | HealthState::Replaced => return Err(HealError::NotUnhealthy(node.to_string())),
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tier::{NodeConfig, SimClock, Tier};
    use std::sync::Arc;

    #[derive(Default)]
    struct Recorder {
        calls: Vec<String>,
        standby: Option<String>,
    }

    impl HealingActions for Recorder {
        fn requeue_lost(&mut self, node: &str) -> usize {
            self.calls.push(format!("requeue {node}"));
            2
        }
        fn restart_node(&mut self, node: &str) -> Result<String, String> {
            self.calls.push(format!("restart {node}"));
            Ok(node.to_string())
        }
        fn activate_standby(&mut self, node: &str) -> Result<Option<String>, String> {
            self.calls.push(format!("standby {node}"));
            Ok(self.standby.take())
        }
        fn reselect_protocol(&mut self, node: &str) -> Vec<ProtocolSwitch> {
            self.calls.push(format!("reselect {node}"));
            Vec::new()
        }
        fn scale_workers(&mut self, node: &str, cap: usize) -> Option<usize> {
            self.calls.push(format!("scale {node} {cap}"));
            Some(2)
        }
    }

    fn setup() -> (Arc<SimClock>, Registry, AutonomicManager) {
        let clock = Arc::new(SimClock::new());
        let reg = Registry::new(clock.clone());
        reg.register_node(NodeConfig::new("a", [Tier::Dwt])).unwrap();
        reg.register_node(NodeConfig::new("b", [Tier::Dwt])).unwrap();
        let mut cfg = ClusterConfig::new(Vec::new());
        cfg.latency_degraded_us = 1000;
        (clock, reg, AutonomicManager::new(HealthPolicy::from_config(&cfg)))
    }

    #[test]
    fn defaults() {
        let p = HealthPolicy::default();
        assert_eq!(p.heartbeat_timeout, 3);
        assert_eq!(p.heartbeat_interval_us, 500_000);
        assert_eq!(p.replacement, Replacement::SpawnStandby);
    }

    #[test]
    fn nominal_has_no_transitions() {
        let (_, reg, mut m) = setup();
        assert!(m.observe(&reg, &Metrics::default()).is_empty());
        assert!(m.health().iter().all(|h| h.state == HealthState::Healthy));
    }

    #[test]
    fn frozen_heartbeat_goes_down() {
        let (clock, reg, mut m) = setup();
        for _ in 0..3 {
            clock.advance_ms(500);
            reg.heartbeat("b").unwrap();
            assert!(m.observe(&reg, &Metrics::default()).is_empty());
        }
        clock.advance_ms(1);
        reg.heartbeat("b").unwrap();
        let t = m.observe(&reg, &Metrics::default());
        assert_eq!(t.len(), 1);
        assert_eq!((t[0].node_id.as_str(), t[0].to), ("a", HealthState::Down));
        // held, not repeated
        clock.advance_ms(500);
        reg.heartbeat("b").unwrap();
        assert!(m.observe(&reg, &Metrics::default()).is_empty());
    }

    #[test]
    fn slow_latency_degrades_and_recovers() {
        let (_, reg, mut m) = setup();
        let mut metrics = Metrics::default();
        metrics.latency_us.insert("b".into(), 2000.0);
        let t = m.observe(&reg, &metrics);
        assert_eq!(t[0].to, HealthState::Degraded);
        assert_eq!(t[0].evidence, Evidence::Latency { latency_us: 2000.0 });
        metrics.latency_us.insert("b".into(), 50.0);
        assert_eq!(m.observe(&reg, &metrics)[0].to, HealthState::Healthy);
    }

    #[test]
    fn heal_down_with_standby() {
        let (clock, reg, mut m) = setup();
        clock.advance_ms(2000);
        m.observe(&reg, &Metrics::default());
        let h = m.node_health("a").unwrap().clone();
        let mut acts = Recorder {
            standby: Some("s".into()),
            ..Default::default()
        };
        let r = m.heal(&h, &mut acts).unwrap();
        assert_eq!(acts.calls, ["requeue a", "standby a"]);
        assert_eq!((r.requeued, r.replacement.as_deref(), &r.outcome), (2, Some("s"), &HealOutcome::Healed));
        assert_eq!(m.node_health("a").unwrap().state, HealthState::Replaced);
        // a replaced node is never healed again
        let h = m.node_health("a").unwrap().clone();
        assert!(m.heal(&h, &mut acts).is_err());
    }

    #[test]
    fn heal_without_standby_fails() {
        let (clock, reg, mut m) = setup();
        clock.advance_ms(2000);
        m.observe(&reg, &Metrics::default());
        let h = m.node_health("a").unwrap().clone();
        let r = m.heal(&h, &mut Recorder::default()).unwrap();
        assert!(matches!(r.outcome, HealOutcome::Failed { .. }));
        assert_eq!(m.node_health("a").unwrap().state, HealthState::Down);
    }

    #[test]
    fn heal_degraded_reselects_and_scales() {
        let (_, reg, mut m) = setup();
        let mut metrics = Metrics::default();
        metrics.latency_us.insert("a".into(), 5000.0);
        m.observe(&reg, &metrics);
        let mut acts = Recorder::default();
        let h = m.node_health("a").unwrap().clone();
        let r = m.heal(&h, &mut acts).unwrap();
        assert_eq!(acts.calls, ["reselect a", "scale a 2"]);
        assert_eq!(r.workers, Some(2));
    }

    #[test]
    fn heal_on_healthy_is_error() {
        let (_, reg, mut m) = setup();
        m.observe(&reg, &Metrics::default());
        let h = m.node_health("a").unwrap().clone();
        assert_eq!(m.heal(&h, &mut Recorder::default()), Err(HealError::NotUnhealthy("a".into())));
    }

}
