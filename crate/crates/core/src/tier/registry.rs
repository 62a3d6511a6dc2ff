use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;

use super::clock::Clock;
use super::config::NodeConfig;
use super::{NodeStatus, Tier};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("node {0} already registered")]
    Duplicate(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("tier {tier:?} already allocated on node {node}")]
    AlreadyAllocated { node: String, tier: Tier },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeRecord {
    pub config: NodeConfig,
    pub status: NodeStatus,
    pub last_heartbeat_us: u64,
    /// Registration generation; a node re-registered after replacement is a
    /// fresh incarnation.
    pub incarnation: u64,
}

#[derive(Default)]
struct Inner {
    nodes: BTreeMap<String, NodeRecord>,
    allocations: BTreeMap<String, BTreeSet<Tier>>,
    incarnations: u64,
}

/// Manager-tier state: registered nodes, their heartbeats and tier
/// allocations.
pub struct Registry {
    clock: Arc<dyn Clock>,
    inner: Mutex<Inner>,
}

impl Registry {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Registry {
            clock,
            inner: Mutex::default(),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("registry lock")
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    pub fn register_node(&self, config: NodeConfig) -> Result<u64, RegistryError> {
        let mut g = self.lock();
        if g.nodes.contains_key(&config.id) {
            return Err(RegistryError::Duplicate(config.id));
        }
        g.incarnations += 1;
        let incarnation = g.incarnations;
        let id = config.id.clone();
        g.nodes.insert(
            id.clone(),
            NodeRecord {
                config,
                status: NodeStatus::Starting,
                last_heartbeat_us: self.clock.now_us(),
                incarnation,
            },
        );
        g.allocations.insert(id, BTreeSet::new());
        Ok(incarnation)
    }

    pub fn allocate_tier(&self, node: &str, tier: Tier) -> Result<(), RegistryError> {
        let mut g = self.lock();
        let tiers = g
            .allocations
            .get_mut(node)
            .ok_or_else(|| RegistryError::UnknownNode(node.to_string()))?;
        if !tiers.insert(tier) {
            return Err(RegistryError::AlreadyAllocated {
                node: node.to_string(),
                tier,
            });
        }
        Ok(())
    }

    pub fn set_status(&self, node: &str, status: NodeStatus) -> Result<(), RegistryError> {
        let mut g = self.lock();
        let r = g
            .nodes
            .get_mut(node)
            .ok_or_else(|| RegistryError::UnknownNode(node.to_string()))?;
        r.status = status;
        Ok(())
    }

    /// Records a heartbeat. Down nodes do not beat, so their timestamp stays
    /// frozen.
    pub fn heartbeat(&self, node: &str) -> Result<(), RegistryError> {
        let now = self.clock.now_us();
        let mut g = self.lock();
        let r = g
            .nodes
            .get_mut(node)
            .ok_or_else(|| RegistryError::UnknownNode(node.to_string()))?;
        if r.status != NodeStatus::Down {
            r.last_heartbeat_us = r.last_heartbeat_us.max(now);
        }
        Ok(())
    }

    pub fn deregister(&self, node: &str) -> Result<NodeRecord, RegistryError> {
        let mut g = self.lock();
        g.allocations.remove(node);
        g.nodes
            .remove(node)
            .ok_or_else(|| RegistryError::UnknownNode(node.to_string()))
    }

    pub fn record(&self, node: &str) -> Option<NodeRecord> {
        self.lock().nodes.get(node).cloned()
    }

    pub fn allocations(&self, node: &str) -> Option<BTreeSet<Tier>> {
        self.lock().allocations.get(node).cloned()
    }

    pub fn nodes(&self) -> Vec<NodeRecord> {
        self.lock().nodes.values().cloned().collect()
    }

    /// Nodes whose last heartbeat is older than `timeout_us`.
    pub fn stale_nodes(&self, timeout_us: u64) -> Vec<String> {
        let now = self.clock.now_us();
        self.lock()
            .nodes
            .values()
            .filter(|r| now.saturating_sub(r.last_heartbeat_us) > timeout_us)
            .map(|r| r.config.id.clone())
            .collect()
    }

    /// Every allocation refers to a registered node.
    pub fn is_consistent(&self) -> bool {
        let g = self.lock();
        g.allocations.keys().all(|k| g.nodes.contains_key(k))
    }
}
