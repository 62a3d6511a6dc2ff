use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::fabric::{Dispatcher, StoreApi};

use super::config::NodeConfig;
use super::worker::Worker;
use super::{NodeStatus, Tier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerState {
    Running,
    Stopped,
}

/// A tier controller hosted by a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Controller {
    pub tier: Tier,
    pub state: ControllerState,
}

/// How a node reaches one demand store.
#[derive(Clone)]
pub struct StoreClient {
    pub store: Arc<dyn StoreApi>,
    /// Present when the store lives on another node.
    pub dispatcher: Option<Arc<Dispatcher>>,
}

/// A running node: its configuration, one controller per configured tier,
/// and the workers of its worker tier.
pub struct GipsyNode {
    config: NodeConfig,
    incarnation: u64,
    status: NodeStatus,
    controllers: Vec<Controller>,
    /// Demand store this node's generator and workers talk to.
    target: Option<String>,
    clients: BTreeMap<String, StoreClient>,
    workers: Vec<Arc<Worker>>,
    initial_workers: usize,
}

impl GipsyNode {
    pub(crate) fn new(config: NodeConfig, incarnation: u64, target: Option<String>) -> Self {
        let controllers = config
            .tiers
            .iter()
            .map(|&tier| Controller {
                tier,
                state: ControllerState::Running,
            })
            .collect();
        let initial_workers = config.worker_count;
        GipsyNode {
            config,
            incarnation,
            status: NodeStatus::Starting,
            controllers,
            target,
            clients: BTreeMap::new(),
            workers: Vec::new(),
            initial_workers,
        }
    }

    pub fn id(&self) -> &str {
        &self.config.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn incarnation(&self) -> u64 {
        self.incarnation
    }

    pub fn status(&self) -> NodeStatus {
        self.status
    }

    pub(crate) fn set_status(&mut self, status: NodeStatus) {
        self.status = status;
        let state = if status == NodeStatus::Down {
            ControllerState::Stopped
        } else {
            ControllerState::Running
        };
        for c in &mut self.controllers {
            c.state = state;
        }
    }

    pub fn controllers(&self) -> &[Controller] {
        &self.controllers
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }


    pub fn clients(&self) -> &BTreeMap<String, StoreClient> {
        &self.clients
    }

    pub(crate) fn add_client(&mut self, dst: &str, client: StoreClient) {
        self.clients.insert(dst.to_string(), client);
    }

    pub fn workers(&self) -> &[Arc<Worker>] {
        &self.workers
    }

    pub(crate) fn push_worker(&mut self, w: Arc<Worker>) {
        self.workers.push(w);
    }

    pub(crate) fn take_workers(&mut self) -> Vec<Arc<Worker>> {
        std::mem::take(&mut self.workers)
    }

    pub fn initial_workers(&self) -> usize {
        self.initial_workers
    }

    /// Dispatchers of every remote store this node uses.
    pub fn dispatchers(&self) -> impl Iterator<Item = &Arc<Dispatcher>> {
        self.clients.values().filter_map(|c| c.dispatcher.as_ref())
    }

    /// Worst measured latency over the active transports of this node.
    pub fn latency_us(&self) -> Option<f64> {
        self.dispatchers()
            .filter_map(|d| d.active().and_then(|a| a.measured_latency()))
            .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.max(l))))
    }
}
