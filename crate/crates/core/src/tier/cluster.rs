use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fabric::{
    DemandStore, Dispatcher, InProcEndpoint, InProcTransport, StoreApi, StoreHost, TcpEndpoint, TcpTransport,
    TransportAgent,
};

use super::clock::Clock;
use super::config::{ClusterConfig, ConfigError, NodeConfig, Protocol, Stage, TransportConfig};
use super::node::{GipsyNode, StoreClient};
use super::registry::Registry;
use super::worker::Worker;
use super::{NodeStatus, Tier};

/// Which transports remote clients may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportMode {
    #[default]
    Auto,
    Inproc,
    Tcp,
}

impl TransportMode {
    fn allows(self, p: Protocol) -> bool {
        match self {
            TransportMode::Auto => true,
            TransportMode::Inproc => p == Protocol::Inproc,
            TransportMode::Tcp => p == Protocol::Tcp,
        }
    }
}

/// A demand store hosted by a node, with its listening endpoints.
pub struct DstHost {
    host: Arc<StoreHost>,
    inproc: InProcEndpoint,
    tcp: Option<TcpEndpoint>,
    offered: Vec<TransportConfig>,
}

impl DstHost {
    pub fn store(&self) -> &Arc<DemandStore> {
        self.host.store()
    }

    pub fn tcp_addr(&self) -> Option<std::net::SocketAddr> {
        self.tcp.as_ref().map(TcpEndpoint::local_addr)
    }
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Nodes of one simulated GIPSY instance, registered with a single manager
/// registry and wired to their demand stores.
pub struct Cluster {
    config: ClusterConfig,
    mode: TransportMode,
    registry: Arc<Registry>,
    hosts: BTreeMap<String, DstHost>,
    nodes: BTreeMap<String, GipsyNode>,
}

impl Cluster {
    /// Registers and starts every non-standby node.
    pub fn build(config: ClusterConfig, mode: TransportMode, clock: Arc<dyn Clock>) -> Result<Self, ConfigError> {
        config.validate()?;
        let mut c = Cluster {
            registry: Arc::new(Registry::new(clock)),
            config,
            mode,
            hosts: BTreeMap::new(),
            nodes: BTreeMap::new(),
        };
        let active: Vec<NodeConfig> = c.config.nodes.iter().filter(|n| !n.standby).cloned().collect();
        // stores first, so nodes can connect to any of them as they start
        for n in active.iter().filter(|n| n.has(Tier::Dst)) {
            let host = c.host_store(n)?;
            c.hosts.insert(n.id.clone(), host);
        }
        for n in active {
            let target = c.default_target(&n);
            c.start_node(n, target)?;
        }
        Ok(c)
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn mode(&self) -> TransportMode {
        self.mode
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn node(&self, id: &str) -> Option<&GipsyNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GipsyNode> {
        self.nodes.values()
    }

    pub fn host(&self, id: &str) -> Option<&DstHost> {
        self.hosts.get(id)
    }

    pub fn hosts(&self) -> impl Iterator<Item = (&String, &DstHost)> {
        self.hosts.iter()
    }

    pub fn store(&self, dst: &str) -> Option<&Arc<DemandStore>> {
        self.hosts.get(dst).map(DstHost::store)
    }

    /// Running nodes that carry `tier`, in id order.
    pub fn nodes_with(&self, tier: Tier) -> Vec<&GipsyNode> {
        self.nodes
            .values()
            .filter(|n| n.config().has(tier) && n.status() != NodeStatus::Down)
            .collect()
    }

    /// Running nodes serving `stage`, in id order.
    pub fn stage_nodes(&self, stage: Stage) -> Vec<&GipsyNode> {
        self.nodes
            .values()
            .filter(|n| n.config().stage == Some(stage) && n.status() != NodeStatus::Down)
            .collect()
    }

    /// The store a node works against: its own, else the first store of its
    /// stage, else the first store in the cluster.
    fn default_target(&self, n: &NodeConfig) -> Option<String> {
        if n.has(Tier::Dst) {
            return Some(n.id.clone());
        }
        let dst_nodes = self.config.nodes.iter().filter(|m| m.has(Tier::Dst) && !m.standby);
        let same_stage = dst_nodes.clone().find(|m| n.stage.is_some() && m.stage == n.stage);
        same_stage.or_else(|| dst_nodes.clone().next()).map(|m| m.id.clone())
    }

    fn start_node(&mut self, n: NodeConfig, target: Option<String>) -> Result<(), ConfigError> {
        let inc = self
            .registry
            .register_node(n.clone())
            .map_err(|e| invalid(e.to_string()))?;
        for &t in &n.tiers {
            self.registry.allocate_tier(&n.id, t).map_err(|e| invalid(e.to_string()))?;
        }
        if n.has(Tier::Dst) && !self.hosts.contains_key(&n.id) {
            self.hosts.insert(n.id.clone(), self.host_store(&n)?);
        }
        let id = n.id.clone();
        let mut node = GipsyNode::new(n, inc, target.clone());
        node.set_status(NodeStatus::Running);
        self.nodes.insert(id.clone(), node);
        if let Some(t) = target {
            self.connect(&id, &t)?;
        }
        self.registry
            .set_status(&id, NodeStatus::Running)
            .map_err(|e| invalid(e.to_string()))?;
        Ok(())
    }

    fn host_store(&self, n: &NodeConfig) -> Result<DstHost, ConfigError> {
        let host = StoreHost::new(Arc::new(DemandStore::new()));
        let inproc = InProcEndpoint::spawn(host.clone());
        let mut offered = n.transports.clone();
        if offered.is_empty() {
            offered.push(TransportConfig {
                name: Protocol::Inproc,
                listen: None,
                latency_us: None,
            });
        }
        let tcp = match n.transport(Protocol::Tcp).and_then(|t| t.listen.as_deref()) {
            Some(addr) if self.mode.allows(Protocol::Tcp) => Some(
                TcpEndpoint::bind(host.clone(), addr)
                    .map_err(|e| invalid(format!("node {}: cannot listen on {addr}: {e}", n.id)))?,
            ),
            _ => None,
        };
        Ok(DstHost {
            host,
            inproc,
            tcp,
            offered,
        })
    }

    /// Makes `dst` reachable from node `from`, through the store directly when
    /// co-located, else through a dispatcher over the offered transports.
    pub fn connect(&mut self, from: &str, dst: &str) -> Result<StoreClient, ConfigError> {
        if let Some(c) = self.nodes.get(from).and_then(|n| n.clients().get(dst)) {
            return Ok(c.clone());
        }
        let host = self
            .hosts
            .get(dst)
            .ok_or_else(|| invalid(format!("node {dst} hosts no demand store")))?;
        let client = if from == dst {
            StoreClient {
                store: host.store().clone() as Arc<dyn StoreApi>,
                dispatcher: None,
            }
        } else {
            let mut agents = Vec::new();
            for t in host.offered.iter().filter(|t| self.mode.allows(t.name)) {
                let transport: Box<dyn crate::fabric::Transport> = match t.name {
                    Protocol::Inproc => Box::new(InProcTransport::connect(&host.inproc)),
                    Protocol::Tcp => match host.tcp_addr() {
                        Some(addr) => Box::new(TcpTransport::new(addr)),
                        None => continue,
                    },
                };
                agents.push(Arc::new(
                    TransportAgent::new(t.name.name(), transport).with_modeled_latency(t.latency_us()),
                ));
            }
            if agents.is_empty() {
                return Err(invalid(format!(
                    "node {dst} offers no {:?} transport to {from}",
                    self.mode
                )));
            }
            let d = Arc::new(Dispatcher::new(from, agents));
            StoreClient {
                store: d.clone() as Arc<dyn StoreApi>,
                dispatcher: Some(d),
            }
        };
        if let Some(n) = self.nodes.get_mut(from) {
            n.add_client(dst, client.clone());
        }
        Ok(client)
    }

    /// Adds workers to a node's worker tier; `make` builds each from its id
    /// and the node's store client.
    pub fn spawn_workers<F>(&mut self, node: &str, count: usize, make: F) -> Result<Vec<Arc<Worker>>, ConfigError>
    where
        F: Fn(String, Arc<dyn StoreApi>) -> Worker,
    {
        let n = self.nodes.get(node).ok_or_else(|| invalid(format!("unknown node {node}")))?;
        if !n.config().has(Tier::Dwt) {
            return Err(invalid(format!("node {node} has no worker tier")));
        }
        let target = n
            .target()
            .ok_or_else(|| invalid(format!("node {node} has no demand store to work for")))?
            .to_string();
        let client = self.connect(node, &target)?;
        let n = self.nodes.get_mut(node).expect("checked above");
        let start = n.workers().len();
        let mut out = Vec::new();
        for i in start..start + count {
            let id = format!("{node}#{}/w{i}", n.incarnation());
            let w = Arc::new(make(id, client.store.clone()));
            n.push_worker(w.clone());
            out.push(w);
        }
        Ok(out)
    }

    /// Heartbeats from every node that is not down.
    pub fn heartbeat_all(&self) {
        for n in self.nodes.values().filter(|n| n.status() != NodeStatus::Down) {
            let _ = self.registry.heartbeat(n.id());
        }
    }

    /// Stops a node's controllers. Its workers vanish with whatever they
    /// held; its demand store, if any, stays reachable.
    pub fn crash(&mut self, node: &str) -> Vec<Arc<Worker>> {
        let Some(n) = self.nodes.get_mut(node) else {
            return Vec::new();
        };
        n.set_status(NodeStatus::Down);
        let _ = self.registry.set_status(node, NodeStatus::Down);
        n.take_workers()
    }

    /// Removes a node from the cluster and the registry.
    pub fn retire(&mut self, node: &str) -> Option<GipsyNode> {
        let _ = self.registry.deregister(node);
        self.nodes.remove(node)
    }

    /// Registers a node afresh, working against `target`.
    pub fn launch(&mut self, config: NodeConfig, target: Option<String>) -> Result<(), ConfigError> {
        let target = target.or_else(|| self.default_target(&config));
        self.start_node(config, target)
    }

    /// An unused standby able to take over `failed`.
    pub fn find_standby(&self, failed: &NodeConfig) -> Option<NodeConfig> {
        self.config
            .nodes
            .iter()
            .filter(|n| n.standby && !self.nodes.contains_key(&n.id))
            .find(|n| n.stage == failed.stage && (!failed.has(Tier::Dwt) || n.has(Tier::Dwt)))
            .cloned()
    }
}
