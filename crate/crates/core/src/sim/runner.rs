use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autonomic::{AutonomicManager, HealReport, HealingActions, HealthPolicy, HealthState, Metrics, Transition};
use crate::fabric::{Demand, ProtocolSwitch, StoreApi, WorkerId};
use crate::tier::{Clock, Cluster, ClusterConfig, GipsyNode, SimClock, Tier, Worker};

use super::report::FaultLine;
use super::{Fault, SimError, SimOptions};

pub(crate) type WorkerFactory = Box<dyn Fn(String, Arc<dyn StoreApi>) -> Worker>;

/// What a simulated run computes.
pub(crate) trait Workload {
    /// Sets up state and issues the initial demands.
    fn prepare(&mut self, cluster: &mut Cluster) -> Result<(), SimError>;
    /// Builds workers for `node`.
    fn factory(&mut self, cluster: &mut Cluster, node: &str) -> Result<WorkerFactory, SimError>;
    /// Called when `node` starts, possibly in place of `replacing`.
    fn node_started(&mut self, cluster: &mut Cluster, node: &str, replacing: Option<&str>) -> Result<(), String>;
    fn node_crashed(&mut self, node: &str);
    /// Runs generator-side work: forwarding results to the next stage.
    fn pump(&mut self, cluster: &mut Cluster) -> Result<(), SimError>;
    fn done(&self, cluster: &Cluster) -> bool;
    /// Node to kill for `stage`, and the store whose watermark triggers it.
    fn crash_target(&self, cluster: &Cluster, stage: &str) -> Option<(String, String)>;
}

struct Slot {
    node: String,
    target: String,
    worker: Arc<Worker>,
    hand: Option<Demand>,
}


/// Cluster-side state the manager heals through.
pub(crate) struct Core<W> {
    pub cluster: Cluster,
    pub workload: W,
    pub clock: Arc<SimClock>,
    slots: Vec<Slot>,
    lost: BTreeMap<String, Vec<(WorkerId, String)>>,
    slow: Vec<(crate::tier::Protocol, u64)>,
    pub retired: Vec<GipsyNode>,
    pub fabric_errors: u64,
}

impl<W: Workload> Core<W> {
    fn spawn(&mut self, node: &str, count: usize) -> Result<usize, SimError> {
        let factory = self.workload.factory(&mut self.cluster, node)?;
        let ws = self.cluster.spawn_workers(node, count, |id, store| factory(id, store))?;
        let target = self
            .cluster
            .node(node)
            .and_then(|n| n.target())
            .unwrap_or_default()
            .to_string();
        for w in ws {
            self.slots.push(Slot {
                node: node.to_string(),
                target: target.clone(),
                worker: w,
                hand: None,
            });
        }
        self.apply_slow();
        Ok(self.cluster.node(node).map_or(0, |n| n.workers().len()))
    }

    fn apply_slow(&self) {
        for (proto, us) in &self.slow {
            for n in self.cluster.nodes() {
                for d in n.dispatchers() {
                    for a in d.agents().iter().filter(|a| a.name() == proto.name()) {
                        if a.modeled_latency() != Some(*us) {
                            a.set_modeled_latency(Some(*us));
                        }
                    }
                }
            }
        }
    }

    fn crash(&mut self, node: &str) {
        let mut lost = Vec::new();
        self.slots.retain(|s| {
            if s.node == node {
                lost.push((s.worker.id().clone(), s.target.clone()));
                false
            } else {
                true
            }
        });
        self.lost.entry(node.to_string()).or_default().extend(lost);
        self.cluster.crash(node);
        self.workload.node_crashed(node);
    }

    /// Brings up `config` in place of `failed`.
    fn replace(&mut self, failed: &str, config: crate::tier::NodeConfig) -> Result<String, String> {
        let old = self.cluster.node(failed).ok_or_else(|| format!("unknown node {failed}"))?;
        let target = old.target().map(str::to_string);
        let id = config.id.clone();
        let workers = config.worker_count;
        if let Some(n) = self.cluster.retire(failed) {
            self.retired.push(n);
        }
        self.cluster.launch(config, target).map_err(|e| e.to_string())?;
        self.workload.node_started(&mut self.cluster, &id, Some(failed))?;
        if self.cluster.node(&id).is_some_and(|n| n.config().has(Tier::Dwt)) {
            self.spawn(&id, workers).map_err(|e| e.to_string())?;
        }
        Ok(id)
    }

    fn step_slot(&mut self, i: usize) {
        let slot = &mut self.slots[i];
        match slot.hand.take() {
            None => match slot.worker.take() {
                Ok(d) => slot.hand = d,
                Err(_) => self.fabric_errors += 1,
            },
            Some(d) => {
                if slot.worker.process(d).is_err() {
                    self.fabric_errors += 1;
                    // the worker reconnects and gives its demand back
                    if let Some(s) = self.cluster.store(&slot.target) {
                        s.requeue_lost(slot.worker.id());
                    }
                }
            }
        }
    }

    pub fn total_watermark(&self) -> u64 {
        self.cluster.hosts().map(|(_, h)| h.store().watermark()).sum()
    }

    /// Every node, live or retired, for reporting.
    pub fn all_nodes(&self) -> Vec<&GipsyNode> {
        self.cluster.nodes().chain(self.retired.iter()).collect()
    }
}

impl<W: Workload> HealingActions for Core<W> {
    fn requeue_lost(&mut self, node: &str) -> usize {
        let lost = self.lost.remove(node).unwrap_or_default();
        lost.iter()
            .filter_map(|(w, dst)| self.cluster.store(dst).map(|s| s.requeue_lost(w)))
            .sum()
    }

    fn restart_node(&mut self, node: &str) -> Result<String, String> {
        let cfg = self
            .cluster
            .node(node)
            .ok_or_else(|| format!("unknown node {node}"))?
            .config()
            .clone();
        self.replace(node, cfg)
    }

    fn activate_standby(&mut self, node: &str) -> Result<Option<String>, String> {
        let failed = self
            .cluster
            .node(node)
            .ok_or_else(|| format!("unknown node {node}"))?
            .config()
            .clone();
        match self.cluster.find_standby(&failed) {
            Some(mut standby) => {
                standby.standby = false;
                self.replace(node, standby).map(Some)
            }
            None => Ok(None),
        }
    }

    fn reselect_protocol(&mut self, node: &str) -> Vec<ProtocolSwitch> {
        let Some(n) = self.cluster.node(node) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for d in n.dispatchers() {
            let before = d.switches().len();
            let _ = d.reprobe();
            out.extend(d.switches().into_iter().skip(before));
        }
        out
    }

    fn scale_workers(&mut self, node: &str, cap_factor: usize) -> Option<usize> {
        let n = self.cluster.node(node)?;
        if !n.config().has(Tier::Dwt) || n.workers().len() >= cap_factor * n.initial_workers() {
            return None;
        }
        self.spawn(node, 1).ok()
    }
}

/// The scheduler loop around a workload.
pub(crate) struct Sim<W> {
    pub core: Core<W>,
    manager: AutonomicManager,
    rng: ChaCha8Rng,
    opts: SimOptions,
    pending: Vec<Fault>,
    pub faults: Vec<FaultLine>,
    pub transitions: Vec<Transition>,
    pub heals: Vec<HealReport>,
    pub steps: u64,
    next_beat_us: u64,
    beat_us: u64,
}

impl<W: Workload> Sim<W> {
    pub fn new(config: ClusterConfig, opts: SimOptions, workload: W, pipeline: bool) -> Result<Self, SimError> {
        for f in &opts.faults {
            f.validate(pipeline)?;
        }
        let clock = Arc::new(SimClock::new());
        let policy = HealthPolicy::from_config(&config);
        let cluster = Cluster::build(config, opts.transport, clock.clone())?;
        let mut core = Core {
            cluster,
            workload,
            clock,
            slots: Vec::new(),
            lost: BTreeMap::new(),
            slow: Vec::new(),
            retired: Vec::new(),
            fabric_errors: 0,
        };
        core.workload.prepare(&mut core.cluster)?;
        let started: Vec<(String, usize)> = core
            .cluster
            .nodes()
            .map(|n| (n.id().to_string(), n.config().worker_count))
            .collect();
        for (id, workers) in &started {
            core.workload
                .node_started(&mut core.cluster, id, None)
                .map_err(SimError::Workload)?;
            if core.cluster.node(id).is_some_and(|n| n.config().has(Tier::Dwt)) {
                core.spawn(id, *workers)?;
            }
        }
        for f in &opts.faults {
            if let Fault::Crash { stage, .. } = f {
                if core.workload.crash_target(&core.cluster, stage).is_none() {
                    return Err(SimError::Config(crate::tier::ConfigError::Invalid(format!(
                        "no node serves stage {stage:?}"
                    ))));
                }
            }
        }
        let beat_us = policy.heartbeat_interval_us;
        Ok(Sim {
            core,
            manager: AutonomicManager::new(policy),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
            pending: opts.faults.clone(),
            opts,
            faults: Vec::new(),
            transitions: Vec::new(),
            heals: Vec::new(),
            steps: 0,
            next_beat_us: beat_us,
            beat_us,
        })
    }

    pub fn now_us(&self) -> u64 {
        self.core.clock.now_us()
    }

    /// Steps until the workload is done.
    pub fn run(&mut self) -> Result<(), SimError> {
        while !self.core.workload.done(&self.core.cluster) {
            if self.steps >= self.opts.max_steps {
                return Err(SimError::Workload(format!(
                    "no completion after {} steps{}",
                    self.steps,
                    self.unhealed()
                )));
            }
            self.steps += 1;
            self.core.clock.advance_us(self.opts.tick_us);
            if self.now_us() >= self.next_beat_us {
                self.next_beat_us += self.beat_us;
                self.core.cluster.heartbeat_all();
                self.supervise();
            }
            self.inject();
            self.core.workload.pump(&mut self.core.cluster)?;
            if !self.core.slots.is_empty() {
                let i = self.rng.gen_range(0..self.core.slots.len());
                self.core.step_slot(i);
            }
        }
        Ok(())
    }

    fn unhealed(&self) -> String {
        let failed: Vec<&str> = self
            .heals
            .iter()
            .filter(|h| !matches!(h.outcome, crate::autonomic::HealOutcome::Healed))
            .map(|h| h.node_id.as_str())
            .collect();
        if failed.is_empty() {
            String::new()
        } else {
            format!("; healing failed for {}", failed.join(", "))
        }
    }

    fn inject(&mut self) {
        let mut i = 0;
        while i < self.pending.len() {
            let fired = match &self.pending[i] {
                Fault::Crash { stage, after } => {
                    match self.core.workload.crash_target(&self.core.cluster, stage) {
                        Some((node, dst)) => {
                            let wm = self.core.cluster.store(&dst).map_or(0, |s| s.watermark());
                            if wm >= *after {
                                self.core.crash(&node);
                                Some((Some(node), wm))
                            } else {
                                None
                            }
                        }
                        None => None,
                    }
                }
                Fault::Slow { transport, latency_us, after } => {
                    let wm = self.core.total_watermark();
                    if wm >= *after {
                        self.core.slow.push((*transport, *latency_us));
                        self.core.apply_slow();
                        Some((None, wm))
                    } else {
                        None
                    }
                }
            };
            match fired {
                Some((node, watermark)) => {
                    let fault = self.pending.remove(i);
                    self.faults.push(FaultLine {
                        fault,
                        node,
                        at_us: self.now_us(),
                        watermark,
                    });
                }
                None => i += 1,
            }
        }
    }

    fn supervise(&mut self) {
        let mut metrics = Metrics::default();
        for n in self.core.cluster.nodes() {
            if let Some(l) = n.latency_us() {
                metrics.latency_us.insert(n.id().to_string(), l);
            }
        }
        let transitions = self.manager.observe(self.core.cluster.registry(), &metrics);
        for t in &transitions {
            if matches!(t.to, HealthState::Down | HealthState::Degraded) {
                if let Some(h) = self.manager.node_health(&t.node_id).cloned() {
                    if let Ok(r) = self.manager.heal(&h, &mut self.core) {
                        self.heals.push(r);
                    }
                }
            }
        }
        self.transitions.extend(transitions);
    }
}

impl<W: Workload> Sim<W> {
    /// Report of the run so far; `results` and `replication` come from the
    /// workload.
    pub fn report(
        &self,
        workload: &str,
        results: Vec<super::ResultLine>,
        replication: Option<crate::marf::ReplicationStats>,
    ) -> super::RunReport {
        use super::report::{DemandLine, Header, SummaryLine, TransportLine, WarehouseLine, REPORT_VERSION};
        let mut demands = DemandLine::default();
        let mut warehouse = WarehouseLine::default();
        for (_, h) in self.core.cluster.hosts() {
            let c = h.store().counters();
            demands.issued += c.issued;
            demands.enqueued += c.enqueued;
            demands.deduplicated += c.deduplicated;
            demands.already_computed += c.already_computed;
            demands.requeued += c.requeued;
            demands.retried += c.retried;
            demands.deferred += c.deferred;
            demands.computed += h.store().watermark();
            warehouse.hits += c.lookup_hits;
            warehouse.misses += c.lookup_misses;
        }
        let mut transports = Vec::new();
        let mut switches = Vec::new();
        let mut nodes = self.core.all_nodes();
        nodes.sort_by(|a, b| (a.id(), a.incarnation()).cmp(&(b.id(), b.incarnation())));
        for n in &nodes {
            for (dst, c) in n.clients() {
                let Some(d) = &c.dispatcher else { continue };
                let active = d.active();
                for a in d.agents() {
                    transports.push(TransportLine {
                        client: d.client().to_string(),
                        dst: dst.clone(),
                        name: a.name().to_string(),
                        mean_latency_us: a.measured_latency(),
                        round_trips: a.round_trips(),
                        failures: a.failures(),
                        active: active.as_ref().is_some_and(|x| std::sync::Arc::ptr_eq(x, a)),
                    });
                }
                switches.extend(d.switches());
            }
        }
        let healed = self
            .heals
            .iter()
            .filter(|h| matches!(h.outcome, crate::autonomic::HealOutcome::Healed))
            .count();
        super::RunReport {
            header: Header {
                version: REPORT_VERSION.to_string(),
                seed: self.opts.seed,
                workload: workload.to_string(),
                transport: self.opts.transport,
                replication: self.opts.replication,
                nodes: self.core.cluster.config().nodes.len(),
            },
            results,
            demands,
            warehouse,
            transports,
            replication,
            switches,
            faults: self.faults.clone(),
            health: self.transitions.clone(),
            heals: self.heals.clone(),
            summary: SummaryLine {
                steps: self.steps,
                simulated_ms: self.now_us() / 1000,
                fabric_errors: self.core.fabric_errors,
                healed,
                heal_failures: self.heals.len() - healed,
            },
        }
    }
}
