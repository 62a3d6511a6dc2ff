use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::fabric::{decode_result, Demand, DemandKind, IssueOutcome, Signature, StoreApi};
use crate::marf::{
    check_remote_then_compute, decode_answer, load_input, next_input, recover, run_classify, run_stage,
    train, training_vector, ClassificationResult, Method, Peer, RemoteOutcome, ReplicationCounters,
    ReplicationStats, SampleFormat, Source, TrainingSet, Wal, WalReplica,
};
use crate::tier::{
    Cluster, ClusterConfig, ConfigError, NodeStatus, Stage, StageOutput, Tier, WorkRegistry, Worker, WorkerConfig,
};

use super::runner::{Sim, WorkerFactory, Workload};
use super::{ResultLine, RunReport, SimError, SimOptions};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSample {
    pub name: String,
    pub format: SampleFormat,
    pub data: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingSample {
    pub speaker: String,
    pub format: SampleFormat,
    pub data: Vec<u8>,
}

/// Samples to classify plus the recordings the classifier is trained on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub samples: Vec<BatchSample>,
    pub training: Vec<TrainingSample>,
    pub method: Method,
}

#[derive(Debug, Error)]
pub enum BatchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn read(path: &Path) -> Result<Vec<u8>, BatchError> {
    fs::read(path).map_err(|source| BatchError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Sample files in `dir`, sorted by name, with their formats.
fn sample_files(dir: &Path) -> Result<Vec<(PathBuf, SampleFormat)>, BatchError> {
    let entries = fs::read_dir(dir).map_err(|source| BatchError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for e in entries {
        let path = e
            .map_err(|source| BatchError::Io {
                path: dir.to_path_buf(),
                source,
            })?
            .path();
        let ext = path.extension().and_then(|x| x.to_str()).unwrap_or("");
        if let Some(f) = SampleFormat::from_extension(ext) {
            out.push((path, f));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

impl Batch {
    pub fn new(method: Method) -> Self {
        Batch {
            method,
            ..Default::default()
        }
    }

    pub fn with_sample(mut self, name: &str, format: SampleFormat, data: impl Into<Vec<u8>>) -> Self {
        self.samples.push(BatchSample {
            name: name.to_string(),
            format,
            data: data.into(),
        });
        self
    }

    pub fn with_training(mut self, speaker: &str, format: SampleFormat, data: impl Into<Vec<u8>>) -> Self {
        self.training.push(TrainingSample {
            speaker: speaker.to_string(),
            format,
            data: data.into(),
        });
        self
    }

    /// Reads a batch directory:
    ///
    /// * `samples/*.csv`, `samples/*.mrf`: one sample per file, in name order
    /// * `train/<speaker>.csv`: one training recording per line
    /// * `train/<speaker>.mrf`: one training recording
    /// * `pipeline.json` (optional): the feature method, e.g.
    ///   `{"method": "spectral", "bins": 16}`
    pub fn from_dir(dir: &Path) -> Result<Batch, BatchError> {
        let mut batch = Batch::default();
        let cfg = dir.join("pipeline.json");
        if cfg.exists() {
            batch.method = serde_json::from_slice(&read(&cfg)?).map_err(|e| BatchError::Invalid {
                path: cfg.clone(),
                message: e.to_string(),
            })?;
        }
        for (path, format) in sample_files(&dir.join("samples"))? {
            batch.samples.push(BatchSample {
                name: stem(&path),
                format,
                data: read(&path)?,
            });
        }
        let train_dir = dir.join("train");
        if train_dir.exists() {
            for (path, format) in sample_files(&train_dir)? {
                let speaker = stem(&path);
                let data = read(&path)?;
                match format {
                    SampleFormat::Csv => {
                        let text = String::from_utf8(data).map_err(|_| BatchError::Invalid {
                            path: path.clone(),
                            message: "csv is not UTF-8".into(),
                        })?;
                        for line in text.lines().filter(|l| !l.trim().is_empty()) {
                            batch.training.push(TrainingSample {
                                speaker: speaker.clone(),
                                format,
                                data: line.as_bytes().to_vec(),
                            });
                        }
                    }
                    SampleFormat::WaveStub => batch.training.push(TrainingSample { speaker, format, data }),
                }
            }
        }
        Ok(batch)
    }
}

/// Classification of one batch sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub name: String,
    pub result: Result<ClassificationResult, String>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub outcomes: Vec<SampleOutcome>,
    pub replication: ReplicationStats,
    pub report: RunReport,
}

/// A classification host: a demand store with its own trained log.
struct Role {
    dst: String,
    wal: PathBuf,
}

struct PipelineWork {
    batch: Batch,
    replication: bool,
    max_attempts: u32,
    dir: tempfile::TempDir,
    source: String,
    stage_dst: BTreeMap<Stage, String>,
    roles: Vec<Role>,
    sets: BTreeMap<String, Arc<TrainingSet>>,
    counters: Arc<ReplicationCounters>,
    sources: Arc<Mutex<BTreeMap<(String, Signature), Source>>>,
    waiting: BTreeMap<(String, Signature), (Stage, Vec<usize>)>,
    backlog: Vec<(usize, Stage, String, Demand)>,
    cursors: BTreeMap<(Stage, String), usize>,
    outcomes: Vec<Option<Result<ClassificationResult, String>>>,
    fabric_errors: u64,
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::Config(ConfigError::Invalid(msg.into()))
}

impl PipelineWork {
    fn role_of(&self, dst: &str) -> Option<usize> {
        self.roles.iter().position(|r| r.dst == dst)
    }

    /// Node that moves `stage` results on to the next stage; `None` while
    /// every node configured for it is down.
    fn forwarder(&self, cluster: &Cluster, stage: Stage) -> Option<String> {
        if stage == Stage::Classify {
            return Some(self.source.clone());
        }
        let configured: Vec<_> = cluster
            .nodes()
            .filter(|n| n.config().has(Tier::Dgt) && n.config().stage == Some(stage))
            .collect();
        if configured.is_empty() {
            return Some(self.source.clone());
        }
        configured
            .into_iter()
            .find(|n| n.status() == NodeStatus::Running)
            .map(|n| n.id().to_string())
    }

    fn dst_for(&self, stage: Stage, idx: usize) -> String {
        if stage == Stage::Classify {
            self.roles[idx % self.roles.len()].dst.clone()
        } else {
            self.stage_dst[&stage].clone()
        }
    }

    fn issue(&mut self, cluster: &mut Cluster, idx: usize, stage: Stage, input: Vec<u8>) {
        let dst = self.dst_for(stage, idx);
        let sig = Signature::for_stage(stage.name(), &input);
        let d = Demand::new(sig, DemandKind::Procedural, input, self.source.clone());
        self.send(cluster, idx, stage, dst, d);
    }

    fn send(&mut self, cluster: &mut Cluster, idx: usize, stage: Stage, dst: String, d: Demand) {
        let from = match stage.prev() {
            Some(p) => self.forwarder(cluster, p),
            None => Some(self.source.clone()),
        };
        let sent = from
            .ok_or(())
            .and_then(|f| cluster.connect(&f, &dst).map_err(|_| ()))
            .and_then(|c| c.store.issue(d.clone()).map_err(|_| ()));
        let sig = d.signature.clone();
        match sent {
            Ok(IssueOutcome::AlreadyComputed(bytes)) => self.advance(cluster, idx, stage, &dst, &sig, &bytes),
            Ok(_) => self
                .waiting
                .entry((dst, sig))
                .or_insert_with(|| (stage, Vec::new()))
                .1
                .push(idx),
            Err(()) => {
                self.fabric_errors += 1;
                self.backlog.push((idx, stage, dst, d));
            }
        }
    }

    fn advance(&mut self, cluster: &mut Cluster, idx: usize, stage: Stage, dst: &str, sig: &Signature, bytes: &[u8]) {
        let body = match decode_result(bytes) {
            Ok(b) => b,
            Err(reason) => {
                self.outcomes[idx] = Some(Err(reason));
                return;
            }
        };
        let Some(next) = stage.next() else {
            let source = self
                .sources
                .lock()
                .expect("sources")
                .get(&(dst.to_string(), sig.clone()))
                .copied()
                .unwrap_or(Source::Computed);
            let sample_id = crate::marf::content_id(&self.batch.samples[idx].data);
            self.outcomes[idx] = Some(decode_answer(body).map(|a| a.into_result(&sample_id, source)));
            return;
        };
        match next_input(stage, body, self.batch.method) {
            Ok(input) => self.issue(cluster, idx, next, input),
            Err(e) => self.outcomes[idx] = Some(Err(e)),
        }
    }

    fn classify_fn(&self, cluster: &mut Cluster, node: &str, host: &str) -> Result<crate::tier::StageFn, SimError> {
        let set = self.sets.get(node).cloned();
        let mut peers = Vec::new();
        if self.replication {
            for r in self.roles.iter().filter(|r| r.dst != host) {
                peers.push(Peer {
                    id: r.dst.clone(),
                    store: cluster.connect(node, &r.dst)?.store,
                });
            }
        }
        let counters = self.counters.clone();
        let sources = self.sources.clone();
        let host = host.to_string();
        Ok(Arc::new(move |d: &Demand| {
            let set = set.as_ref().ok_or("no training set loaded")?;
            let sig = &d.signature;
            let (result, source) = if peers.is_empty() {
                let r = run_classify(set, &d.payload)?;
                counters.record(Source::Computed);
                (r, Source::Computed)
            } else {
                match check_remote_then_compute(&host, sig, &peers, &counters, || run_classify(set, &d.payload))? {
                    RemoteOutcome::Done { result, source } => (result, source),
                    RemoteOutcome::Wait { peer } => {
                        return Ok(StageOutput::Wait {
                            waiting_on: Signature::new(format!("peer:{peer}:{sig}")),
                        })
                    }
                }
            };
            sources.lock().expect("sources").insert((host.clone(), sig.clone()), source);
            Ok(StageOutput::Done(result))
        }))
    }
}

impl Workload for PipelineWork {
    fn prepare(&mut self, cluster: &mut Cluster) -> Result<(), SimError> {
        let dsts: Vec<_> = cluster.nodes_with(Tier::Dst).into_iter().map(|n| n.config().clone()).collect();
        let general = dsts.iter().find(|n| n.stage.is_none()).map(|n| n.id.clone());
        for stage in Stage::ALL {
            let dst = dsts
                .iter()
                .find(|n| n.stage == Some(stage))
                .map(|n| n.id.clone())
                .or_else(|| general.clone())
                .ok_or_else(|| invalid(format!("no demand store serves stage {}", stage.name())))?;
            self.stage_dst.insert(stage, dst);
        }
        let mut role_ids: Vec<String> = dsts
            .iter()
            .filter(|n| n.stage == Some(Stage::Classify))
            .map(|n| n.id.clone())
            .collect();
        if role_ids.is_empty() {
            role_ids.push(self.stage_dst[&Stage::Classify].clone());
        }
        for stage in Stage::ALL {
            let served = cluster.nodes_with(Tier::Dwt).iter().any(|n| {
                n.target().is_some_and(|t| {
                    if stage == Stage::Classify {
                        role_ids.iter().any(|r| r == t)
                    } else {
                        t == self.stage_dst[&stage]
                    }
                })
            });
            if !served {
                return Err(invalid(format!("no worker serves stage {}", stage.name())));
            }
        }
        let dgts = cluster.nodes_with(Tier::Dgt);
        self.source = dgts
            .iter()
            .find(|n| n.config().stage.is_none())
            .or_else(|| dgts.first())
            .map(|n| n.id().to_string())
            .ok_or_else(|| invalid("cluster has no DGT node"))?;

        let mut vectors = Vec::new();
        for t in &self.batch.training {
            let fv = training_vector(&t.data, t.format, self.batch.method)
                .map_err(|e| invalid(format!("training recording for {}: {e}", t.speaker)))?;
            vectors.push((t.speaker.clone(), fv));
        }
        for id in role_ids {
            let path = self.dir.path().join(format!("{id}.wal"));
            let mut wal = Wal::create(&path).map_err(|e| SimError::Workload(e.to_string()))?;
            let mut set = TrainingSet::new(self.batch.method);
            for (speaker, fv) in &vectors {
                train(&mut set, speaker, fv, &mut wal).map_err(|e| SimError::Workload(e.to_string()))?;
            }
            self.roles.push(Role { dst: id, wal: path });
        }

        for idx in 0..self.batch.samples.len() {
            let s = &self.batch.samples[idx];
            let input = load_input(s.format, &s.data);
            self.issue(cluster, idx, Stage::Load, input);
        }
        Ok(())
    }

    fn factory(&mut self, cluster: &mut Cluster, node: &str) -> Result<WorkerFactory, SimError> {
        let mut work = WorkRegistry::new();
        for stage in [Stage::Load, Stage::Preprocess, Stage::Extract] {
            work.register_pure(stage.name(), move |input| run_stage(stage, input));
        }
        let target = cluster.node(node).and_then(|n| n.target()).map(str::to_string);
        if let Some(t) = target.filter(|t| self.role_of(t).is_some()) {
            work.register(Stage::Classify.name(), self.classify_fn(cluster, node, &t)?);
        }
        let work = Arc::new(work);
        let config = WorkerConfig {
            max_attempts: self.max_attempts,
            ..Default::default()
        };
        Ok(Box::new(move |id, store: Arc<dyn StoreApi>| {
            Worker::new(id, store).with_work(work.clone()).with_config(config)
        }))
    }

    fn node_started(&mut self, cluster: &mut Cluster, node: &str, _replacing: Option<&str>) -> Result<(), String> {
        let Some(r) = cluster.node(node).and_then(|n| n.target()).and_then(|t| self.role_of(t)) else {
            return Ok(());
        };
        let replica = (self.replication && self.roles.len() > 1)
            .then(|| WalReplica::new(&self.roles[(r + 1) % self.roles.len()].wal));
        let rec = recover(
            &self.roles[r].wal,
            self.batch.method,
            replica.as_ref().map(|x| x as &dyn crate::marf::Replica),
        )
        .map_err(|e| format!("training log of {}: {e}", self.roles[r].dst))?;
        self.sets.insert(node.to_string(), Arc::new(rec.set));
        Ok(())
    }

    fn node_crashed(&mut self, node: &str) {
        self.sets.remove(node);
    }

    fn pump(&mut self, cluster: &mut Cluster) -> Result<(), SimError> {
        for (idx, stage, dst, d) in std::mem::take(&mut self.backlog) {
            self.send(cluster, idx, stage, dst, d);
        }
        let mut stores: Vec<(Stage, String)> = Stage::ALL
            .into_iter()
            .filter(|s| *s != Stage::Classify)
            .map(|s| (s, self.stage_dst[&s].clone()))
            .collect();
        stores.extend(self.roles.iter().map(|r| (Stage::Classify, r.dst.clone())));
        for (stage, dst) in stores {
            if self.forwarder(cluster, stage).is_none() {
                continue;
            }
            let Some(store) = cluster.store(&dst).cloned() else { continue };
            let cursor = self.cursors.entry((stage, dst.clone())).or_insert(0);
            let (computed, next) = store.computed_since(*cursor);
            *cursor = next;
            for (sig, bytes) in computed {
                if sig.stage() != Some(stage.name()) {
                    continue;
                }
                if let Some((_, idxs)) = self.waiting.remove(&(dst.clone(), sig.clone())) {
                    for idx in idxs {
                        self.advance(cluster, idx, stage, &dst, &sig, &bytes);
                    }
                }
            }
        }
        Ok(())
    }

    fn done(&self, _: &Cluster) -> bool {
        self.outcomes.iter().all(Option::is_some)
    }

    fn crash_target(&self, cluster: &Cluster, stage: &str) -> Option<(String, String)> {
        let stage = Stage::parse(stage)?;
        cluster
            .stage_nodes(stage)
            .into_iter()
            .find(|n| n.config().has(Tier::Dwt) && n.status() == NodeStatus::Running)
            .and_then(|n| Some((n.id().to_string(), n.target()?.to_string())))
    }
}

/// Runs a batch through load, preprocess, extract and classify on a
/// simulated cluster.
pub fn simulate_pipeline(config: ClusterConfig, batch: &Batch, opts: SimOptions) -> Result<PipelineRun, SimError> {
    let work = PipelineWork {
        batch: batch.clone(),
        replication: opts.replication,
        max_attempts: config.max_attempts,
        dir: tempfile::tempdir().map_err(|e| SimError::Workload(e.to_string()))?,
        source: String::new(),
        stage_dst: BTreeMap::new(),
        roles: Vec::new(),
        sets: BTreeMap::new(),
        counters: Arc::new(ReplicationCounters::new()),
        sources: Arc::default(),
        waiting: BTreeMap::new(),
        backlog: Vec::new(),
        cursors: BTreeMap::new(),
        outcomes: vec![None; batch.samples.len()],
        fabric_errors: 0,
    };
    let mut sim = Sim::new(config, opts, work, true)?;
    sim.run()?;
    let w = &sim.core.workload;
    let outcomes: Vec<SampleOutcome> = batch
        .samples
        .iter()
        .zip(&w.outcomes)
        .map(|(s, o)| SampleOutcome {
            name: s.name.clone(),
            result: o.clone().expect("run finished"),
        })
        .collect();
    let lines = outcomes
        .iter()
        .map(|o| match &o.result {
            Ok(r) => ResultLine {
                name: o.name.clone(),
                value: None,
                speaker_id: Some(r.speaker_id.clone()),
                distance: Some(r.distance),
                source: Some(format!("{:?}", r.source).to_lowercase()),
                error: None,
            },
            Err(e) => ResultLine {
                name: o.name.clone(),
                value: None,
                speaker_id: None,
                distance: None,
                source: None,
                error: Some(e.clone()),
            },
        })
        .collect();
    let replication = w.counters.stats();
    let mut report = sim.report("pipeline", lines, Some(replication));
    report.summary.fabric_errors += w.fabric_errors;
    Ok(PipelineRun {
        outcomes,
        replication,
        report,
    })
}
