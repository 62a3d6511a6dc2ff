use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::engine::{EngineConfig, ErrorClass, EvalError, Evaluator, Resolver, Value, DEFAULT_MAX_DEPTH};
use crate::fabric::{
    decode_result, success, DeferOutcome, Demand, DemandKind, FabricError, IssueOutcome, Signature, StoreApi,
    WorkerId,
};
use crate::lucid::{Context, ItemId, Program};

use super::config::DEFAULT_MAX_ATTEMPTS;

/// Payload of an intensional demand: which definition to evaluate, and where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensionalPayload {
    /// Dictionary item, or `None` for the program's result expression.
    pub item: Option<usize>,
    pub context: Context,
    /// Demand hops from the root, bounded like evaluation depth.
    #[serde(default)]
    pub hops: usize,
}

impl IntensionalPayload {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("payload serializes")
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, String> {
        serde_json::from_slice(bytes).map_err(|e| format!("bad intensional payload: {e}"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FailureReason {
    class: ErrorClass,
    message: String,
}

/// Result bytes for an evaluated value.
pub fn encode_value(v: Value) -> Vec<u8> {
    success(&v.to_be_bytes())
}

/// Failure reason carrying an evaluation error's class.
pub fn encode_eval_error(e: &EvalError) -> String {
    serde_json::to_string(&FailureReason {
        class: e.class(),
        message: e.to_string(),
    })
    .expect("reason serializes")
}

/// Reads an intensional demand result back into a value or error.
pub fn decode_value(bytes: &[u8]) -> Result<Value, EvalError> {
    match decode_result(bytes) {
        Ok(body) => body
            .try_into()
            .map(Value::from_be_bytes)
            .map_err(|_| EvalError::Failed {
                class: ErrorClass::System,
                message: "malformed value".into(),
            }),
        Err(reason) => Err(match serde_json::from_str::<FailureReason>(&reason) {
            Ok(f) => EvalError::Failed {
                class: f.class,
                message: f.message,
            },
            Err(_) => EvalError::Failed {
                class: ErrorClass::System,
                message: reason,
            },
        }),
    }
}

/// Resolves identifiers through a demand store: hits come back as values,
/// misses become sub-demands and suspend the evaluation.
struct DemandResolver<'a> {
    store: &'a dyn StoreApi,
    issuer: &'a str,
    hops: usize,
    seen: HashMap<String, Value>,
    fabric_error: Option<FabricError>,
}

impl DemandResolver<'_> {
    fn fabric(&mut self, key: &str, e: FabricError) -> EvalError {
        self.fabric_error = Some(e);
        EvalError::Suspended {
            signature: key.to_string(),
        }
    }
}

impl Resolver for DemandResolver<'_> {
    fn lookup(&mut self, item: ItemId, key: &str, ctx: &Context) -> Result<Option<Value>, EvalError> {
        if let Some(v) = self.seen.get(key) {
            return Ok(Some(*v));
        }
        let sig = Signature::new(key);
        let found = match self.store.lookup(&sig) {
            Ok(found) => found,
            Err(e) => return Err(self.fabric(key, e)),
        };
        let bytes = match found {
            Some(b) => b,
            None => {
                let payload = IntensionalPayload {
                    item: Some(item.0),
                    context: ctx.clone(),
                    hops: self.hops + 1,
                };
                let d = Demand::new(sig, DemandKind::Intensional, payload.encode(), self.issuer);
                match self.store.issue(d) {
                    Ok(IssueOutcome::AlreadyComputed(b)) => b,
                    Ok(_) => {
                        return Err(EvalError::Suspended {
                            signature: key.to_string(),
                        })
                    }
                    Err(e) => return Err(self.fabric(key, e)),
                }
            }
        };
        let v = decode_value(&bytes)?;
        self.seen.insert(key.to_string(), v);
        Ok(Some(v))
    }

    fn store(&mut self, _key: String, value: Value) -> Value {
        value
    }
}

/// What a stage function asks the worker to do with its demand.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StageOutput {
    Done(Vec<u8>),
    /// Park the demand until `waiting_on` makes progress.
    Wait { waiting_on: Signature },
}

pub type StageFn = Arc<dyn Fn(&Demand) -> Result<StageOutput, String> + Send + Sync>;

/// Work functions for procedural demands, keyed by stage name.
#[derive(Clone, Default)]
pub struct WorkRegistry {
    stages: BTreeMap<String, StageFn>,
}

impl WorkRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, stage: &str, f: StageFn) {
        self.stages.insert(stage.to_string(), f);
    }

    /// Registers a pure function of the demand payload.
    pub fn register_pure<F>(&mut self, stage: &str, f: F)
    where
        F: Fn(&[u8]) -> Result<Vec<u8>, String> + Send + Sync + 'static,
    {
        self.register(stage, Arc::new(move |d: &Demand| f(&d.payload).map(StageOutput::Done)));
    }

    pub fn get(&self, stage: &str) -> Option<&StageFn> {
        self.stages.get(stage)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Processed {
    Completed,
    Failed { reason: String },
    Retried { attempt: u32 },
    Deferred { waiting_on: Signature },
}

#[derive(Debug, Default)]
pub struct WorkerCounters {
    pub completed: AtomicU64,
    pub failed: AtomicU64,
    pub retried: AtomicU64,
    pub deferred: AtomicU64,
}

#[derive(Debug, Clone, Copy)]
pub struct WorkerConfig {
    pub max_attempts: u32,
    pub max_depth: usize,
}

impl Default for WorkerConfig {
    fn default() -> Self {
        WorkerConfig {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// Demand worker: takes pending demands from a store, runs them, and
/// reports results back.
pub struct Worker {
    id: WorkerId,
    store: Arc<dyn StoreApi>,
    program: Option<Arc<Program>>,
    work: Arc<WorkRegistry>,
    config: WorkerConfig,
    counters: WorkerCounters,
}

impl Worker {
    pub fn new(id: impl Into<String>, store: Arc<dyn StoreApi>) -> Self {
        Worker {
            id: WorkerId::new(id),
            store,
            program: None,
            work: Arc::new(WorkRegistry::new()),
            config: WorkerConfig::default(),
            counters: WorkerCounters::default(),
        }
    }

    pub fn with_program(mut self, program: Arc<Program>) -> Self {
        self.program = Some(program);
        self
    }

    pub fn with_work(mut self, work: Arc<WorkRegistry>) -> Self {
        self.work = work;
        self
    }

    pub fn with_config(mut self, config: WorkerConfig) -> Self {
        self.config = config;
        self
    }

    pub fn id(&self) -> &WorkerId {
        &self.id
    }

    pub fn store(&self) -> &Arc<dyn StoreApi> {
        &self.store
    }

    pub fn counters(&self) -> &WorkerCounters {
        &self.counters
    }

    pub fn take(&self) -> Result<Option<Demand>, FabricError> {
        self.store.take_pending(&self.id)
    }

    /// Runs a taken demand and records the outcome at the store.
    pub fn process(&self, demand: Demand) -> Result<Processed, FabricError> {
        let outcome = match demand.kind {
            DemandKind::Intensional => self.intensional(&demand)?,
            _ => self.procedural(&demand),
        };
        let sig = &demand.signature;
        let processed = match outcome {
            Outcome::Done(result) => {
                self.store.complete(&demand, result)?;
                Processed::Completed
            }
            Outcome::Fail(reason) => {
                self.store.complete_failed(sig, &reason)?;
                Processed::Failed { reason }
            }
            Outcome::Retry(reason) => {
                if demand.attempt < self.config.max_attempts {
                    Processed::Retried {
                        attempt: self.store.retry(sig)?,
                    }
                } else {
                    self.store.complete_failed(sig, &reason)?;
                    Processed::Failed { reason }
                }
            }
            Outcome::Wait(on) => match self.store.defer(sig, &on)? {
                DeferOutcome::Deferred => Processed::Deferred { waiting_on: on },
                DeferOutcome::Cycle => {
                    let reason = encode_eval_error(&EvalError::Cyclic {
                        signature: sig.as_str().to_string(),
                    });
                    self.store.complete_failed(sig, &reason)?;
                    Processed::Failed { reason }
                }
            },
        };
        let c = match &processed {
            Processed::Completed => &self.counters.completed,
            Processed::Failed { .. } => &self.counters.failed,
            Processed::Retried { .. } => &self.counters.retried,
            Processed::Deferred { .. } => &self.counters.deferred,
        };
        c.fetch_add(1, Ordering::Relaxed);
        Ok(processed)
    }

    /// Takes and processes one demand; `None` when the queue was empty.
    pub fn step(&self) -> Result<Option<Processed>, FabricError> {
        match self.take()? {
            Some(d) => self.process(d).map(Some),
            None => Ok(None),
        }
    }

    /// Works until `stop` is raised, sleeping for `idle` when there is
    /// nothing to do. A demand in hand is finished before returning.
    pub fn run(&self, stop: &AtomicBool, idle: Duration) {
        while !stop.load(Ordering::SeqCst) {
            match self.step() {
                Ok(Some(_)) => {}
                Ok(None) | Err(_) => std::thread::sleep(idle),
            }
        }
    }

    fn intensional(&self, demand: &Demand) -> Result<Outcome, FabricError> {
        let Some(program) = &self.program else {
            return Ok(Outcome::Fail("worker holds no program".into()));
        };
        let payload = match IntensionalPayload::decode(&demand.payload) {
            Ok(p) => p,
            Err(e) => return Ok(Outcome::Fail(e)),
        };
        if payload.hops >= self.config.max_depth {
            return Ok(Outcome::Fail(encode_eval_error(&EvalError::DepthExceeded {
                limit: self.config.max_depth,
            })));
        }
        let node = match payload.item {
            Some(i) => match program.item(ItemId(i)) {
                Some(item) => &item.entry,
                None => {
                    return Ok(Outcome::Fail(encode_eval_error(&EvalError::UnresolvedIdentifier {
                        id: i,
                    })))
                }
            },
            None => program.result(),
        };
        let resolver = DemandResolver {
            store: self.store.as_ref(),
            issuer: &self.id.0,
            hops: payload.hops,
            seen: HashMap::new(),
            fabric_error: None,
        };
        let config = EngineConfig {
            max_depth: self.config.max_depth,
        };
        let mut ev = Evaluator::new(program, resolver, config);
        let out = ev.eval(node, &payload.context);
        if let Some(e) = ev.resolver_mut().fabric_error.take() {
            return Err(e);
        }
        Ok(match out {
            Ok(v) => Outcome::Done(encode_value(v)),
            Err(EvalError::Suspended { signature }) => Outcome::Wait(Signature::new(signature)),
            // language errors are the demand's value; retrying cannot change them
            Err(e) => Outcome::Fail(encode_eval_error(&e)),
        })
    }

    fn procedural(&self, demand: &Demand) -> Outcome {
        let Some(stage) = demand.signature.stage() else {
            return Outcome::Fail(format!("no stage in signature {}", demand.signature));
        };
        let Some(f) = self.work.get(stage) else {
            return Outcome::Fail(format!("no work function for stage {stage}"));
        };
        match f(demand) {
            Ok(StageOutput::Done(body)) => Outcome::Done(success(&body)),
            Ok(StageOutput::Wait { waiting_on }) => Outcome::Wait(waiting_on),
            Err(reason) => Outcome::Retry(reason),
        }
    }
}

enum Outcome {
    Done(Vec<u8>),
    Fail(String),
    Retry(String),
    Wait(Signature),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{decode_result, DemandState, DemandStore};

    fn demand(stage: &str, input: &[u8]) -> Demand {
        Demand::new(Signature::for_stage(stage, input), DemandKind::Procedural, input.to_vec(), "t")
    }

    #[test]
    fn procedural_runs_registered_stage() {
        let store = Arc::new(DemandStore::new());
        let mut work = WorkRegistry::new();
        work.register_pure("upper", |b| Ok(b.to_ascii_uppercase()));
        let w = Worker::new("w", store.clone()).with_work(Arc::new(work));
        let d = demand("upper", b"abc");
        let sig = d.signature.clone();
        store.issue(d).unwrap();
        assert_eq!(w.step().unwrap(), Some(Processed::Completed));
        assert_eq!(decode_result(&store.lookup(&sig).unwrap()).unwrap(), b"ABC");
    }

    #[test]
    fn failing_stage_retries_then_fails() {
        let store = Arc::new(DemandStore::new());
        let mut work = WorkRegistry::new();
        work.register_pure("bad", |_| Err("nope".into()));
        let w = Worker::new("w", store.clone()).with_work(Arc::new(work));
        let d = demand("bad", b"x");
        let sig = d.signature.clone();
        store.issue(d).unwrap();
        assert_eq!(w.step().unwrap(), Some(Processed::Retried { attempt: 2 }));
        assert_eq!(w.step().unwrap(), Some(Processed::Retried { attempt: 3 }));
        assert_eq!(w.step().unwrap(), Some(Processed::Failed { reason: "nope".into() }));
        assert_eq!(store.state(&sig), Some(DemandState::Computed));
        assert_eq!(store.demand(&sig).unwrap().kind, DemandKind::System);
        assert_eq!(decode_result(&store.lookup(&sig).unwrap()), Err("nope".into()));
        assert_eq!(w.step().unwrap(), None);
    }

    #[test]
    fn unknown_stage_fails_at_once() {
        let store = Arc::new(DemandStore::new());
        let w = Worker::new("w", store.clone());
        store.issue(demand("ghost", b"x")).unwrap();
        assert!(matches!(w.step().unwrap(), Some(Processed::Failed { .. })));
    }

    #[test]
    fn threaded_workers_stop_on_signal() {
        let store = Arc::new(DemandStore::new());
        let mut work = WorkRegistry::new();
        work.register_pure("id", |b| Ok(b.to_vec()));
        let work = Arc::new(work);
        for i in 0..100u32 {
            store.issue(demand("id", &i.to_be_bytes())).unwrap();
        }
        let stop = Arc::new(AtomicBool::new(false));
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let w = Worker::new(format!("w{i}"), store.clone()).with_work(work.clone());
                let stop = stop.clone();
                std::thread::spawn(move || w.run(&stop, Duration::from_millis(1)))
            })
            .collect();
        while store.watermark() < 100 {
            std::thread::sleep(Duration::from_millis(1));
        }
        stop.store(true, Ordering::SeqCst);
        for h in handles {
            h.join().unwrap();
        }
        assert!(store.completion_histogram().values().all(|&n| n == 1));
        assert_eq!(store.completion_histogram().len(), 100);
    }
}
