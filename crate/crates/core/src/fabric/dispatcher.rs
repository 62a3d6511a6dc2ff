use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use super::codec::{Envelope, ErrorKind, Reply, Request, WireDemand};
use super::demand::{Demand, DemandKind, DemandState, Signature, WorkerId};
use super::store::{DeferOutcome, DemandStore, IssueOutcome, StoreError};
use super::transport::{TransportAgent, TransportError};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);
/// Successful requests between latency re-probes of every transport.
pub const DEFAULT_REPROBE_EVERY: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FabricError {
    #[error("no transport available")]
    NoTransport,
    #[error("delivery failed: {0}")]
    Delivery(TransportError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("store rejected request ({kind:?}): {message}")]
    Rejected { kind: ErrorKind, message: String },
    #[error("unexpected reply: {0}")]
    BadReply(String),
}

impl FabricError {
    /// Whether the store refused the request as out of order.
    pub fn is_protocol(&self) -> bool {
        matches!(
            self,
            FabricError::Store(StoreError::Protocol { .. })
                | FabricError::Rejected {
                    kind: ErrorKind::Protocol,
                    ..
                }
        )
    }

    pub fn is_full(&self) -> bool {
        matches!(
            self,
            FabricError::Store(StoreError::Full(_))
                | FabricError::Rejected {
                    kind: ErrorKind::Full,
                    ..
                }
        )
    }
}

/// Operations of a demand store, local or remote.
pub trait StoreApi: Send + Sync {
    fn issue(&self, demand: Demand) -> Result<IssueOutcome, FabricError>;
    fn take_pending(&self, worker: &WorkerId) -> Result<Option<Demand>, FabricError>;
    fn complete(&self, demand: &Demand, result: Vec<u8>) -> Result<(), FabricError>;
    fn complete_failed(&self, sig: &Signature, reason: &str) -> Result<(), FabricError>;
    fn lookup(&self, sig: &Signature) -> Result<Option<Vec<u8>>, FabricError>;
    fn state(&self, sig: &Signature) -> Result<Option<DemandState>, FabricError>;
    fn requeue_lost(&self, worker: &WorkerId) -> Result<usize, FabricError>;
    fn retry(&self, sig: &Signature) -> Result<u32, FabricError>;
    fn defer(&self, sig: &Signature, waiting_on: &Signature) -> Result<DeferOutcome, FabricError>;
    fn computed_since(&self, cursor: usize) -> Result<(Vec<(Signature, Vec<u8>)>, usize), FabricError>;
}

impl StoreApi for DemandStore {
    fn issue(&self, demand: Demand) -> Result<IssueOutcome, FabricError> {
        Ok(DemandStore::issue(self, demand)?)
    }

    fn take_pending(&self, worker: &WorkerId) -> Result<Option<Demand>, FabricError> {
        Ok(DemandStore::take_pending(self, worker))
    }

    fn complete(&self, demand: &Demand, result: Vec<u8>) -> Result<(), FabricError> {
        Ok(DemandStore::complete(self, &demand.signature, result)?)
    }

    fn complete_failed(&self, sig: &Signature, reason: &str) -> Result<(), FabricError> {
        Ok(DemandStore::complete_failed(self, sig, reason)?)
    }

    fn lookup(&self, sig: &Signature) -> Result<Option<Vec<u8>>, FabricError> {
        Ok(DemandStore::lookup(self, sig))
    }

    fn state(&self, sig: &Signature) -> Result<Option<DemandState>, FabricError> {
        Ok(DemandStore::state(self, sig))
    }

    fn requeue_lost(&self, worker: &WorkerId) -> Result<usize, FabricError> {
        Ok(DemandStore::requeue_lost(self, worker))
    }

    fn retry(&self, sig: &Signature) -> Result<u32, FabricError> {
        Ok(DemandStore::retry(self, sig)?)
    }

    fn defer(&self, sig: &Signature, waiting_on: &Signature) -> Result<DeferOutcome, FabricError> {
        Ok(DemandStore::defer(self, sig, waiting_on)?)
    }

    fn computed_since(&self, cursor: usize) -> Result<(Vec<(Signature, Vec<u8>)>, usize), FabricError> {
        Ok(DemandStore::computed_since(self, cursor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchReason {
    Initial,
    LowerLatency,
    Failure,
}

/// A change of the active transport.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtocolSwitch {
    pub client: String,
    pub from: Option<String>,
    pub to: String,
    pub reason: SwitchReason,
}

/// Demand dispatcher: routes store requests over the fastest available
/// transport agent, falling back to another one on failure.
pub struct Dispatcher {
    client: String,
    agents: Vec<Arc<TransportAgent>>,
    active: Mutex<Option<usize>>,
    timeout: Duration,
    reprobe_every: u64,
    successes: AtomicU64,
    session: u64,
    rid: AtomicU64,
    switches: Mutex<Vec<ProtocolSwitch>>,
}

impl Dispatcher {
    pub fn new(client: impl Into<String>, agents: Vec<Arc<TransportAgent>>) -> Self {
        Dispatcher {
            client: client.into(),
            agents,
            active: Mutex::new(None),
            timeout: DEFAULT_TIMEOUT,
            reprobe_every: DEFAULT_REPROBE_EVERY,
            successes: AtomicU64::new(0),
            session: rand::random(),
            rid: AtomicU64::new(0),
            switches: Mutex::default(),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// Re-probe every `n` successful requests; 0 disables re-probing.
    pub fn with_reprobe_every(mut self, n: u64) -> Self {
        self.reprobe_every = n;
        self
    }

    pub fn client(&self) -> &str {
        &self.client
    }

    pub fn agents(&self) -> &[Arc<TransportAgent>] {
        &self.agents
    }

    pub fn active(&self) -> Option<Arc<TransportAgent>> {
        let idx = *self.active.lock().expect("active transport");
        idx.map(|i| Arc::clone(&self.agents[i]))
    }

    pub fn switches(&self) -> Vec<ProtocolSwitch> {
        self.switches.lock().expect("switch log").clone()
    }

    fn envelope(&self, request: Request) -> Envelope {
        Envelope {
            session: self.session,
            rid: self.rid.fetch_add(1, Ordering::SeqCst) + 1,
            from: self.client.clone(),
            request,
        }
    }

    fn ping(&self, agent: &TransportAgent) -> bool {
        let env = self.envelope(Request::Ping);
        let ok = agent.round_trip(&env, self.timeout).is_ok();
        agent.set_available(ok);
        ok
    }

    /// Makes the available agent with the lowest measured latency active.
    /// Agents without measurements are probed first; ties go to the
    /// earliest registered.
    pub fn select_protocol(&self) -> Result<Arc<TransportAgent>, FabricError> {
        self.reselect(SwitchReason::LowerLatency)
    }

    fn reselect(&self, reason: SwitchReason) -> Result<Arc<TransportAgent>, FabricError> {
        for a in &self.agents {
            if a.is_available() && a.measured_latency().is_none() {
                self.ping(a);
            }
        }
        let best = self
            .agents
            .iter()
            .enumerate()
            .filter(|(_, a)| a.is_available())
            .map(|(i, a)| (i, a.measured_latency().unwrap_or(f64::INFINITY)))
            .fold(None::<(usize, f64)>, |best, (i, l)| match best {
                Some((_, bl)) if bl <= l => best,
                _ => Some((i, l)),
            });
        let Some((idx, _)) = best else {
            *self.active.lock().expect("active transport") = None;
            return Err(FabricError::NoTransport);
        };
        let mut active = self.active.lock().expect("active transport");
        if *active != Some(idx) {
            let from = active.map(|i| self.agents[i].name().to_string());
            let reason = if from.is_none() {
                SwitchReason::Initial
            } else {
                reason
            };
            self.switches.lock().expect("switch log").push(ProtocolSwitch {
                client: self.client.clone(),
                from,
                to: self.agents[idx].name().to_string(),
                reason,
            });
            *active = Some(idx);
        }
        Ok(Arc::clone(&self.agents[idx]))
    }

    /// Pings every agent, including ones marked unavailable, then reselects.
    pub fn reprobe(&self) -> Result<Arc<TransportAgent>, FabricError> {
        for a in &self.agents {
            self.ping(a);
        }
        self.reselect(SwitchReason::LowerLatency)
    }

    /// Sends one request, retrying once on the next best transport when the
    /// active one fails.
    pub fn request(&self, request: Request) -> Result<Reply, FabricError> {
        let env = self.envelope(request);
        let agent = match self.active() {
            Some(a) if a.is_available() => a,
            _ => self.select_protocol()?,
        };
        let bytes = match agent.round_trip(&env, self.timeout) {
            Ok(b) => b,
            Err(_) => {
                agent.set_available(false);
                let fallback = self
                    .reselect(SwitchReason::Failure)
                    .map_err(|_| FabricError::Delivery(TransportError::Unavailable))?;
                fallback.round_trip(&env, self.timeout).map_err(|e| {
                    fallback.set_available(false);
                    FabricError::Delivery(e)
                })?
            }
        };
        let n = self.successes.fetch_add(1, Ordering::SeqCst) + 1;
        if self.reprobe_every > 0 && n % self.reprobe_every == 0 {
            let _ = self.reprobe();
        }
        let reply: Reply =
            serde_json::from_slice(&bytes).map_err(|e| FabricError::BadReply(e.to_string()))?;
        match reply {
            Reply::Error { kind, message } => Err(FabricError::Rejected { kind, message }),
            r => Ok(r),
        }
    }

    pub fn send_demand(&self, demand: &Demand) -> Result<IssueOutcome, FabricError> {
        match self.request(Request::Demand(WireDemand::from_demand(demand)))? {
            Reply::Enqueued => Ok(IssueOutcome::Enqueued),
            Reply::Deduplicated => Ok(IssueOutcome::Deduplicated),
            Reply::AlreadyComputed { payload } => Ok(IssueOutcome::AlreadyComputed(payload)),
            other => Err(unexpected(other)),
        }
    }

    pub fn send_result(
        &self,
        signature: &Signature,
        kind: DemandKind,
        attempt: u32,
        result: Vec<u8>,
    ) -> Result<(), FabricError> {
        let wire = WireDemand {
            signature: signature.clone(),
            kind,
            attempt,
            payload: result,
        };
        match self.request(Request::Result(wire))? {
            Reply::Done => Ok(()),
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(r: Reply) -> FabricError {
    FabricError::BadReply(format!("{r:?}"))
}

impl StoreApi for Dispatcher {
    fn issue(&self, demand: Demand) -> Result<IssueOutcome, FabricError> {
        self.send_demand(&demand)
    }

    fn take_pending(&self, worker: &WorkerId) -> Result<Option<Demand>, FabricError> {
        match self.request(Request::Take {
            worker: worker.0.clone(),
        })? {
            Reply::Demand { demand, issuer } => Ok(demand.map(|w| {
                w.into_demand(issuer.as_deref().unwrap_or_default(), DemandState::InProcess)
            })),
            other => Err(unexpected(other)),
        }
    }

    fn complete(&self, demand: &Demand, result: Vec<u8>) -> Result<(), FabricError> {
        self.send_result(&demand.signature, demand.kind, demand.attempt, result)
    }

    fn complete_failed(&self, sig: &Signature, reason: &str) -> Result<(), FabricError> {
        match self.request(Request::Fail {
            signature: sig.clone(),
            reason: reason.to_string(),
        })? {
            Reply::Done => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    fn lookup(&self, sig: &Signature) -> Result<Option<Vec<u8>>, FabricError> {
        match self.request(Request::Lookup {
            signature: sig.clone(),
        })? {
            Reply::Found { payload } => Ok(payload),
            other => Err(unexpected(other)),
        }
    }

    fn state(&self, sig: &Signature) -> Result<Option<DemandState>, FabricError> {
        match self.request(Request::State {
            signature: sig.clone(),
        })? {
            Reply::State { state } => Ok(state),
            other => Err(unexpected(other)),
        }
    }

    fn requeue_lost(&self, worker: &WorkerId) -> Result<usize, FabricError> {
        match self.request(Request::RequeueLost {
            worker: worker.0.clone(),
        })? {
            Reply::Count { n } => Ok(n),
            other => Err(unexpected(other)),
        }
    }

    fn retry(&self, sig: &Signature) -> Result<u32, FabricError> {
        match self.request(Request::Retry {
            signature: sig.clone(),
        })? {
            Reply::Attempt { attempt } => Ok(attempt),
            other => Err(unexpected(other)),
        }
    }

    fn defer(&self, sig: &Signature, waiting_on: &Signature) -> Result<DeferOutcome, FabricError> {
        match self.request(Request::Defer {
            signature: sig.clone(),
            waiting_on: waiting_on.clone(),
        })? {
            Reply::Deferred => Ok(DeferOutcome::Deferred),
            Reply::Cycle => Ok(DeferOutcome::Cycle),
            other => Err(unexpected(other)),
        }
    }

    fn computed_since(&self, cursor: usize) -> Result<(Vec<(Signature, Vec<u8>)>, usize), FabricError> {
        match self.request(Request::ComputedSince { cursor })? {
            Reply::Computed { items, cursor } => Ok((
                items.into_iter().map(|i| (i.signature, i.payload)).collect(),
                cursor,
            )),
            other => Err(unexpected(other)),
        }
    }
}
