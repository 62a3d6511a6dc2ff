use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::sync::Mutex;

use thiserror::Error;

use super::demand::{Demand, DemandKind, DemandState, Signature, WorkerId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IssueOutcome {
    Enqueued,
    /// The signature is already pending or in process.
    Deduplicated,
    /// The signature was computed earlier; carries the stored result.
    AlreadyComputed(Vec<u8>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeferOutcome {
    Deferred,
    /// Waiting would close a cycle of demands waiting on each other.
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("demand store is shut down")]
    Shutdown,
    #[error("protocol error: demand {signature} is {state:?}, expected {expected:?}")]
    Protocol {
        signature: Signature,
        state: Option<DemandState>,
        expected: DemandState,
    },
    #[error("demand store is full ({0} demands)")]
    Full(usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreCounters {
    pub issued: u64,
    pub enqueued: u64,
    /// Issues answered without enqueueing, including already-computed ones.
    pub deduplicated: u64,
    pub already_computed: u64,
    pub requeued: u64,
    pub retried: u64,
    pub deferred: u64,
    pub lookup_hits: u64,
    pub lookup_misses: u64,
}

/// Point-in-time view of the store, for invariant checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreSnapshot {
    pub pending: Vec<Signature>,
    pub states: BTreeMap<Signature, DemandState>,
    pub watermark: u64,
}

impl StoreSnapshot {
    /// The pending queue holds exactly the pending demands, once each.
    pub fn is_coherent(&self) -> bool {
        let queued: HashSet<&Signature> = self.pending.iter().collect();
        queued.len() == self.pending.len()
            && self
                .states
                .iter()
                .all(|(s, st)| (*st == DemandState::Pending) == queued.contains(s))
            && self.pending.iter().all(|s| self.states.contains_key(s))
    }
}

#[derive(Debug)]
struct Entry {
    demand: Demand,
    owner: Option<WorkerId>,
    taken_seq: u64,
    waiting_on: Option<Signature>,
}

#[derive(Debug, Default)]
struct Inner {
    pending: VecDeque<Signature>,
    table: HashMap<Signature, Entry>,
    watermark: u64,
    computed_log: Vec<Signature>,
    take_seq: u64,
    counters: StoreCounters,
    shutdown: bool,
}

impl Inner {
    fn expect_in_process(&self, sig: &Signature) -> Result<(), StoreError> {
        match self.table.get(sig).map(|e| e.demand.state) {
            Some(DemandState::InProcess) => Ok(()),
            state => Err(StoreError::Protocol {
                signature: sig.clone(),
                state,
                expected: DemandState::InProcess,
            }),
        }
    }
}

/// The demand store: a FIFO queue of pending demands plus the table of every
/// demand seen, including computed results.
///
/// All operations are atomic with respect to each other.
#[derive(Debug, Default)]
pub struct DemandStore {
    inner: Mutex<Inner>,
    capacity: Option<usize>,
}

impl DemandStore {
    pub fn new() -> Self {
        DemandStore::default()
    }

    /// A store that refuses new signatures once it holds `capacity` demands.
    pub fn with_capacity(capacity: usize) -> Self {
        DemandStore {
            inner: Mutex::default(),
            capacity: Some(capacity),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("demand store lock")
    }

    pub fn issue(&self, demand: Demand) -> Result<IssueOutcome, StoreError> {
        let mut g = self.lock();
        if g.shutdown {
            return Err(StoreError::Shutdown);
        }
        if let Some(e) = g.table.get(&demand.signature) {
            let outcome = match e.demand.state {
                DemandState::Computed => {
                    IssueOutcome::AlreadyComputed(e.demand.result.clone().unwrap_or_default())
                }
                _ => IssueOutcome::Deduplicated,
            };
            g.counters.issued += 1;
            g.counters.deduplicated += 1;
            if matches!(outcome, IssueOutcome::AlreadyComputed(_)) {
                g.counters.already_computed += 1;
            }
            return Ok(outcome);
        }
        if let Some(cap) = self.capacity {
            if g.table.len() >= cap {
                return Err(StoreError::Full(cap));
            }
        }
        g.counters.issued += 1;
        g.counters.enqueued += 1;
        let mut demand = demand;
        demand.state = DemandState::Pending;
        demand.result = None;
        g.pending.push_back(demand.signature.clone());
        g.table.insert(
            demand.signature.clone(),
            Entry {
                demand,
                owner: None,
                taken_seq: 0,
                waiting_on: None,
            },
        );
        Ok(IssueOutcome::Enqueued)
    }

    /// Hands the head of the queue to `worker`.
    pub fn take_pending(&self, worker: &WorkerId) -> Option<Demand> {
        let mut g = self.lock();
        if g.shutdown {
            return None;
        }
        let sig = g.pending.pop_front()?;
        g.take_seq += 1;
        let seq = g.take_seq;
        let e = g.table.get_mut(&sig).expect("pending demand is in the table");
        e.demand.state = DemandState::InProcess;
        e.owner = Some(worker.clone());
        e.taken_seq = seq;
        Some(e.demand.clone())
    }

    pub fn complete(&self, sig: &Signature, result: Vec<u8>) -> Result<(), StoreError> {
        self.finish(sig, result, None)
    }

    /// Completes a demand as a permanent failure, re-kinding it as a system
    /// demand.
    pub fn complete_failed(&self, sig: &Signature, reason: &str) -> Result<(), StoreError> {
        self.finish(sig, super::demand::failure(reason), Some(DemandKind::System))
    }

    fn finish(
        &self,
        sig: &Signature,
        result: Vec<u8>,
        kind: Option<DemandKind>,
    ) -> Result<(), StoreError> {
        let mut g = self.lock();
        if g.shutdown {
            return Err(StoreError::Shutdown);
        }
        g.expect_in_process(sig)?;
        let e = g.table.get_mut(sig).expect("checked above");
        e.demand.state = DemandState::Computed;
        e.demand.result = Some(result);
        e.owner = None;
        e.waiting_on = None;
        if let Some(k) = kind {
            e.demand.kind = k;
        }
        g.watermark += 1;
        g.computed_log.push(sig.clone());
        Ok(())
    }

    /// Returns every demand held by `worker` to the front of the queue with
    /// its attempt count raised.
    pub fn requeue_lost(&self, worker: &WorkerId) -> usize {
        let mut g = self.lock();
        let mut lost: Vec<(u64, Signature)> = g
            .table
            .iter()
            .filter(|(_, e)| {
                e.demand.state == DemandState::InProcess && e.owner.as_ref() == Some(worker)
            })
            .map(|(s, e)| (e.taken_seq, s.clone()))
            .collect();
        lost.sort();
        for (_, sig) in lost.iter().rev() {
            let e = g.table.get_mut(sig).expect("listed above");
            e.demand.state = DemandState::Pending;
            e.demand.attempt += 1;
            e.owner = None;
            g.pending.push_front(sig.clone());
        }
        g.counters.requeued += lost.len() as u64;
        lost.len()
    }

    /// Returns an in-process demand to the front of the queue for another
    /// attempt; yields the new attempt number.
    pub fn retry(&self, sig: &Signature) -> Result<u32, StoreError> {
        let mut g = self.lock();
        g.expect_in_process(sig)?;
        let e = g.table.get_mut(sig).expect("checked above");
        e.demand.state = DemandState::Pending;
        e.demand.attempt += 1;
        e.owner = None;
        let attempt = e.demand.attempt;
        g.pending.push_front(sig.clone());
        g.counters.retried += 1;
        Ok(attempt)
    }

    /// Parks an in-process demand at the back of the queue until `waiting_on`
    /// has been computed. Refuses when the wait would be circular.
    pub fn defer(&self, sig: &Signature, waiting_on: &Signature) -> Result<DeferOutcome, StoreError> {
        let mut g = self.lock();
        g.expect_in_process(sig)?;
        let mut cursor = Some(waiting_on.clone());
        let mut steps = 0;
        while let Some(cur) = cursor {
            if &cur == sig {
                return Ok(DeferOutcome::Cycle);
            }
            steps += 1;
            if steps > g.table.len() {
                break;
            }
            cursor = g
                .table
                .get(&cur)
                .filter(|e| e.demand.state != DemandState::Computed)
                .and_then(|e| e.waiting_on.clone());
        }
        let e = g.table.get_mut(sig).expect("checked above");
        e.demand.state = DemandState::Pending;
        e.owner = None;
        e.waiting_on = Some(waiting_on.clone());
        g.pending.push_back(sig.clone());
        g.counters.deferred += 1;
        Ok(DeferOutcome::Deferred)
    }

    /// The stored result of a computed demand.
    pub fn lookup(&self, sig: &Signature) -> Option<Vec<u8>> {
        let mut g = self.lock();
        let found = g
            .table
            .get(sig)
            .filter(|e| e.demand.state == DemandState::Computed)
            .and_then(|e| e.demand.result.clone());
        if found.is_some() {
            g.counters.lookup_hits += 1;
        } else {
            g.counters.lookup_misses += 1;
        }
        found
    }

    pub fn state(&self, sig: &Signature) -> Option<DemandState> {
        self.lock().table.get(sig).map(|e| e.demand.state)
    }

    pub fn demand(&self, sig: &Signature) -> Option<Demand> {
        self.lock().table.get(sig).map(|e| e.demand.clone())
    }

    pub fn owner(&self, sig: &Signature) -> Option<WorkerId> {
        self.lock().table.get(sig).and_then(|e| e.owner.clone())
    }

    /// Computed demands in completion order, starting at log position
    /// `cursor`. Returns the entries and the next cursor.
    pub fn computed_since(&self, cursor: usize) -> (Vec<(Signature, Vec<u8>)>, usize) {
        let g = self.lock();
        let start = cursor.min(g.computed_log.len());
        let items = g.computed_log[start..]
            .iter()
            .map(|s| {
                let r = g.table[s].demand.result.clone().unwrap_or_default();
                (s.clone(), r)
            })
            .collect();
        (items, g.computed_log.len())
    }

    /// Number of computed demands.
    pub fn watermark(&self) -> u64 {
        self.lock().watermark
    }

    pub fn pending_len(&self) -> usize {
        self.lock().pending.len()
    }

    pub fn len(&self) -> usize {
        self.lock().table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_process_len(&self) -> usize {
        self.lock()
            .table
            .values()
            .filter(|e| e.demand.state == DemandState::InProcess)
            .count()
    }

    pub fn counters(&self) -> StoreCounters {
        self.lock().counters
    }

    /// How many times each signature appears in the completion log.
    pub fn completion_histogram(&self) -> BTreeMap<Signature, usize> {
        let mut h = BTreeMap::new();
        for s in &self.lock().computed_log {
            *h.entry(s.clone()).or_insert(0) += 1;
        }
        h
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        let g = self.lock();
        StoreSnapshot {
            pending: g.pending.iter().cloned().collect(),
            states: g
                .table
                .iter()
                .map(|(s, e)| (s.clone(), e.demand.state))
                .collect(),
            watermark: g.watermark,
        }
    }

    pub fn shutdown(&self) {
        self.lock().shutdown = true;
    }

    pub fn is_shutdown(&self) -> bool {
        self.lock().shutdown
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn d(sig: &str) -> Demand {
        Demand::new(sig, DemandKind::Procedural, sig.as_bytes().to_vec(), "n1")
    }

    fn w(id: &str) -> WorkerId {
        WorkerId::new(id)
    }

    #[test]
    fn fresh_signature_is_enqueued() {
        let s = DemandStore::new();
        assert_eq!(s.issue(d("A")).unwrap(), IssueOutcome::Enqueued);
        assert_eq!(s.pending_len(), 1);
    }

    #[test]
    fn second_issue_is_deduplicated() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        assert_eq!(s.issue(d("A")).unwrap(), IssueOutcome::Deduplicated);
        assert_eq!(s.pending_len(), 1);
        s.take_pending(&w("w")).unwrap();
        assert_eq!(s.issue(d("A")).unwrap(), IssueOutcome::Deduplicated);
        assert_eq!(s.pending_len(), 0);
    }

    #[test]
    fn computed_signature_returns_result() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        s.take_pending(&w("w")).unwrap();
        s.complete(&"A".into(), b"res".to_vec()).unwrap();
        assert_eq!(
            s.issue(d("A")).unwrap(),
            IssueOutcome::AlreadyComputed(b"res".to_vec())
        );
        let c = s.counters();
        assert_eq!((c.issued, c.enqueued, c.deduplicated, c.already_computed), (2, 1, 1, 1));
    }

    #[test]
    fn fifo_take() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        s.issue(d("B")).unwrap();
        let a = s.take_pending(&w("w")).unwrap();
        assert_eq!(a.signature, "A".into());
        assert_eq!(a.state, DemandState::InProcess);
        assert_eq!(s.snapshot().pending, vec![Signature::from("B")]);
    }

    #[test]
    fn empty_queue_yields_none() {
        assert!(DemandStore::new().take_pending(&w("w")).is_none());
    }

    #[test]
    fn complete_transitions() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        s.take_pending(&w("w")).unwrap();
        s.complete(&"A".into(), vec![1]).unwrap();
        assert_eq!(s.watermark(), 1);
        assert_eq!(s.state(&"A".into()), Some(DemandState::Computed));
        assert!(matches!(
            s.complete(&"A".into(), vec![1]),
            Err(StoreError::Protocol { .. })
        ));
        assert!(matches!(
            s.complete(&"nope".into(), vec![1]),
            Err(StoreError::Protocol { state: None, .. })
        ));
    }

    #[test]
    fn complete_requires_in_process() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        assert!(s.complete(&"A".into(), vec![]).is_err());
    }

    #[test]
    fn requeue_lost_puts_demands_in_front() {
        let s = DemandStore::new();
        for sig in ["A", "B", "C"] {
            s.issue(d(sig)).unwrap();
        }
        s.take_pending(&w("dead")).unwrap();
        s.take_pending(&w("dead")).unwrap();
        assert_eq!(s.requeue_lost(&w("dead")), 2);
        assert_eq!(s.requeue_lost(&w("other")), 0);
        let snap = s.snapshot();
        assert_eq!(snap.pending, vec!["A".into(), "B".into(), "C".into()] as Vec<Signature>);
        let a = s.take_pending(&w("live")).unwrap();
        assert_eq!(a.attempt, 2);
        s.complete(&a.signature, vec![]).unwrap();
        assert_eq!(s.completion_histogram()[&Signature::from("A")], 1);
    }

    #[test]
    fn defer_detects_cycles() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        s.issue(d("B")).unwrap();
        s.take_pending(&w("w")).unwrap();
        assert_eq!(s.defer(&"A".into(), &"A".into()).unwrap(), DeferOutcome::Cycle);
        assert_eq!(s.defer(&"A".into(), &"B".into()).unwrap(), DeferOutcome::Deferred);
        s.take_pending(&w("w")).unwrap(); // B
        assert_eq!(s.defer(&"B".into(), &"A".into()).unwrap(), DeferOutcome::Cycle);
        assert!(s.snapshot().is_coherent());
    }

    #[test]
    fn retry_raises_attempt() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        s.take_pending(&w("w")).unwrap();
        assert_eq!(s.retry(&"A".into()).unwrap(), 2);
        assert_eq!(s.state(&"A".into()), Some(DemandState::Pending));
    }

    #[test]
    fn shutdown_refuses_issue() {
        let s = DemandStore::new();
        s.shutdown();
        assert_eq!(s.issue(d("A")), Err(StoreError::Shutdown));
    }

    #[test]
    fn capacity_is_enforced() {
        let s = DemandStore::with_capacity(1);
        s.issue(d("A")).unwrap();
        assert_eq!(s.issue(d("B")), Err(StoreError::Full(1)));
        assert_eq!(s.issue(d("A")).unwrap(), IssueOutcome::Deduplicated);
    }

    #[test]
    fn failed_completion_is_a_system_demand() {
        let s = DemandStore::new();
        s.issue(d("A")).unwrap();
        s.take_pending(&w("w")).unwrap();
        s.complete_failed(&"A".into(), "boom").unwrap();
        let dm = s.demand(&"A".into()).unwrap();
        assert_eq!(dm.kind, DemandKind::System);
        assert_eq!(
            crate::fabric::decode_result(&dm.result.unwrap()),
            Err("boom".to_string())
        );
    }

    /// Every interleaving of two issuers and one worker (take, complete) on a
    /// one-signature store.
    #[test]
    fn dedup_over_all_interleavings() {
        #[derive(Clone, Copy, Debug)]
        enum Ev {
            IssueA,
            IssueB,
            Take,
            Complete,
        }
        fn interleavings(prefix: Vec<Ev>, a: bool, b: bool, w: usize, out: &mut Vec<Vec<Ev>>) {
            if a && b && w == 2 {
                out.push(prefix);
                return;
            }
            if !a {
                let mut p = prefix.clone();
                p.push(Ev::IssueA);
                interleavings(p, true, b, w, out);
            }
            if !b {
                let mut p = prefix.clone();
                p.push(Ev::IssueB);
                interleavings(p, a, true, w, out);
            }
            if w < 2 {
                let mut p = prefix;
                p.push(if w == 0 { Ev::Take } else { Ev::Complete });
                interleavings(p, a, b, w + 1, out);
            }
        }
        let mut all = Vec::new();
        interleavings(vec![], false, false, 0, &mut all);
        assert_eq!(all.len(), 12);
        for schedule in all {
            let s = DemandStore::new();
            let mut held = None;
            for ev in &schedule {
                match ev {
                    Ev::IssueA | Ev::IssueB => {
                        s.issue(d("X")).unwrap();
                    }
                    Ev::Take => held = s.take_pending(&w("w")),
                    Ev::Complete => {
                        if let Some(dm) = held.take() {
                            s.complete(&dm.signature, vec![7]).unwrap();
                        }
                    }
                }
                let snap = s.snapshot();
                assert!(snap.pending.len() <= 1, "{schedule:?}");
                assert!(snap.is_coherent(), "{schedule:?}");
            }
            assert!(s.counters().enqueued <= 2);
            assert!(s.completion_histogram().values().all(|&n| n == 1), "{schedule:?}");
        }
    }

    #[test]
    fn racing_takers_get_exactly_one() {
        for _ in 0..2_000 {
            let s = Arc::new(DemandStore::new());
            s.issue(d("A")).unwrap();
            let barrier = Arc::new(std::sync::Barrier::new(2));
            let hs: Vec<_> = (0..2)
                .map(|i| {
                    let s = Arc::clone(&s);
                    let b = Arc::clone(&barrier);
                    std::thread::spawn(move || {
                        b.wait();
                        s.take_pending(&WorkerId::new(format!("w{i}"))).is_some()
                    })
                })
                .collect();
            let got: usize = hs.into_iter().map(|h| h.join().unwrap() as usize).sum();
            assert_eq!(got, 1);
        }
    }
}
