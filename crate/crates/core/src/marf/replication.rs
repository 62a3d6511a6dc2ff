use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::Serialize;

use crate::fabric::{decode_result, DemandState, Signature, StoreApi};

use super::training::Source;

/// Cluster-wide tallies of classification work.
#[derive(Debug, Default)]
pub struct ReplicationCounters {
    computed: AtomicU64,
    replicated: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ReplicationStats {
    pub computed: u64,
    pub replicated: u64,
}

impl ReplicationCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, source: Source) {
        match source {
            Source::Computed => self.computed.fetch_add(1, Ordering::SeqCst),
            Source::Replicated => self.replicated.fetch_add(1, Ordering::SeqCst),
        };
    }

    pub fn stats(&self) -> ReplicationStats {
        ReplicationStats {
            computed: self.computed.load(Ordering::SeqCst),
            replicated: self.replicated.load(Ordering::SeqCst),
        }
    }
}

/// Another classification host's demand store.
#[derive(Clone)]
pub struct Peer {
    pub id: String,
    pub store: Arc<dyn StoreApi>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RemoteCheck {
    /// A peer already holds a successful result; `result` is its body.
    Hit { peer: String, result: Vec<u8> },
    /// A peer that outranks this host is working on the signature.
    Wait { peer: String },
    Miss,
}

/// Asks each peer for a computed result. Unreachable peers count as misses.
/// A peer with a smaller id that holds the signature unfinished is waited
/// for, so two hosts never both compute it.
pub fn check_remote(host: &str, sig: &Signature, peers: &[Peer]) -> RemoteCheck {
    let mut wait = None;
    for p in peers.iter().filter(|p| p.id != host) {
        match p.store.state(sig) {
            Ok(Some(DemandState::Computed)) => {
                if let Ok(Some(bytes)) = p.store.lookup(sig) {
                    if let Ok(body) = decode_result(&bytes) {
                        return RemoteCheck::Hit {
                            peer: p.id.clone(),
                            result: body.to_vec(),
                        };
                    }
                }
            }
            Ok(Some(_)) if p.id.as_str() < host && wait.is_none() => wait = Some(p.id.clone()),
            _ => {}
        }
    }
    match wait {
        Some(peer) => RemoteCheck::Wait { peer },
        None => RemoteCheck::Miss,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RemoteOutcome {
    Done { result: Vec<u8>, source: Source },
    Wait { peer: String },
}

/// Returns a peer's result body when one exists, otherwise runs `compute`.
pub fn check_remote_then_compute<F>(
    host: &str,
    sig: &Signature,
    peers: &[Peer],
    counters: &ReplicationCounters,
    compute: F,
) -> Result<RemoteOutcome, String>
where
    F: FnOnce() -> Result<Vec<u8>, String>,
{
    match check_remote(host, sig, peers) {
        RemoteCheck::Hit { result, .. } => {
            counters.record(Source::Replicated);
            Ok(RemoteOutcome::Done {
                result,
                source: Source::Replicated,
            })
        }
        RemoteCheck::Wait { peer } => Ok(RemoteOutcome::Wait { peer }),
        RemoteCheck::Miss => {
            let result = compute()?;
            counters.record(Source::Computed);
            Ok(RemoteOutcome::Done {
                result,
                source: Source::Computed,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{success, Demand, DemandKind, DemandStore, WorkerId};

    fn peer(id: &str, store: &Arc<DemandStore>) -> Peer {
        Peer {
            id: id.into(),
            store: store.clone(),
        }
    }

    fn computed(store: &DemandStore, sig: &Signature, body: &[u8]) {
        store
            .issue(Demand::new(sig.clone(), DemandKind::Procedural, vec![], "t"))
            .unwrap();
        let d = store.take_pending(&WorkerId::new("w")).unwrap();
        store.complete(&d.signature, success(body)).unwrap();
    }

    #[test]
    fn peer_result_is_replicated() {
        let b = Arc::new(DemandStore::new());
        let sig = Signature::for_stage("classify", b"x");
        computed(&b, &sig, b"answer");
        let counters = ReplicationCounters::new();
        let out = check_remote_then_compute("a", &sig, &[peer("b", &b)], &counters, || {
            panic!("must not compute")
        })
        .unwrap();
        assert_eq!(
            out,
            RemoteOutcome::Done {
                result: b"answer".to_vec(),
                source: Source::Replicated
            }
        );
        assert_eq!(counters.stats(), ReplicationStats { computed: 0, replicated: 1 });
    }

    #[test]
    fn no_peers_computes() {
        let counters = ReplicationCounters::new();
        let sig = Signature::for_stage("classify", b"x");
        let out = check_remote_then_compute("a", &sig, &[], &counters, || Ok(b"r".to_vec())).unwrap();
        assert_eq!(out, RemoteOutcome::Done { result: b"r".to_vec(), source: Source::Computed });
        assert_eq!(counters.stats().computed, 1);
    }

    #[test]
    fn waits_only_for_smaller_peer() {
        let a = Arc::new(DemandStore::new());
        let sig = Signature::for_stage("classify", b"x");
        a.issue(Demand::new(sig.clone(), DemandKind::Procedural, vec![], "t")).unwrap();
        assert_eq!(check_remote("b", &sig, &[peer("a", &a)]), RemoteCheck::Wait { peer: "a".into() });
        assert_eq!(check_remote("0", &sig, &[peer("a", &a)]), RemoteCheck::Miss);
    }

    #[test]
    fn failed_peer_result_is_a_miss() {
        let b = Arc::new(DemandStore::new());
        let sig = Signature::for_stage("classify", b"x");
        b.issue(Demand::new(sig.clone(), DemandKind::Procedural, vec![], "t")).unwrap();
        b.take_pending(&WorkerId::new("w")).unwrap();
        b.complete_failed(&sig, "boom").unwrap();
        assert_eq!(check_remote("a", &sig, &[peer("b", &b)]), RemoteCheck::Miss);
    }
}
