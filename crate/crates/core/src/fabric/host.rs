use std::collections::{HashMap, VecDeque};
use std::io::{self, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use crossbeam_channel::{bounded, Receiver, Sender};

use super::codec::{
    decode_frame, encode_frame, read_frame, write_frame, ComputedItem, Envelope, ErrorKind, Reply,
    Request, WireDemand, ACK,
};
use super::demand::{DemandState, WorkerId};
use super::store::{DeferOutcome, DemandStore, IssueOutcome, StoreError};

/// In-process queue capacity, in frames.
pub const INPROC_CAPACITY: usize = 1024;
const REPLY_CACHE: usize = 4096;

/// Serves decoded requests against a [`DemandStore`].
///
/// Replies are remembered per `(from, rid)` so a retried request is answered
/// without being applied twice.
type ReplyKey = (String, u64, u64);

pub struct StoreHost {
    store: Arc<DemandStore>,
    replies: Mutex<(HashMap<ReplyKey, Vec<u8>>, VecDeque<ReplyKey>)>,
}

impl StoreHost {
    pub fn new(store: Arc<DemandStore>) -> Arc<Self> {
        Arc::new(StoreHost {
            store,
            replies: Mutex::default(),
        })
    }

    pub fn store(&self) -> &Arc<DemandStore> {
        &self.store
    }

    /// Handles one request body and returns the reply body.
    pub fn handle(&self, body: &[u8]) -> Vec<u8> {
        let env: Envelope = match serde_json::from_slice(body) {
            Ok(e) => e,
            Err(e) => {
                return serde_json::to_vec(&Reply::Error {
                    kind: ErrorKind::BadRequest,
                    message: e.to_string(),
                })
                .expect("reply serializes")
            }
        };
        let key = (env.from.clone(), env.session, env.rid);
        if let Some(r) = self.replies.lock().expect("reply cache").0.get(&key) {
            return r.clone();
        }
        let reply = serde_json::to_vec(&self.apply(&env.from, env.request)).expect("reply serializes");
        let mut cache = self.replies.lock().expect("reply cache");
        cache.0.insert(key.clone(), reply.clone());
        cache.1.push_back(key);
        if cache.1.len() > REPLY_CACHE {
            if let Some(old) = cache.1.pop_front() {
                cache.0.remove(&old);
            }
        }
        reply
    }

    fn apply(&self, from: &str, req: Request) -> Reply {
        let s = &self.store;
        let res: Result<Reply, StoreError> = match req {
            Request::Demand(w) => s.issue(w.into_demand(from, DemandState::Pending)).map(|o| match o {
                IssueOutcome::Enqueued => Reply::Enqueued,
                IssueOutcome::Deduplicated => Reply::Deduplicated,
                IssueOutcome::AlreadyComputed(payload) => Reply::AlreadyComputed { payload },
            }),
            Request::Result(w) => s.complete(&w.signature, w.payload).map(|_| Reply::Done),
            Request::Fail { signature, reason } => {
                s.complete_failed(&signature, &reason).map(|_| Reply::Done)
            }
            Request::Take { worker } => {
                let d = s.take_pending(&WorkerId::new(worker));
                Ok(Reply::Demand {
                    issuer: d.as_ref().map(|d| d.issuer.clone()),
                    demand: d.as_ref().map(WireDemand::from_demand),
                })
            }
            Request::Lookup { signature } => Ok(Reply::Found {
                payload: s.lookup(&signature),
            }),
            Request::State { signature } => Ok(Reply::State {
                state: s.state(&signature),
            }),
            Request::RequeueLost { worker } => Ok(Reply::Count {
                n: s.requeue_lost(&WorkerId::new(worker)),
            }),
            Request::Retry { signature } => s.retry(&signature).map(|attempt| Reply::Attempt { attempt }),
            Request::Defer {
                signature,
                waiting_on,
            } => s.defer(&signature, &waiting_on).map(|o| match o {
                DeferOutcome::Deferred => Reply::Deferred,
                DeferOutcome::Cycle => Reply::Cycle,
            }),
            Request::ComputedSince { cursor } => {
                let (items, cursor) = s.computed_since(cursor);
                Ok(Reply::Computed {
                    items: items
                        .into_iter()
                        .map(|(signature, payload)| ComputedItem { signature, payload })
                        .collect(),
                    cursor,
                })
            }
            Request::Ping => Ok(Reply::Pong),
        };
        res.unwrap_or_else(|e| Reply::Error {
            kind: match e {
                StoreError::Shutdown => ErrorKind::Shutdown,
                StoreError::Protocol { .. } => ErrorKind::Protocol,
                StoreError::Full(_) => ErrorKind::Full,
            },
            message: e.to_string(),
        })
    }

    fn respond(&self, frame: &[u8]) -> Vec<u8> {
        let reply = match decode_frame(frame) {
            Ok(body) => self.handle(body),
            Err(e) => serde_json::to_vec(&Reply::Error {
                kind: ErrorKind::BadRequest,
                message: e.to_string(),
            })
            .expect("reply serializes"),
        };
        let mut out = Vec::with_capacity(reply.len() + 5);
        out.push(ACK);
        out.extend_from_slice(&encode_frame(&reply));
        out
    }
}

pub(crate) struct InProcJob {
    pub frame: Vec<u8>,
    pub reply: Sender<Vec<u8>>,
}

/// A store host reachable through a bounded in-process frame queue.
pub struct InProcEndpoint {
    tx: Sender<InProcJob>,
}

impl InProcEndpoint {
    pub fn spawn(host: Arc<StoreHost>) -> Self {
        let (tx, rx): (Sender<InProcJob>, Receiver<InProcJob>) = bounded(INPROC_CAPACITY);
        // the thread exits once every sender, including transports, is gone
        std::thread::Builder::new()
            .name("dst-inproc".into())
            .spawn(move || {
                for job in rx {
                    let _ = job.reply.send(host.respond(&job.frame));
                }
            })
            .expect("spawn in-process host");
        InProcEndpoint { tx }
    }

    pub(crate) fn sender(&self) -> Sender<InProcJob> {
        self.tx.clone()
    }
}

/// A store host listening on TCP.
pub struct TcpEndpoint {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    conns: Arc<Mutex<Vec<TcpStream>>>,
    acceptor: Option<JoinHandle<()>>,
}

impl TcpEndpoint {
    pub fn bind(host: Arc<StoreHost>, addr: &str) -> io::Result<Self> {
        let listener = TcpListener::bind(addr)?;
        let addr = listener.local_addr()?;
        let stop = Arc::new(AtomicBool::new(false));
        let conns: Arc<Mutex<Vec<TcpStream>>> = Arc::default();
        let acceptor = {
            let stop = Arc::clone(&stop);
            let conns = Arc::clone(&conns);
            std::thread::Builder::new()
                .name(format!("dst-tcp-{addr}"))
                .spawn(move || {
                    for stream in listener.incoming() {
                        if stop.load(Ordering::SeqCst) {
                            break;
                        }
                        let Ok(stream) = stream else { continue };
                        let _ = stream.set_nodelay(true);
                        if let Ok(c) = stream.try_clone() {
                            conns.lock().expect("conn list").push(c);
                        }
                        let host = Arc::clone(&host);
                        std::thread::spawn(move || serve_connection(host, stream));
                    }
                })?
        };
        Ok(TcpEndpoint {
            addr,
            stop,
            conns,
            acceptor: Some(acceptor),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        let _ = TcpStream::connect(self.addr);
        for c in self.conns.lock().expect("conn list").drain(..) {
            let _ = c.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn serve_connection(host: Arc<StoreHost>, mut stream: TcpStream) {
    loop {
        let body = match read_frame(&mut stream) {
            Ok(b) => b,
            Err(_) => return,
        };
        let reply = host.handle(&body);
        if stream.write_all(&[ACK]).is_err() || write_frame(&mut stream, &reply).is_err() {
            return;
        }
    }
}

/// Reads an ack byte followed by one frame.
pub(crate) fn read_acked<R: Read>(r: &mut R) -> io::Result<Vec<u8>> {
    let mut ack = [0u8; 1];
    r.read_exact(&mut ack)?;
    if ack[0] != ACK {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("expected ack 0x06, got {:#04x}", ack[0]),
        ));
    }
    read_frame(r)
}
