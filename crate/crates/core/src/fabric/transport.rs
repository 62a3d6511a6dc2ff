use std::collections::VecDeque;
use std::io::Write;
use std::net::{SocketAddr, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU32, AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, RecvTimeoutError, SendTimeoutError, Sender};
use thiserror::Error;

use super::codec::{encode_frame, Envelope};
use super::host::{read_acked, InProcEndpoint, InProcJob};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("timed out after {0:?}")]
    Timeout(Duration),
    #[error("transport unavailable")]
    Unavailable,
    #[error("injected fault")]
    Injected,
    #[error("i/o error: {0}")]
    Io(String),
}

/// A delivery mechanism for request frames.
pub trait Transport: Send + Sync {
    /// Short protocol name, e.g. `inproc` or `tcp`.
    fn protocol(&self) -> &str;

    fn endpoint(&self) -> String;

    /// Delivers one request body and returns the reply body.
    fn round_trip(&self, body: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError>;
}

pub struct InProcTransport {
    tx: Sender<InProcJob>,
}

impl InProcTransport {
    pub fn connect(endpoint: &InProcEndpoint) -> Self {
        InProcTransport {
            tx: endpoint.sender(),
        }
    }
}

impl Transport for InProcTransport {
    fn protocol(&self) -> &str {
        "inproc"
    }

    fn endpoint(&self) -> String {
        "inproc".into()
    }

    fn round_trip(&self, body: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let (reply, rx) = bounded(1);
        let job = InProcJob {
            frame: encode_frame(body),
            reply,
        };
        match self.tx.send_timeout(job, timeout) {
            Ok(()) => {}
            Err(SendTimeoutError::Timeout(_)) => return Err(TransportError::Timeout(timeout)),
            Err(SendTimeoutError::Disconnected(_)) => return Err(TransportError::Unavailable),
        }
        let bytes = match rx.recv_timeout(timeout) {
            Ok(b) => b,
            Err(RecvTimeoutError::Timeout) => return Err(TransportError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => return Err(TransportError::Unavailable),
        };
        read_acked(&mut &bytes[..]).map_err(|e| TransportError::Io(e.to_string()))
    }
}

/// Client side of the TCP transport; keeps one connection open and
/// reconnects after a failure.
pub struct TcpTransport {
    addr: SocketAddr,
    stream: Mutex<Option<TcpStream>>,
}

impl TcpTransport {
    pub fn new(addr: SocketAddr) -> Self {
        TcpTransport {
            addr,
            stream: Mutex::new(None),
        }
    }
}

impl Transport for TcpTransport {
    fn protocol(&self) -> &str {
        "tcp"
    }

    fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    fn round_trip(&self, body: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let mut guard = self.stream.lock().expect("tcp stream");
        if guard.is_none() {
            let s = TcpStream::connect_timeout(&self.addr, timeout).map_err(io_err(timeout))?;
            s.set_nodelay(true).map_err(io_err(timeout))?;
            *guard = Some(s);
        }
        let stream = guard.as_mut().expect("connected above");
        let result = (|| {
            stream.set_read_timeout(Some(timeout))?;
            stream.set_write_timeout(Some(timeout))?;
            stream.write_all(&encode_frame(body))?;
            read_acked(stream)
        })();
        result.map_err(|e| {
            *guard = None;
            io_err(timeout)(e)
        })
    }
}

fn io_err(timeout: Duration) -> impl Fn(std::io::Error) -> TransportError {
    move |e| match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
            TransportError::Timeout(timeout)
        }
        _ => TransportError::Io(e.to_string()),
    }
}

/// Fixed-size window mean of latency samples, in microseconds.
#[derive(Debug, Clone, Default)]
pub struct RollingMean {
    window: VecDeque<u64>,
    total: u64,
}

impl RollingMean {
    pub const WINDOW: usize = 16;

    pub fn record(&mut self, sample: u64) {
        self.window.push_back(sample);
        self.total += sample;
        if self.window.len() > Self::WINDOW {
            self.total -= self.window.pop_front().unwrap_or(0);
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.window.is_empty()).then(|| self.total as f64 / self.window.len() as f64)
    }

    pub fn clear(&mut self) {
        self.window.clear();
        self.total = 0;
    }
}

/// A transport plus the measurements the dispatcher selects by.
///
/// When a modeled latency is set, round trips record that value instead of
/// the wall-clock time, which keeps simulated runs reproducible.
pub struct TransportAgent {
    name: String,
    transport: Box<dyn Transport>,
    latency: Mutex<RollingMean>,
    modeled_us: Mutex<Option<u64>>,
    available: AtomicBool,
    down: AtomicBool,
    fail_next: AtomicU32,
    round_trips: AtomicU64,
    failures: AtomicU64,
}

impl std::fmt::Debug for TransportAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TransportAgent")
            .field("name", &self.name)
            .field("endpoint", &self.endpoint())
            .field("available", &self.is_available())
            .field("latency_us", &self.measured_latency())
            .finish()
    }
}

impl TransportAgent {
    pub fn new(name: impl Into<String>, transport: Box<dyn Transport>) -> Self {
        TransportAgent {
            name: name.into(),
            transport,
            latency: Mutex::default(),
            modeled_us: Mutex::new(None),
            available: AtomicBool::new(true),
            down: AtomicBool::new(false),
            fail_next: AtomicU32::new(0),
            round_trips: AtomicU64::new(0),
            failures: AtomicU64::new(0),
        }
    }

    pub fn with_modeled_latency(self, us: u64) -> Self {
        self.set_modeled_latency(Some(us));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn protocol(&self) -> &str {
        self.transport.protocol()
    }

    pub fn endpoint(&self) -> String {
        self.transport.endpoint()
    }

    pub fn measured_latency(&self) -> Option<f64> {
        self.latency.lock().expect("latency").mean()
    }

    pub fn is_available(&self) -> bool {
        self.available.load(Ordering::SeqCst)
    }

    pub fn set_available(&self, yes: bool) {
        self.available.store(yes, Ordering::SeqCst);
    }

    /// Simulates the underlying link going down (or coming back).
    pub fn set_down(&self, down: bool) {
        self.down.store(down, Ordering::SeqCst);
    }

    /// Makes the next `n` round trips fail before delivery.
    pub fn inject_failures(&self, n: u32) {
        self.fail_next.store(n, Ordering::SeqCst);
    }

    pub fn modeled_latency(&self) -> Option<u64> {
        *self.modeled_us.lock().expect("latency model")
    }

    /// Replaces the modeled latency and forgets older samples.
    pub fn set_modeled_latency(&self, us: Option<u64>) {
        *self.modeled_us.lock().expect("latency model") = us;
        self.latency.lock().expect("latency").clear();
    }

    pub fn round_trips(&self) -> u64 {
        self.round_trips.load(Ordering::Relaxed)
    }

    pub fn failures(&self) -> u64 {
        self.failures.load(Ordering::Relaxed)
    }

    pub fn round_trip(&self, env: &Envelope, timeout: Duration) -> Result<Vec<u8>, TransportError> {
        let body = serde_json::to_vec(env).map_err(|e| TransportError::Io(e.to_string()))?;
        let res = self.deliver(&body, timeout);
        if res.is_err() {
            self.failures.fetch_add(1, Ordering::Relaxed);
        }
        res
    }

    fn deliver(&self, body: &[u8], timeout: Duration) -> Result<Vec<u8>, TransportError> {
        if self.down.load(Ordering::SeqCst) {
            return Err(TransportError::Unavailable);
        }
        if self
            .fail_next
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(TransportError::Injected);
        }
        let started = Instant::now();
        let reply = self.transport.round_trip(body, timeout)?;
        let sample = self
            .modeled_us
            .lock()
            .expect("latency model")
            .unwrap_or_else(|| started.elapsed().as_micros() as u64);
        self.latency.lock().expect("latency").record(sample);
        self.round_trips.fetch_add(1, Ordering::Relaxed);
        Ok(reply)
    }
}
