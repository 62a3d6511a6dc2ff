//! Demand migration: demands, the demand store, the wire codec, transport
//! agents and the dispatcher that picks between them.

mod codec;
mod demand;
mod dispatcher;
mod host;
mod store;
mod transport;

pub use codec::{
    decode_frame, encode_frame, read_frame, write_frame, ComputedItem, Envelope, ErrorKind, Reply,
    Request, WireDemand, ACK, MAX_FRAME,
};
pub use demand::{
    decode_result, failure, success, Demand, DemandKind, DemandState, Signature, WorkerId,
};
pub use dispatcher::{
    Dispatcher, FabricError, ProtocolSwitch, StoreApi, SwitchReason, DEFAULT_REPROBE_EVERY,
    DEFAULT_TIMEOUT,
};
pub(crate) use codec::b64;
pub use host::{InProcEndpoint, StoreHost, TcpEndpoint, INPROC_CAPACITY};
pub use store::{
    DeferOutcome, DemandStore, IssueOutcome, StoreCounters, StoreError, StoreSnapshot,
};
pub use transport::{
    InProcTransport, RollingMean, TcpTransport, Transport, TransportAgent, TransportError,
};
