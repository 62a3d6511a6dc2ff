//! Nodes and tiers: the manager registry, demand generators and workers,
//! and clusters assembled from a JSON description.

mod clock;
mod cluster;
mod config;
mod generator;
mod node;
mod registry;
mod worker;

use serde::{Deserialize, Serialize};

pub use clock::{Clock, SimClock, SystemClock};
pub use config::{
    ClusterConfig, ConfigError, NodeConfig, Protocol, Replacement, Stage, TransportConfig, DEFAULT_HEARTBEAT_MS,
    DEFAULT_HEARTBEAT_TIMEOUT_INTERVALS, DEFAULT_LATENCY_DEGRADED_US, DEFAULT_MAX_ATTEMPTS, INPROC_LATENCY_US,
    TCP_LATENCY_US,
};
pub use cluster::{Cluster, DstHost, TransportMode};
pub use generator::{root_demand, GenerateError, Generator};
pub use node::{Controller, ControllerState, GipsyNode, StoreClient};
pub use registry::{NodeRecord, Registry, RegistryError};
pub use worker::{
    decode_value, encode_eval_error, encode_value, IntensionalPayload, Processed, StageFn, StageOutput, WorkRegistry,
    Worker, WorkerConfig, WorkerCounters,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "GMT")]
    Gmt,
    #[serde(rename = "DST")]
    Dst,
    #[serde(rename = "DGT")]
    Dgt,
    #[serde(rename = "DWT")]
    Dwt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Starting,
    Running,
    Down,
}
