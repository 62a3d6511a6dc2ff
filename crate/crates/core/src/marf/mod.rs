//! Speaker identification pipeline pieces: sample loading, peak
//! normalization, feature extraction, nearest-neighbour classification,
//! the training-set write-ahead log and result replication between
//! classification hosts.

mod features;
mod replication;
mod sample;
mod stages;
mod training;
mod wal;

use thiserror::Error;

pub use features::{extract_features, spectrum, FeatureVector, Method, DEFAULT_BINS};
pub use replication::{
    check_remote, check_remote_then_compute, Peer, RemoteCheck, RemoteOutcome, ReplicationCounters,
    ReplicationStats,
};
pub use sample::{
    content_id, load_sample, preprocess, write_csv, write_wave_stub, Sample, SampleFormat, DEFAULT_RATE,
    WAVE_MAGIC,
};
pub use stages::{
    compose, decode_answer, load_input, next_input, run_classify, run_extract, run_load, run_preprocess,
    run_stage, training_vector, Answer, ExtractInput, LoadInput,
};
pub use training::{classify, euclidean, train, ClassificationResult, Source, TrainingSet};
pub use wal::{
    decode_record, recover, scan, LogScan, Recovery, RecoveryReport, Replica, TxnPuts, Wal, WalRecord,
    WalReplica,
};

#[derive(Debug, Error)]
pub enum MarfError {
    #[error("malformed sample: {0}")]
    Malformed(String),
    #[error("empty sample")]
    Empty,
    #[error("feature method {found:?} does not match training set method {expected:?}")]
    MethodMismatch { expected: Method, found: Method },
    #[error("feature vector has {found} values, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("log write failed: simulated crash")]
    Crashed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
