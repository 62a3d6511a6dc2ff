//! Seeded, single-threaded cluster simulation. Workers, stage forwarders,
//! heartbeats, fault injection and the autonomic manager all advance on one
//! simulated clock, so a seed and a set of options fully determine a run.

mod runner;
mod pipeline;
mod program;
mod report;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tier::{ConfigError, Protocol, Stage, TransportMode};

pub use pipeline::{simulate_pipeline, Batch, BatchError, BatchSample, PipelineRun, SampleOutcome, TrainingSample};
pub use program::{simulate_program, ProgramRun};
pub use report::{
    DemandLine, FaultLine, Header, ReportError, ResultLine, RunReport, SummaryLine, TransportLine, WarehouseLine,
    REPORT_VERSION,
};

/// Stage name that targets the workers of a program run.
pub const EVAL_STAGE: &str = "eval";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum Fault {
    /// Kill the node serving `stage` once its store has computed `after`
    /// demands.
    Crash { stage: String, after: u64 },
    /// Raise the modeled latency of every `transport` agent once the
    /// cluster has computed `after` demands.
    Slow {
        transport: Protocol,
        latency_us: u64,
        after: u64,
    },
}

impl Fault {
    pub fn crash(stage: &str, after: u64) -> Fault {
        Fault::Crash {
            stage: stage.to_string(),
            after,
        }
    }

    pub fn slow(transport: Protocol, latency_us: u64) -> Fault {
        Fault::Slow {
            transport,
            latency_us,
            after: 1,
        }
    }

    pub(crate) fn validate(&self, pipeline: bool) -> Result<(), ConfigError> {
        match self {
            Fault::Crash { stage, .. } => {
                let known = if pipeline {
                    Stage::parse(stage).is_some()
                } else {
                    stage == EVAL_STAGE
                };
                if !known {
                    return Err(ConfigError::Invalid(format!("no stage {stage:?} to crash in this workload")));
                }
            }
            Fault::Slow { latency_us, .. } => {
                if *latency_us == 0 {
                    return Err(ConfigError::Invalid("slow latency must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOptions {
    pub seed: u64,
    pub transport: TransportMode,
    pub replication: bool,
    pub faults: Vec<Fault>,
    /// Scheduler steps before the run is declared stuck.
    pub max_steps: u64,
    /// Simulated time per scheduler step.
    pub tick_us: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            seed: 0,
            transport: TransportMode::Auto,
            replication: true,
            faults: Vec::new(),
            max_steps: 2_000_000,
            tick_us: 1_000,
        }
    }
}

impl SimOptions {
    pub fn seeded(seed: u64) -> Self {
        SimOptions {
            seed,
            ..Default::default()
        }
    }

    pub fn with_transport(mut self, t: TransportMode) -> Self {
        self.transport = t;
        self
    }

    pub fn with_replication(mut self, on: bool) -> Self {
        self.replication = on;
        self
    }

    pub fn with_fault(mut self, f: Fault) -> Self {
        self.faults.push(f);
        self
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("workload failed: {0}")]
    Workload(String),
}
