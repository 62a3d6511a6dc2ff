use std::sync::Arc;

use crate::engine::{EvalError, Value};
use crate::fabric::{DemandState, Signature};
use crate::lucid::{Context, Program};
use crate::tier::{
    Cluster, ClusterConfig, ConfigError, GenerateError, Generator, NodeStatus, Tier, Worker, WorkerConfig,
};

use super::runner::{Sim, WorkerFactory, Workload};
use super::{ResultLine, RunReport, SimError, SimOptions, EVAL_STAGE};

/// Outcome of a simulated program evaluation.
#[derive(Debug, Clone)]
pub struct ProgramRun {
    pub value: Result<Value, EvalError>,
    pub report: RunReport,
}

struct ProgramWork {
    program: Arc<Program>,
    context: Context,
    dst: String,
    root: Option<(Generator, Signature)>,
}

fn first_with(cluster: &Cluster, tier: Tier) -> Option<String> {
    cluster.nodes_with(tier).first().map(|n| n.id().to_string())
}

impl Workload for ProgramWork {
    fn prepare(&mut self, cluster: &mut Cluster) -> Result<(), SimError> {
        let missing = |t: &str| SimError::Config(ConfigError::Invalid(format!("cluster has no {t} node")));
        self.dst = first_with(cluster, Tier::Dst).ok_or_else(|| missing("DST"))?;
        let gen = first_with(cluster, Tier::Dgt).ok_or_else(|| missing("DGT"))?;
        first_with(cluster, Tier::Dwt).ok_or_else(|| missing("DWT"))?;
        let client = cluster.connect(&gen, &self.dst)?;
        let g = Generator::new(gen, client.store);
        let (sig, _) = g
            .generate_demands(&self.program, &self.context)
            .map_err(|e| match e {
                GenerateError::Program(m) => SimError::Config(ConfigError::Invalid(m)),
                GenerateError::Fabric(f) => SimError::Workload(f.to_string()),
            })?;
        self.root = Some((g, sig));
        Ok(())
    }

    fn factory(&mut self, cluster: &mut Cluster, _node: &str) -> Result<WorkerFactory, SimError> {
        let program = self.program.clone();
        let config = WorkerConfig {
            max_attempts: cluster.config().max_attempts,
            ..Default::default()
        };
        Ok(Box::new(move |id, store| {
            Worker::new(id, store)
                .with_program(program.clone())
                .with_config(config)
        }))
    }

    fn node_started(&mut self, _: &mut Cluster, _: &str, _: Option<&str>) -> Result<(), String> {
        Ok(())
    }

    fn node_crashed(&mut self, _: &str) {}

    fn pump(&mut self, _: &mut Cluster) -> Result<(), SimError> {
        Ok(())
    }

    fn done(&self, cluster: &Cluster) -> bool {
        let Some((_, sig)) = &self.root else { return true };
        cluster
            .store(&self.dst)
            .is_some_and(|s| s.state(sig) == Some(DemandState::Computed))
    }

    fn crash_target(&self, cluster: &Cluster, stage: &str) -> Option<(String, String)> {
        if stage != EVAL_STAGE {
            return None;
        }
        cluster
            .nodes_with(Tier::Dwt)
            .into_iter()
            .find(|n| n.status() == NodeStatus::Running)
            .and_then(|n| Some((n.id().to_string(), n.target()?.to_string())))
    }
}

/// Evaluates `program` at `context` on a simulated cluster.
pub fn simulate_program(
    config: ClusterConfig,
    program: &Program,
    context: &Context,
    opts: SimOptions,
) -> Result<ProgramRun, SimError> {
    let work = ProgramWork {
        program: Arc::new(program.clone()),
        context: context.clone(),
        dst: String::new(),
        root: None,
    };
    let mut sim = Sim::new(config, opts, work, false)?;
    sim.run()?;
    let (g, sig) = sim.core.workload.root.as_ref().expect("prepared");
    let value = g
        .result(sig)
        .map_err(|e| SimError::Workload(e.to_string()))?
        .ok_or_else(|| SimError::Workload("root demand has no result".into()))?;
    let line = ResultLine {
        name: "result".into(),
        value: value.as_ref().ok().copied(),
        speaker_id: None,
        distance: None,
        source: None,
        error: value.as_ref().err().map(|e| format!("{:?}: {e}", e.class())),
    };
    let report = sim.report("program", vec![line], None);
    Ok(ProgramRun { value, report })
}
