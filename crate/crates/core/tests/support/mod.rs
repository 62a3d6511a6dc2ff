#![allow(dead_code)]

use std::f64::consts::PI;

use eduction::lucid::{parse_context_spec, parse_program, Context, Program};
use eduction::marf::{write_csv, Method, SampleFormat};
use eduction::sim::Batch;
use eduction::tier::{ClusterConfig, NodeConfig, Protocol, Stage, Tier};

pub mod programs;

pub const FIB: &str =
    "dimension t; fib = if #t <= 1 then #t else fib @ t (#t - 1) + fib @ t (#t - 2); result fib";

pub fn program(src: &str) -> Program {
    parse_program(src).expect("test program parses")
}

pub fn context(p: &Program, spec: &str) -> Context {
    parse_context_spec(spec, p).expect("test context parses")
}

/// Every program tier on one node.
pub fn one_node() -> ClusterConfig {
    ClusterConfig::single_node()
}

/// A store node, a generator node and a worker node, reached over `proto`.
pub fn three_nodes(proto: Protocol) -> ClusterConfig {
    let listen = (proto == Protocol::Tcp).then_some("127.0.0.1:0");
    ClusterConfig::new(vec![
        NodeConfig::new("a", [Tier::Gmt, Tier::Dst]).with_transport(proto, listen),
        NodeConfig::new("b", [Tier::Dgt, Tier::Dwt]).with_workers(2),
        NodeConfig::new("c", [Tier::Dwt]).with_workers(2),
    ])
}

/// Three worker nodes and one standby, all feeding a store on `a`.
pub fn with_standby() -> ClusterConfig {
    ClusterConfig::new(vec![
        NodeConfig::new("a", [Tier::Gmt, Tier::Dst, Tier::Dgt]),
        NodeConfig::new("b", [Tier::Dwt]).with_workers(2),
        NodeConfig::new("c", [Tier::Dwt]),
        NodeConfig::new("z", [Tier::Dwt]).as_standby(),
    ])
}

/// One node per stage, `hosts` classification hosts, and optionally a
/// classification standby.
pub fn pipeline_cluster(hosts: usize, standby: bool) -> ClusterConfig {
    let mut nodes = vec![
        NodeConfig::new("gen", [Tier::Gmt, Tier::Dgt]),
        NodeConfig::new("s1-load", [Tier::Dst, Tier::Dwt]).with_stage(Stage::Load),
        NodeConfig::new("s2-pre", [Tier::Dst, Tier::Dwt]).with_stage(Stage::Preprocess),
        NodeConfig::new("s3-ext", [Tier::Dst, Tier::Dwt]).with_stage(Stage::Extract),
    ];
    for i in 0..hosts {
        nodes.push(
            NodeConfig::new(format!("s4-cls{i}"), [Tier::Dst, Tier::Dwt])
                .with_stage(Stage::Classify)
                .with_workers(2),
        );
    }
    if standby {
        nodes.push(
            NodeConfig::new("s9-spare", [Tier::Dwt])
                .with_stage(Stage::Classify)
                .with_workers(2)
                .as_standby(),
        );
    }
    ClusterConfig::new(nodes)
}

pub const SPEAKERS: [(&str, f64); 3] = [("alice", 3.0), ("bob", 7.0), ("carol", 12.0)];

/// A voiced recording: a tone at `cycles` periods over `n` samples plus a
/// weaker overtone.
pub fn tone(cycles: f64, phase: f64, gain: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = 2.0 * PI * cycles * i as f64 / n as f64 + phase;
            gain * (0.7 * x.sin() + 0.2 * (2.0 * x).sin())
        })
        .collect()
}

/// Training recordings for every speaker plus `samples` test recordings
/// cycling through the speakers.
pub fn batch(samples: usize, method: Method) -> Batch {
    let mut b = Batch::new(method);
    for (name, cycles) in SPEAKERS {
        for k in 0..2 {
            b = b.with_training(name, SampleFormat::Csv, write_csv(&tone(cycles, 0.3 * k as f64, 0.9, 64)));
        }
    }
    for i in 0..samples {
        let (_, cycles) = SPEAKERS[i % SPEAKERS.len()];
        let data = write_csv(&tone(cycles, 0.1 + 0.05 * i as f64, 0.5 + 0.02 * i as f64, 64));
        b = b.with_sample(&format!("sample{i:02}"), SampleFormat::Csv, data);
    }
    b
}

/// Expected speaker for sample `i` of [`batch`].
pub fn speaker_of(i: usize) -> &'static str {
    SPEAKERS[i % SPEAKERS.len()].0
}
