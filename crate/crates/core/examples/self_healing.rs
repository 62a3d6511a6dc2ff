// Fault injection under the autonomic manager: a worker node is killed
// mid-run, its missed heartbeats mark it down, and a standby takes its
// place. A slowed transport is detected and routed around.

use std::error::Error;

use eduction::engine::execute;
use eduction::lucid::{parse_context_spec, parse_program};
use eduction::sim::{simulate_program, Fault, SimOptions, EVAL_STAGE};
use eduction::tier::{ClusterConfig, Protocol};

pub fn run() -> Result<(), Box<dyn Error>> {
    let program = parse_program(include_str!("data/fib.lucid"))?;
    let ctx = parse_context_spec("t=18", &program)?;
    let config = || ClusterConfig::parse(include_str!("data/three_nodes.json"));

    let opts = SimOptions::seeded(7).with_fault(Fault::crash(EVAL_STAGE, 10));
    let run = simulate_program(config()?, &program, &ctx, opts)?;
    assert_eq!(run.value, Ok(execute(&program, &ctx)?.0));
    println!("value {:?} despite the crash", run.value);
    for f in &run.report.faults {
        println!("fault {:?} on {:?} at {} us", f.fault, f.node, f.at_us);
    }
    for t in &run.report.health {
        println!("health {} {:?} -> {:?} at {} us", t.node_id, t.from, t.to, t.at_us);
    }
    for h in &run.report.heals {
        println!("heal {}: requeued {}, replaced by {:?}, {:?}", h.node_id, h.requeued, h.replacement, h.outcome);
    }

    let opts = SimOptions::seeded(7).with_fault(Fault::slow(Protocol::Inproc, 20_000));
    let run = simulate_program(config()?, &program, &ctx, opts)?;
    println!("slow inproc: value {:?}", run.value);
    for s in &run.report.switches {
        println!("switch {}: {:?} -> {} ({:?})", s.client, s.from, s.to, s.reason);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
