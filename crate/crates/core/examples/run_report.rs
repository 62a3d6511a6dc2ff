// Simulation run reports: one JSON object per line, written to a file and
// read back with the identities checked.

use std::error::Error;

use eduction::lucid::{parse_context_spec, parse_program};
use eduction::sim::{simulate_program, RunReport, SimOptions};
use eduction::tier::ClusterConfig;

pub fn run() -> Result<(), Box<dyn Error>> {
    let program = parse_program(include_str!("data/fib.lucid"))?;
    let ctx = parse_context_spec("t=12", &program)?;
    let config = ClusterConfig::parse(include_str!("data/three_nodes.json"))?;
    let run = simulate_program(config, &program, &ctx, SimOptions::seeded(42))?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("run.jsonl");
    run.report.write(&path)?;
    let lines = RunReport::parse(&std::fs::read_to_string(&path)?)?;
    for kind in ["header", "result", "demands", "warehouse", "transport", "summary"] {
        for line in RunReport::of_type(&lines, kind) {
            println!("{line}");
        }
    }

    // the same seed gives the same report
    let again = simulate_program(
        ClusterConfig::parse(include_str!("data/three_nodes.json"))?,
        &program,
        &ctx,
        SimOptions::seeded(42),
    )?;
    println!("deterministic: {}", again.report.to_jsonl() == run.report.to_jsonl());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
