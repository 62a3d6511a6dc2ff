// Result replication between classification hosts: the same recording
// sent to two hosts is classified once, and the second host takes the
// peer's answer.

use std::error::Error;
use std::path::Path;

use eduction::marf::Source;
use eduction::sim::{simulate_pipeline, Batch, SimOptions};
use eduction::tier::ClusterConfig;

pub fn run() -> Result<(), Box<dyn Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let mut batch = Batch::from_dir(&data.join("batch"))?;
    batch.samples.truncate(1);
    let dup = batch.samples[0].clone();
    // consecutive samples land on different classification hosts
    let batch = batch.with_sample("duplicate", dup.format, dup.data);

    for on in [true, false] {
        let config = ClusterConfig::load(&data.join("pipeline_cluster.json"))?;
        let run = simulate_pipeline(config, &batch, SimOptions::seeded(5).with_replication(on))?;
        println!("replication {}:", if on { "on" } else { "off" });
        for o in &run.outcomes {
            let r = o.result.as_ref().map_err(|e| e.clone())?;
            let how = match r.source {
                Source::Computed => "computed",
                Source::Replicated => "replicated",
            };
            println!("  {:<10} {:<6} {how}", o.name, r.speaker_id);
        }
        println!("  computed {}, replicated {}", run.replication.computed, run.replication.replicated);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
