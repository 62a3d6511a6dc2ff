// The four-stage speaker identification pipeline (load, preprocess,
// extract, classify) run as demands across a simulated cluster, checked
// against the same stages composed in-process.

use std::error::Error;
use std::path::Path;

use eduction::marf::{compose, train, training_vector, TrainingSet, Wal};
use eduction::sim::{simulate_pipeline, Batch, SimOptions};
use eduction::tier::ClusterConfig;

pub fn run() -> Result<(), Box<dyn Error>> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/data");
    let batch = Batch::from_dir(&data.join("batch"))?;
    let config = ClusterConfig::load(&data.join("pipeline_cluster.json"))?;
    println!("{} samples, {} training recordings, {:?}", batch.samples.len(), batch.training.len(), batch.method);

    let run = simulate_pipeline(config, &batch, SimOptions::seeded(1))?;

    // the same stages without the fabric
    let dir = tempfile::tempdir()?;
    let mut wal = Wal::create(&dir.path().join("direct.wal"))?;
    let mut set = TrainingSet::new(batch.method);
    for t in &batch.training {
        train(&mut set, &t.speaker, &training_vector(&t.data, t.format, batch.method)?, &mut wal)?;
    }

    for (o, s) in run.outcomes.iter().zip(&batch.samples) {
        let got = o.result.as_ref().map_err(|e| e.clone())?;
        let direct = compose(&s.data, s.format, batch.method, &set)?;
        assert_eq!(got.speaker_id, direct.speaker_id);
        println!("{:<10} {:<6} distance {:.6}", o.name, got.speaker_id, got.distance);
    }
    let d = &run.report.demands;
    println!("demands: issued {}, computed {}, deduplicated {}", d.issued, d.computed, d.deduplicated);
    println!("simulated {} ms", run.report.summary.simulated_ms);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
