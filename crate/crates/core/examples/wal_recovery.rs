// Training-set durability: every update is a logged transaction, and a
// crash at any point recovers exactly the committed prefix.

use std::error::Error;

use eduction::marf::{recover, train, FeatureVector, Method, TrainingSet, Wal};

fn vector(i: usize) -> FeatureVector {
    FeatureVector {
        sample_id: format!("rec{i}"),
        method: Method::MinMax,
        values: vec![-0.1 * i as f64, 0.3 + 0.1 * i as f64],
    }
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("speakers.wal");

    // three flushes per transaction: begin, put, commit
    for crash_after in [0, 4, 6, 7, 15] {
        let mut wal = Wal::create(&path)?;
        wal.crash_after(crash_after);
        let mut set = TrainingSet::new(Method::MinMax);
        for i in 0..5 {
            if let Err(e) = train(&mut set, &format!("spk{}", i % 2), &vector(i), &mut wal) {
                println!("crash after {crash_after} flushes: {e}");
                break;
            }
        }
        drop(wal);
        let rec = recover(&path, Method::MinMax, None)?;
        println!(
            "  recovered version {} ({} vectors), replayed {}, discarded txn {:?}, truncated {} bytes",
            rec.set.version(),
            rec.set.len(),
            rec.report.replayed,
            rec.report.discarded_txn,
            rec.report.truncated_bytes
        );
    }

    // a torn tail is cut back to the last good record
    let mut bytes = std::fs::read(&path)?;
    let last = bytes.len() - 3;
    bytes[last] ^= 0x40;
    std::fs::write(&path, &bytes)?;
    let rec = recover(&path, Method::MinMax, None)?;
    println!(
        "after a bit flip in the last record: version {}, truncated {} bytes",
        rec.set.version(),
        rec.report.truncated_bytes
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
