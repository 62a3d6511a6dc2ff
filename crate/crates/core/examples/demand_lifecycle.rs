// The demand store on its own: issue, deduplicate, take, complete, and
// recover the demands of a worker that died holding them.

use std::error::Error;
use std::sync::Arc;

use eduction::fabric::{Demand, DemandKind, DemandStore, IssueOutcome, Signature, StoreApi, WorkerId};
use eduction::tier::{WorkRegistry, Worker};

fn demand(n: u64) -> Demand {
    let input = n.to_be_bytes().to_vec();
    Demand::new(Signature::for_stage("cube", &input), DemandKind::Procedural, input, "example")
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let store = Arc::new(DemandStore::new());
    for n in [1, 2, 3, 2, 1] {
        let outcome = store.issue(demand(n))?;
        println!("issue {n}: {outcome:?}");
    }

    let crashed = WorkerId::new("crashed");
    let held = store.take_pending(&crashed).ok_or("queue is empty")?;
    println!("{crashed} took {} and died", held.signature);
    println!("requeued {}", store.requeue_lost(&crashed));

    let mut work = WorkRegistry::new();
    work.register_pure("cube", |input| {
        let n = u64::from_be_bytes(input.try_into().map_err(|_| "expected 8 bytes")?);
        Ok((n * n * n).to_be_bytes().to_vec())
    });
    let worker = Worker::new("w0", store.clone() as Arc<dyn StoreApi>).with_work(Arc::new(work));
    while let Some(p) = worker.step()? {
        println!("w0: {p:?}");
    }

    if let IssueOutcome::AlreadyComputed(bytes) = store.issue(demand(3))? {
        println!("issue 3 again: already computed ({} bytes)", bytes.len());
    }
    let c = store.counters();
    println!(
        "issued {} = enqueued {} + deduplicated {}; requeued {}",
        c.issued, c.enqueued, c.deduplicated, c.requeued
    );
    println!("completions per signature: {:?}", store.completion_histogram().values().collect::<Vec<_>>());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
