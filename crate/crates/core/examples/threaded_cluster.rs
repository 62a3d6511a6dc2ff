// Builds a cluster from its JSON description and runs it on real threads:
// a generator on `b` issues the root demand to the store on `a`, and the
// worker tiers of `b` and `c` evaluate until the root is computed.

use std::error::Error;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use eduction::lucid::{parse_context_spec, parse_program};
use eduction::tier::{Cluster, ClusterConfig, Generator, SystemClock, TransportMode, Worker};

pub fn run() -> Result<(), Box<dyn Error>> {
    let config = ClusterConfig::parse(include_str!("data/three_nodes.json"))?;
    let program = Arc::new(parse_program(include_str!("data/fib.lucid"))?);
    let ctx = parse_context_spec("t=30", &program)?;

    let mut cluster = Cluster::build(config, TransportMode::Tcp, Arc::new(SystemClock::default()))?;
    for n in cluster.nodes() {
        println!("{:<2} {:?} {:?}", n.id(), n.config().tiers, n.status());
    }

    let stop = Arc::new(AtomicBool::new(false));
    let mut threads = Vec::new();
    for node in ["b", "c"] {
        let p = program.clone();
        let count = cluster.node(node).map_or(1, |n| n.config().worker_count);
        for w in cluster.spawn_workers(node, count, move |id, store| Worker::new(id, store).with_program(p.clone()))? {
            let stop = stop.clone();
            threads.push(thread::spawn(move || w.run(&stop, Duration::from_millis(1))));
        }
    }

    let client = cluster.connect("b", "a")?;
    let generator = Generator::new("b", client.store);
    let (root, _) = generator.generate_demands(&program, &ctx)?;
    let value = loop {
        if let Some(v) = generator.result(&root)? {
            break v?;
        }
        thread::sleep(Duration::from_millis(2));
    };
    stop.store(true, Ordering::SeqCst);
    for t in threads {
        t.join().map_err(|_| "worker panicked")?;
    }

    println!("fib(30) = {value}");
    let store = cluster.store("a").ok_or("no store on a")?;
    println!("demands computed: {}", store.watermark());
    for n in cluster.nodes() {
        let done: u64 = n.workers().iter().map(|w| w.counters().completed.load(Ordering::Relaxed)).sum();
        if !n.workers().is_empty() {
            println!("{} completed {done}", n.id());
        }
        for d in n.dispatchers() {
            for a in d.agents() {
                println!("  {} -> {}: {:?} us", n.id(), a.name(), a.measured_latency().map(|l| l.round()));
            }
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
