//! Acceptance criteria, one PASS/FAIL line each.

mod support;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eduction::engine::{execute, execute_with, naive_eval, EngineConfig, NaiveEvaluator, Warehouse};
use eduction::fabric::{
    Demand, DemandKind, DemandStore, Dispatcher, InProcEndpoint, InProcTransport, Signature, StoreApi, StoreHost,
    SwitchReason, TransportAgent,
};
use eduction::marf::{classify, recover, scan, spectrum, train, FeatureVector, Method, TrainingSet, Wal, WalRecord};
use eduction::sim::{simulate_pipeline, simulate_program, Fault, SimOptions};
use eduction::tier::{Protocol, TransportMode, Worker, WorkRegistry};

use support::programs::random_program;
use support::*;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn oracle_equivalence() -> Outcome {
    let started = Instant::now();
    let mut errors = 0;
    for seed in 0..1000u64 {
        let (p, ctx) = random_program(seed);
        let fast = execute(&p, &ctx).map(|(v, _)| v);
        let slow = naive_eval(p.result(), &ctx, &p);
        match (&fast, &slow) {
            (Ok(a), Ok(b)) => ensure(a == b, || format!("seed {seed}: {a} != {b}\n{p}"))?,
            (Err(a), Err(b)) => {
                errors += 1;
                ensure(a.class() == b.class(), || format!("seed {seed}: {a} vs {b}\n{p}"))?
            }
            _ => return Err(format!("seed {seed}: {fast:?} vs {slow:?}\n{p}")),
        }
    }
    let t = started.elapsed();
    ensure(t < Duration::from_secs(10), || format!("took {t:?}"))?;
    Ok(format!("1000 programs agree ({errors} errors matched by class) in {t:.2?}"))
}

fn eduction_bound() -> Outcome {
    let p = program(FIB);
    let ctx = context(&p, "t=25");
    let w = Warehouse::new();
    let (v, stats) = execute_with(&p, &ctx, &w, EngineConfig::default()).map_err(|e| e.to_string())?;
    let ws = w.stats();
    let hits = ws.hits;
    ensure(v == 75025, || format!("fib(25) = {v}"))?;
    ensure(stats.id_evaluations <= 26, || format!("id_evaluations {}", stats.id_evaluations))?;
    ensure(hits >= 24, || {
        format!(
            "warehouse hits {hits} ({} lookups, {} distinct keys each missed once)",
            ws.hits + ws.misses,
            ws.misses
        )
    })?;
    let mut naive = NaiveEvaluator::new(&p);
    naive.eval(p.result(), &ctx).map_err(|e| e.to_string())?;
    ensure(naive.id_evaluations >= 10_000, || format!("naive {}", naive.id_evaluations))?;
    Ok(format!(
        "id_evaluations {}, hits {hits}, naive id_evaluations {}",
        stats.id_evaluations, naive.id_evaluations
    ))
}

fn demand_lifecycle() -> Outcome {
    let started = Instant::now();
    let mut work = WorkRegistry::new();
    work.register_pure("sq", |input| {
        let n = u64::from_be_bytes(input.try_into().map_err(|_| "bad input")?);
        Ok((n * n).to_be_bytes().to_vec())
    });
    let work = Arc::new(work);
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let store = Arc::new(DemandStore::new());
        let workers: Vec<Worker> = (0..4)
            .map(|i| Worker::new(format!("w{i}"), store.clone() as Arc<dyn StoreApi>).with_work(work.clone()))
            .collect();
        let mut hands: Vec<Option<Demand>> = vec![None; 4];
        let demand = |i: u64| {
            let input = i.to_be_bytes().to_vec();
            Demand::new(Signature::for_stage("sq", &input), DemandKind::Procedural, input, "gen")
        };
        let mut issued = 0u64;
        loop {
            let idle = hands.iter().all(Option::is_none) && store.pending_len() == 0;
            if issued == 500 && idle {
                break;
            }
            match rng.gen_range(0..10) {
                0..=2 if issued < 500 => {
                    store.issue(demand(issued)).map_err(|e| e.to_string())?;
                    issued += 1;
                }
                // duplicate issues must not create work
                3 if issued > 0 => {
                    store.issue(demand(rng.gen_range(0..issued))).map_err(|e| e.to_string())?;
                }
                _ => {
                    let w = rng.gen_range(0..4);
                    match hands[w].take() {
                        None => hands[w] = workers[w].take().map_err(|e| e.to_string())?,
                        Some(d) => {
                            workers[w].process(d).map_err(|e| e.to_string())?;
                        }
                    }
                }
            }
        }
        let hist = store.completion_histogram();
        ensure(hist.len() == 500, || format!("seed {seed}: {} signatures computed", hist.len()))?;
        ensure(hist.values().all(|&c| c == 1), || format!("seed {seed}: a signature completed twice"))?;
        ensure(store.pending_len() == 0, || format!("seed {seed}: queue not empty"))?;
        ensure(store.snapshot().is_coherent(), || format!("seed {seed}: incoherent store"))?;
    }
    let t = started.elapsed();
    ensure(t < Duration::from_secs(30), || format!("took {t:?}"))?;
    Ok(format!("100 seeds x 500 demands x 4 workers, each computed once, in {t:.2?}"))
}

fn distribution_transparency() -> Outcome {
    let mut checked = 0;
    let mut seed = 10_000u64;
    while checked < 10 {
        seed += 1;
        let (p, ctx) = random_program(seed);
        let Ok((local, _)) = execute(&p, &ctx) else { continue };
        let one = simulate_program(one_node(), &p, &ctx, SimOptions::seeded(seed)).map_err(|e| e.to_string())?;
        let opts = SimOptions::seeded(seed).with_transport(TransportMode::Tcp);
        let three = simulate_program(three_nodes(Protocol::Tcp), &p, &ctx, opts).map_err(|e| e.to_string())?;
        ensure(one.value == Ok(local) && three.value == Ok(local), || {
            format!("seed {seed}: local {local}, 1-node {:?}, 3-node {:?}\n{p}", one.value, three.value)
        })?;
        ensure(three.report.transports.iter().any(|t| t.name == "tcp" && t.round_trips > 0), || {
            format!("seed {seed}: no tcp traffic")
        })?;
        checked += 1;
    }
    Ok("10 programs identical locally, on 1 node and on 3 nodes over loopback TCP".into())
}

fn vectors() -> Vec<(String, FeatureVector)> {
    (0..5)
        .map(|i| {
            let fv = FeatureVector {
                sample_id: format!("t{i}"),
                method: Method::MinMax,
                values: vec![-0.1 * i as f64, 0.2 + 0.1 * i as f64],
            };
            (format!("spk{}", i % 2), fv)
        })
        .collect()
}

/// Training set after the first `k` transactions, built without a log.
fn replay(k: usize) -> BTreeMap<String, Vec<Vec<f64>>> {
    let mut m: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for (s, fv) in vectors().into_iter().take(k) {
        m.entry(s).or_default().push(fv.values);
    }
    m
}

fn wal_crash_sweep() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("t.wal");
    let txns = vectors();
    // begin, put, commit per transaction
    let flushes = 3 * txns.len() as u64;
    for n in 0..=flushes {
        let mut wal = Wal::create(&path).map_err(|e| e.to_string())?;
        wal.crash_after(n);
        let mut set = TrainingSet::new(Method::MinMax);
        for (s, fv) in &txns {
            if train(&mut set, s, fv, &mut wal).is_err() {
                break;
            }
        }
        drop(wal);
        let rec = recover(&path, Method::MinMax, None).map_err(|e| e.to_string())?;
        let committed = (n / 3) as usize;
        ensure(rec.set.entries() == &replay(committed), || format!("crash after {n} flushes"))?;
        ensure(rec.set.version() == committed as u64, || format!("crash after {n}: version {}", rec.set.version()))?;
    }

    let mut wal = Wal::create(&path).map_err(|e| e.to_string())?;
    let mut set = TrainingSet::new(Method::MinMax);
    for (s, fv) in &txns {
        train(&mut set, s, fv, &mut wal).map_err(|e| e.to_string())?;
    }
    drop(wal);
    let full = std::fs::read(&path).map_err(|e| e.to_string())?;
    // commit boundaries from the record encoder
    let mut ends = Vec::new();
    let mut off = 0;
    for (i, (s, fv)) in txns.iter().enumerate() {
        let t = i as u64 + 1;
        for r in [
            WalRecord::Begin { txn: t },
            WalRecord::Put {
                txn: t,
                speaker: s.clone(),
                values: fv.values.clone(),
            },
            WalRecord::Commit { txn: t },
        ] {
            off += r.encode().len();
        }
        ends.push(off);
    }
    ensure(off == full.len(), || format!("log is {} bytes, expected {off}", full.len()))?;
    for len in 0..=full.len() {
        std::fs::write(&path, &full[..len]).map_err(|e| e.to_string())?;
        let rec = recover(&path, Method::MinMax, None).map_err(|e| e.to_string())?;
        let committed = ends.iter().filter(|&&e| e <= len).count();
        ensure(rec.set.entries() == &replay(committed), || format!("prefix of {len} bytes"))?;
        let kept = std::fs::metadata(&path).map_err(|e| e.to_string())?.len() as usize;
        let want = ends.iter().copied().filter(|&e| e <= len).max().unwrap_or(0);
        ensure(kept == want, || format!("prefix {len}: kept {kept} bytes, want {want}"))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let last_start = ends[ends.len() - 2];
    for case in 0..100 {
        let mut bytes = full.clone();
        let i = rng.gen_range(last_start..bytes.len());
        bytes[i] ^= 1 << rng.gen_range(0..8);
        std::fs::write(&path, &bytes).map_err(|e| e.to_string())?;
        let rec = recover(&path, Method::MinMax, None).map_err(|e| e.to_string())?;
        ensure(rec.set.entries() == &replay(txns.len() - 1), || format!("bit flip case {case} at byte {i}"))?;
        ensure(scan(&std::fs::read(&path).map_err(|e| e.to_string())?).committed.len() == txns.len() - 1, || {
            format!("bit flip case {case}: log not truncated")
        })?;
    }
    Ok(format!(
        "{} flush points, {} byte prefixes, 100 tail bit flips recover the committed prefix",
        flushes + 1,
        full.len() + 1
    ))
}

fn batch_resumption() -> Outcome {
    let b = batch(20, Method::default());
    let cfg = || pipeline_cluster(1, true);
    let clean = simulate_pipeline(cfg(), &b, SimOptions::seeded(11)).map_err(|e| e.to_string())?;
    let opts = SimOptions::seeded(11).with_fault(Fault::crash("classify", 7));
    let faulty = simulate_pipeline(cfg(), &b, opts).map_err(|e| e.to_string())?;
    let multiset = |r: &eduction::sim::PipelineRun| -> Result<Vec<(String, u64)>, String> {
        let mut v = r
            .outcomes
            .iter()
            .map(|o| o.result.as_ref().map(|c| (c.speaker_id.clone(), c.distance.to_bits())))
            .collect::<Result<Vec<_>, _>>()?;
        v.sort();
        Ok(v)
    };
    ensure(multiset(&clean)? == multiset(&faulty)?, || "results differ from the failure-free run".into())?;
    let f = &faulty.report;
    ensure(f.faults.len() == 1 && f.faults[0].watermark >= 7, || format!("faults {:?}", f.faults))?;
    ensure(f.heals.iter().any(|h| h.replacement.as_deref() == Some("s9-spare")), || {
        format!("heals {:?}", f.heals)
    })?;
    ensure(f.summary.simulated_ms < 60_000, || format!("{} ms simulated", f.summary.simulated_ms))?;
    f.check().map_err(|e| e.to_string())?;
    Ok(format!(
        "20 samples, crash after {} demands healed by standby, {} ms simulated",
        f.faults[0].watermark, f.summary.simulated_ms
    ))
}

fn replication_savings() -> Outcome {
    let b = batch(1, Method::default());
    let s = b.samples[0].clone();
    let b = b.with_sample("again", s.format, s.data);
    let on = simulate_pipeline(pipeline_cluster(2, false), &b, SimOptions::seeded(3)).map_err(|e| e.to_string())?;
    let off = simulate_pipeline(pipeline_cluster(2, false), &b, SimOptions::seeded(3).with_replication(false))
        .map_err(|e| e.to_string())?;
    ensure(on.replication.computed == 1 && on.replication.replicated == 1, || {
        format!("on: {:?}", on.replication)
    })?;
    ensure(off.replication.computed == 2 && off.replication.replicated == 0, || {
        format!("off: {:?}", off.replication)
    })?;
    Ok(format!("on: {:?}; off: {:?}", on.replication, off.replication))
}

fn protocol_selection() -> Outcome {
    let host = StoreHost::new(Arc::new(DemandStore::new()));
    let ep = InProcEndpoint::spawn(host);
    let slow = Arc::new(TransportAgent::new("slow", Box::new(InProcTransport::connect(&ep))).with_modeled_latency(5000));
    let fast = Arc::new(TransportAgent::new("fast", Box::new(InProcTransport::connect(&ep))).with_modeled_latency(80));
    let d = Dispatcher::new("client", vec![slow.clone(), fast.clone()]);
    for i in 0..10 {
        let input = vec![i];
        d.issue(Demand::new(Signature::for_stage("x", &input), DemandKind::Procedural, input, "client"))
            .map_err(|e| e.to_string())?;
    }
    let active = d.active().ok_or("no active transport")?;
    ensure(active.name() == "fast", || format!("active is {}", active.name()))?;
    fast.set_down(true);
    let before = d.switches().len();
    d.issue(Demand::new("x:late", DemandKind::Procedural, vec![], "client"))
        .map_err(|e| format!("request not delivered after one retry: {e}"))?;
    let active = d.active().ok_or("no active transport")?;
    ensure(active.name() == "slow", || format!("active is {}", active.name()))?;
    let switched = d.switches()[before..].to_vec();
    ensure(
        switched.len() == 1 && switched[0].reason == SwitchReason::Failure,
        || format!("switches {switched:?}"),
    )?;
    Ok("80us transport active after 10 round trips; failover in one retry".into())
}

fn spectral_oracle() -> Outcome {
    let mut worst = 0.0f64;
    for bins in [4usize, 8, 16, 32] {
        let n = 2 * bins;
        for k in 0..bins {
            let x: Vec<f64> = (0..n).map(|j| (2.0 * PI * (k * j) as f64 / n as f64).cos()).collect();
            let got = spectrum(&x, bins);
            for (m, g) in got.iter().enumerate() {
                // direct O(n^2) sum without angle reduction
                let (mut re, mut im) = (0.0, 0.0);
                for (j, v) in x.iter().enumerate() {
                    let a = 2.0 * PI * m as f64 * j as f64 / n as f64;
                    re += v * a.cos();
                    im -= v * a.sin();
                }
                let want = (re * re + im * im).sqrt() / n as f64;
                let analytic = match (m == k, k == 0) {
                    (true, true) => 1.0,
                    (true, false) => 0.5,
                    _ => 0.0,
                };
                worst = worst.max((g - want).abs()).max((g - analytic).abs());
                ensure((g - want).abs() < 1e-9 && (g - analytic).abs() < 1e-9, || {
                    format!("F={bins} k={k} bin {m}: {g} vs dft {want}, analytic {analytic}")
                })?;
            }
        }
    }
    Ok(format!("max deviation {worst:.1e}"))
}

fn classify_invariance() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for case in 0..100 {
        let dim = rng.gen_range(2..=8);
        let method = Method::Spectral { bins: dim };
        let speakers = rng.gen_range(2..=5);
        let mut refs = Vec::new();
        for s in 0..speakers {
            for _ in 0..rng.gen_range(1..=3) {
                refs.push((format!("s{s}"), (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()));
            }
        }
        let query: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = rng.gen_range(0.01..100.0);
        let answer = |scale: f64| -> Result<String, String> {
            let mut wal = Wal::create(&dir.path().join("c.wal")).map_err(|e| e.to_string())?;
            wal.set_durable(false);
            let mut set = TrainingSet::new(method);
            for (s, v) in &refs {
                let fv = FeatureVector {
                    sample_id: "r".into(),
                    method,
                    values: v.iter().map(|x| x * scale).collect(),
                };
                train(&mut set, s, &fv, &mut wal).map_err(|e| e.to_string())?;
            }
            let q = FeatureVector {
                sample_id: "q".into(),
                method,
                values: query.iter().map(|x| x * scale).collect(),
            };
            Ok(classify(&set, &q).map_err(|e| e.to_string())?.speaker_id)
        };
        let (a, b) = (answer(1.0)?, answer(c)?);
        ensure(a == b, || format!("case {case}: {a} became {b} at scale {c}"))?;
    }
    Ok("100 random sets keep their nearest speaker under scaling".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("oracle equivalence", oracle_equivalence),
        ("eduction bound", eduction_bound),
        ("demand lifecycle", demand_lifecycle),
        ("distribution transparency", distribution_transparency),
        ("WAL crash sweep", wal_crash_sweep),
        ("batch resumption", batch_resumption),
        ("replication savings", replication_savings),
        ("protocol selection", protocol_selection),
        ("spectral oracle", spectral_oracle),
        ("classify argmin invariance", classify_invariance),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(f) {
            Ok(Ok(detail)) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {:>2} {name}: panicked", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
