// Parses a program, evaluates it by eduction and compares the work done
// against the uncached reference evaluator.
//
// ```text
// cargo run --example evaluate
// ```

use std::error::Error;

use eduction::engine::{execute_with, EngineConfig, NaiveEvaluator, Warehouse};
use eduction::lucid::{parse_context_spec, parse_program};

const FIB: &str = include_str!("data/fib.lucid");

pub fn run() -> Result<(), Box<dyn Error>> {
    let program = parse_program(FIB)?;
    println!("{program}");
    println!("{:>4} {:>10} {:>8} {:>6} {:>10}", "t", "value", "evals", "hits", "naive");
    for t in [5, 10, 15, 20, 25] {
        let ctx = parse_context_spec(&format!("t={t}"), &program)?;
        let warehouse = Warehouse::new();
        let (v, stats) = execute_with(&program, &ctx, &warehouse, EngineConfig::default())?;
        let mut naive = NaiveEvaluator::new(&program);
        assert_eq!(naive.eval(program.result(), &ctx)?, v);
        println!(
            "{t:>4} {v:>10} {:>8} {:>6} {:>10}",
            stats.id_evaluations,
            warehouse.stats().hits,
            naive.id_evaluations
        );
    }

    // errors carry their class and source position
    let p = parse_program("dimension d; result 100 / (#d - 3)")?;
    let err = execute_with(&p, &parse_context_spec("d=3", &p)?, &Warehouse::new(), EngineConfig::default())
        .unwrap_err();
    println!("d=3: {err} ({:?})", err.class());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
