use std::sync::Arc;

use crate::engine::{EvalError, Value};
use crate::fabric::{Demand, DemandKind, FabricError, IssueOutcome, Signature, StoreApi};
use crate::lucid::{Context, Expr, Program};

use super::worker::{decode_value, IntensionalPayload};

/// The root demand for `program` at `context`. A result that is a bare
/// identifier shares that identifier's signature.
pub fn root_demand(program: &Program, context: &Context, issuer: &str) -> Demand {
    let (item, sig) = match &program.result().expr {
        Expr::Id(id) => (Some(id.0), program.key(id.0, context)),
        _ => (None, program.key(program.result_id(), context)),
    };
    let payload = IntensionalPayload {
        item,
        context: context.clone(),
        hops: 0,
    };
    Demand::new(Signature::new(sig), DemandKind::Intensional, payload.encode(), issuer)
}

/// Demand generator: turns a program and context into a root demand at a
/// demand store and reads the answer back.
pub struct Generator {
    id: String,
    store: Arc<dyn StoreApi>,
}

impl Generator {
    pub fn new(id: impl Into<String>, store: Arc<dyn StoreApi>) -> Self {
        Generator { id: id.into(), store }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn generate_demands(&self, program: &Program, context: &Context) -> Result<(Signature, IssueOutcome), GenerateError> {
        program
            .check_context(context)
            .map_err(|e| GenerateError::Program(e.to_string()))?;
        let d = root_demand(program, context, &self.id);
        let sig = d.signature.clone();
        Ok((sig, self.store.issue(d)?))
    }

    /// The root's value once computed.
    pub fn result(&self, sig: &Signature) -> Result<Option<Result<Value, EvalError>>, FabricError> {
        Ok(self.store.lookup(sig)?.map(|b| decode_value(&b)))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("{0}")]
    Program(String),
    #[error(transparent)]
    Fabric(#[from] FabricError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{execute, ErrorClass};
    use crate::fabric::DemandStore;
    use crate::lucid::{parse_context_spec, parse_program};
    use crate::tier::Worker;

    const FIB: &str = "dimension t; fib = if #t <= 1 then #t else fib @ t (#t - 1) + fib @ t (#t - 2); result fib";

    fn drive(store: &Arc<DemandStore>, program: &Arc<Program>, workers: usize) {
        let ws: Vec<Worker> = (0..workers)
            .map(|i| Worker::new(format!("w{i}"), store.clone()).with_program(program.clone()))
            .collect();
        loop {
            let mut progressed = false;
            for w in &ws {
                progressed |= w.step().unwrap().is_some();
            }
            if !progressed {
                break;
            }
        }
    }

    fn run(src: &str, ctx: &str) -> (Arc<DemandStore>, Generator, Signature, Result<Value, EvalError>) {
        let program = Arc::new(parse_program(src).unwrap());
        let context = parse_context_spec(ctx, &program).unwrap();
        let store = Arc::new(DemandStore::new());
        let g = Generator::new("g", store.clone());
        let (sig, _) = g.generate_demands(&program, &context).unwrap();
        drive(&store, &program, 2);
        let v = g.result(&sig).unwrap().expect("root computed");
        (store, g, sig, v)
    }

    #[test]
    fn fib_two_needs_three_demands() {
        let (store, _, sig, v) = run(FIB, "t=2");
        assert_eq!(v, Ok(1));
        assert_eq!(sig.as_str(), "0,2");
        assert_eq!(store.counters().enqueued, 3);
        assert!(store.completion_histogram().values().all(|&n| n == 1));
        assert_eq!(store.pending_len(), 0);
    }

    #[test]
    fn fib_matches_local_engine() {
        let (store, _, _, v) = run(FIB, "t=20");
        let program = parse_program(FIB).unwrap();
        let ctx = parse_context_spec("t=20", &program).unwrap();
        assert_eq!(v, Ok(execute(&program, &ctx).unwrap().0));
        // one demand per distinct identifier context, as in local eduction
        assert_eq!(store.counters().enqueued, 21);
    }

    #[test]
    fn constant_is_one_demand() {
        let (store, _, _, v) = run("result 40 + 2", "");
        assert_eq!(v, Ok(42));
        assert_eq!(store.counters().enqueued, 1);
    }

    #[test]
    fn rerun_is_already_computed() {
        let (store, g, _, _) = run(FIB, "t=5");
        let program = parse_program(FIB).unwrap();
        let ctx = parse_context_spec("t=5", &program).unwrap();
        let before = store.watermark();
        let (_, outcome) = g.generate_demands(&program, &ctx).unwrap();
        assert!(matches!(outcome, IssueOutcome::AlreadyComputed(_)));
        assert_eq!(store.watermark(), before);
    }

    #[test]
    fn errors_propagate_with_class() {
        let (_, _, _, v) = run("dimension d; x = 1 / #d; y = x + 1; result y", "d=0");
        assert_eq!(v.unwrap_err().class(), ErrorClass::DivisionByZero);
    }

    #[test]
    fn self_reference_is_a_cycle() {
        let (_, _, _, v) = run("x = x; result x", "");
        assert_eq!(v.unwrap_err().class(), ErrorClass::Cyclic);
    }

    #[test]
    fn unbounded_chain_hits_depth_limit() {
        let program = Arc::new(parse_program("dimension t; x = x @ t (#t + 1); result x").unwrap());
        let store = Arc::new(DemandStore::new());
        let g = Generator::new("g", store.clone());
        let (sig, _) = g.generate_demands(&program, &Context::new()).unwrap();
        let w = Worker::new("w", store.clone())
            .with_program(program.clone())
            .with_config(crate::tier::WorkerConfig { max_attempts: 3, max_depth: 50 });
        while w.step().unwrap().is_some() {}
        assert_eq!(g.result(&sig).unwrap().unwrap().unwrap_err().class(), ErrorClass::DepthExceeded);
    }

    #[test]
    fn bad_context_rejected() {
        let program = parse_program(FIB).unwrap();
        let mut ctx = Context::new();
        ctx.bind(crate::lucid::Dimension::new("q"), 1);
        let g = Generator::new("g", Arc::new(DemandStore::new()));
        assert!(matches!(g.generate_demands(&program, &ctx), Err(GenerateError::Program(_))));
    }
}
