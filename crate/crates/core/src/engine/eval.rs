use crate::lucid::{ArithError, Context, Expr, ItemId, Node, Program};

use super::{EvalError, Value, Warehouse, DEFAULT_MAX_DEPTH};

const STACK_RED_ZONE: usize = 128 * 1024;
const STACK_SEGMENT: usize = 4 * 1024 * 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    /// Maximum nesting of node evaluations before failing with
    /// [`EvalError::DepthExceeded`].
    pub max_depth: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalStats {
    /// Identifier evaluations that missed the warehouse.
    pub id_evaluations: u64,
    /// Deepest node nesting reached.
    pub max_depth: usize,
}

/// Source of identifier values for an [`Evaluator`].
pub trait Resolver {
    /// Returns the stored value for `key`, or `None` when the caller should
    /// evaluate the definition itself.
    fn lookup(&mut self, item: ItemId, key: &str, ctx: &Context) -> Result<Option<Value>, EvalError>;

    /// Records a computed value and returns the value held for `key`.
    fn store(&mut self, key: String, value: Value) -> Value;
}

impl Resolver for &Warehouse {
    fn lookup(&mut self, _: ItemId, key: &str, _: &Context) -> Result<Option<Value>, EvalError> {
        Ok(self.get(key))
    }

    fn store(&mut self, key: String, value: Value) -> Value {
        Warehouse::store(self, key, value)
    }
}

/// Memoizing evaluator over a program.
pub struct Evaluator<'p, R> {
    program: &'p Program,
    resolver: R,
    max_depth: usize,
    depth: usize,
    stats: EvalStats,
}

impl<'p, R: Resolver> Evaluator<'p, R> {
    pub fn new(program: &'p Program, resolver: R, config: EngineConfig) -> Self {
        Evaluator {
            program,
            resolver,
            max_depth: config.max_depth,
            depth: 0,
            stats: EvalStats::default(),
        }
    }

    /// Starts the depth count at `depth`, for evaluations that continue a
    /// chain begun elsewhere.
    pub fn starting_at(mut self, depth: usize) -> Self {
        self.depth = depth;
        self
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn stats(&self) -> EvalStats {
        self.stats
    }

    pub fn resolver_mut(&mut self) -> &mut R {
        &mut self.resolver
    }

    pub fn into_resolver(self) -> R {
        self.resolver
    }

    pub fn eval(&mut self, node: &Node, ctx: &Context) -> Result<Value, EvalError> {
        if self.depth >= self.max_depth {
            return Err(EvalError::DepthExceeded {
                limit: self.max_depth,
            });
        }
        self.depth += 1;
        self.stats.max_depth = self.stats.max_depth.max(self.depth);
        let out = stacker::maybe_grow(STACK_RED_ZONE, STACK_SEGMENT, || self.eval_node(node, ctx));
        self.depth -= 1;
        out
    }

    fn eval_node(&mut self, node: &Node, ctx: &Context) -> Result<Value, EvalError> {
        match &node.expr {
            Expr::Const(v) => Ok(*v),
            Expr::Hash(dim) => Ok(ctx.tag(dim)),
            Expr::At { body, dim, tag } => {
                let tag = self.eval(tag, ctx)?;
                self.eval(body, &ctx.with(dim, tag))
            }
            Expr::Binary { op, lhs, rhs } => {
                // both operands see the caller's context
                let l = self.eval(lhs, ctx)?;
                let r = self.eval(rhs, ctx)?;
                op.apply(l, r).map_err(|e| match e {
                    ArithError::DivisionByZero => EvalError::DivisionByZero { pos: node.pos },
                    ArithError::ModuloByZero => EvalError::ModuloByZero { pos: node.pos },
                })
            }
            Expr::If {
                cond,
                then,
                otherwise,
            } => {
                if self.eval(cond, ctx)? != 0 {
                    self.eval(then, ctx)
                } else {
                    self.eval(otherwise, ctx)
                }
            }
            Expr::Id(id) => self.eval_id(*id, ctx),
        }
    }

    fn eval_id(&mut self, id: ItemId, ctx: &Context) -> Result<Value, EvalError> {
        let program = self.program;
        let item = program
            .item(id)
            .ok_or(EvalError::UnresolvedIdentifier { id: id.0 })?;
        let key = program.key(id.0, ctx);
        if let Some(v) = self.resolver.lookup(id, &key, ctx)? {
            return Ok(v);
        }
        let v = self.eval(&item.entry, ctx)?;
        self.stats.id_evaluations += 1;
        Ok(self.resolver.store(key, v))
    }
}

/// Evaluates `node` at `context` with the default depth limit, memoizing
/// identifier values in `warehouse`.
pub fn eval(
    node: &Node,
    context: &Context,
    program: &Program,
    warehouse: &Warehouse,
) -> Result<Value, EvalError> {
    program
        .check_context(context)
        .map_err(|e| EvalError::UnresolvedDimension(dimension_name(e)))?;
    Evaluator::new(program, warehouse, EngineConfig::default()).eval(node, context)
}

/// Evaluates the program's result at `context` with a fresh warehouse.
pub fn execute(program: &Program, context: &Context) -> Result<(Value, EvalStats), EvalError> {
    execute_with(program, context, &Warehouse::new(), EngineConfig::default())
}

pub fn execute_with(
    program: &Program,
    context: &Context,
    warehouse: &Warehouse,
    config: EngineConfig,
) -> Result<(Value, EvalStats), EvalError> {
    program
        .check_context(context)
        .map_err(|e| EvalError::UnresolvedDimension(dimension_name(e)))?;
    let mut ev = Evaluator::new(program, warehouse, config);
    let v = ev.eval(program.result(), context)?;
    Ok((v, ev.stats()))
}

fn dimension_name(e: crate::lucid::LucidError) -> String {
    match e {
        crate::lucid::LucidError::UnresolvedDimension(n) => n,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{naive_eval, ErrorClass};
    use crate::lucid::{parse_context_spec, parse_program, BinOp, Pos};

    const FIB: &str = "dimension t; fib = if #t <= 1 then #t else fib @ t (#t - 1) + fib @ t (#t - 2); result fib";

    fn run(src: &str, ctx: &str) -> Result<(Value, EvalStats), EvalError> {
        let p = parse_program(src).unwrap();
        let c = parse_context_spec(ctx, &p).unwrap();
        execute(&p, &c)
    }

    #[test]
    fn constant_is_its_image() {
        let p = parse_program("result 42").unwrap();
        let w = Warehouse::new();
        assert_eq!(eval(p.result(), &Context::new(), &p, &w), Ok(42));
        assert!(w.is_empty());
    }

    #[test]
    fn hash_reads_tag() {
        assert_eq!(run("dimension d; result #d", "d=3").unwrap().0, 3);
        assert_eq!(run("dimension d; result #d", "d=7").unwrap().0, 7);
    }

    #[test]
    fn at_rebinds_then_queries() {
        assert_eq!(run("dimension d; result #d @ d 5", "d=0").unwrap().0, 5);
    }

    #[test]
    fn smallest_program() {
        assert_eq!(run("result 40 + 2", "").unwrap().0, 42);
    }

    #[test]
    fn fib_ten() {
        let (v, stats) = run(FIB, "t=10").unwrap();
        assert_eq!(v, 55);
        assert!(stats.id_evaluations <= 11, "{stats:?}");
    }

    #[test]
    fn stats_match_warehouse_stores() {
        let p = parse_program(FIB).unwrap();
        let w = Warehouse::new();
        let ctx = Context::from([("t", 15)]);
        let (v, stats) = execute_with(&p, &ctx, &w, EngineConfig::default()).unwrap();
        assert_eq!(v, 610);
        assert_eq!(stats.id_evaluations, w.stats().stores);
    }

    #[test]
    fn right_operand_sees_original_context() {
        // (#d @ d 9) + #d at d=2
        assert_eq!(run("dimension d; result (#d @ d 9) + #d", "d=2").unwrap().0, 11);
    }

    #[test]
    fn operator_semantics() {
        let cases = [
            ("result 7 / 2", 3),
            ("result (0 - 7) / 2", -3),
            ("result (0 - 7) % 2", -1),
            ("result 7 % (0 - 2)", 1),
            ("result 3 < 4", 1),
            ("result 4 <= 3", 0),
            ("result 2 && 3", 1),
            ("result 0 || 0", 0),
            ("result 5 != 5", 0),
            ("result if 2 then 10 else 20", 10),
            ("result if 0 then 10 else 20", 20),
        ];
        for (src, want) in cases {
            assert_eq!(run(src, "").unwrap().0, want, "{src}");
        }
    }

    #[test]
    fn division_by_zero_carries_location() {
        let err = run("result 1 +\n  4 / 0", "").unwrap_err();
        assert_eq!(err, EvalError::DivisionByZero { pos: Pos { line: 2, col: 5 } });
        assert_eq!(run("result 4 % 0", "").unwrap_err().class(), ErrorClass::ModuloByZero);
    }

    #[test]
    fn if_evaluates_one_branch() {
        assert_eq!(run("result if 1 then 2 else 1 / 0", "").unwrap().0, 2);
    }

    #[test]
    fn logical_operators_evaluate_both_sides() {
        assert!(run("result 0 && 1 / 0", "").is_err());
    }

    #[test]
    fn runaway_recursion_is_reported() {
        let p = parse_program("dimension d; x = x @ d (#d + 1); result x").unwrap();
        let cfg = EngineConfig { max_depth: 5_000 };
        let err = execute_with(&p, &Context::from([("d", 0)]), &Warehouse::new(), cfg).unwrap_err();
        assert_eq!(err, EvalError::DepthExceeded { limit: 5_000 });
    }

    #[test]
    fn default_depth_limit_does_not_overflow_the_stack() {
        let err = run("dimension d; x = x @ d (#d + 1); result x", "d=0").unwrap_err();
        assert_eq!(err.class(), ErrorClass::DepthExceeded);
    }

    #[test]
    fn undeclared_context_dimension() {
        let p = parse_program("result 1").unwrap();
        let err = execute(&p, &Context::from([("q", 1)])).unwrap_err();
        assert_eq!(err.class(), ErrorClass::UnresolvedDimension);
    }

    #[test]
    fn memo_soundness_after_clear() {
        let p = parse_program(FIB).unwrap();
        let w = Warehouse::new();
        let ctx = Context::from([("t", 12)]);
        let first = execute_with(&p, &ctx, &w, EngineConfig::default()).unwrap();
        w.clear();
        let second = execute_with(&p, &ctx, &w, EngineConfig::default()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn wrapping_arithmetic() {
        let p = Program::new(
            vec![],
            vec![],
            Node::binary(BinOp::Add, Node::constant(i64::MAX), Node::constant(1)),
        )
        .unwrap();
        assert_eq!(execute(&p, &Context::new()).unwrap().0, i64::MIN);
        assert_eq!(naive_eval(p.result(), &Context::new(), &p).unwrap(), i64::MIN);
    }

    proptest::proptest! {
        #[test]
        fn context_restoration(d0 in -50i64..50, k in -50i64..50) {
            let p = parse_program("dimension d; result (#d @ d k0) + #d".replace("k0", &k.abs().to_string()).as_str()).unwrap();
            let ctx = Context::from([("d", d0)]);
            proptest::prop_assert_eq!(execute(&p, &ctx).unwrap().0, k.abs() + d0);
        }

        #[test]
        fn eduction_bound(n in 0i64..40) {
            let p = parse_program(FIB).unwrap();
            let (_, stats) = execute(&p, &Context::from([("t", n)])).unwrap();
            proptest::prop_assert!(stats.id_evaluations <= n as u64 + 1);
        }

        #[test]
        fn deterministic(n in 0i64..30) {
            let p = parse_program(FIB).unwrap();
            let ctx = Context::from([("t", n)]);
            proptest::prop_assert_eq!(execute(&p, &ctx).unwrap(), execute(&p, &ctx).unwrap());
        }
    }
}
