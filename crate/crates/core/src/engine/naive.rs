use crate::lucid::{BinOp, Context, Expr, Node, Program};

use super::{EvalError, Value, DEFAULT_MAX_DEPTH};

/// Reference evaluator without a warehouse: every identifier occurrence
/// re-evaluates its definition. Exponential on recursive programs.
///
/// Deliberately shares no code with [`super::Evaluator`] beyond the AST.
pub struct NaiveEvaluator<'p> {
    program: &'p Program,
    max_depth: usize,
    depth: usize,
    /// Number of identifier definitions evaluated.
    pub id_evaluations: u64,
}

impl<'p> NaiveEvaluator<'p> {
    pub fn new(program: &'p Program) -> Self {
        Self::with_limit(program, DEFAULT_MAX_DEPTH)
    }

    pub fn with_limit(program: &'p Program, max_depth: usize) -> Self {
        NaiveEvaluator {
            program,
            max_depth,
            depth: 0,
            id_evaluations: 0,
        }
    }

    pub fn eval(&mut self, node: &Node, ctx: &Context) -> Result<Value, EvalError> {
        if self.depth >= self.max_depth {
            return Err(EvalError::DepthExceeded {
                limit: self.max_depth,
            });
        }
        self.depth += 1;
        let r = stacker::maybe_grow(128 * 1024, 4 * 1024 * 1024, || self.step(node, ctx));
        self.depth -= 1;
        r
    }

    fn step(&mut self, node: &Node, ctx: &Context) -> Result<Value, EvalError> {
        match &node.expr {
            Expr::Const(v) => Ok(*v),
            Expr::Hash(d) => Ok(ctx.tag(d)),
            Expr::At { body, dim, tag } => {
                let t = self.eval(tag, ctx)?;
                let mut inner = ctx.clone();
                inner.bind(dim.clone(), t);
                self.eval(body, &inner)
            }
            Expr::If {
                cond,
                then,
                otherwise,
            } => {
                let c = self.eval(cond, ctx)?;
                self.eval(if c != 0 { then } else { otherwise }, ctx)
            }
            Expr::Id(id) => {
                let item = self
                    .program
                    .dictionary()
                    .get(id.0)
                    .ok_or(EvalError::UnresolvedIdentifier { id: id.0 })?;
                let v = self.eval(&item.entry, ctx)?;
                self.id_evaluations += 1;
                Ok(v)
            }
            Expr::Binary { op, lhs, rhs } => {
                let a = self.eval(lhs, ctx)?;
                let b = self.eval(rhs, ctx)?;
                let truth = |x: bool| if x { 1 } else { 0 };
                Ok(match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Min => a.wrapping_sub(b),
                    BinOp::Times => a.wrapping_mul(b),
                    BinOp::Div if b == 0 => return Err(EvalError::DivisionByZero { pos: node.pos }),
                    BinOp::Div => a.wrapping_div(b),
                    BinOp::Mod if b == 0 => return Err(EvalError::ModuloByZero { pos: node.pos }),
                    BinOp::Mod => a.wrapping_rem(b),
                    BinOp::Lt => truth(a < b),
                    BinOp::Gt => truth(a > b),
                    BinOp::Le => truth(a <= b),
                    BinOp::Ge => truth(a >= b),
                    BinOp::Eq => truth(a == b),
                    BinOp::Ne => truth(a != b),
                    BinOp::And => truth(a != 0 && b != 0),
                    BinOp::Or => truth(a != 0 || b != 0),
                })
            }
        }
    }
}

pub fn naive_eval(node: &Node, context: &Context, program: &Program) -> Result<Value, EvalError> {
    if let Some(d) = context.dimensions().find(|d| !program.canonical_dimensions().contains(d)) {
        return Err(EvalError::UnresolvedDimension(d.to_string()));
    }
    NaiveEvaluator::new(program).eval(node, context)
}
