use std::fmt;

use super::ast::{BinOp, Expr, Node};
use super::Program;

/// Prints source text that parses back to a structurally equal program.
/// Parentheses appear only where precedence requires them.
impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.dimensions() {
            writeln!(f, "dimension {d};")?;
        }
        for item in self.dictionary() {
            write!(f, "{} = ", item.name)?;
            write_node(f, self, &item.entry)?;
            writeln!(f, ";")?;
        }
        write!(f, "result ")?;
        write_node(f, self, self.result())
    }
}

impl Program {
    /// Source form of a single expression of this program.
    pub fn expr_to_string(&self, node: &Node) -> String {
        struct Show<'a>(&'a Program, &'a Node);
        impl fmt::Display for Show<'_> {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write_node(f, self.0, self.1)
            }
        }
        Show(self, node).to_string()
    }
}

// Binding strength, loosest first, following the parser's grammar levels.
const IF: u8 = 0;
const ATOM: u8 = 7;

fn level(op: BinOp) -> u8 {
    match op {
        BinOp::Or => 1,
        BinOp::And => 2,
        BinOp::Lt | BinOp::Gt | BinOp::Le | BinOp::Ge | BinOp::Eq | BinOp::Ne => 3,
        BinOp::Add | BinOp::Min => 4,
        BinOp::Times | BinOp::Div | BinOp::Mod => 5,
    }
}

const AT: u8 = 6;
const SUB: u8 = 4;

fn write_node(f: &mut fmt::Formatter<'_>, p: &Program, node: &Node) -> fmt::Result {
    write_at(f, p, node, IF)
}

/// Writes `node` where the context needs at least binding strength `min`.
fn write_at(f: &mut fmt::Formatter<'_>, p: &Program, node: &Node, min: u8) -> fmt::Result {
    let own = match &node.expr {
        Expr::Const(v) if *v < 0 => SUB,
        Expr::Const(_) | Expr::Id(_) | Expr::Hash(_) => ATOM,
        Expr::At { .. } => AT,
        Expr::Binary { op, .. } => level(*op),
        Expr::If { .. } => IF,
    };
    let wrap = own < min;
    if wrap {
        f.write_str("(")?;
    }
    match &node.expr {
        // the grammar has no unary minus
        Expr::Const(v) if *v == i64::MIN => write!(f, "0 - {} - 1", i64::MAX)?,
        Expr::Const(v) if *v < 0 => write!(f, "0 - {}", v.unsigned_abs())?,
        Expr::Const(v) => write!(f, "{v}")?,
        Expr::Id(id) => match p.item(*id) {
            Some(item) => f.write_str(&item.name)?,
            None => write!(f, "<undefined #{id}>")?,
        },
        Expr::Hash(d) => write!(f, "#{d}")?,
        Expr::At { body, dim, tag } => {
            write_at(f, p, body, AT)?;
            write!(f, " @ {dim} ")?;
            write_at(f, p, tag, ATOM)?;
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = level(*op);
            // comparisons do not chain
            let left = if l == 3 { l + 1 } else { l };
            write_at(f, p, lhs, left)?;
            write!(f, " {} ", op.symbol())?;
            write_at(f, p, rhs, l + 1)?;
        }
        Expr::If {
            cond,
            then,
            otherwise,
        } => {
            f.write_str("if ")?;
            write_at(f, p, cond, IF)?;
            f.write_str(" then ")?;
            write_at(f, p, then, IF)?;
            f.write_str(" else ")?;
            write_at(f, p, otherwise, IF)?;
        }
    }
    if wrap {
        f.write_str(")")?;
    }
    Ok(())
}
