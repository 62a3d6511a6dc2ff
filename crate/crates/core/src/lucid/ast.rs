use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Source position of a node, 1-based.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A declared dimension name. Cheap to clone; ordered lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dimension(Arc<str>);

impl Dimension {
    pub fn new(name: impl AsRef<str>) -> Self {
        Dimension(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Serialize for Dimension {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Dimension {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Dimension::new(s))
    }
}

/// Index of a dictionary item. Dense, assigned in definition order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ItemId(pub usize);

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Node kinds understood by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    At,
    Hash,
    Add,
    Min,
    Times,
    Div,
    Mod,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    And,
    Or,
    If,
    Id,
    Const,
}

impl NodeKind {
    pub const ALL: [NodeKind; 18] = [
        NodeKind::At,
        NodeKind::Hash,
        NodeKind::Add,
        NodeKind::Min,
        NodeKind::Times,
        NodeKind::Div,
        NodeKind::Mod,
        NodeKind::Lt,
        NodeKind::Gt,
        NodeKind::Le,
        NodeKind::Ge,
        NodeKind::Eq,
        NodeKind::Ne,
        NodeKind::And,
        NodeKind::Or,
        NodeKind::If,
        NodeKind::Id,
        NodeKind::Const,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Min,
    Times,
    Div,
    Mod,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

/// Failure of a single arithmetic operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithError {
    DivisionByZero,
    ModuloByZero,
}

impl BinOp {
    pub fn kind(self) -> NodeKind {
        match self {
            BinOp::Add => NodeKind::Add,
            BinOp::Min => NodeKind::Min,
            BinOp::Times => NodeKind::Times,
            BinOp::Div => NodeKind::Div,
            BinOp::Mod => NodeKind::Mod,
            BinOp::Lt => NodeKind::Lt,
            BinOp::Gt => NodeKind::Gt,
            BinOp::Le => NodeKind::Le,
            BinOp::Ge => NodeKind::Ge,
            BinOp::Eq => NodeKind::Eq,
            BinOp::Ne => NodeKind::Ne,
            BinOp::And => NodeKind::And,
            BinOp::Or => NodeKind::Or,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Min => "-",
            BinOp::Times => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::Lt => "<",
            BinOp::Gt => ">",
            BinOp::Le => "<=",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Integer semantics: wrapping arithmetic, division truncating toward
    /// zero, remainder taking the dividend's sign, comparisons and logic
    /// yielding 1/0 with any nonzero operand counting as true.
    pub fn apply(self, l: i64, r: i64) -> Result<i64, ArithError> {
        let b = |c: bool| c as i64;
        Ok(match self {
            BinOp::Add => l.wrapping_add(r),
            BinOp::Min => l.wrapping_sub(r),
            BinOp::Times => l.wrapping_mul(r),
            BinOp::Div => {
                if r == 0 {
                    return Err(ArithError::DivisionByZero);
                }
                l.wrapping_div(r)
            }
            BinOp::Mod => {
                if r == 0 {
                    return Err(ArithError::ModuloByZero);
                }
                l.wrapping_rem(r)
            }
            BinOp::Lt => b(l < r),
            BinOp::Gt => b(l > r),
            BinOp::Le => b(l <= r),
            BinOp::Ge => b(l >= r),
            BinOp::Eq => b(l == r),
            BinOp::Ne => b(l != r),
            BinOp::And => b(l != 0 && r != 0),
            BinOp::Or => b(l != 0 || r != 0),
        })
    }
}

#[derive(Debug, Clone)]
pub enum Expr {
    Const(i64),
    Id(ItemId),
    Hash(Dimension),
    /// `body @ dim tag`
    At {
        body: Box<Node>,
        dim: Dimension,
        tag: Box<Node>,
    },
    Binary {
        op: BinOp,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    If {
        cond: Box<Node>,
        then: Box<Node>,
        otherwise: Box<Node>,
    },
}

/// An expression with its source position.
///
/// Positions are not part of node identity: two nodes are equal when their
/// trees are structurally equal.
#[derive(Debug, Clone)]
pub struct Node {
    pub expr: Expr,
    pub pos: Pos,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        match (&self.expr, &other.expr) {
            (Expr::Const(a), Expr::Const(b)) => a == b,
            (Expr::Id(a), Expr::Id(b)) => a == b,
            (Expr::Hash(a), Expr::Hash(b)) => a == b,
            (
                Expr::At { body, dim, tag },
                Expr::At {
                    body: b2,
                    dim: d2,
                    tag: t2,
                },
            ) => dim == d2 && body == b2 && tag == t2,
            (
                Expr::Binary { op, lhs, rhs },
                Expr::Binary {
                    op: o2,
                    lhs: l2,
                    rhs: r2,
                },
            ) => op == o2 && lhs == l2 && rhs == r2,
            (
                Expr::If {
                    cond,
                    then,
                    otherwise,
                },
                Expr::If {
                    cond: c2,
                    then: t2,
                    otherwise: o2,
                },
            ) => cond == c2 && then == t2 && otherwise == o2,
            _ => false,
        }
    }
}

impl Eq for Node {}

impl Node {
    pub fn new(expr: Expr) -> Self {
        Node {
            expr,
            pos: Pos::default(),
        }
    }

    pub fn at_pos(expr: Expr, pos: Pos) -> Self {
        Node { expr, pos }
    }

    pub fn constant(v: i64) -> Self {
        Node::new(Expr::Const(v))
    }

    pub fn id(item: usize) -> Self {
        Node::new(Expr::Id(ItemId(item)))
    }

    pub fn hash(dim: &str) -> Self {
        Node::new(Expr::Hash(Dimension::new(dim)))
    }

    pub fn at(body: Node, dim: &str, tag: Node) -> Self {
        Node::new(Expr::At {
            body: Box::new(body),
            dim: Dimension::new(dim),
            tag: Box::new(tag),
        })
    }

    pub fn binary(op: BinOp, lhs: Node, rhs: Node) -> Self {
        Node::new(Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        })
    }

    pub fn if_then_else(cond: Node, then: Node, otherwise: Node) -> Self {
        Node::new(Expr::If {
            cond: Box::new(cond),
            then: Box::new(then),
            otherwise: Box::new(otherwise),
        })
    }

    pub fn kind(&self) -> NodeKind {
        match &self.expr {
            Expr::Const(_) => NodeKind::Const,
            Expr::Id(_) => NodeKind::Id,
            Expr::Hash(_) => NodeKind::Hash,
            Expr::At { .. } => NodeKind::At,
            Expr::Binary { op, .. } => op.kind(),
            Expr::If { .. } => NodeKind::If,
        }
    }

    /// Expression children in evaluation order. The dimension operand of
    /// `@` and `#` is carried as payload, not as a child.
    pub fn children(&self) -> Vec<&Node> {
        match &self.expr {
            Expr::Const(_) | Expr::Id(_) | Expr::Hash(_) => vec![],
            Expr::At { body, tag, .. } => vec![body, tag],
            Expr::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            Expr::If {
                cond,
                then,
                otherwise,
            } => vec![cond, then, otherwise],
        }
    }

    /// Visits every node of the tree, parents before children.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Node)) {
        f(self);
        for c in self.children() {
            c.walk(f);
        }
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn size(&self) -> usize {
        let mut n = 0;
        self.walk(&mut |_| n += 1);
        n
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DictionaryItem {
    pub id: ItemId,
    pub name: String,
    pub entry: Node,
}
