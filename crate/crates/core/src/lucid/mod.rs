//! The intensional language front end: AST, parser, printer and contexts.
//!
//! A [`Program`] is the compiled resource handed to the execution engine: a
//! dense dictionary of identifier definitions, the declared dimensions, and
//! the result expression.

mod ast;
mod context;
mod lexer;
mod parser;
mod print;

use thiserror::Error;

pub use ast::{ArithError, BinOp, Dimension, DictionaryItem, Expr, ItemId, Node, NodeKind, Pos};
pub use context::{context_key, parse_context_spec, Context};
pub use parser::parse_program;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LucidError {
    #[error("syntax error at {line}:{col}: expected {}, found {found}", expected.join(" or "))]
    Syntax {
        line: u32,
        col: u32,
        expected: Vec<String>,
        found: String,
    },
    #[error("unresolved identifier `{name}` at {line}:{col}")]
    UnresolvedIdentifier { name: String, line: u32, col: u32 },
    #[error("unresolved dimension `{name}` at {line}:{col}")]
    UnresolvedDimensionAt { name: String, line: u32, col: u32 },
    #[error("duplicate definition of `{name}` at {line}:{col}")]
    DuplicateDefinition { name: String, line: u32, col: u32 },
    #[error("duplicate dimension `{name}` at {line}:{col}")]
    DuplicateDimension { name: String, line: u32, col: u32 },
    #[error("cannot resolve dimension symbol `{0}`")]
    UnresolvedDimension(String),
    #[error("malformed context binding `{0}`")]
    MalformedContext(String),
    #[error("invalid program: {0}")]
    Invalid(String),
}

/// A parsed, fully resolved program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    dimensions: Vec<Dimension>,
    canonical: Vec<Dimension>,
    dictionary: Vec<DictionaryItem>,
    result: Node,
}

impl Program {
    /// Builds a program, checking that ids are dense, names unique, every
    /// `Id` names an item and every dimension operand is declared.
    pub fn new(
        dimensions: Vec<Dimension>,
        dictionary: Vec<DictionaryItem>,
        result: Node,
    ) -> Result<Self, LucidError> {
        let mut canonical = dimensions.clone();
        canonical.sort();
        if canonical.windows(2).any(|w| w[0] == w[1]) {
            return Err(LucidError::Invalid("duplicate dimension".into()));
        }
        for (i, item) in dictionary.iter().enumerate() {
            if item.id.0 != i {
                return Err(LucidError::Invalid(format!(
                    "item `{}` has id {} at position {i}",
                    item.name, item.id
                )));
            }
            if dictionary[..i].iter().any(|o| o.name == item.name)
                || dimensions.iter().any(|d| d.as_str() == item.name)
            {
                return Err(LucidError::Invalid(format!("duplicate name `{}`", item.name)));
            }
        }
        let program = Program {
            dimensions,
            canonical,
            dictionary,
            result,
        };
        let mut problem = None;
        let mut check = |n: &Node| {
            if problem.is_some() {
                return;
            }
            match &n.expr {
                Expr::Id(id) if id.0 >= program.dictionary.len() => {
                    problem = Some(format!("identifier #{id} is not defined"));
                }
                Expr::Hash(d) | Expr::At { dim: d, .. } if !program.canonical.contains(d) => {
                    problem = Some(format!("dimension `{d}` is not declared"));
                }
                _ => {}
            }
        };
        for item in &program.dictionary {
            item.entry.walk(&mut check);
        }
        program.result.walk(&mut check);
        match problem {
            Some(p) => Err(LucidError::Invalid(p)),
            None => Ok(program),
        }
    }

    /// Declared dimensions in declaration order.
    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    /// Declared dimensions in lexicographic order, as used for keys.
    pub fn canonical_dimensions(&self) -> &[Dimension] {
        &self.canonical
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.as_str() == name)
    }

    pub fn dictionary(&self) -> &[DictionaryItem] {
        &self.dictionary
    }

    pub fn item(&self, id: ItemId) -> Option<&DictionaryItem> {
        self.dictionary.get(id.0)
    }

    pub fn item_by_name(&self, name: &str) -> Option<&DictionaryItem> {
        self.dictionary.iter().find(|i| i.name == name)
    }

    pub fn result(&self) -> &Node {
        &self.result
    }

    /// Warehouse key of `id` at `ctx`. The result expression uses the id one
    /// past the last dictionary item.
    pub fn key(&self, id: usize, ctx: &Context) -> String {
        context::key_sorted(id, ctx, self.canonical.iter())
    }

    /// Id under which the result expression is keyed.
    pub fn result_id(&self) -> usize {
        self.dictionary.len()
    }

    /// Whether `ctx` binds only declared dimensions.
    pub fn check_context(&self, ctx: &Context) -> Result<(), LucidError> {
        match ctx.dimensions().find(|d| !self.canonical.contains(d)) {
            Some(d) => Err(LucidError::UnresolvedDimension(d.to_string())),
            None => Ok(()),
        }
    }
}
