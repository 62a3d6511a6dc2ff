use std::collections::HashMap;

use super::ast::{BinOp, Dimension, DictionaryItem, Expr, ItemId, Node, Pos};
use super::lexer::{tokenize, Tok, Token};
use super::{LucidError, Program};

/// Parses program text into a resolved [`Program`].
pub fn parse_program(source: &str) -> Result<Program, LucidError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        at: 0,
        refs: Vec::new(),
    };
    let raw = p.program()?;
    resolve(raw, p.refs)
}

struct RawProgram {
    dims: Vec<(String, Pos)>,
    defs: Vec<(String, Pos, Node)>,
    result: Node,
}

struct Parser {
    tokens: Vec<Token>,
    at: usize,
    /// Identifier references awaiting resolution. Unresolved `Expr::Id`
    /// nodes index into this table.
    refs: Vec<(String, Pos)>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.at].tok
    }

    fn pos(&self) -> Pos {
        self.tokens[self.at].pos
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.at].clone();
        if self.at + 1 < self.tokens.len() {
            self.at += 1;
        }
        t
    }

    fn error(&self, expected: &[&str]) -> LucidError {
        let t = &self.tokens[self.at];
        LucidError::Syntax {
            line: t.pos.line,
            col: t.pos.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: t.tok.describe(),
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<Token, LucidError> {
        if *self.peek() == tok {
            Ok(self.bump())
        } else {
            Err(self.error(&[&format!("`{}`", tok.text())]))
        }
    }

    fn ident(&mut self) -> Result<(String, Pos), LucidError> {
        match self.peek().clone() {
            Tok::Ident(name) => {
                let pos = self.pos();
                self.bump();
                Ok((name, pos))
            }
            _ => Err(self.error(&["identifier"])),
        }
    }

    fn program(&mut self) -> Result<RawProgram, LucidError> {
        let mut dims = Vec::new();
        let mut defs = Vec::new();
        loop {
            match self.peek() {
                Tok::Result => {
                    self.bump();
                    let result = self.expr()?;
                    if *self.peek() != Tok::Eof {
                        return Err(self.error(&["end of input"]));
                    }
                    return Ok(RawProgram { dims, defs, result });
                }
                Tok::Dimension => {
                    self.bump();
                    dims.push(self.ident()?);
                }
                Tok::Ident(_) => {
                    let (name, pos) = self.ident()?;
                    self.expect(Tok::Assign)?;
                    let body = self.expr()?;
                    defs.push((name, pos, body));
                }
                _ => return Err(self.error(&["`dimension`", "identifier", "`result`"])),
            }
            self.expect(Tok::Semi)?;
        }
    }

    fn expr(&mut self) -> Result<Node, LucidError> {
        if *self.peek() == Tok::If {
            let pos = self.bump().pos;
            let cond = self.expr()?;
            self.expect(Tok::Then)?;
            let then = self.expr()?;
            self.expect(Tok::Else)?;
            let otherwise = self.expr()?;
            return Ok(Node::at_pos(
                Expr::If {
                    cond: Box::new(cond),
                    then: Box::new(then),
                    otherwise: Box::new(otherwise),
                },
                pos,
            ));
        }
        self.or()
    }

    fn left_assoc(
        &mut self,
        next: fn(&mut Self) -> Result<Node, LucidError>,
        ops: &[(Tok, BinOp)],
    ) -> Result<Node, LucidError> {
        let mut lhs = next(self)?;
        while let Some(&(_, op)) = ops.iter().find(|(t, _)| t == self.peek()) {
            let pos = self.bump().pos;
            let rhs = next(self)?;
            lhs = binary(op, lhs, rhs, pos);
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Node, LucidError> {
        self.left_assoc(Self::and, &[(Tok::OrOr, BinOp::Or)])
    }

    fn and(&mut self) -> Result<Node, LucidError> {
        self.left_assoc(Self::cmp, &[(Tok::AndAnd, BinOp::And)])
    }

    fn cmp(&mut self) -> Result<Node, LucidError> {
        let lhs = self.add()?;
        let op = match self.peek() {
            Tok::Lt => BinOp::Lt,
            Tok::Gt => BinOp::Gt,
            Tok::Le => BinOp::Le,
            Tok::Ge => BinOp::Ge,
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            _ => return Ok(lhs),
        };
        let pos = self.bump().pos;
        let rhs = self.add()?;
        Ok(binary(op, lhs, rhs, pos))
    }

    fn add(&mut self) -> Result<Node, LucidError> {
        self.left_assoc(
            Self::mul,
            &[(Tok::Plus, BinOp::Add), (Tok::Minus, BinOp::Min)],
        )
    }

    fn mul(&mut self) -> Result<Node, LucidError> {
        self.left_assoc(
            Self::at,
            &[
                (Tok::Star, BinOp::Times),
                (Tok::Slash, BinOp::Div),
                (Tok::Percent, BinOp::Mod),
            ],
        )
    }

    fn at(&mut self) -> Result<Node, LucidError> {
        let mut body = self.atom()?;
        while *self.peek() == Tok::At {
            let pos = self.bump().pos;
            let (dim, _) = self.ident()?;
            let tag = self.atom()?;
            body = Node::at_pos(
                Expr::At {
                    body: Box::new(body),
                    dim: Dimension::new(dim),
                    tag: Box::new(tag),
                },
                pos,
            );
        }
        Ok(body)
    }

    fn atom(&mut self) -> Result<Node, LucidError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Node::at_pos(Expr::Const(v), pos))
            }
            Tok::Ident(name) => {
                self.bump();
                self.refs.push((name, pos));
                Ok(Node::at_pos(Expr::Id(ItemId(self.refs.len() - 1)), pos))
            }
            Tok::Hash => {
                self.bump();
                let (dim, _) = self.ident()?;
                Ok(Node::at_pos(Expr::Hash(Dimension::new(dim)), pos))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            _ => Err(self.error(&["integer", "identifier", "`#`", "`(`"])),
        }
    }
}

fn binary(op: BinOp, lhs: Node, rhs: Node, pos: Pos) -> Node {
    Node::at_pos(
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        },
        pos,
    )
}

enum Binding {
    Item(usize),
    Dim(Dimension),
}

fn resolve(raw: RawProgram, refs: Vec<(String, Pos)>) -> Result<Program, LucidError> {
    let mut names: HashMap<String, Binding> = HashMap::new();
    let mut dimensions = Vec::new();
    for (name, pos) in raw.dims {
        if names.contains_key(&name) {
            return Err(LucidError::DuplicateDimension {
                name,
                line: pos.line,
                col: pos.col,
            });
        }
        let d = Dimension::new(&name);
        names.insert(name, Binding::Dim(d.clone()));
        dimensions.push(d);
    }
    for (i, (name, pos, _)) in raw.defs.iter().enumerate() {
        if names.contains_key(name) {
            return Err(LucidError::DuplicateDefinition {
                name: name.clone(),
                line: pos.line,
                col: pos.col,
            });
        }
        names.insert(name.clone(), Binding::Item(i));
    }

    let fix = |node: &mut Node| -> Result<(), LucidError> { fix_refs(node, &refs, &names) };
    let mut dictionary = Vec::with_capacity(raw.defs.len());
    for (i, (name, _, mut entry)) in raw.defs.into_iter().enumerate() {
        fix(&mut entry)?;
        dictionary.push(DictionaryItem {
            id: ItemId(i),
            name,
            entry,
        });
    }
    let mut result = raw.result;
    fix(&mut result)?;
    Program::new(dimensions, dictionary, result)
}

fn fix_refs(
    node: &mut Node,
    refs: &[(String, Pos)],
    names: &HashMap<String, Binding>,
) -> Result<(), LucidError> {
    let check_dim = |d: &Dimension, pos: Pos| match names.get(d.as_str()) {
        Some(Binding::Dim(_)) => Ok(()),
        _ => Err(LucidError::UnresolvedDimensionAt {
            name: d.to_string(),
            line: pos.line,
            col: pos.col,
        }),
    };
    match &mut node.expr {
        Expr::Const(_) => {}
        Expr::Id(slot) => {
            let (name, pos) = &refs[slot.0];
            match names.get(name) {
                Some(Binding::Item(i)) => *slot = ItemId(*i),
                // a bare dimension name reads its current tag
                Some(Binding::Dim(d)) => node.expr = Expr::Hash(d.clone()),
                None => {
                    return Err(LucidError::UnresolvedIdentifier {
                        name: name.clone(),
                        line: pos.line,
                        col: pos.col,
                    })
                }
            }
        }
        Expr::Hash(d) => check_dim(d, node.pos)?,
        Expr::At { body, dim, tag } => {
            check_dim(dim, node.pos)?;
            fix_refs(body, refs, names)?;
            fix_refs(tag, refs, names)?;
        }
        Expr::Binary { lhs, rhs, .. } => {
            fix_refs(lhs, refs, names)?;
            fix_refs(rhs, refs, names)?;
        }
        Expr::If {
            cond,
            then,
            otherwise,
        } => {
            fix_refs(cond, refs, names)?;
            fix_refs(then, refs, names)?;
            fix_refs(otherwise, refs, names)?;
        }
    }
    Ok(())
}
