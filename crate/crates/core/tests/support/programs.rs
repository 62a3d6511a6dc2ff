//! Random well-founded programs. Items only reference lower items, except
//! for at most one guarded self-recursive item whose recursive call lowers
//! one dimension until a bound is reached.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use eduction::lucid::{BinOp, Context, Dimension, DictionaryItem, ItemId, Node, Program};

pub const MAX_DEPTH: usize = 6;
pub const TAGS: std::ops::RangeInclusive<i64> = -4..=4;

const OPS: [BinOp; 13] = [
    BinOp::Add,
    BinOp::Min,
    BinOp::Times,
    BinOp::Div,
    BinOp::Mod,
    BinOp::Lt,
    BinOp::Le,
    BinOp::Gt,
    BinOp::Ge,
    BinOp::Eq,
    BinOp::Ne,
    BinOp::And,
    BinOp::Or,
];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    dims: Vec<String>,
}

impl Gen<'_> {
    fn dim(&mut self) -> String {
        self.dims.choose(self.rng).expect("at least one dimension").clone()
    }

    fn leaf(&mut self, ids: usize) -> Node {
        match self.rng.gen_range(0..10) {
            0..=3 => Node::constant(self.rng.gen_range(TAGS)),
            4..=6 => Node::hash(&self.dim()),
            _ if ids > 0 => Node::id(self.rng.gen_range(0..ids)),
            _ => Node::constant(self.rng.gen_range(0..=9)),
        }
    }

    /// Tag expressions stay small: a constant, or a dimension shifted by one
    /// or two.
    fn tag(&mut self) -> Node {
        if self.rng.gen_bool(0.5) {
            Node::constant(self.rng.gen_range(TAGS))
        } else {
            let op = if self.rng.gen_bool(0.5) { BinOp::Add } else { BinOp::Min };
            Node::binary(op, Node::hash(&self.dim()), Node::constant(self.rng.gen_range(1..=2)))
        }
    }

    fn expr(&mut self, depth: usize, ids: usize) -> Node {
        if depth <= 1 || self.rng.gen_bool(0.25) {
            return self.leaf(ids);
        }
        match self.rng.gen_range(0..10) {
            0..=5 => {
                let op = *OPS.choose(self.rng).unwrap();
                Node::binary(op, self.expr(depth - 1, ids), self.expr(depth - 1, ids))
            }
            6..=7 => Node::if_then_else(
                self.expr(depth - 1, ids),
                self.expr(depth - 1, ids),
                self.expr(depth - 1, ids),
            ),
            _ => {
                let d = self.dim();
                let tag = if depth >= 3 { self.tag() } else { Node::constant(self.rng.gen_range(TAGS)) };
                Node::at(self.expr(depth - 1, ids), &d, tag)
            }
        }
    }

    /// `if #d <= c then base else (self @ d (#d - s)) op rest`.
    fn recursive(&mut self, me: usize) -> Node {
        let d = self.dim();
        let cond = Node::binary(BinOp::Le, Node::hash(&d), Node::constant(self.rng.gen_range(TAGS)));
        let base = self.expr(3, me);
        let step = Node::binary(BinOp::Min, Node::hash(&d), Node::constant(self.rng.gen_range(1..=2)));
        let call = Node::at(Node::id(me), &d, step);
        let op = *[BinOp::Add, BinOp::Min, BinOp::Times].choose(self.rng).unwrap();
        let body = Node::binary(op, call, self.expr(3, me));
        Node::if_then_else(cond, base, body)
    }
}

/// A random program and a context binding every dimension it declares.
pub fn random_program(seed: u64) -> (Program, Context) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ndims = rng.gen_range(1..=3);
    let dims: Vec<String> = (0..ndims).map(|i| format!("d{i}")).collect();
    let nitems = rng.gen_range(0..=3);
    let recursive = (nitems > 0 && rng.gen_bool(0.5)).then(|| rng.gen_range(0..nitems));
    let mut g = Gen {
        rng: &mut rng,
        dims: dims.clone(),
    };
    let mut dictionary = Vec::new();
    for k in 0..nitems {
        let entry = if recursive == Some(k) { g.recursive(k) } else { g.expr(MAX_DEPTH, k) };
        dictionary.push(DictionaryItem {
            id: ItemId(k),
            name: format!("x{k}"),
            entry,
        });
    }
    let result = g.expr(MAX_DEPTH, nitems);
    let mut ctx = Context::new();
    for d in &dims {
        ctx.bind(Dimension::new(d), rng.gen_range(TAGS));
    }
    let program = Program::new(dims.iter().map(Dimension::new).collect(), dictionary, result)
        .expect("generated program is well formed");
    (program, ctx)
}
