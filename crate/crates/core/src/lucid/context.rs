use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::ast::Dimension;
use super::{LucidError, Program};

/// An evaluation point: dimension → tag. Unbound dimensions read as 0.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context {
    bindings: BTreeMap<Dimension, i64>,
}

impl Context {
    pub fn new() -> Self {
        Context::default()
    }

    pub fn tag(&self, dim: &Dimension) -> i64 {
        self.bindings.get(dim).copied().unwrap_or(0)
    }

    pub fn bind(&mut self, dim: Dimension, tag: i64) {
        self.bindings.insert(dim, tag);
    }

    /// A copy of this context with `dim` rebound to `tag`.
    pub fn with(&self, dim: &Dimension, tag: i64) -> Context {
        let mut next = self.clone();
        next.bind(dim.clone(), tag);
        next
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &Dimension> {
        self.bindings.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Dimension, i64)> {
        self.bindings.iter().map(|(d, t)| (d, *t))
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    /// The restriction of this context to `dims`, with every listed
    /// dimension bound explicitly.
    pub fn restrict(&self, dims: &[Dimension]) -> Context {
        let mut out = Context::new();
        for d in dims {
            out.bind(d.clone(), self.tag(d));
        }
        out
    }
}

impl<const N: usize> From<[(&str, i64); N]> for Context {
    fn from(pairs: [(&str, i64); N]) -> Self {
        let mut ctx = Context::new();
        for (d, t) in pairs {
            ctx.bind(Dimension::new(d), t);
        }
        ctx
    }
}

/// Serializes as `d=2,m=3` in canonical (lexicographic) order.
impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (d, t)) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_char(',')?;
            }
            write!(f, "{d}={t}")?;
        }
        Ok(())
    }
}

/// Parses a `name=int{,name=int}` context spec against a program's declared
/// dimensions. Undeclared names are rejected; unlisted dimensions get 0.
pub fn parse_context_spec(spec: &str, program: &Program) -> Result<Context, LucidError> {
    let mut ctx = Context::new();
    for d in program.dimensions() {
        ctx.bind(d.clone(), 0);
    }
    if spec.trim().is_empty() {
        return Ok(ctx);
    }
    let mut seen = Vec::new();
    for pair in spec.split(',') {
        let (name, value) = pair
            .split_once('=')
            .ok_or_else(|| LucidError::MalformedContext(pair.trim().to_string()))?;
        let name = name.trim();
        let value = value.trim();
        if name.is_empty() || value.is_empty() {
            return Err(LucidError::MalformedContext(pair.trim().to_string()));
        }
        let tag: i64 = value
            .parse()
            .map_err(|_| LucidError::MalformedContext(pair.trim().to_string()))?;
        let dim = program
            .dimension(name)
            .ok_or_else(|| LucidError::UnresolvedDimension(name.to_string()))?
            .clone();
        if seen.contains(&dim) {
            return Err(LucidError::MalformedContext(format!(
                "dimension {name} bound twice"
            )));
        }
        seen.push(dim.clone());
        ctx.bind(dim, tag);
    }
    Ok(ctx)
}

/// Warehouse key for identifier `id` at `context`: the decimal id followed
/// by `,tag` for each dimension in `dims`, taken in lexicographic order.
pub fn context_key(id: usize, context: &Context, dims: &[Dimension]) -> String {
    let mut sorted: Vec<&Dimension> = dims.iter().collect();
    sorted.sort();
    key_sorted(id, context, sorted.into_iter())
}

pub(crate) fn key_sorted<'a>(
    id: usize,
    context: &Context,
    dims: impl Iterator<Item = &'a Dimension>,
) -> String {
    let mut key = id.to_string();
    for d in dims {
        key.push(',');
        let _ = write!(key, "{}", context.tag(d));
    }
    key
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lucid::parse_program;

    fn dm() -> Program {
        parse_program("dimension d; dimension m; result #d + #m").unwrap()
    }

    #[test]
    fn parses_pairs() {
        let ctx = parse_context_spec("d=2,m=3", &dm()).unwrap();
        assert_eq!(ctx, Context::from([("d", 2), ("m", 3)]));
    }

    #[test]
    fn tolerates_spaces_and_negative_tags() {
        let ctx = parse_context_spec(" d = -2 , m=3 ", &dm()).unwrap();
        assert_eq!(ctx.tag(&Dimension::new("d")), -2);
    }

    #[test]
    fn empty_spec_defaults_to_zero() {
        let p = parse_program("dimension d; result #d").unwrap();
        let ctx = parse_context_spec("", &p).unwrap();
        assert_eq!(ctx, Context::from([("d", 0)]));
    }

    #[test]
    fn unknown_dimension_is_rejected() {
        let p = parse_program("dimension d; result #d").unwrap();
        assert!(matches!(
            parse_context_spec("x=5", &p),
            Err(LucidError::UnresolvedDimension(n)) if n == "x"
        ));
    }

    #[test]
    fn malformed_pairs_are_rejected() {
        let p = dm();
        for bad in ["d", "d=", "=3", "d=x", "d=1,,m=2", "d=1,d=2"] {
            assert!(
                matches!(parse_context_spec(bad, &p), Err(LucidError::MalformedContext(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn key_layout() {
        let dims = [Dimension::new("d"), Dimension::new("m")];
        assert_eq!(context_key(2, &Context::from([("d", 2), ("m", 0)]), &dims), "2,2,0");
        assert_eq!(context_key(0, &Context::new(), &[]), "0");
        // declaration order does not matter
        let rev = [Dimension::new("m"), Dimension::new("d")];
        assert_eq!(context_key(2, &Context::from([("d", 2)]), &rev), "2,2,0");
    }

    #[test]
    fn key_distinguishes_tags() {
        let dims = [Dimension::new("d"), Dimension::new("m")];
        let a = context_key(1, &Context::from([("d", 1), ("m", 2)]), &dims);
        let b = context_key(1, &Context::from([("d", 1), ("m", 3)]), &dims);
        assert_ne!(a, b);
    }

    #[test]
    fn display_is_canonical() {
        let ctx = Context::from([("m", 3), ("d", 2)]);
        assert_eq!(ctx.to_string(), "d=2,m=3");
    }

    proptest::proptest! {
        #[test]
        fn key_is_injective(
            id1 in 0usize..50, id2 in 0usize..50,
            t1 in proptest::collection::vec(-1000i64..1000, 3),
            t2 in proptest::collection::vec(-1000i64..1000, 3),
        ) {
            let dims = [Dimension::new("a"), Dimension::new("b"), Dimension::new("c")];
            let mk = |t: &[i64]| {
                let mut c = Context::new();
                for (d, v) in dims.iter().zip(t) { c.bind(d.clone(), *v); }
                c
            };
            let (c1, c2) = (mk(&t1), mk(&t2));
            let same = id1 == id2 && c1 == c2;
            proptest::prop_assert_eq!(same, context_key(id1, &c1, &dims) == context_key(id2, &c2, &dims));
        }
    }
}
