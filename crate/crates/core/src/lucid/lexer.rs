use super::ast::Pos;
use super::LucidError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Int(i64),
    Ident(String),
    Dimension,
    Result,
    If,
    Then,
    Else,
    Semi,
    Assign,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Gt,
    Le,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
    At,
    Hash,
    LParen,
    RParen,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Int(v) => format!("integer {v}"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Eof => "end of input".to_string(),
            other => format!("`{}`", other.text()),
        }
    }

    pub fn text(&self) -> &'static str {
        match self {
            Tok::Dimension => "dimension",
            Tok::Result => "result",
            Tok::If => "if",
            Tok::Then => "then",
            Tok::Else => "else",
            Tok::Semi => ";",
            Tok::Assign => "=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Percent => "%",
            Tok::Lt => "<",
            Tok::Gt => ">",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::EqEq => "==",
            Tok::Ne => "!=",
            Tok::AndAnd => "&&",
            Tok::OrOr => "||",
            Tok::At => "@",
            Tok::Hash => "#",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Int(_) => "integer",
            Tok::Ident(_) => "identifier",
            Tok::Eof => "end of input",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub pos: Pos,
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, LucidError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1u32, 1u32);

    while i < chars.len() {
        let c = chars[i];
        let pos = Pos { line, col };
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<i64>().map_err(|_| LucidError::Syntax {
                line,
                col,
                expected: vec!["integer literal within 64-bit range".into()],
                found: text.clone(),
            })?;
            col += (i - start) as u32;
            out.push(Token { tok: Tok::Int(v), pos });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            col += (i - start) as u32;
            let tok = match word.as_str() {
                "dimension" => Tok::Dimension,
                "result" => Tok::Result,
                "if" => Tok::If,
                "then" => Tok::Then,
                "else" => Tok::Else,
                _ => Tok::Ident(word),
            };
            out.push(Token { tok, pos });
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('<', Some('=')) => (Tok::Le, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('=', Some('=')) => (Tok::EqEq, 2),
            ('!', Some('=')) => (Tok::Ne, 2),
            ('&', Some('&')) => (Tok::AndAnd, 2),
            ('|', Some('|')) => (Tok::OrOr, 2),
            (';', _) => (Tok::Semi, 1),
            ('=', _) => (Tok::Assign, 1),
            ('+', _) => (Tok::Plus, 1),
            ('-', _) => (Tok::Minus, 1),
            ('*', _) => (Tok::Star, 1),
            ('/', _) => (Tok::Slash, 1),
            ('%', _) => (Tok::Percent, 1),
            ('<', _) => (Tok::Lt, 1),
            ('>', _) => (Tok::Gt, 1),
            ('@', _) => (Tok::At, 1),
            ('#', _) => (Tok::Hash, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            _ => {
                return Err(LucidError::Syntax {
                    line,
                    col,
                    expected: vec!["token".into()],
                    found: format!("character {c:?}"),
                })
            }
        };
        out.push(Token { tok, pos });
        i += len;
        col += len as u32;
    }
    out.push(Token {
        tok: Tok::Eof,
        pos: Pos { line, col },
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        tokenize(s).unwrap().into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn operators_prefer_longest_match() {
        assert_eq!(
            toks("<= < == = != && ||"),
            vec![Tok::Le, Tok::Lt, Tok::EqEq, Tok::Assign, Tok::Ne, Tok::AndAnd, Tok::OrOr, Tok::Eof]
        );
    }

    #[test]
    fn comments_and_positions() {
        let t = tokenize("// header\n  fib @ t").unwrap();
        assert_eq!(t[0].tok, Tok::Ident("fib".into()));
        assert_eq!((t[0].pos.line, t[0].pos.col), (2, 3));
        assert_eq!((t[2].pos.line, t[2].pos.col), (2, 9));
    }

    #[test]
    fn rejects_stray_characters() {
        assert!(matches!(tokenize("a $ b"), Err(LucidError::Syntax { col: 3, .. })));
        assert!(tokenize("a & b").is_err());
    }

    #[test]
    fn rejects_out_of_range_literal() {
        assert!(tokenize("99999999999999999999").is_err());
    }
}
