//! Recursive-descent parser with standard C operator precedence.

use thiserror::Error;

use super::lexer::{tokenize, Spanned, Tok};
use super::{BinOp, PredExpr, UnOp};

/// Parse failure for a predicate expression.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("side-effecting operator `{op}` at offset {pos}")]
    SideEffect { pos: usize, op: String },
}

/// Type names recognized as cast targets when they appear alone in
/// parentheses, e.g. `(int) x`. Multi-word targets such as `(long long)`
/// need no whitelist: two adjacent identifiers cannot be an expression.
const TYPE_KEYWORDS: &[&str] = &[
    "int",
    "long",
    "short",
    "char",
    "signed",
    "unsigned",
    "__int128",
    "_Bool",
    "bool",
    "size_t",
    "ssize_t",
    "ptrdiff_t",
    "intptr_t",
    "uintptr_t",
    "int8_t",
    "int16_t",
    "int32_t",
    "int64_t",
    "uint8_t",
    "uint16_t",
    "uint32_t",
    "uint64_t",
];

/// Parse a C boolean expression.
///
/// Ternary is right-associative, every binary operator is left-associative,
/// unary operators bind tighter than binary ones, and casts parse as prefix
/// operators on unary expressions.
pub fn parse_predicate(text: &str) -> Result<PredExpr, ParseError> {
    let toks = tokenize(text).map_err(|e| ParseError::Syntax {
        pos: e.pos,
        msg: e.msg,
    })?;
    for t in &toks {
        if let Tok::SideEffect(op) = t.tok {
            return Err(ParseError::SideEffect {
                pos: t.pos,
                op: op.to_string(),
            });
        }
    }
    let mut p = Parser {
        toks: &toks,
        pos: 0,
        end: text.len(),
    };
    let expr = p.ternary()?;
    if p.pos < p.toks.len() {
        return Err(p.err_here("unexpected trailing tokens"));
    }
    Ok(expr)
}

struct Parser<'a> {
    toks: &'a [Spanned],
    pos: usize,
    end: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|s| &s.tok)
    }

    fn bump(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|s| &s.tok);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|s| s.pos).unwrap_or(self.end)
    }

    fn err_here(&self, msg: &str) -> ParseError {
        ParseError::Syntax {
            pos: self.here(),
            msg: msg.to_string(),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            Err(self.err_here(&format!("expected {what}")))
        }
    }

    fn ternary(&mut self) -> Result<PredExpr, ParseError> {
        let cond = self.binary(0)?;
        if self.eat(&Tok::Question) {
            let then = self.ternary_middle()?;
            self.expect(Tok::Colon, "`:`")?;
            let els = self.ternary()?;
            Ok(PredExpr::Ternary(
                Box::new(cond),
                Box::new(then),
                Box::new(els),
            ))
        } else {
            Ok(cond)
        }
    }

    // Between `?` and `:` C allows a full expression.
    fn ternary_middle(&mut self) -> Result<PredExpr, ParseError> {
        self.ternary()
    }

    fn binary(&mut self, min_level: usize) -> Result<PredExpr, ParseError> {
        // Precedence levels, loosest first.
        const LEVELS: &[&[(Tok, BinOp)]] = &[
            &[(Tok::OrOr, BinOp::Or)],
            &[(Tok::AndAnd, BinOp::And)],
            &[(Tok::EqEq, BinOp::Eq), (Tok::Ne, BinOp::Ne)],
            &[
                (Tok::Lt, BinOp::Lt),
                (Tok::Le, BinOp::Le),
                (Tok::Gt, BinOp::Gt),
                (Tok::Ge, BinOp::Ge),
            ],
            &[(Tok::Plus, BinOp::Add), (Tok::Minus, BinOp::Sub)],
            &[
                (Tok::Star, BinOp::Mul),
                (Tok::Slash, BinOp::Div),
                (Tok::Percent, BinOp::Rem),
            ],
        ];
        if min_level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.binary(min_level + 1)?;
        'outer: loop {
            for (tok, op) in LEVELS[min_level] {
                if self.eat(tok) {
                    let rhs = self.binary(min_level + 1)?;
                    lhs = PredExpr::bin(*op, lhs, rhs);
                    continue 'outer;
                }
            }
            return Ok(lhs);
        }
    }

    fn unary(&mut self) -> Result<PredExpr, ParseError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(PredExpr::Unary(UnOp::LogNot, Box::new(self.unary()?)))
            }
            Some(Tok::Minus) => {
                self.pos += 1;
                Ok(PredExpr::Unary(UnOp::Neg, Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                if let Some(names) = self.cast_target() {
                    let operand = self.unary()?;
                    Ok(PredExpr::Cast(names, Box::new(operand)))
                } else {
                    self.primary()
                }
            }
            _ => self.primary(),
        }
    }

    /// If the parser sits on `( ident... )` forming a cast target, consume
    /// it and return the type name. A single identifier counts only when it
    /// is a known type keyword; two or more adjacent identifiers are always
    /// a type name, since no expression has that shape.
    fn cast_target(&mut self) -> Option<String> {
        debug_assert_eq!(self.peek(), Some(&Tok::LParen));
        let mut idents = Vec::new();
        let mut look = self.pos + 1;
        while let Some(Spanned {
            tok: Tok::Ident(name),
            ..
        }) = self.toks.get(look)
        {
            idents.push(name.clone());
            look += 1;
        }
        if idents.is_empty() || self.toks.get(look).map(|s| &s.tok) != Some(&Tok::RParen) {
            return None;
        }
        if idents.len() == 1 && !TYPE_KEYWORDS.contains(&idents[0].as_str()) {
            return None;
        }
        self.pos = look + 1;
        Some(idents.join(" "))
    }

    fn primary(&mut self) -> Result<PredExpr, ParseError> {
        let pos = self.here();
        match self.bump() {
            Some(Tok::Int(v)) => Ok(PredExpr::IntLit(v.clone())),
            Some(Tok::True) => Ok(PredExpr::BoolLit(true)),
            Some(Tok::False) => Ok(PredExpr::BoolLit(false)),
            Some(Tok::Ident(name)) => Ok(PredExpr::Var(name.clone())),
            Some(Tok::LParen) => {
                let inner = self.ternary()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(other) => Err(ParseError::Syntax {
                pos,
                msg: format!("expected expression, found `{other:?}`"),
            }),
            None => Err(ParseError::Syntax {
                pos,
                msg: "unexpected end of input".to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn v(name: &str) -> PredExpr {
        PredExpr::var(name)
    }

    fn n(x: i64) -> PredExpr {
        PredExpr::int(x)
    }

    #[test]
    fn parses_fig2_equation() {
        let e = parse_predicate("5*x + 3*y == 300").unwrap();
        let expected = PredExpr::bin(
            BinOp::Eq,
            PredExpr::bin(
                BinOp::Add,
                PredExpr::bin(BinOp::Mul, n(5), v("x")),
                PredExpr::bin(BinOp::Mul, n(3), v("y")),
            ),
            n(300),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn parses_single_variable() {
        assert_eq!(parse_predicate("x").unwrap(), v("x"));
    }

    #[test]
    fn equality_is_left_associative() {
        let e = parse_predicate("a == b == c").unwrap();
        let expected = PredExpr::bin(BinOp::Eq, PredExpr::bin(BinOp::Eq, v("a"), v("b")), v("c"));
        assert_eq!(e, expected);
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let e = parse_predicate("a && b || c && d").unwrap();
        let expected = PredExpr::bin(
            BinOp::Or,
            PredExpr::bin(BinOp::And, v("a"), v("b")),
            PredExpr::bin(BinOp::And, v("c"), v("d")),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn unary_binds_tighter_than_binary() {
        let e = parse_predicate("-a * b").unwrap();
        let expected = PredExpr::bin(
            BinOp::Mul,
            PredExpr::Unary(UnOp::Neg, Box::new(v("a"))),
            v("b"),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn casts_parse_as_prefix_on_unary_expressions() {
        // (long long) 2 * a multiplies the cast literal by a.
        let e = parse_predicate("(long long) 2 * a").unwrap();
        let expected = PredExpr::bin(
            BinOp::Mul,
            PredExpr::Cast("long long".into(), Box::new(n(2))),
            v("a"),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn fig4_cast_nest_parses() {
        let e = parse_predicate("((__int128) ((long long) 2 * a) * y)").unwrap();
        let inner = PredExpr::bin(
            BinOp::Mul,
            PredExpr::Cast("long long".into(), Box::new(n(2))),
            v("a"),
        );
        let expected = PredExpr::bin(
            BinOp::Mul,
            PredExpr::Cast("__int128".into(), Box::new(inner)),
            v("y"),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn single_unknown_identifier_in_parens_is_grouping() {
        let e = parse_predicate("(x) - 3").unwrap();
        assert_eq!(e, PredExpr::bin(BinOp::Sub, v("x"), n(3)));
        let e = parse_predicate("(int) - 3").unwrap();
        assert_eq!(
            e,
            PredExpr::Cast(
                "int".into(),
                Box::new(PredExpr::Unary(UnOp::Neg, Box::new(n(3))))
            )
        );
    }

    #[test]
    fn ternary_is_right_associative() {
        let e = parse_predicate("a ? b : c ? d : e").unwrap();
        let inner = PredExpr::Ternary(Box::new(v("c")), Box::new(v("d")), Box::new(v("e")));
        let expected = PredExpr::Ternary(Box::new(v("a")), Box::new(v("b")), Box::new(inner));
        assert_eq!(e, expected);
    }

    #[test]
    fn ternary_middle_may_be_ternary() {
        let e = parse_predicate("a ? b ? c : d : e").unwrap();
        let middle = PredExpr::Ternary(Box::new(v("b")), Box::new(v("c")), Box::new(v("d")));
        let expected = PredExpr::Ternary(Box::new(v("a")), Box::new(middle), Box::new(v("e")));
        assert_eq!(e, expected);
    }

    #[test]
    fn fig4_ternary_parses() {
        let e = parse_predicate("(a >= 0) ? (a / 2) : ((a / 2) - 1)").unwrap();
        match e {
            PredExpr::Ternary(..) => {}
            other => panic!("expected ternary, got {other:?}"),
        }
    }

    #[test]
    fn side_effect_operators_are_reported() {
        match parse_predicate("x += 1") {
            Err(ParseError::SideEffect { op, .. }) => assert_eq!(op, "+="),
            other => panic!("expected SideEffect, got {other:?}"),
        }
        match parse_predicate("a = b == c") {
            Err(ParseError::SideEffect { op, .. }) => assert_eq!(op, "="),
            other => panic!("expected SideEffect, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse_predicate("a + ") {
            Err(ParseError::Syntax { pos, .. }) => assert_eq!(pos, 4),
            other => panic!("expected Syntax, got {other:?}"),
        }
        assert!(parse_predicate("").is_err());
        assert!(parse_predicate("a b").is_err());
        assert!(parse_predicate("f(x)").is_err());
        assert!(parse_predicate("a[0] < 2").is_err());
    }

    #[test]
    fn big_literals_do_not_overflow() {
        let e = parse_predicate("x % 9223372036854775808 == 0").unwrap();
        match e {
            PredExpr::Binary(BinOp::Eq, lhs, _) => match *lhs {
                PredExpr::Binary(BinOp::Rem, _, rhs) => {
                    assert_eq!(*rhs, PredExpr::IntLit(BigInt::from(9223372036854775808u64)));
                }
                other => panic!("unexpected {other:?}"),
            },
            other => panic!("unexpected {other:?}"),
        }
    }
}
