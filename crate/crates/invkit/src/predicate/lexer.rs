//! Tokenizer for the predicate expression grammar.

use num_bigint::BigInt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Int(BigInt),
    Ident(String),
    True,
    False,
    Plus,
    Minus,
    Star,
    Slash,
    Percent,
    Lt,
    Le,
    Gt,
    Ge,
    EqEq,
    Ne,
    AndAnd,
    OrOr,
    Bang,
    Question,
    Colon,
    LParen,
    RParen,
    /// Assignment / increment / decrement operator. Always an error in a
    /// predicate; surfaced so the parser can report `SideEffectError`.
    SideEffect(&'static str),
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct LexError {
    pub pos: usize,
    pub msg: String,
}

pub(crate) fn tokenize(text: &str) -> Result<Vec<Spanned>, LexError> {
    let bytes = text.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let pos = i;
        let tok = match c {
            b'(' => {
                i += 1;
                Tok::LParen
            }
            b')' => {
                i += 1;
                Tok::RParen
            }
            b'?' => {
                i += 1;
                Tok::Question
            }
            b':' => {
                i += 1;
                Tok::Colon
            }
            b'+' => match bytes.get(i + 1) {
                Some(b'+') => {
                    i += 2;
                    Tok::SideEffect("++")
                }
                Some(b'=') => {
                    i += 2;
                    Tok::SideEffect("+=")
                }
                _ => {
                    i += 1;
                    Tok::Plus
                }
            },
            b'-' => match bytes.get(i + 1) {
                Some(b'-') => {
                    i += 2;
                    Tok::SideEffect("--")
                }
                Some(b'=') => {
                    i += 2;
                    Tok::SideEffect("-=")
                }
                _ => {
                    i += 1;
                    Tok::Minus
                }
            },
            b'*' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::SideEffect("*=")
                }
                _ => {
                    i += 1;
                    Tok::Star
                }
            },
            b'/' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::SideEffect("/=")
                }
                _ => {
                    i += 1;
                    Tok::Slash
                }
            },
            b'%' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::SideEffect("%=")
                }
                _ => {
                    i += 1;
                    Tok::Percent
                }
            },
            b'<' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::Le
                }
                Some(b'<') => {
                    return Err(LexError {
                        pos,
                        msg: "unsupported operator `<<`".into(),
                    })
                }
                _ => {
                    i += 1;
                    Tok::Lt
                }
            },
            b'>' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::Ge
                }
                Some(b'>') => {
                    return Err(LexError {
                        pos,
                        msg: "unsupported operator `>>`".into(),
                    })
                }
                _ => {
                    i += 1;
                    Tok::Gt
                }
            },
            b'=' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::EqEq
                }
                _ => {
                    i += 1;
                    Tok::SideEffect("=")
                }
            },
            b'!' => match bytes.get(i + 1) {
                Some(b'=') => {
                    i += 2;
                    Tok::Ne
                }
                _ => {
                    i += 1;
                    Tok::Bang
                }
            },
            b'&' => match bytes.get(i + 1) {
                Some(b'&') => {
                    i += 2;
                    Tok::AndAnd
                }
                _ => {
                    return Err(LexError {
                        pos,
                        msg: "unsupported operator `&`".into(),
                    })
                }
            },
            b'|' => match bytes.get(i + 1) {
                Some(b'|') => {
                    i += 2;
                    Tok::OrOr
                }
                _ => {
                    return Err(LexError {
                        pos,
                        msg: "unsupported operator `|`".into(),
                    })
                }
            },
            b'0'..=b'9' => {
                let (tok, next) = lex_number(bytes, i, pos)?;
                i = next;
                tok
            }
            c if c == b'_' || c.is_ascii_alphabetic() => {
                let start = i;
                while i < bytes.len() && (bytes[i] == b'_' || bytes[i].is_ascii_alphanumeric()) {
                    i += 1;
                }
                let name = &text[start..i];
                match name {
                    "true" => Tok::True,
                    "false" => Tok::False,
                    _ => Tok::Ident(name.to_string()),
                }
            }
            other => {
                return Err(LexError {
                    pos,
                    msg: format!("unexpected character `{}`", other as char),
                })
            }
        };
        toks.push(Spanned { tok, pos });
    }
    Ok(toks)
}

fn lex_number(bytes: &[u8], mut i: usize, pos: usize) -> Result<(Tok, usize), LexError> {
    let start = i;
    if bytes[i] == b'0' && matches!(bytes.get(i + 1), Some(b'x') | Some(b'X')) {
        i += 2;
        let hex_start = i;
        while i < bytes.len() && bytes[i].is_ascii_hexdigit() {
            i += 1;
        }
        if i == hex_start {
            return Err(LexError {
                pos,
                msg: "hex literal with no digits".into(),
            });
        }
        let digits = std::str::from_utf8(&bytes[hex_start..i]).unwrap();
        let value = BigInt::parse_bytes(digits.as_bytes(), 16).unwrap();
        let i = skip_int_suffix(bytes, i);
        return Ok((Tok::Int(value), i));
    }
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        return Err(LexError {
            pos,
            msg: "floating-point literals are not supported".into(),
        });
    }
    let digits = std::str::from_utf8(&bytes[start..i]).unwrap();
    let value = BigInt::parse_bytes(digits.as_bytes(), 10).unwrap();
    let i = skip_int_suffix(bytes, i);
    Ok((Tok::Int(value), i))
}

// Integer suffixes (U, L, LL, ...) are accepted and ignored.
fn skip_int_suffix(bytes: &[u8], mut i: usize) -> usize {
    let mut taken = 0;
    while taken < 3 && matches!(bytes.get(i), Some(b'u' | b'U' | b'l' | b'L')) {
        i += 1;
        taken += 1;
    }
    i
}

/// True iff the text contains no assignment, increment or decrement token
/// (`=`, `+=`, `-=`, `*=`, `/=`, `%=`, `&=`, `|=`, `^=`, `<<=`, `>>=`,
/// `++`, `--`). `==`, `<=`, `>=`, `!=` are not flagged. Characters outside
/// the grammar are skipped; syntactic validity is the parser's concern.
pub fn check_no_side_effects(text: &str) -> bool {
    let b = text.as_bytes();
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            b'+' | b'-' => {
                if b.get(i + 1) == Some(&b[i]) || b.get(i + 1) == Some(&b'=') {
                    return false;
                }
                i += 1;
            }
            b'*' | b'/' | b'%' | b'^' => {
                if b.get(i + 1) == Some(&b'=') {
                    return false;
                }
                i += 1;
            }
            b'<' | b'>' => {
                if b.get(i + 1) == Some(&b[i]) {
                    if b.get(i + 2) == Some(&b'=') {
                        return false;
                    }
                    i += 2;
                } else if b.get(i + 1) == Some(&b'=') {
                    i += 2;
                } else {
                    i += 1;
                }
            }
            b'&' | b'|' => {
                if b.get(i + 1) == Some(&b'=') {
                    return false;
                }
                i += if b.get(i + 1) == Some(&b[i]) { 2 } else { 1 };
            }
            b'=' => {
                if b.get(i + 1) == Some(&b'=') {
                    i += 2;
                } else {
                    return false;
                }
            }
            b'!' => {
                i += if b.get(i + 1) == Some(&b'=') { 2 } else { 1 };
            }
            _ => i += 1,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_compound_assignment() {
        assert!(!check_no_side_effects("x += 1"));
        assert!(!check_no_side_effects("x -= 1"));
        assert!(!check_no_side_effects("x++"));
        assert!(!check_no_side_effects("--x"));
        assert!(!check_no_side_effects("x *= 2"));
    }

    #[test]
    fn distinguishes_assignment_from_equality() {
        assert!(check_no_side_effects("x == 1"));
        assert!(!check_no_side_effects("a = b == c"));
        assert!(check_no_side_effects("a <= b && b >= c || a != c"));
    }

    #[test]
    fn tolerates_unlexable_characters() {
        assert!(check_no_side_effects("x @ 1"));
        assert!(!check_no_side_effects("x @ y = 1"));
        assert!(!check_no_side_effects("a & b ; x <<= 2"));
    }

    #[test]
    fn integer_suffixes_are_ignored() {
        let toks = tokenize("5LL + 0x1Fu").unwrap();
        assert_eq!(toks[0].tok, Tok::Int(BigInt::from(5)));
        assert_eq!(toks[2].tok, Tok::Int(BigInt::from(31)));
    }

    #[test]
    fn bitwise_operators_fail_to_lex() {
        assert!(tokenize("a & b").is_err());
        assert!(tokenize("a | b").is_err());
        assert!(tokenize("a << 2").is_err());
        assert!(tokenize("a >> 2").is_err());
    }
}
