//! Parser for the mini-C subset accepted by the built-in backend.
//!
//! Supported shape: optional `extern` declarations, the `assert`/`assume`/
//! `reach_error`/`abort` helper definitions (skipped; the interpreter
//! treats them as intrinsics), global integer declarations, and an
//! `int main()` whose body uses integer declarations, (compound)
//! assignments, `++`/`--`, `while`/`if`/`break`/`return`,
//! `assume(...)`/`assert(...)`, and `v = __VERIFIER_nondet_int();`.
//! Scoping is flat: a declaration binds the name for the whole `main`.
//!
//! Right-hand sides and conditions are captured as text regions and parsed
//! with the predicate grammar, so statement-level side effects are the only
//! ones that exist.

use crate::predicate::{parse_predicate, PredExpr};

pub type BlockId = usize;

#[derive(Debug, Clone, PartialEq)]
pub enum NondetKind {
    Int,
    /// `__VERIFIER_nondet_bool()` carries an intrinsic 0..=1 range.
    Bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Uninit,
    Expr(PredExpr),
    Nondet(NondetKind),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Decl(Vec<(String, Init)>),
    Assign(String, PredExpr),
    AssignNondet(String, NondetKind),
    While(PredExpr, BlockId),
    If(PredExpr, BlockId, Option<BlockId>),
    Break,
    Return,
    Assume(PredExpr),
    Assert(PredExpr),
    ReachError,
    Abort,
    Skip,
}

#[derive(Debug)]
pub struct MiniProgram {
    pub blocks: Vec<Vec<Stmt>>,
    pub main_block: BlockId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinicError {
    pub pos: usize,
    pub msg: String,
}

impl MinicError {
    fn new(pos: usize, msg: impl Into<String>) -> Self {
        MinicError {
            pos,
            msg: msg.into(),
        }
    }
}

const TYPE_KEYWORDS: &[&str] = &[
    "int", "long", "short", "char", "signed", "unsigned", "__int128", "_Bool", "bool",
];

const INTRINSIC_FUNCTIONS: &[&str] = &[
    "assert",
    "assume",
    "reach_error",
    "abort",
    "__VERIFIER_assert",
    "__VERIFIER_assume",
];

pub fn parse_program(source: &str) -> Result<MiniProgram, MinicError> {
    let mut parser = MiniParser {
        cur: Cursor {
            src: source,
            pos: 0,
        },
        blocks: Vec::new(),
    };
    parser.translation_unit()
}

struct MiniParser<'a> {
    cur: Cursor<'a>,
    blocks: Vec<Vec<Stmt>>,
}

impl<'a> MiniParser<'a> {
    fn translation_unit(&mut self) -> Result<MiniProgram, MinicError> {
        let mut globals: Vec<Stmt> = Vec::new();
        let mut main_block: Option<BlockId> = None;
        loop {
            self.cur.skip_trivia();
            if self.cur.at_end() {
                break;
            }
            if self.cur.eat_punct(";") {
                continue;
            }
            let pos = self.cur.pos;
            if self.cur.eat_keyword("extern") {
                self.cur
                    .skip_past(';')
                    .ok_or_else(|| MinicError::new(pos, "unterminated extern declaration"))?;
                continue;
            }
            let mut saw_type = self.cur.eat_keyword("void");
            if !saw_type {
                while TYPE_KEYWORDS.iter().any(|k| self.cur.eat_keyword(k)) {
                    saw_type = true;
                }
            }
            if !saw_type {
                return Err(MinicError::new(pos, "expected declaration or function"));
            }
            let name = self
                .cur
                .eat_ident()
                .ok_or_else(|| MinicError::new(self.cur.pos, "expected identifier"))?
                .to_string();
            self.cur.skip_trivia();
            if self.cur.peek_char() == Some('(') {
                self.cur.capture_balanced_paren()?;
                self.cur.skip_trivia();
                if name == "main" {
                    if !self.cur.eat_punct("{") {
                        return Err(MinicError::new(self.cur.pos, "expected main body"));
                    }
                    let id = self.block()?;
                    main_block = Some(id);
                } else if INTRINSIC_FUNCTIONS.contains(&name.as_str()) {
                    if self.cur.eat_punct("{") {
                        self.cur.skip_balanced_braces()?;
                    } else if !self.cur.eat_punct(";") {
                        return Err(MinicError::new(self.cur.pos, "expected function body"));
                    }
                } else {
                    return Err(MinicError::new(
                        pos,
                        format!("unsupported function `{name}`"),
                    ));
                }
            } else {
                // Global variable declaration.
                let stmt = self.declarators(name)?;
                globals.push(stmt);
            }
        }
        let main_block =
            main_block.ok_or_else(|| MinicError::new(0, "no `int main()` definition"))?;
        if !globals.is_empty() {
            let body = &mut self.blocks[main_block];
            globals.extend(std::mem::take(body));
            *body = globals;
        }
        Ok(MiniProgram {
            blocks: std::mem::take(&mut self.blocks),
            main_block,
        })
    }

    /// Parse statements up to the closing `}` (already past the `{`).
    fn block(&mut self) -> Result<BlockId, MinicError> {
        let mut stmts = Vec::new();
        loop {
            self.cur.skip_trivia();
            if self.cur.eat_punct("}") {
                break;
            }
            if self.cur.at_end() {
                return Err(MinicError::new(self.cur.pos, "unterminated block"));
            }
            stmts.push(self.statement()?);
        }
        self.blocks.push(stmts);
        Ok(self.blocks.len() - 1)
    }

    /// A single statement, or a brace-less body wrapped as one block.
    fn statement_as_block(&mut self) -> Result<BlockId, MinicError> {
        self.cur.skip_trivia();
        if self.cur.eat_punct("{") {
            return self.block();
        }
        let stmt = self.statement()?;
        self.blocks.push(vec![stmt]);
        Ok(self.blocks.len() - 1)
    }

    fn statement(&mut self) -> Result<Stmt, MinicError> {
        self.cur.skip_trivia();
        let pos = self.cur.pos;
        if self.cur.eat_punct(";") {
            return Ok(Stmt::Skip);
        }
        if self.cur.eat_punct("{") {
            // Flat scope: inline nested braces as a sub-block statement is
            // not needed; treat as unsupported to keep semantics obvious.
            return Err(MinicError::new(pos, "free-standing block"));
        }
        if self.cur.eat_keyword("while") {
            let cond = self.paren_expr()?;
            let body = self.statement_as_block()?;
            return Ok(Stmt::While(cond, body));
        }
        if self.cur.eat_keyword("if") {
            let cond = self.paren_expr()?;
            let then_block = self.statement_as_block()?;
            self.cur.skip_trivia();
            let else_block = if self.cur.eat_keyword("else") {
                Some(self.statement_as_block()?)
            } else {
                None
            };
            return Ok(Stmt::If(cond, then_block, else_block));
        }
        if self.cur.eat_keyword("break") {
            self.expect_semicolon()?;
            return Ok(Stmt::Break);
        }
        if self.cur.eat_keyword("return") {
            self.cur.skip_trivia();
            if self.cur.peek_char() != Some(';') {
                // The value of main's return expression is irrelevant here.
                self.cur.capture_until(&[';'])?;
            }
            self.expect_semicolon()?;
            return Ok(Stmt::Return);
        }
        for op in ["++", "--"] {
            if self.cur.eat_punct(op) {
                let name = self
                    .cur
                    .eat_ident()
                    .ok_or_else(|| MinicError::new(self.cur.pos, "expected identifier"))?
                    .to_string();
                self.expect_semicolon()?;
                return Ok(incr_stmt(&name, op));
            }
        }
        // Declaration?
        let mut is_decl = false;
        while TYPE_KEYWORDS.iter().any(|k| self.cur.eat_keyword(k)) {
            is_decl = true;
        }
        if is_decl {
            let name = self
                .cur
                .eat_ident()
                .ok_or_else(|| MinicError::new(self.cur.pos, "expected declarator"))?
                .to_string();
            return self.declarators(name);
        }
        // Assignment, increment, or call.
        let Some(name) = self.cur.eat_ident() else {
            return Err(MinicError::new(pos, "expected statement"));
        };
        let name = name.to_string();
        self.cur.skip_trivia();
        for op in ["++", "--"] {
            if self.cur.eat_punct(op) {
                self.expect_semicolon()?;
                return Ok(incr_stmt(&name, op));
            }
        }
        for compound in ["+=", "-=", "*=", "/=", "%="] {
            if self.cur.eat_punct(compound) {
                let rhs_text = self.cur.capture_until(&[';'])?;
                self.expect_semicolon()?;
                let rhs = self.parse_expr_region(&rhs_text, pos)?;
                let op = match compound {
                    "+=" => crate::predicate::BinOp::Add,
                    "-=" => crate::predicate::BinOp::Sub,
                    "*=" => crate::predicate::BinOp::Mul,
                    "/=" => crate::predicate::BinOp::Div,
                    _ => crate::predicate::BinOp::Rem,
                };
                return Ok(Stmt::Assign(
                    name.clone(),
                    PredExpr::bin(op, PredExpr::Var(name), rhs),
                ));
            }
        }
        if self.cur.peek_char() == Some('=') && !self.cur.rest().starts_with("==") {
            self.cur.pos += 1;
            let rhs_text = self.cur.capture_until(&[';'])?;
            self.expect_semicolon()?;
            if let Some(kind) = nondet_call(&rhs_text) {
                return Ok(Stmt::AssignNondet(name, kind));
            }
            let rhs = self.parse_expr_region(&rhs_text, pos)?;
            return Ok(Stmt::Assign(name, rhs));
        }
        if self.cur.peek_char() == Some('(') {
            let inner = self.cur.capture_balanced_paren()?;
            self.expect_semicolon()?;
            return match name.as_str() {
                "assume" | "__VERIFIER_assume" => {
                    Ok(Stmt::Assume(self.parse_expr_region(&inner, pos)?))
                }
                "assert" | "__VERIFIER_assert" => {
                    Ok(Stmt::Assert(self.parse_expr_region(&inner, pos)?))
                }
                "reach_error" => Ok(Stmt::ReachError),
                "abort" | "exit" => Ok(Stmt::Abort),
                n if n.starts_with("INVARIANT_MARKER_") => Ok(Stmt::Skip),
                other => Err(MinicError::new(pos, format!("unsupported call `{other}`"))),
            };
        }
        Err(MinicError::new(
            pos,
            format!("unsupported statement starting at `{name}`"),
        ))
    }

    fn declarators(&mut self, first: String) -> Result<Stmt, MinicError> {
        let mut items = Vec::new();
        let mut name = first;
        loop {
            self.cur.skip_trivia();
            let init = if self.cur.peek_char() == Some('=') && !self.cur.rest().starts_with("==") {
                self.cur.pos += 1;
                let text = self.cur.capture_until(&[',', ';'])?;
                if let Some(kind) = nondet_call(&text) {
                    Init::Nondet(kind)
                } else {
                    Init::Expr(self.parse_expr_region(&text, self.cur.pos)?)
                }
            } else {
                Init::Uninit
            };
            items.push((name, init));
            self.cur.skip_trivia();
            if self.cur.eat_punct(",") {
                name = self
                    .cur
                    .eat_ident()
                    .ok_or_else(|| MinicError::new(self.cur.pos, "expected declarator"))?
                    .to_string();
                continue;
            }
            self.expect_semicolon()?;
            return Ok(Stmt::Decl(items));
        }
    }

    fn paren_expr(&mut self) -> Result<PredExpr, MinicError> {
        self.cur.skip_trivia();
        let pos = self.cur.pos;
        if self.cur.peek_char() != Some('(') {
            return Err(MinicError::new(pos, "expected `(`"));
        }
        let inner = self.cur.capture_balanced_paren()?;
        self.parse_expr_region(&inner, pos)
    }

    fn parse_expr_region(&self, text: &str, pos: usize) -> Result<PredExpr, MinicError> {
        parse_predicate(text)
            .map_err(|e| MinicError::new(pos, format!("in expression `{}`: {e}", text.trim())))
    }

    fn expect_semicolon(&mut self) -> Result<(), MinicError> {
        if self.cur.eat_punct(";") {
            Ok(())
        } else {
            Err(MinicError::new(self.cur.pos, "expected `;`"))
        }
    }
}

fn incr_stmt(name: &str, op: &str) -> Stmt {
    let bin = if op == "++" {
        crate::predicate::BinOp::Add
    } else {
        crate::predicate::BinOp::Sub
    };
    Stmt::Assign(
        name.to_string(),
        PredExpr::bin(bin, PredExpr::var(name), PredExpr::int(1)),
    )
}

fn nondet_call(text: &str) -> Option<NondetKind> {
    let t = text.trim();
    let name = t.strip_suffix(")")?.trim_end();
    let name = name.strip_suffix("(")?.trim_end();
    let suffix = name.strip_prefix("__VERIFIER_nondet_")?;
    if suffix
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        if suffix == "bool" {
            Some(NondetKind::Bool)
        } else {
            Some(NondetKind::Int)
        }
    } else {
        None
    }
}

/// Character cursor with comment-aware scanning.
struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek_char(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn skip_trivia(&mut self) {
        loop {
            let rest = self.rest();
            if let Some(stripped) = rest.strip_prefix("//") {
                let line_len = stripped.find('\n').map(|i| i + 1).unwrap_or(stripped.len());
                self.pos += 2 + line_len;
            } else if let Some(stripped) = rest.strip_prefix("/*") {
                let end = stripped.find("*/").map(|i| i + 2).unwrap_or(stripped.len());
                self.pos += 2 + end;
            } else if rest.starts_with(|c: char| c.is_ascii_whitespace()) {
                self.pos += 1;
            } else {
                return;
            }
        }
    }

    /// Consume literal punctuation after trivia.
    fn eat_punct(&mut self, p: &str) -> bool {
        self.skip_trivia();
        if self.rest().starts_with(p) {
            self.pos += p.len();
            true
        } else {
            false
        }
    }

    /// Consume a keyword at an identifier boundary.
    fn eat_keyword(&mut self, kw: &str) -> bool {
        self.skip_trivia();
        let rest = self.rest();
        if let Some(after) = rest.strip_prefix(kw) {
            let next = after.chars().next();
            if !matches!(next, Some(c) if c == '_' || c.is_ascii_alphanumeric()) {
                self.pos += kw.len();
                return true;
            }
        }
        false
    }

    fn eat_ident(&mut self) -> Option<&'a str> {
        self.skip_trivia();
        let rest = self.rest();
        let mut len = 0;
        for c in rest.chars() {
            if c == '_' || c.is_ascii_alphabetic() || (len > 0 && c.is_ascii_digit()) {
                len += c.len_utf8();
            } else {
                break;
            }
        }
        if len == 0 {
            return None;
        }
        self.pos += len;
        Some(&rest[..len])
    }

    fn skip_past(&mut self, stop: char) -> Option<()> {
        while !self.at_end() {
            self.skip_trivia();
            if self.peek_char() == Some(stop) {
                self.pos += 1;
                return Some(());
            }
            self.pos += self.peek_char()?.len_utf8();
        }
        None
    }

    /// At `(`: consume through the matching `)` and return the interior
    /// text with comments removed.
    fn capture_balanced_paren(&mut self) -> Result<String, MinicError> {
        self.skip_trivia();
        if self.peek_char() != Some('(') {
            return Err(MinicError::new(self.pos, "expected `(`"));
        }
        self.pos += 1;
        let mut depth = 1usize;
        let mut out = String::new();
        while !self.at_end() {
            if self.rest().starts_with("//") || self.rest().starts_with("/*") {
                self.skip_trivia();
                out.push(' ');
                continue;
            }
            let c = self.peek_char().unwrap();
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth == 0 {
                        self.pos += 1;
                        return Ok(out);
                    }
                }
                _ => {}
            }
            out.push(c);
            self.pos += c.len_utf8();
        }
        Err(MinicError::new(self.pos, "unbalanced parentheses"))
    }

    /// Capture text until one of `stops` at parenthesis depth zero; the
    /// stop character is not consumed. Comments are dropped.
    fn capture_until(&mut self, stops: &[char]) -> Result<String, MinicError> {
        let mut depth = 0usize;
        let mut out = String::new();
        while !self.at_end() {
            if self.rest().starts_with("//") || self.rest().starts_with("/*") {
                self.skip_trivia();
                out.push(' ');
                continue;
            }
            let c = self.peek_char().unwrap();
            if depth == 0 && stops.contains(&c) {
                return Ok(out);
            }
            match c {
                '(' => depth += 1,
                ')' => {
                    if depth == 0 {
                        return Err(MinicError::new(self.pos, "unbalanced `)`"));
                    }
                    depth -= 1;
                }
                _ => {}
            }
            out.push(c);
            self.pos += c.len_utf8();
        }
        Err(MinicError::new(self.pos, "unterminated statement"))
    }

    fn skip_balanced_braces(&mut self) -> Result<(), MinicError> {
        // Already past the opening `{`.
        let mut depth = 1usize;
        while !self.at_end() {
            self.skip_trivia();
            match self.peek_char() {
                Some('{') => depth += 1,
                Some('}') => {
                    depth -= 1;
                    if depth == 0 {
                        self.pos += 1;
                        return Ok(());
                    }
                }
                Some(_) => {}
                None => break,
            }
            if let Some(c) = self.peek_char() {
                self.pos += c.len_utf8();
            }
        }
        Err(MinicError::new(self.pos, "unbalanced braces"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fig1_shape() {
        let src = "\
void assert(int cond) { if (!(cond)) { ERROR: { reach_error(); abort(); } } }
void assume(int cond) { if (!cond) { abort(); } }
int main() {
  int x = 0;
  int y = 100;
  assume(x == 0 && y == 100);
  while (y > 0) {
    x += 3;
    y -= 5;
  }
  assert(x > y);
  return 0;
}
";
        let prog = parse_program(src).unwrap();
        let main = &prog.blocks[prog.main_block];
        assert!(matches!(main[0], Stmt::Decl(_)));
        assert!(matches!(main[2], Stmt::Assume(_)));
        assert!(matches!(main[3], Stmt::While(..)));
        assert!(matches!(main[4], Stmt::Assert(_)));
        assert!(matches!(main[5], Stmt::Return));
    }

    #[test]
    fn compound_assignment_desugars() {
        let src = "int main() { int x = 1; x *= 3; x++; --x; assert(x >= 0); return 0; }";
        let prog = parse_program(src).unwrap();
        let main = &prog.blocks[prog.main_block];
        assert_eq!(
            main[1],
            Stmt::Assign(
                "x".into(),
                PredExpr::bin(
                    crate::predicate::BinOp::Mul,
                    PredExpr::var("x"),
                    PredExpr::int(3)
                )
            )
        );
        assert!(matches!(main[2], Stmt::Assign(..)));
        assert!(matches!(main[3], Stmt::Assign(..)));
    }

    #[test]
    fn nondet_assignment_and_decl_init() {
        let src = "int main() { int x; x = __VERIFIER_nondet_int(); int b = __VERIFIER_nondet_bool(); assert(x <= x); return 0; }";
        let prog = parse_program(src).unwrap();
        let main = &prog.blocks[prog.main_block];
        assert_eq!(main[1], Stmt::AssignNondet("x".into(), NondetKind::Int));
        assert_eq!(
            main[2],
            Stmt::Decl(vec![("b".into(), Init::Nondet(NondetKind::Bool))])
        );
    }

    #[test]
    fn comments_are_ignored_inside_expressions() {
        let src = "int main() {\n  int r = 0; // tracks (r)\n  while (r < 3 /* bound */) {\n    r = r + 1;\n  }\n  assert(r == 3);\n  return 0;\n}";
        let prog = parse_program(src).unwrap();
        assert!(prog.blocks[prog.main_block].len() >= 3);
    }

    #[test]
    fn marker_calls_become_skips() {
        let src =
            "int main() { int i = 0; while (i < 2) { INVARIANT_MARKER_1(); i++; } assert(i == 2); return 0; }";
        let prog = parse_program(src).unwrap();
        let while_body = prog
            .blocks
            .iter()
            .find(|b| b.contains(&Stmt::Skip))
            .expect("marker block");
        assert!(matches!(while_body[0], Stmt::Skip));
    }

    #[test]
    fn unsupported_constructs_error_out() {
        assert!(parse_program("int main() { int a[3]; return 0; }").is_err());
        assert!(
            parse_program("int helper() { return 1; } int main() { assert(1); return 0; }")
                .is_err()
        );
        assert!(parse_program("int main() { foo(); assert(1); return 0; }").is_err());
        assert!(parse_program("int x = 0;").is_err());
    }

    #[test]
    fn globals_are_prepended_to_main() {
        let src = "int g = 7;\nint main() { assert(g == 7); return 0; }";
        let prog = parse_program(src).unwrap();
        let main = &prog.blocks[prog.main_block];
        assert_eq!(
            main[0],
            Stmt::Decl(vec![("g".into(), Init::Expr(PredExpr::int(7)))])
        );
    }

    #[test]
    fn extern_declarations_are_skipped() {
        let src = "extern void reach_error(void);\nint main() { assert(1 == 1); return 0; }";
        assert!(parse_program(src).is_ok());
    }
}
