//! Canonical printer emitting a parenthesis pair only where its removal
//! would change the parse.
//!
//! Spacing convention: single spaces around every binary operator except
//! `*`, `/`, `%` (which print tight), no space after unary operators, one
//! space after a cast's closing parenthesis.

use super::{BinOp, PredExpr, UnOp};

// Precedence levels; higher binds tighter. Primary atoms are maximal.
const PREC_TERNARY: u8 = 1;
const PREC_UNARY: u8 = 8;
const PREC_ATOM: u8 = 9;

fn precedence(e: &PredExpr) -> u8 {
    match e {
        PredExpr::Ternary(..) => PREC_TERNARY,
        PredExpr::Binary(op, ..) => match op {
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne => 4,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 7,
        },
        PredExpr::Unary(..) | PredExpr::Cast(..) => PREC_UNARY,
        PredExpr::IntLit(_) | PredExpr::BoolLit(_) | PredExpr::Var(_) => PREC_ATOM,
    }
}

/// Render the expression in C syntax with minimal parentheses.
pub fn print_minimal(expr: &PredExpr) -> String {
    let mut out = String::new();
    write_expr(expr, PREC_TERNARY, &mut out);
    out
}

fn write_expr(e: &PredExpr, min_prec: u8, out: &mut String) {
    let prec = precedence(e);
    let parens = prec < min_prec;
    if parens {
        out.push('(');
    }
    match e {
        PredExpr::IntLit(v) => out.push_str(&v.to_string()),
        PredExpr::BoolLit(b) => out.push_str(if *b { "true" } else { "false" }),
        PredExpr::Var(name) => out.push_str(name),
        PredExpr::Cast(ty, operand) => {
            out.push('(');
            out.push_str(ty);
            out.push_str(") ");
            write_expr(operand, PREC_UNARY, out);
        }
        PredExpr::Unary(op, operand) => {
            let mut inner = String::new();
            write_expr(operand, PREC_UNARY, &mut inner);
            match op {
                UnOp::Neg => {
                    out.push('-');
                    // `--x` would lex as a decrement token.
                    if inner.starts_with('-') {
                        out.push('(');
                        out.push_str(&inner);
                        out.push(')');
                    } else {
                        out.push_str(&inner);
                    }
                }
                UnOp::LogNot => {
                    out.push('!');
                    out.push_str(&inner);
                }
            }
        }
        PredExpr::Binary(op, lhs, rhs) => {
            // Left-associative: the left child tolerates equal precedence,
            // the right child requires strictly higher.
            write_expr(lhs, prec, out);
            match op {
                BinOp::Mul | BinOp::Div | BinOp::Rem => out.push_str(op.symbol()),
                _ => {
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push(' ');
                }
            }
            write_expr(rhs, prec + 1, out);
        }
        PredExpr::Ternary(cond, then, els) => {
            // C grammar: the condition is a logical-OR expression, the
            // middle a full expression, the else a conditional expression.
            write_expr(cond, PREC_TERNARY + 1, out);
            out.push_str(" ? ");
            write_expr(then, PREC_TERNARY, out);
            out.push_str(" : ");
            write_expr(els, PREC_TERNARY, out);
        }
    }
    if parens {
        out.push(')');
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_predicate;
    use super::*;

    fn roundtrip(text: &str) -> String {
        print_minimal(&parse_predicate(text).unwrap())
    }

    #[test]
    fn drops_redundant_parens_in_disjunctions() {
        // && binds tighter than ||, so the fully parenthesized raw form
        // prints without any parentheses.
        let raw = "(((36 <= y) && (36 <= x)) || ((21 <= y) && (45 <= x)))";
        assert_eq!(roundtrip(raw), "36 <= y && 36 <= x || 21 <= y && 45 <= x");
    }

    #[test]
    fn atom_prints_bare() {
        assert_eq!(roundtrip("x"), "x");
        assert_eq!(roundtrip("(x)"), "x");
        assert_eq!(roundtrip("true"), "true");
    }

    #[test]
    fn keeps_parens_that_change_the_parse() {
        assert_eq!(roundtrip("(a + b) * c"), "(a + b)*c");
        assert_eq!(roundtrip("a + b * c"), "a + b*c");
        assert_eq!(roundtrip("a - (b - c)"), "a - (b - c)");
        assert_eq!(roundtrip("(a - b) - c"), "a - b - c");
    }

    #[test]
    fn tight_spacing_for_multiplicative_operators() {
        assert_eq!(roundtrip("5 * x + 3 * y == 300"), "5*x + 3*y == 300");
        assert_eq!(roundtrip("a % b / c"), "a%b/c");
    }

    #[test]
    fn nested_negation_does_not_produce_decrement() {
        let e = PredExpr::Unary(
            UnOp::Neg,
            Box::new(PredExpr::Unary(UnOp::Neg, Box::new(PredExpr::var("x")))),
        );
        let printed = print_minimal(&e);
        assert_eq!(printed, "-(-x)");
        assert_eq!(parse_predicate(&printed).unwrap(), e);
    }

    #[test]
    fn casts_print_with_space_and_reparse() {
        assert_eq!(
            roundtrip("((long long) weight1 + weight2) <= max_threshold"),
            "(long long) weight1 + weight2 <= max_threshold"
        );
        let printed = roundtrip("(__int128) ((long long) 2 * a) * y");
        assert_eq!(printed, "(__int128) ((long long) 2*a)*y");
    }

    #[test]
    fn ternary_condition_is_parenthesized_only_when_ternary() {
        assert_eq!(roundtrip("a ? b : c ? d : e"), "a ? b : c ? d : e");
        assert_eq!(roundtrip("(a ? b : c) ? d : e"), "(a ? b : c) ? d : e");
        assert_eq!(roundtrip("a || b ? c : d"), "a || b ? c : d");
        // A ternary below a binary operator needs parentheses.
        assert_eq!(roundtrip("(a ? b : c) + d"), "(a ? b : c) + d");
    }

    #[test]
    fn logical_not_chains() {
        assert_eq!(roundtrip("!!a"), "!!a");
        assert_eq!(roundtrip("!(a && b)"), "!(a && b)");
        assert_eq!(roundtrip("!a && b"), "!a && b");
        assert_eq!(roundtrip("-!a"), "-!a");
    }
}
