//! C boolean expressions used as invariant predicates.
//!
//! The expression language is the side-effect-free subset of C expressions
//! that shows up in verifier-emitted invariants: integer and boolean
//! literals, variables, integral casts, unary `-`/`!`, the arithmetic,
//! relational and logical binary operators, and the ternary conditional.
//! Assignment and increment/decrement operators are rejected at the lexer
//! level; bitwise and shift operators are not part of the grammar and
//! produce syntax errors.

mod eval;
mod lexer;
mod parser;
mod printer;

pub use eval::{eval_expr, Env, EvalError};
pub use lexer::check_no_side_effects;
pub use parser::{parse_predicate, ParseError};
pub use printer::print_minimal;

use num_bigint::BigInt;

/// Binary operators, in C semantics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    /// The C source spelling of the operator.
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// True for `<`, `<=`, `>`, `>=`, `==`, `!=`.
    pub fn is_relational(self) -> bool {
        matches!(
            self,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne
        )
    }
}

/// Unary operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    /// Arithmetic negation `-`.
    Neg,
    /// Logical not `!`.
    LogNot,
}

/// AST of a C boolean expression.
///
/// Integer literals are arbitrary precision and always non-negative as
/// parsed; negative values arise through [`UnOp::Neg`] nodes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PredExpr {
    IntLit(BigInt),
    BoolLit(bool),
    Var(String),
    /// Integral cast, e.g. `(long long) x`. The target type name is kept
    /// verbatim; evaluation treats the cast as identity.
    Cast(String, Box<PredExpr>),
    Unary(UnOp, Box<PredExpr>),
    Binary(BinOp, Box<PredExpr>, Box<PredExpr>),
    Ternary(Box<PredExpr>, Box<PredExpr>, Box<PredExpr>),
}

impl PredExpr {
    pub fn int(v: i64) -> Self {
        if v < 0 {
            PredExpr::Unary(UnOp::Neg, Box::new(PredExpr::IntLit(BigInt::from(-v))))
        } else {
            PredExpr::IntLit(BigInt::from(v))
        }
    }

    pub fn var(name: &str) -> Self {
        PredExpr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, lhs: PredExpr, rhs: PredExpr) -> Self {
        PredExpr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    /// True if the subtree contains a division or modulo node.
    pub fn contains_division(&self) -> bool {
        match self {
            PredExpr::Binary(op, l, r) => {
                matches!(op, BinOp::Div | BinOp::Rem)
                    || l.contains_division()
                    || r.contains_division()
            }
            PredExpr::Unary(_, e) | PredExpr::Cast(_, e) => e.contains_division(),
            PredExpr::Ternary(c, t, e) => {
                c.contains_division() || t.contains_division() || e.contains_division()
            }
            _ => false,
        }
    }

    /// True if the subtree contains any cast node.
    pub fn contains_cast(&self) -> bool {
        match self {
            PredExpr::Cast(..) => true,
            PredExpr::Binary(_, l, r) => l.contains_cast() || r.contains_cast(),
            PredExpr::Unary(_, e) => e.contains_cast(),
            PredExpr::Ternary(c, t, e) => {
                c.contains_cast() || t.contains_cast() || e.contains_cast()
            }
            _ => false,
        }
    }

    /// Distinct variable names referenced by the expression, sorted.
    pub fn variables(&self) -> Vec<String> {
        let mut out = std::collections::BTreeSet::new();
        self.collect_vars(&mut out);
        out.into_iter().collect()
    }

    fn collect_vars(&self, out: &mut std::collections::BTreeSet<String>) {
        match self {
            PredExpr::Var(name) => {
                out.insert(name.clone());
            }
            PredExpr::Unary(_, e) | PredExpr::Cast(_, e) => e.collect_vars(out),
            PredExpr::Binary(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            PredExpr::Ternary(c, t, e) => {
                c.collect_vars(out);
                t.collect_vars(out);
                e.collect_vars(out);
            }
            _ => {}
        }
    }

    /// Expressions that always evaluate to 0 or 1 regardless of the
    /// environment. Used to guard rewrites that replace a conjunction or
    /// disjunction by one of its operands.
    pub fn is_boolean_valued(&self) -> bool {
        match self {
            PredExpr::BoolLit(_) => true,
            PredExpr::IntLit(v) => {
                use num_traits::{One, Zero};
                v.is_zero() || v.is_one()
            }
            PredExpr::Unary(UnOp::LogNot, _) => true,
            PredExpr::Binary(op, _, _) => {
                op.is_relational() || matches!(op, BinOp::And | BinOp::Or)
            }
            PredExpr::Cast(_, e) => e.is_boolean_valued(),
            PredExpr::Ternary(_, t, e) => t.is_boolean_valued() && e.is_boolean_valued(),
            _ => false,
        }
    }
}

/// Size measurements of an expression's minimal printing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ExprMetrics {
    /// Character count of [`print_minimal`] output (no leading/trailing
    /// whitespace by construction).
    pub char_length: usize,
    /// Total conjunct count: for each top-level disjunct, the number of
    /// operands on its `&&` spine, summed over disjuncts.
    pub num_conjuncts: usize,
    /// Number of operands on the top-level `||` spine (>= 1).
    pub num_disjuncts: usize,
}

/// Operands of the top-level `||` spine, left to right.
pub fn flatten_disjuncts(expr: &PredExpr) -> Vec<&PredExpr> {
    let mut out = Vec::new();
    fn walk<'a>(e: &'a PredExpr, out: &mut Vec<&'a PredExpr>) {
        match e {
            PredExpr::Binary(BinOp::Or, l, r) => {
                walk(l, out);
                walk(r, out);
            }
            other => out.push(other),
        }
    }
    walk(expr, &mut out);
    out
}

/// Operands of the top-level `&&` spine, left to right.
pub fn flatten_conjuncts(expr: &PredExpr) -> Vec<&PredExpr> {
    let mut out = Vec::new();
    fn walk<'a>(e: &'a PredExpr, out: &mut Vec<&'a PredExpr>) {
        match e {
            PredExpr::Binary(BinOp::And, l, r) => {
                walk(l, out);
                walk(r, out);
            }
            other => out.push(other),
        }
    }
    walk(expr, &mut out);
    out
}

/// Measure an expression: char length of the minimal printing plus
/// disjunct/conjunct counts on the flattened `||`/`&&` spines.
pub fn expr_metrics(expr: &PredExpr) -> ExprMetrics {
    let printed = print_minimal(expr);
    let disjuncts = flatten_disjuncts(expr);
    let num_conjuncts = disjuncts.iter().map(|d| flatten_conjuncts(d).len()).sum();
    ExprMetrics {
        char_length: printed.chars().count(),
        num_conjuncts,
        num_disjuncts: disjuncts.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_of_fig2_equation() {
        // 5*x + 3*y == 300 prints as 16 chars under the canonical spacing.
        let e = parse_predicate("5*x + 3*y == 300").unwrap();
        let m = expr_metrics(&e);
        assert_eq!(m.char_length, 16);
        assert_eq!(m.num_disjuncts, 1);
        assert_eq!(m.num_conjuncts, 1);
    }

    #[test]
    fn metrics_of_single_atom() {
        let m = expr_metrics(&parse_predicate("a").unwrap());
        assert_eq!(m.char_length, 1);
        assert_eq!(m.num_disjuncts, 1);
        assert_eq!(m.num_conjuncts, 1);
    }

    #[test]
    fn metrics_count_disjuncts_and_conjuncts() {
        let e = parse_predicate("a && b && c || d && e || f").unwrap();
        let m = expr_metrics(&e);
        assert_eq!(m.num_disjuncts, 3);
        assert_eq!(m.num_conjuncts, 3 + 2 + 1);
    }

    #[test]
    fn variables_are_sorted_and_deduplicated() {
        let e = parse_predicate("y + x*y == z && x < 2").unwrap();
        assert_eq!(e.variables(), ["x", "y", "z"]);
    }
}
