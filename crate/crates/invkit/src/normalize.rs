//! Semantics-preserving AST normalization, cast stripping, and degeneracy
//! detection.
//!
//! Normalization is one bottom-up traversal. At each node, after its
//! children have been rewritten, the applicable rules fire in a fixed
//! order (tautology rules before contradiction rules):
//!
//! - `TautConj`: `phi && true -> phi`, `true && phi -> phi`
//! - `TautRefl`: `e <= e`, `e >= e`, `e == e` -> `true`
//! - `TautConst`: `c1 <op> c2` -> constant-folded boolean
//! - `TautDisj`: `phi || true -> true`, `true || phi -> true`
//! - `ContraConj`: `phi && false -> false`, `false && phi -> false`
//! - `ContraDisj`: `phi || false -> phi`, `false || phi -> phi`
//! - `ContraRefl`: `e < e`, `e > e`, `e != e` -> `false`
//! - `NotConst`: `!true -> false`, `!false -> true` (boolean literals only)
//!
//! `TautConj` and `ContraDisj` return one operand of a logical node and so
//! fire only when that operand is itself boolean-valued (relations, logical
//! nodes, 0/1 literals); otherwise the integer value of the whole
//! expression could change, e.g. `x && 1` evaluates to 0/1 while `x` does
//! not. The reflexivity rules skip operands containing `/` or `%` so that a
//! possible division by zero is never erased. Both guards are vacuous on
//! predicates made of relations, which is the raw-invariant shape.

use std::collections::BTreeMap;

use num_bigint::BigInt;

use crate::predicate::{expr_metrics, BinOp, ExprMetrics, PredExpr, UnOp};

/// What a normalization pass did.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationReport {
    pub input_metrics: ExprMetrics,
    pub output_metrics: ExprMetrics,
    /// Rule name -> number of times it fired.
    pub rules_fired: BTreeMap<String, u64>,
    /// Cast nodes removed before rewriting (zero unless [`normalize_raw`]
    /// was used).
    pub casts_stripped: u64,
}

impl NormalizationReport {
    pub fn total_rules_fired(&self) -> u64 {
        self.rules_fired.values().sum()
    }
}

/// Replace every cast by its operand, recursively.
pub fn strip_casts(expr: &PredExpr) -> PredExpr {
    strip_casts_counting(expr, &mut 0)
}

fn strip_casts_counting(expr: &PredExpr, count: &mut u64) -> PredExpr {
    match expr {
        PredExpr::Cast(_, operand) => {
            *count += 1;
            strip_casts_counting(operand, count)
        }
        PredExpr::Unary(op, e) => PredExpr::Unary(*op, Box::new(strip_casts_counting(e, count))),
        PredExpr::Binary(op, l, r) => PredExpr::Binary(
            *op,
            Box::new(strip_casts_counting(l, count)),
            Box::new(strip_casts_counting(r, count)),
        ),
        PredExpr::Ternary(c, t, e) => PredExpr::Ternary(
            Box::new(strip_casts_counting(c, count)),
            Box::new(strip_casts_counting(t, count)),
            Box::new(strip_casts_counting(e, count)),
        ),
        atom => atom.clone(),
    }
}

/// Normalize an expression; returns the rewritten expression and a report.
pub fn normalize(expr: &PredExpr) -> (PredExpr, NormalizationReport) {
    let input_metrics = expr_metrics(expr);
    let mut fired = BTreeMap::new();
    let out = rewrite(expr, &mut fired);
    let report = NormalizationReport {
        input_metrics,
        output_metrics: expr_metrics(&out),
        rules_fired: fired,
        casts_stripped: 0,
    };
    (out, report)
}

/// Strip casts, then normalize: the V1 pipeline stage. The report's
/// `input_metrics` describe the cast-stripped expression.
pub fn normalize_raw(expr: &PredExpr) -> (PredExpr, NormalizationReport) {
    let mut casts = 0;
    let stripped = strip_casts_counting(expr, &mut casts);
    let (out, mut report) = normalize(&stripped);
    report.casts_stripped = casts;
    (out, report)
}

/// True iff the expression is the literal constant true/1 or false/0.
/// Intended for already-normalized expressions, where constant predicates
/// have been folded to literals.
pub fn is_degenerate(expr: &PredExpr) -> bool {
    literal_truth(expr).is_some()
}

fn record(fired: &mut BTreeMap<String, u64>, rule: &str) {
    *fired.entry(rule.to_string()).or_insert(0) += 1;
}

/// `Some(truth)` for the literals `true`/`false`/`1`/`0`.
fn literal_truth(e: &PredExpr) -> Option<bool> {
    match e {
        PredExpr::BoolLit(b) => Some(*b),
        PredExpr::IntLit(v) => {
            use num_traits::{One, Zero};
            if v.is_zero() {
                Some(false)
            } else if v.is_one() {
                Some(true)
            } else {
                None
            }
        }
        _ => None,
    }
}

/// Constant value of a literal, possibly under arithmetic negation.
fn const_value(e: &PredExpr) -> Option<BigInt> {
    match e {
        PredExpr::IntLit(v) => Some(v.clone()),
        PredExpr::BoolLit(b) => Some(BigInt::from(*b as i8)),
        PredExpr::Unary(UnOp::Neg, inner) => const_value(inner).map(|v| -v),
        _ => None,
    }
}

fn rewrite(e: &PredExpr, fired: &mut BTreeMap<String, u64>) -> PredExpr {
    match e {
        PredExpr::Binary(BinOp::And, l, r) => {
            let l = rewrite(l, fired);
            let r = rewrite(r, fired);
            if literal_truth(&l) == Some(true) && r.is_boolean_valued() {
                record(fired, "TautConj");
                return r;
            }
            if literal_truth(&r) == Some(true) && l.is_boolean_valued() {
                record(fired, "TautConj");
                return l;
            }
            if literal_truth(&l) == Some(false) || literal_truth(&r) == Some(false) {
                record(fired, "ContraConj");
                return PredExpr::BoolLit(false);
            }
            PredExpr::bin(BinOp::And, l, r)
        }
        PredExpr::Binary(BinOp::Or, l, r) => {
            let l = rewrite(l, fired);
            let r = rewrite(r, fired);
            if literal_truth(&l) == Some(true) || literal_truth(&r) == Some(true) {
                record(fired, "TautDisj");
                return PredExpr::BoolLit(true);
            }
            if literal_truth(&l) == Some(false) && r.is_boolean_valued() {
                record(fired, "ContraDisj");
                return r;
            }
            if literal_truth(&r) == Some(false) && l.is_boolean_valued() {
                record(fired, "ContraDisj");
                return l;
            }
            PredExpr::bin(BinOp::Or, l, r)
        }
        PredExpr::Binary(op, l, r) if op.is_relational() => {
            let l = rewrite(l, fired);
            let r = rewrite(r, fired);
            let reflexive = l == r && !l.contains_division();
            if reflexive && matches!(op, BinOp::Le | BinOp::Ge | BinOp::Eq) {
                record(fired, "TautRefl");
                return PredExpr::BoolLit(true);
            }
            if let (Some(a), Some(b)) = (const_value(&l), const_value(&r)) {
                record(fired, "TautConst");
                let truth = match op {
                    BinOp::Lt => a < b,
                    BinOp::Le => a <= b,
                    BinOp::Gt => a > b,
                    BinOp::Ge => a >= b,
                    BinOp::Eq => a == b,
                    BinOp::Ne => a != b,
                    _ => unreachable!(),
                };
                return PredExpr::BoolLit(truth);
            }
            if reflexive && matches!(op, BinOp::Lt | BinOp::Gt | BinOp::Ne) {
                record(fired, "ContraRefl");
                return PredExpr::BoolLit(false);
            }
            PredExpr::bin(*op, l, r)
        }
        PredExpr::Binary(op, l, r) => PredExpr::bin(*op, rewrite(l, fired), rewrite(r, fired)),
        PredExpr::Unary(UnOp::LogNot, inner) => {
            let inner = rewrite(inner, fired);
            if let PredExpr::BoolLit(b) = inner {
                record(fired, "NotConst");
                return PredExpr::BoolLit(!b);
            }
            PredExpr::Unary(UnOp::LogNot, Box::new(inner))
        }
        PredExpr::Unary(op, inner) => PredExpr::Unary(*op, Box::new(rewrite(inner, fired))),
        PredExpr::Cast(ty, inner) => PredExpr::Cast(ty.clone(), Box::new(rewrite(inner, fired))),
        PredExpr::Ternary(c, t, els) => PredExpr::Ternary(
            Box::new(rewrite(c, fired)),
            Box::new(rewrite(t, fired)),
            Box::new(rewrite(els, fired)),
        ),
        atom => atom.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predicate::{eval_expr, parse_predicate, print_minimal, Env, EvalError};

    fn norm(text: &str) -> (PredExpr, NormalizationReport) {
        normalize(&parse_predicate(text).unwrap())
    }

    #[test]
    fn contradiction_reflexive() {
        let (out, report) = norm("x > x");
        assert_eq!(out, PredExpr::BoolLit(false));
        assert_eq!(report.rules_fired["ContraRefl"], 1);
    }

    #[test]
    fn tautology_reflexive() {
        let (out, report) = norm("n <= n");
        assert_eq!(out, PredExpr::BoolLit(true));
        assert_eq!(report.rules_fired["TautRefl"], 1);
    }

    #[test]
    fn constant_fold_collapses_dead_disjunct() {
        let (out, _) = norm("(a < b && 3 <= 2) || c > 1");
        assert_eq!(out, parse_predicate("c > 1").unwrap());

        // Confirm equivalence by exhaustive evaluation over [-2, 2]^3.
        let input = parse_predicate("(a < b && 3 <= 2) || c > 1").unwrap();
        for a in -2..=2i64 {
            for b in -2..=2i64 {
                for c in -2..=2i64 {
                    let env: Env = [("a", a), ("b", b), ("c", c)]
                        .iter()
                        .map(|(k, v)| (k.to_string(), BigInt::from(*v)))
                        .collect();
                    assert_eq!(eval_expr(&input, &env), eval_expr(&out, &env));
                }
            }
        }
    }

    #[test]
    fn conjunction_with_true_drops() {
        let (out, report) = norm("x > 0 && true");
        assert_eq!(out, parse_predicate("x > 0").unwrap());
        assert_eq!(report.rules_fired["TautConj"], 1);
        let (out, _) = norm("true && x > 0");
        assert_eq!(out, parse_predicate("x > 0").unwrap());
    }

    #[test]
    fn disjunction_duals_propagate_folded_tautologies() {
        // Without the `phi || true` dual, the folded inner tautology would
        // stay stuck inside the disjunction.
        let (out, report) = norm("x < 0 || n <= n");
        assert_eq!(out, PredExpr::BoolLit(true));
        assert_eq!(report.rules_fired["TautRefl"], 1);
        assert_eq!(report.rules_fired["TautDisj"], 1);
    }

    #[test]
    fn disjunction_with_false_drops() {
        let (out, _) = norm("x > 1 || 1 < 1");
        assert_eq!(out, parse_predicate("x > 1").unwrap());
        let (out, _) = norm("false || x > 1");
        assert_eq!(out, parse_predicate("x > 1").unwrap());
    }

    #[test]
    fn integer_preserving_guard_blocks_value_changing_rewrites() {
        // `x && 1` is 0/1-valued but `x` is not; the rewrite must not fire.
        let (out, _) = norm("x && 1");
        assert_eq!(out, parse_predicate("x && 1").unwrap());
        let (out, _) = norm("x || false");
        assert_eq!(out, parse_predicate("x || false").unwrap());
        // With a boolean-valued operand it fires.
        let (out, _) = norm("x > 0 && 1");
        assert_eq!(out, parse_predicate("x > 0").unwrap());
    }

    #[test]
    fn reflexive_folding_skips_divisions() {
        let (out, _) = norm("a/b <= a/b");
        assert_eq!(out, parse_predicate("a/b <= a/b").unwrap());
        let (out, _) = norm("a%b != a%b");
        assert_eq!(out, parse_predicate("a%b != a%b").unwrap());
    }

    #[test]
    fn lognot_of_boolean_literal_folds() {
        let (out, report) = norm("!(true)");
        assert_eq!(out, PredExpr::BoolLit(false));
        assert_eq!(report.rules_fired["NotConst"], 1);
        // `!1` stays: the operand is an integer literal, not a boolean.
        let (out, _) = norm("!1");
        assert_eq!(out, parse_predicate("!1").unwrap());
    }

    #[test]
    fn strip_casts_examples() {
        let raw = parse_predicate("((long long) weight1 + weight2) <= max_threshold").unwrap();
        assert_eq!(
            strip_casts(&raw),
            parse_predicate("weight1 + weight2 <= max_threshold").unwrap()
        );
        let x = parse_predicate("x").unwrap();
        assert_eq!(strip_casts(&x), x);
        let nested = parse_predicate("((__int128) ((long long) 2 * a) * y)").unwrap();
        assert_eq!(strip_casts(&nested), parse_predicate("2 * a * y").unwrap());
    }

    #[test]
    fn normalize_raw_counts_casts() {
        let raw = parse_predicate("((__int128) ((long long) 2 * a) * y) == b").unwrap();
        let (out, report) = normalize_raw(&raw);
        assert_eq!(out, parse_predicate("2*a*y == b").unwrap());
        assert_eq!(report.casts_stripped, 2);
    }

    #[test]
    fn degeneracy() {
        assert!(is_degenerate(&PredExpr::BoolLit(true)));
        assert!(is_degenerate(&parse_predicate("0").unwrap()));
        assert!(!is_degenerate(&parse_predicate("x == 0").unwrap()));
        let (out, _) = norm("1 <= 1");
        assert!(is_degenerate(&out));
    }

    #[test]
    fn idempotent_on_examples() {
        for text in [
            "x > x",
            "n <= n && q > 0",
            "(a < b && 3 <= 2) || c > 1",
            "!(x == x) || y != y",
            "1 <= 1 && (2 > 3 || k >= k)",
        ] {
            let (once, _) = norm(text);
            let (twice, report) = normalize(&once);
            assert_eq!(once, twice, "second pass changed `{text}`");
            assert_eq!(report.total_rules_fired(), 0);
        }
    }

    #[test]
    fn char_length_never_increases_on_examples() {
        for text in [
            "x > x",
            "n <= n",
            "!true",
            "!false",
            "1 == 2",
            "0 < 1",
            "a < a",
            "(a < b && 3 <= 2) || c > 1",
            "x >= 0 && x >= 0",
        ] {
            let (_, report) = norm(text);
            assert!(
                report.output_metrics.char_length <= report.input_metrics.char_length,
                "`{text}` grew: {:?}",
                report
            );
        }
    }

    #[test]
    fn equivalence_oracle_skips_division_by_zero_envs() {
        // x/x == x/x folds only without divisions; here it stays, and both
        // sides error identically at x = 0.
        let input = parse_predicate("x/x == x/x").unwrap();
        let (out, _) = normalize(&input);
        let env: Env = [("x".to_string(), BigInt::from(0))].into_iter().collect();
        assert_eq!(eval_expr(&input, &env), Err(EvalError::DivisionByZero));
        assert_eq!(eval_expr(&out, &env), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn report_prints_minimal_forms() {
        let (out, report) = norm("((7 <= i) && (N <= 10)) || ((2 == i) && (N <= 10))");
        assert_eq!(
            print_minimal(&out),
            "7 <= i && N <= 10 || 2 == i && N <= 10"
        );
        assert_eq!(report.output_metrics.num_disjuncts, 2);
        assert_eq!(report.output_metrics.num_conjuncts, 4);
    }
}
