//! Property tests for the spec-level invariants: print/parse round-trip,
//! normalization soundness and idempotence, metric invariants, and JSONL
//! persistence identity.

use num_bigint::BigInt;
use proptest::prelude::*;

use invkit::curate::{dataset_stats, emit_jsonl, load_jsonl, CuratedSample, Stage};
use invkit::evaluate::portfolio_times;
use invkit::normalize::normalize;
use invkit::predicate::{
    check_no_side_effects, eval_expr, expr_metrics, parse_predicate, print_minimal, BinOp, Env,
    EvalError, PredExpr, UnOp,
};
use invkit::verify::Outcome;

fn arb_binop() -> impl Strategy<Value = BinOp> {
    prop::sample::select(vec![
        BinOp::Add,
        BinOp::Sub,
        BinOp::Mul,
        BinOp::Div,
        BinOp::Rem,
        BinOp::Lt,
        BinOp::Le,
        BinOp::Gt,
        BinOp::Ge,
        BinOp::Eq,
        BinOp::Ne,
        BinOp::And,
        BinOp::Or,
    ])
}

fn arb_expr() -> impl Strategy<Value = PredExpr> {
    let leaf = prop_oneof![
        (0i64..10).prop_map(PredExpr::int),
        prop::sample::select(vec!["a", "b", "c", "x", "y"]).prop_map(PredExpr::var),
        any::<bool>().prop_map(PredExpr::BoolLit),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            4 => (arb_binop(), inner.clone(), inner.clone())
                .prop_map(|(op, l, r)| PredExpr::bin(op, l, r)),
            1 => (prop::sample::select(vec![UnOp::Neg, UnOp::LogNot]), inner.clone())
                .prop_map(|(op, e)| PredExpr::Unary(op, Box::new(e))),
            1 => (
                prop::sample::select(vec!["int", "long long", "__int128", "unsigned int"]),
                inner.clone()
            )
                .prop_map(|(ty, e)| PredExpr::Cast(ty.to_string(), Box::new(e))),
            1 => (inner.clone(), inner.clone(), inner)
                .prop_map(|(c, t, e)| PredExpr::Ternary(Box::new(c), Box::new(t), Box::new(e))),
        ]
    })
}

fn env_for(expr: &PredExpr, values: &[i64]) -> Env {
    expr.variables()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, BigInt::from(values[i % values.len()])))
        .collect()
}

proptest! {
    #[test]
    fn roundtrip_print_parse(expr in arb_expr()) {
        let printed = print_minimal(&expr);
        let reparsed = parse_predicate(&printed)
            .map_err(|e| TestCaseError::fail(format!("`{printed}`: {e}")))?;
        prop_assert_eq!(reparsed, expr);
    }

    #[test]
    fn printed_predicates_have_no_side_effect_tokens(expr in arb_expr()) {
        prop_assert!(check_no_side_effects(&print_minimal(&expr)));
    }

    #[test]
    fn metrics_invariants(expr in arb_expr()) {
        let metrics = expr_metrics(&expr);
        prop_assert!(metrics.num_disjuncts >= 1);
        prop_assert!(metrics.num_conjuncts >= metrics.num_disjuncts);
        prop_assert!(metrics.char_length >= 1);
    }

    #[test]
    fn normalize_is_idempotent_and_never_grows(expr in arb_expr()) {
        let (once, report) = normalize(&expr);
        prop_assert!(
            report.output_metrics.char_length <= report.input_metrics.char_length,
            "grew from {} to {}",
            report.input_metrics.char_length,
            report.output_metrics.char_length
        );
        let (twice, second) = normalize(&once);
        prop_assert_eq!(twice, once);
        prop_assert_eq!(second.total_rules_fired(), 0);
    }

    #[test]
    fn normalize_preserves_evaluation(expr in arb_expr(), values in prop::collection::vec(-4i64..=4, 5)) {
        let (normalized, _) = normalize(&expr);
        let env = env_for(&expr, &values);
        let before = eval_expr(&expr, &env);
        let after = eval_expr(&normalized, &env);
        match (before, after) {
            (Err(EvalError::DivisionByZero), _) | (_, Err(EvalError::DivisionByZero)) => {}
            (a, b) => prop_assert_eq!(a, b),
        }
    }

    #[test]
    fn eval_is_deterministic_and_total_without_division(expr in arb_expr(), values in prop::collection::vec(-4i64..=4, 5)) {
        let env = env_for(&expr, &values);
        let first = eval_expr(&expr, &env);
        prop_assert_eq!(first.clone(), eval_expr(&expr, &env));
        if !expr.contains_division() {
            prop_assert!(first.is_ok());
        }
    }

    #[test]
    fn vbs_never_exceeds_baseline(
        correct in any::<bool>(),
        outcome in prop::sample::select(vec![Outcome::True, Outcome::False, Outcome::Unknown]),
        t_v in prop::option::of(1e-9f64..1e4),
        t_b in 1e-9f64..1e4,
    ) {
        let (speedup, s_factor, vbs) = portfolio_times(correct, outcome, t_v, t_b);
        prop_assert!(vbs <= t_b);
        if speedup {
            prop_assert!(correct && outcome.is_conclusive());
            prop_assert!(s_factor > 1.0);
        }
        if !(correct && outcome.is_conclusive()) {
            prop_assert_eq!(s_factor, 1.0);
            prop_assert_eq!(vbs, t_b);
        }
    }
}

fn arb_sample() -> impl Strategy<Value = CuratedSample> {
    (
        "[a-z][a-z0-9_]{0,10}",
        prop::sample::select(vec![Stage::V0, Stage::V1, Stage::V2]),
        arb_expr(),
        1e-6f64..100.0,
        2u8..=3,
        1e-6f64..10.0,
        prop::option::of(".{0,30}"),
    )
        .prop_map(|(id, stage, expr, t_b, grade, t_v, rationale)| {
            let invariant_text = print_minimal(&expr);
            let metrics = expr_metrics(&expr);
            let is_v2 = stage == Stage::V2;
            CuratedSample {
                id,
                stage,
                program_text: "int main() { assert(1 <= 1); return 0; }".to_string(),
                marker: "INVARIANT_MARKER_1".to_string(),
                char_length: metrics.char_length,
                invariant_text,
                grade: is_v2.then_some(grade),
                t_b,
                t1: is_v2.then_some(t_v),
                t2: is_v2.then_some(t_v),
                t_v: is_v2.then_some(t_v),
                num_disjuncts: metrics.num_disjuncts,
                num_conjuncts: metrics.num_conjuncts,
                source_rationale: if is_v2 { rationale } else { None },
                normalization: None,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jsonl_emit_load_identity(samples in prop::collection::vec(arb_sample(), 0..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("samples.jsonl");
        emit_jsonl(&samples, &path).unwrap();
        let loaded = load_jsonl(&path).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&loaded, &samples);

        // A second emit of the loaded data is byte-identical.
        let bytes = std::fs::read(&path).unwrap();
        emit_jsonl(&loaded, &path).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn stats_totals_are_consistent(samples in prop::collection::vec(arb_sample(), 0..20)) {
        let report = dataset_stats(&samples);
        prop_assert_eq!(report.total, samples.len() as u64);
        let by_stage: u64 = report.by_stage.values().sum();
        prop_assert_eq!(by_stage, samples.len() as u64);
        let graded: u64 = report.by_grade.values().sum();
        let v2 = samples.iter().filter(|s| s.stage == Stage::V2).count() as u64;
        prop_assert_eq!(graded, v2);
    }
}

#[test]
fn parseable_predicates_never_carry_side_effects() {
    // If the parser accepts a text, the side-effect scan must agree.
    let texts = [
        "a == b && c <= d",
        "x != y || !z",
        "(long long) a + b <= c",
        "a ? b : c",
        "-x*3%4 < y/2",
    ];
    for text in texts {
        assert!(parse_predicate(text).is_ok());
        assert!(check_no_side_effects(text));
    }
}
