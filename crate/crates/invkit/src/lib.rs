//! Toolkit for curating loop-invariant training data and for evaluating
//! candidate invariants with a split correctness/sufficiency verification
//! procedure and portfolio (virtual-best-solver) metrics.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`predicate`] — lex/parse/print/evaluate C boolean expressions used as
//!   invariant predicates.
//! - [`normalize`] — semantics-preserving AST rewriting (tautology and
//!   contradiction elimination), cast stripping, degeneracy detection.
//! - [`verify`] — verification queries, assume/assert program annotation, the
//!   split check with its decision procedure, and the pluggable oracle
//!   backends (built-in bounded interpreter, external subprocess).
//! - [`grade`] — the 0..=3 quality grade of a candidate invariant.
//! - [`simplify`] — LLM-driven invariant simplification and augmentation.
//! - [`curate`] — the V0 -> V1 -> V2 dataset pipeline and JSONL persistence.
//! - [`evaluate`] — the evaluation harness and metric suite (indicator rates,
//!   speedup factors, VBP / VBP_E2E).

pub mod config;
pub mod curate;
pub mod evaluate;
pub mod grade;
pub mod normalize;
pub mod predicate;
pub mod simplify;
pub mod verify;

pub use predicate::{
    check_no_side_effects, eval_expr, expr_metrics, parse_predicate, print_minimal, ExprMetrics,
    PredExpr,
};
