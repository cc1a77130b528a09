//! Quality grading of candidate invariants.
//!
//! The grade of a candidate predicate against a query with baseline time
//! `t_b`:
//!
//! - 0 — invalid syntax, or the correctness check did not return TRUE;
//! - 1 — correct (V1 = TRUE) but not sufficient (V2 != TRUE);
//! - 2 — correct and sufficient, but no speedup (`t_v >= t_b`);
//! - 3 — correct, sufficient, and faster than the baseline (`t_v < t_b`).
//!
//! Candidates with grade >= 2 qualify as training samples.

use std::time::Duration;

use crate::predicate::{check_no_side_effects, parse_predicate, PredExpr};
use crate::verify::{run_split, OracleBackend, Outcome, Property, SplitResult, VerificationQuery};

/// Candidate text after the syntax gate.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateSyntax {
    Valid(PredExpr),
    Invalid { text: String, reason: String },
}

/// A graded candidate with the measurements behind the grade.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedCandidate {
    pub candidate: CandidateSyntax,
    pub grade: u8,
    /// Absent when the candidate was rejected at the syntax stage.
    pub split: Option<SplitResult>,
    /// Baseline time the split was compared against.
    pub t_b: f64,
}

impl GradedCandidate {
    pub fn predicate(&self) -> Option<&PredExpr> {
        match &self.candidate {
            CandidateSyntax::Valid(p) => Some(p),
            CandidateSyntax::Invalid { .. } => None,
        }
    }
}

/// Closed-form grade from the two verdicts and the timing comparison.
/// The `t_v == t_b` tie grades 2: grade 3 requires a strict improvement.
pub fn quality_grade(v1: Outcome, v2: Outcome, t_v: f64, t_b: f64) -> u8 {
    if v1 != Outcome::True {
        0
    } else if v2 != Outcome::True {
        1
    } else if t_v >= t_b {
        2
    } else {
        3
    }
}

/// Grade a parsed candidate predicate at `marker`.
///
/// Runs the split correctness/sufficiency check `runs` times and grades on
/// the run with the median `t_v` (lower-middle for even `runs`). Backend
/// failures surface as UNKNOWN verdicts and flow through the grade logic;
/// this function does not fail.
pub fn grade_candidate(
    query: &VerificationQuery,
    marker: &str,
    predicate: &PredExpr,
    t_b: f64,
    backend: &dyn OracleBackend,
    timeout: Duration,
    runs: usize,
) -> GradedCandidate {
    let candidate = Property::at_marker(marker, predicate.clone());
    let mut splits = Vec::with_capacity(runs.max(1));
    for _ in 0..runs.max(1) {
        match run_split(backend, query, &candidate, timeout) {
            Ok(split) => splits.push(split),
            Err(e) => {
                // Unknown marker: not a syntactically valid candidate for
                // this query.
                return GradedCandidate {
                    candidate: CandidateSyntax::Invalid {
                        text: crate::predicate::print_minimal(predicate),
                        reason: e.to_string(),
                    },
                    grade: 0,
                    split: None,
                    t_b,
                };
            }
        }
    }
    let split = median_by_tv(splits);
    let grade = quality_grade(split.v1.outcome, split.v2.outcome, split.t_v, t_b);
    GradedCandidate {
        candidate: CandidateSyntax::Valid(predicate.clone()),
        grade,
        split: Some(split),
        t_b,
    }
}

/// Grade raw candidate text: the syntax gate (side-effect operators,
/// parse errors) yields grade 0 without ever invoking the verifier.
pub fn grade_candidate_text(
    query: &VerificationQuery,
    marker: &str,
    text: &str,
    t_b: f64,
    backend: &dyn OracleBackend,
    timeout: Duration,
    runs: usize,
) -> GradedCandidate {
    if !check_no_side_effects(text) {
        return GradedCandidate {
            candidate: CandidateSyntax::Invalid {
                text: text.to_string(),
                reason: "side-effecting operator".to_string(),
            },
            grade: 0,
            split: None,
            t_b,
        };
    }
    match parse_predicate(text) {
        Ok(predicate) => grade_candidate(query, marker, &predicate, t_b, backend, timeout, runs),
        Err(e) => GradedCandidate {
            candidate: CandidateSyntax::Invalid {
                text: text.to_string(),
                reason: e.to_string(),
            },
            grade: 0,
            split: None,
            t_b,
        },
    }
}

fn median_by_tv(mut splits: Vec<SplitResult>) -> SplitResult {
    debug_assert!(!splits.is_empty());
    splits.sort_by(|a, b| a.t_v.total_cmp(&b.t_v));
    // Lower-middle element for an even count.
    let idx = (splits.len() - 1) / 2;
    splits.swap_remove(idx)
}
