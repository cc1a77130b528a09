//! LLM-driven invariant simplification and augmentation.
//!
//! A normalized invariant that is still verbose (longer than the
//! `verbosity_threshold`) is handed to an LLM for semantic rewriting; the
//! sampled candidates are deduplicated, filtered for degeneracy, graded
//! against the verifier, and only those with grade >= 2 survive. If
//! nothing qualifies (or the invariant was not verbose to begin with), the
//! normalized invariant itself is graded and kept on the same condition.

pub mod llm;

use std::collections::BTreeSet;
use std::time::Duration;

use thiserror::Error;

use crate::grade::{grade_candidate, GradedCandidate};
use crate::normalize::is_degenerate;
use crate::predicate::{parse_predicate, print_minimal, PredExpr};
use crate::verify::{OracleBackend, Program, SplitResult, VerificationQuery};
use llm::LlmClient;

/// System prompt for the simplification task.
pub const SIMPLIFY_SYSTEM_PROMPT: &str = r#"## Task
Given the C program and the invariant, your task is to simplify the
invariant to a more compact and general form.

## Output format
- Output MUST be a single JSON object.
- The JSON MUST have exactly these keys:
  - "simplified_invariant": A single compact, inductive, C boolean
    expression, nothing else.
  - "rationale": A short explanation of why you simplified the
    invariant to the given form.
## Output format example
{"simplified_invariant":"<simplified_invariant>",
    "rationale":"<rationale>"}

## Guidelines
- The simplified invariant should be logically weaker than (or
  equivalent to) the original, but still inductive and strong enough
  to prove the target property.
- Prefer LINEAR arithmetic expressions (the verifier struggles with
  non-linear math like x*y)
- Prefer mathematical relationships over case enumeration
- Look for patterns across disjuncts (e.g., repeated structure with
  varying constants)
- Generalize enumerated values to ranges (e.g., "i == 1 || i == 2
  || i == 3" -> "1 <= i && i <= 3")
- Remove tautological constraints (e.g., "a == a", "n <= n",
  "0 <= 0", "a + 0 == a", "true", "1")
- Remove constraints on constant variables (variables initialized
  but never modified in loops)
- Replace redundant constraints with simpler equivalents (e.g.,
  "a <= b && b <= a" -> "a == b")
- Ensure the simplified invariant is still inductive (holds before
  loop and preserved by each iteration)
- Use the program context to understand variable semantics and
  loop structure
- Use ONLY plain ASCII characters in your output (no Unicode symbols)"#;

/// User prompt template; `{program}`, `{invariant}` and `{marker}` are
/// substituted.
pub const SIMPLIFY_USER_TEMPLATE: &str = r#"Simplify the following invariant for the given C program and marker.
c_program:
```c
{program}
```
invariant:
```c
{invariant}
```

marker:
```c
{marker}
```"#;

/// Context for building a simplification prompt.
#[derive(Debug, Clone)]
pub struct SimplifyContext<'a> {
    pub program: &'a Program,
    pub normalized_predicate: &'a PredExpr,
    pub marker: &'a str,
    /// Number of candidates to sample (N).
    pub n_candidates: usize,
    /// Verbosity threshold in characters of the minimal printing (eta).
    pub verbosity_threshold: usize,
}

/// Build the (system, user) prompt pair for one simplification call.
pub fn build_simplify_prompt(ctx: &SimplifyContext<'_>) -> (String, String) {
    let user = SIMPLIFY_USER_TEMPLATE
        .replace("{program}", ctx.program.source())
        .replace("{invariant}", &print_minimal(ctx.normalized_predicate))
        .replace("{marker}", ctx.marker);
    (SIMPLIFY_SYSTEM_PROMPT.to_string(), user)
}

/// Parsed simplification response.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifyResponse {
    pub simplified_invariant: PredExpr,
    pub rationale: String,
}

/// Why a response was dropped.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MalformedResponse {
    #[error("no JSON object found in response")]
    NoJson,
    #[error("response JSON must have exactly the keys `simplified_invariant` and `rationale`")]
    WrongKeys,
    #[error("response contains non-ASCII characters")]
    NonAscii,
    #[error("invariant does not parse: {0}")]
    BadInvariant(String),
}

/// Extract the first JSON object from LLM output, tolerating surrounding
/// prose and code fences, and require exactly the two documented keys.
pub fn parse_simplify_response(text: &str) -> Result<SimplifyResponse, MalformedResponse> {
    if !text.is_ascii() {
        return Err(MalformedResponse::NonAscii);
    }
    let value = first_json_object(text).ok_or(MalformedResponse::NoJson)?;
    let serde_json::Value::Object(map) = value else {
        return Err(MalformedResponse::NoJson);
    };
    if map.len() != 2 {
        return Err(MalformedResponse::WrongKeys);
    }
    let (Some(serde_json::Value::String(invariant)), Some(serde_json::Value::String(rationale))) =
        (map.get("simplified_invariant"), map.get("rationale"))
    else {
        return Err(MalformedResponse::WrongKeys);
    };
    let predicate =
        parse_predicate(invariant).map_err(|e| MalformedResponse::BadInvariant(e.to_string()))?;
    Ok(SimplifyResponse {
        simplified_invariant: predicate,
        rationale: rationale.clone(),
    })
}

/// Scan for the first balanced `{...}` region that parses as JSON.
pub(crate) fn first_json_object(text: &str) -> Option<serde_json::Value> {
    let bytes = text.as_bytes();
    let mut start = None;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' if start.is_some() => in_string = true,
            b'{' => {
                if start.is_none() {
                    start = Some(i);
                }
                depth += 1;
            }
            b'}' if start.is_some() => {
                depth -= 1;
                if depth == 0 {
                    let candidate = &text[start.unwrap()..=i];
                    if let Ok(v) = serde_json::from_str(candidate) {
                        return Some(v);
                    }
                    // Not valid JSON; resume scanning after this region.
                    start = None;
                }
            }
            _ => {}
        }
    }
    None
}

/// A qualifying simplified candidate with its grading evidence.
#[derive(Debug, Clone)]
pub struct SimplifiedCandidate {
    pub predicate: PredExpr,
    pub grade: u8,
    pub split: SplitResult,
    /// The model's explanation; absent for the normalized-invariant
    /// fallback.
    pub rationale: Option<String>,
}

/// Everything the simplification procedure needs at run time.
pub struct SimplifyEngine<'a> {
    pub backend: &'a dyn OracleBackend,
    pub llm: &'a dyn LlmClient,
    pub timeout: Duration,
    /// Split-check repetitions per grading (median t_v wins).
    pub grading_runs: usize,
    /// Upper bound on concurrently graded candidates.
    pub workers: usize,
}

impl SimplifyEngine<'_> {
    /// The simplification procedure.
    ///
    /// Degenerate inputs yield the empty set. Verbose inputs sample `N`
    /// candidates, deduplicate them by exact match of the re-rendered
    /// minimal printing, drop degenerates, grade the rest, and keep those
    /// with grade 2 or better. If the kept set is empty (all failed, or
    /// the input was not verbose), the normalized invariant itself is
    /// graded and kept on the same condition.
    pub fn simplify_invariant(
        &self,
        query: &VerificationQuery,
        marker: &str,
        normalized: &PredExpr,
        t_b: f64,
        ctx: &SimplifyContext<'_>,
    ) -> Vec<SimplifiedCandidate> {
        let mut kept = Vec::new();
        if is_degenerate(normalized) {
            return kept;
        }
        let verbose = print_minimal(normalized).chars().count() > ctx.verbosity_threshold;
        if verbose {
            let (system, user) = build_simplify_prompt(ctx);
            let completions = match self.llm.complete(&system, &user, ctx.n_candidates) {
                Ok(c) => c,
                Err(e) => {
                    log::warn!("simplification sampling failed: {e}; candidate set is empty");
                    Vec::new()
                }
            };
            let mut seen = BTreeSet::new();
            let mut candidates: Vec<(PredExpr, String)> = Vec::new();
            for completion in completions {
                let response = match parse_simplify_response(&completion) {
                    Ok(r) => r,
                    Err(e) => {
                        log::debug!("dropping malformed completion: {e}");
                        continue;
                    }
                };
                let rendered = print_minimal(&response.simplified_invariant);
                if !seen.insert(rendered) {
                    continue;
                }
                if is_degenerate(&response.simplified_invariant) {
                    continue;
                }
                candidates.push((response.simplified_invariant, response.rationale));
            }
            let graded = self.grade_all(query, marker, t_b, &candidates);
            for ((predicate, rationale), graded) in candidates.into_iter().zip(graded) {
                if graded.grade >= 2 {
                    if let Some(split) = graded.split {
                        kept.push(SimplifiedCandidate {
                            predicate,
                            grade: graded.grade,
                            split,
                            rationale: Some(rationale),
                        });
                    }
                }
            }
        }
        if kept.is_empty() {
            let graded = grade_candidate(
                query,
                marker,
                normalized,
                t_b,
                self.backend,
                self.timeout,
                self.grading_runs,
            );
            if graded.grade >= 2 {
                if let Some(split) = graded.split {
                    kept.push(SimplifiedCandidate {
                        predicate: normalized.clone(),
                        grade: graded.grade,
                        split,
                        rationale: None,
                    });
                }
            } else {
                log::info!(
                    "normalized invariant at {marker} graded {} and was not kept",
                    graded.grade
                );
            }
        }
        kept
    }

    /// Grade candidates, preserving order, with at most `workers` in
    /// flight (each grading runs its two verifier queries in parallel on
    /// top of that).
    fn grade_all(
        &self,
        query: &VerificationQuery,
        marker: &str,
        t_b: f64,
        candidates: &[(PredExpr, String)],
    ) -> Vec<GradedCandidate> {
        let workers = self.workers.max(1).min(candidates.len().max(1));
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots = std::sync::Mutex::new(vec![None; candidates.len()]);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if idx >= candidates.len() {
                        break;
                    }
                    let graded = grade_candidate(
                        query,
                        marker,
                        &candidates[idx].0,
                        t_b,
                        self.backend,
                        self.timeout,
                        self.grading_runs,
                    );
                    slots.lock().unwrap()[idx] = Some(graded);
                });
            }
        });
        slots
            .into_inner()
            .unwrap()
            .into_iter()
            .map(|s| s.expect("slot filled"))
            .collect()
    }
}
