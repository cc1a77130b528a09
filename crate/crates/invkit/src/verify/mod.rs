//! Verification queries, assume/assert annotation, the split
//! correctness/sufficiency check, and the oracle backends.
//!
//! A [`Program`] is C source instrumented with `INVARIANT_MARKER_k();`
//! calls at loop-body entry points plus one target `assert(...)`
//! statement. [`annotate`] rewrites marker sites into `assume`/`assert`
//! statements to materialize a verification query as plain C, which a
//! backend then decides:
//!
//! - [`builtin::BuiltinBackend`] — bounded exhaustive interpreter for a
//!   mini-C subset; sound (TRUE only when enumeration was exhaustive).
//! - [`external::ExternalBackend`] — subprocess wrapper around a real
//!   verifier, with timeout kill and configurable verdict regexes.

pub mod builtin;
pub mod external;
pub mod minic;

use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predicate::{parse_predicate, print_minimal, PredExpr};

/// Helper definitions prepended to annotated programs that lack them.
pub const ASSERT_HELPER: &str =
    "void assert(int cond) { if (!(cond)) { ERROR: { reach_error(); abort(); } } }";
pub const ASSUME_HELPER: &str = "void assume(int cond) { if (!cond) { abort(); } }";

/// A property location: either a loop marker or the site of the original
/// target assertion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    /// A `INVARIANT_MARKER_k();` call site.
    Marker(String),
    /// The line carrying the target `assert(...)`.
    PostconditionSite,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Marker(name) => write!(f, "{name}"),
            Location::PostconditionSite => write!(f, "<target-assert>"),
        }
    }
}

/// A pair of location and predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub location: Location,
    pub predicate: PredExpr,
}

impl Property {
    pub fn at_marker(marker: &str, predicate: PredExpr) -> Self {
        Property {
            location: Location::Marker(marker.to_string()),
            predicate,
        }
    }

    pub fn at_postcondition(predicate: PredExpr) -> Self {
        Property {
            location: Location::PostconditionSite,
            predicate,
        }
    }
}

/// Byte span of a statement within the program source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Span {
    line: usize,
    start: usize,
    end: usize,
}

/// Instrumented C program: source text, its markers, and the target
/// assertion.
#[derive(Debug, Clone)]
pub struct Program {
    source: String,
    markers: Vec<(String, Span)>,
    target_span: Span,
    target_predicate: PredExpr,
}

/// Problems recognizing the program structure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProgramError {
    #[error("duplicate marker `{0}`")]
    DuplicateMarker(String),
    #[error("no target `assert(...);` statement found")]
    NoTargetAssertion,
    #[error("target assertion does not parse: {0}")]
    BadTargetPredicate(String),
}

impl Program {
    /// Scan source text for `INVARIANT_MARKER_k();` calls and the target
    /// assertion (the last `assert(...);` call statement in the file).
    pub fn from_source(source: &str) -> Result<Program, ProgramError> {
        let marker_re = Regex::new(r"INVARIANT_MARKER_\w+").unwrap();
        let mut markers: Vec<(String, Span)> = Vec::new();

        let mut offset = 0;
        for (line_idx, line) in source.split_inclusive('\n').enumerate() {
            for m in marker_re.find_iter(line) {
                let rest = &line[m.end()..];
                if let Some(extra) = match_call_tail(rest) {
                    let name = m.as_str().to_string();
                    if markers.iter().any(|(n, _)| n == &name) {
                        return Err(ProgramError::DuplicateMarker(name));
                    }
                    markers.push((
                        name,
                        Span {
                            line: line_idx,
                            start: offset + m.start(),
                            end: offset + m.end() + extra,
                        },
                    ));
                }
            }
            offset += line.len();
        }

        // The target is the last `assert(...);` in statement position:
        // preceded by nothing or by `;`, `{`, `}`, `)`, or `:`. That
        // excludes the helper definition, where `assert` follows `void`.
        let assert_re = Regex::new(r"\bassert\s*\(").unwrap();
        let mut target: Option<Span> = None;
        for m in assert_re.find_iter(source) {
            let before = source[..m.start()].trim_end();
            if !(before.is_empty() || before.ends_with([';', '{', '}', ')', ':'])) {
                continue;
            }
            let paren_at = m.start() + source[m.start()..m.end()].find('(').unwrap();
            if let Some(end) = match_statement_end(source, paren_at) {
                target = Some(Span {
                    line: source[..m.start()].matches('\n').count(),
                    start: m.start(),
                    end,
                });
            }
        }
        let target_span = target.ok_or(ProgramError::NoTargetAssertion)?;
        let stmt = &source[target_span.start..target_span.end];
        let open = stmt.find('(').unwrap();
        let close = stmt.rfind(')').unwrap();
        let predicate = parse_predicate(&stmt[open + 1..close])
            .map_err(|e| ProgramError::BadTargetPredicate(e.to_string()))?;

        Ok(Program {
            source: source.to_string(),
            markers,
            target_span,
            target_predicate: predicate,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Marker names in source order.
    pub fn marker_names(&self) -> Vec<&str> {
        self.markers.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn has_marker(&self, name: &str) -> bool {
        self.markers.iter().any(|(n, _)| n == name)
    }

    /// Zero-based line of the target assertion.
    pub fn target_line(&self) -> usize {
        self.target_span.line
    }

    /// The postcondition predicate extracted from the target assertion.
    pub fn target_predicate(&self) -> &PredExpr {
        &self.target_predicate
    }

    /// The postcondition as a property at the assertion site.
    pub fn postcondition(&self) -> Property {
        Property::at_postcondition(self.target_predicate.clone())
    }
}

/// Consume `(` `)` `;` (with interior whitespace) after a marker name;
/// returns the matched length.
fn match_call_tail(rest: &str) -> Option<usize> {
    let bytes = rest.as_bytes();
    let mut i = 0;
    for expected in *b"();" {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if bytes.get(i) != Some(&expected) {
            return None;
        }
        i += 1;
    }
    Some(i)
}

/// From an opening parenthesis, find the end of `( ... ) ;` with balanced
/// parens; returns the byte offset just past the semicolon.
fn match_statement_end(source: &str, open_paren: usize) -> Option<usize> {
    let bytes = source.as_bytes();
    debug_assert_eq!(bytes[open_paren], b'(');
    let mut depth = 0usize;
    let mut i = open_paren;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 {
                    let mut j = i + 1;
                    while j < bytes.len() && bytes[j].is_ascii_whitespace() {
                        j += 1;
                    }
                    return (bytes.get(j) == Some(&b';')).then_some(j + 1);
                }
            }
            _ => {}
        }
        i += 1;
    }
    None
}

/// A verification query `<A, P, q>`.
#[derive(Debug, Clone)]
pub struct VerificationQuery {
    /// Marker-located precondition properties. Preconditions written as
    /// inline `assume(...)` statements are already part of the program text.
    pub preconditions: Vec<Property>,
    pub program: Program,
    pub postcondition: Property,
}

impl VerificationQuery {
    /// Query asking whether the program's own target assertion holds.
    pub fn from_program(program: Program) -> Self {
        let postcondition = program.postcondition();
        VerificationQuery {
            preconditions: Vec::new(),
            program,
            postcondition,
        }
    }
}

/// Annotation failure.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotateError {
    #[error("unknown marker `{0}`")]
    UnknownMarker(String),
}

/// Materialize a query as C source.
///
/// Each marker carrying assume-properties is replaced in place (line
/// numbers preserved) by the `assume(...)` statements, followed by the
/// `assert(...)` if the assertion property sits at the same marker. All
/// remaining marker calls are removed. When the assertion is at a marker,
/// the original target assertion is removed; when it is at the
/// postcondition site, it is re-rendered there. Helper definitions for
/// `assert`/`assume` are prepended if the source lacks them.
pub fn annotate(
    program: &Program,
    assumes: &[Property],
    assertion: &Property,
) -> Result<String, AnnotateError> {
    for p in assumes.iter().chain(std::iter::once(assertion)) {
        if let Location::Marker(name) = &p.location {
            if !program.has_marker(name) {
                return Err(AnnotateError::UnknownMarker(name.clone()));
            }
        }
    }

    // Replacements ordered by span start: markers and the target assert.
    let mut edits: Vec<(Span, String)> = Vec::new();
    for (name, span) in &program.markers {
        let mut stmts: Vec<String> = assumes
            .iter()
            .filter(|p| p.location == Location::Marker(name.clone()))
            .map(|p| format!("assume({});", print_minimal(&p.predicate)))
            .collect();
        if assertion.location == Location::Marker(name.clone()) {
            stmts.push(format!("assert({});", print_minimal(&assertion.predicate)));
        }
        edits.push((*span, stmts.join(" ")));
    }
    let target_text = match &assertion.location {
        Location::PostconditionSite => {
            format!("assert({});", print_minimal(&assertion.predicate))
        }
        Location::Marker(_) => String::new(),
    };
    edits.push((program.target_span, target_text));
    edits.sort_by_key(|(span, _)| span.start);

    let src = &program.source;
    let mut out = String::with_capacity(src.len());
    let mut cursor = 0;
    for (span, replacement) in &edits {
        out.push_str(&src[cursor..span.start]);
        out.push_str(replacement);
        cursor = span.end;
    }
    out.push_str(&src[cursor..]);

    let mut prelude = String::new();
    if !Regex::new(r"\bvoid\s+assert\s*\(").unwrap().is_match(src) {
        prelude.push_str(ASSERT_HELPER);
        prelude.push('\n');
    }
    if !Regex::new(r"\bvoid\s+assume\s*\(").unwrap().is_match(src) {
        prelude.push_str(ASSUME_HELPER);
        prelude.push('\n');
    }
    Ok(format!("{prelude}{out}"))
}

/// Oracle answer for one query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Outcome {
    True,
    False,
    Unknown,
}

impl Outcome {
    /// TRUE or FALSE (not UNKNOWN).
    pub fn is_conclusive(self) -> bool {
        !matches!(self, Outcome::Unknown)
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::True => "TRUE",
            Outcome::False => "FALSE",
            Outcome::Unknown => "UNKNOWN",
        })
    }
}

/// Verdict of a single verification query.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub outcome: Outcome,
    /// Wall-clock seconds (or the backend's deterministic self-reported
    /// cost, see [`BackendReply::self_time`]).
    pub wall_time: f64,
    pub diagnostic: Option<String>,
}

/// What a backend reports for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub outcome: Outcome,
    /// Backends that can time themselves report it here; the built-in
    /// interpreter reports a deterministic abstract cost (1 microsecond per
    /// executed statement), external backends report the subprocess wall
    /// time including spawn overhead. When absent, [`run_query`] uses its
    /// own measurement.
    pub self_time: Option<f64>,
    pub diagnostic: Option<String>,
}

impl BackendReply {
    pub fn unknown(diagnostic: impl Into<String>) -> Self {
        BackendReply {
            outcome: Outcome::Unknown,
            self_time: None,
            diagnostic: Some(diagnostic.into()),
        }
    }
}

/// A verification oracle. Implementations must be usable from multiple
/// threads at once: the split check keeps two queries in flight.
pub trait OracleBackend: Send + Sync {
    fn check(&self, annotated_source: &str, timeout: Duration) -> BackendReply;
    fn name(&self) -> &str;
}

/// Run one query against a backend, measuring wall time and clamping at
/// the timeout: a query that exceeds it yields UNKNOWN with
/// `wall_time == timeout`.
pub fn run_query(
    backend: &dyn OracleBackend,
    annotated_source: &str,
    timeout: Duration,
) -> Verdict {
    let started = Instant::now();
    let reply = backend.check(annotated_source, timeout);
    let measured = started.elapsed().as_secs_f64();
    let wall = reply.self_time.unwrap_or(measured);
    if wall >= timeout.as_secs_f64() {
        return Verdict {
            outcome: Outcome::Unknown,
            wall_time: timeout.as_secs_f64(),
            diagnostic: Some(reply.diagnostic.unwrap_or_else(|| "timeout".to_string())),
        };
    }
    Verdict {
        outcome: reply.outcome,
        wall_time: wall,
        diagnostic: reply.diagnostic,
    }
}

/// Result of the split correctness/sufficiency check.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    /// Correctness check verdict: V(A, P, I).
    pub v1: Verdict,
    /// Sufficiency check verdict: V(A + {I}, P, q).
    pub v2: Verdict,
    /// Parallel execution time, exactly `max(v1.wall_time, v2.wall_time)`.
    pub t_v: f64,
}

impl SplitResult {
    pub fn new(v1: Verdict, v2: Verdict) -> Self {
        let t_v = v1.wall_time.max(v2.wall_time);
        SplitResult { v1, v2, t_v }
    }

    pub fn outcome(&self) -> Outcome {
        decide(self.v1.outcome, self.v2.outcome)
    }
}

/// Launch the correctness check V1 := V(A, P, I) and the sufficiency check
/// V2 := V(A + {I}, P, q) concurrently; both queries are in flight
/// simultaneously and `t_v` is the max of their individual wall times.
pub fn run_split(
    backend: &dyn OracleBackend,
    query: &VerificationQuery,
    candidate: &Property,
    timeout: Duration,
) -> Result<SplitResult, AnnotateError> {
    let v1_source = annotate(&query.program, &query.preconditions, candidate)?;
    let mut v2_assumes = query.preconditions.clone();
    v2_assumes.push(candidate.clone());
    let v2_source = annotate(&query.program, &v2_assumes, &query.postcondition)?;
    log::debug!("correctness query:\n{v1_source}");
    log::debug!("sufficiency query:\n{v2_source}");

    let (v1, v2) = std::thread::scope(|scope| {
        let h1 = scope.spawn(|| run_query(backend, &v1_source, timeout));
        let h2 = scope.spawn(|| run_query(backend, &v2_source, timeout));
        (
            h1.join().expect("v1 query panicked"),
            h2.join().expect("v2 query panicked"),
        )
    });
    Ok(SplitResult::new(v1, v2))
}

/// Decision procedure combining the two verdicts:
/// (TRUE, TRUE) -> TRUE; (*, FALSE) -> FALSE; otherwise UNKNOWN.
/// A FALSE sufficiency check refutes the original query regardless of the
/// correctness verdict.
pub fn decide(v1: Outcome, v2: Outcome) -> Outcome {
    match (v1, v2) {
        (Outcome::True, Outcome::True) => Outcome::True,
        (_, Outcome::False) => Outcome::False,
        _ => Outcome::Unknown,
    }
}

/// Counting semaphore bounding simultaneous verifier subprocesses.
pub struct ConcurrencyGate {
    permits: Mutex<usize>,
    available: Condvar,
}

impl ConcurrencyGate {
    /// A gate smaller than 2 would stop a split pair from overlapping, so
    /// the capacity is clamped up.
    pub fn new(capacity: usize) -> Self {
        ConcurrencyGate {
            permits: Mutex::new(capacity.max(2)),
            available: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> GatePermit<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.available.wait(permits).unwrap();
        }
        *permits -= 1;
        GatePermit { gate: self }
    }
}

pub struct GatePermit<'a> {
    gate: &'a ConcurrencyGate,
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.available.notify_one();
    }
}
