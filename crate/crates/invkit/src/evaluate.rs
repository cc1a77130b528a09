//! Evaluation harness: prompt a model for an invariant per instance,
//! validate it, run the split decision procedure, and compute indicator
//! rates, speedup factors, and the virtual-best-solver portfolio metrics.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::predicate::{check_no_side_effects, parse_predicate, print_minimal, PredExpr};
use crate::simplify::first_json_object;
use crate::simplify::llm::LlmClient;
use crate::verify::{
    annotate, decide, run_query, run_split, OracleBackend, Outcome, Program, Property,
    VerificationQuery,
};

/// System prompt for invariant generation.
pub const GENERATION_SYSTEM_PROMPT: &str = r#"You are an expert C programmer and highly proficient in generating strong loop invariants
for C programs that accelerate traditional verifiers' verification process.

## Input format
- A C program instrumented with loop markers of the form:
  ```c
  INVARIANT_MARKER_k();  // appears at the *start of each loop body*
  ```
  - The program contains a single target property as an assertion of the form:
  ```c
  assert(<target_property>);
  ```
- A target loop marker (e.g., "INVARIANT_MARKER_1")

## Task
- Propose ONE loop invariant that is intended to hold specifically at the target loop marker.
- The invariant should help prove the target property and be inductive if possible.

## Output format
- Output MUST be a single JSON object on one line wrapped in ```json``` tags and nothing else.
- The JSON MUST have exactly these keys:
  - "marker": MUST be exactly the target loop marker (e.g., "INVARIANT_MARKER_1")
  - "content": ONLY a valid C boolean expression for the invariant.

## Output format example
```json
{"marker":"<target_marker>","content":"<content>"}
```"#;

/// User prompt template; `{program}` and `{target_marker}` are substituted.
pub const GENERATION_USER_TEMPLATE: &str = r#"## User Input
### C Program
```c
{program}
```
### Target Loop Marker
{target_marker}"#;

/// One evaluation instance of the input JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalInstanceSpec {
    pub id: String,
    pub program: String,
    pub marker: String,
    /// Median baseline time; measured over `k` runs when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b: Option<f64>,
}

/// A prepared evaluation instance.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub id: String,
    pub program: Program,
    pub marker: String,
    pub t_b: f64,
    /// The baseline itself timed out; `t_b` equals the timeout.
    pub baseline_timed_out: bool,
}

/// Build the (system, user) generation prompt for an instance.
pub fn build_generation_prompt(instance: &EvalInstance) -> (String, String) {
    let user = GENERATION_USER_TEMPLATE
        .replace("{program}", instance.program.source())
        .replace("{target_marker}", &instance.marker);
    (GENERATION_SYSTEM_PROMPT.to_string(), user)
}

/// Why a model response was discarded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InvalidReason {
    TransportFailure(String),
    NoJson,
    WrongKeys,
    WrongMarker { got: String },
    SideEffect,
    BadPredicate(String),
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InvalidReason::TransportFailure(e) => write!(f, "transport failure: {e}"),
            InvalidReason::NoJson => write!(f, "no JSON object in response"),
            InvalidReason::WrongKeys => write!(f, "JSON must have exactly `marker` and `content`"),
            InvalidReason::WrongMarker { got } => write!(f, "wrong marker `{got}`"),
            InvalidReason::SideEffect => write!(f, "side-effecting operator in content"),
            InvalidReason::BadPredicate(e) => write!(f, "content does not parse: {e}"),
        }
    }
}

/// Extract and validate a generation response: fenced or bare JSON with
/// exactly the keys `marker` and `content`, the marker matching, and the
/// content a side-effect-free predicate. Any failure discards the
/// candidate; the instance then receives the verdict UNKNOWN without any
/// verifier invocation.
pub fn parse_generation_response(
    text: &str,
    expected_marker: &str,
) -> Result<PredExpr, InvalidReason> {
    let value = first_json_object(text).ok_or(InvalidReason::NoJson)?;
    let serde_json::Value::Object(map) = value else {
        return Err(InvalidReason::NoJson);
    };
    if map.len() != 2 {
        return Err(InvalidReason::WrongKeys);
    }
    let (Some(serde_json::Value::String(marker)), Some(serde_json::Value::String(content))) =
        (map.get("marker"), map.get("content"))
    else {
        return Err(InvalidReason::WrongKeys);
    };
    if marker != expected_marker {
        return Err(InvalidReason::WrongMarker {
            got: marker.clone(),
        });
    }
    if !check_no_side_effects(content) {
        return Err(InvalidReason::SideEffect);
    }
    parse_predicate(content).map_err(|e| InvalidReason::BadPredicate(e.to_string()))
}

/// A model (or replay) producing one raw response per instance.
pub trait InvariantGenerator: Send + Sync {
    fn generate(&self, instance: &EvalInstance) -> Generation;
}

/// Raw model output with its inference latency.
#[derive(Debug, Clone)]
pub struct Generation {
    pub raw_output: Option<String>,
    /// Model inference seconds (zero for replayed outputs unless the
    /// replay file provides one).
    pub t_m: f64,
    pub error: Option<String>,
}

/// Live generator calling an LLM endpoint, measuring inference latency.
pub struct LlmGenerator {
    pub llm: Box<dyn LlmClient>,
}

impl InvariantGenerator for LlmGenerator {
    fn generate(&self, instance: &EvalInstance) -> Generation {
        let (system, user) = build_generation_prompt(instance);
        let started = Instant::now();
        match self.llm.complete(&system, &user, 1) {
            Ok(mut responses) if !responses.is_empty() => Generation {
                raw_output: Some(responses.swap_remove(0)),
                t_m: started.elapsed().as_secs_f64(),
                error: None,
            },
            Ok(_) => Generation {
                raw_output: None,
                t_m: started.elapsed().as_secs_f64(),
                error: Some("empty completion list".to_string()),
            },
            Err(e) => Generation {
                raw_output: None,
                t_m: started.elapsed().as_secs_f64(),
                error: Some(e.to_string()),
            },
        }
    }
}

/// One line of a replay file: a pre-generated model output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub id: String,
    pub output: String,
    #[serde(default)]
    pub t_m: f64,
}

/// Offline generator replaying pre-generated outputs keyed by instance id.
pub struct ReplayGenerator {
    entries: BTreeMap<String, ReplayEntry>,
}

impl ReplayGenerator {
    pub fn new(entries: Vec<ReplayEntry>) -> Self {
        ReplayGenerator {
            entries: entries.into_iter().map(|e| (e.id.clone(), e)).collect(),
        }
    }

    pub fn from_jsonl(path: &Path) -> std::io::Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut entries = Vec::new();
        for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
            let text = line?;
            if text.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&text).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("replay line {}: {e}", idx + 1),
                )
            })?;
            entries.push(entry);
        }
        Ok(ReplayGenerator::new(entries))
    }
}

impl InvariantGenerator for ReplayGenerator {
    fn generate(&self, instance: &EvalInstance) -> Generation {
        match self.entries.get(&instance.id) {
            Some(entry) => Generation {
                raw_output: Some(entry.output.clone()),
                t_m: entry.t_m,
                error: None,
            },
            None => Generation {
                raw_output: None,
                t_m: 0.0,
                error: Some("no replayed output for this instance".to_string()),
            },
        }
    }
}

/// Per-instance evaluation result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_model_output: Option<String>,
    /// Minimal printing of the accepted invariant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_text: Option<String>,
    pub t_m: f64,
    pub valid: bool,
    pub correct: bool,
    pub speedup: bool,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_v: Option<f64>,
    /// Speedup factor S: t_b/t_v when correct and conclusive, else 1.
    pub s_factor: f64,
    /// Virtual-best-solver time: min(t_v, t_b) when correct and
    /// conclusive, else t_b. Never exceeds t_b.
    pub vbs: f64,
    pub t_b: f64,
    pub baseline_timed_out: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl EvalRecord {
    fn invalid(instance: &EvalInstance, gen: &Generation, reason: String) -> EvalRecord {
        EvalRecord {
            id: instance.id.clone(),
            raw_model_output: gen.raw_output.clone(),
            invariant_text: None,
            t_m: gen.t_m,
            valid: false,
            correct: false,
            speedup: false,
            outcome: Outcome::Unknown,
            t1: None,
            t2: None,
            t_v: None,
            s_factor: 1.0,
            vbs: instance.t_b,
            t_b: instance.t_b,
            baseline_timed_out: instance.baseline_timed_out,
            diagnostic: Some(reason),
        }
    }
}

/// Pure portfolio arithmetic for one instance: the speedup indicator, the
/// speedup factor S, and the virtual-best-solver time. The split arm only
/// counts when the candidate was correct and the outcome conclusive;
/// otherwise the portfolio falls back to the baseline, so VBS never
/// exceeds `t_b`.
pub fn portfolio_times(
    correct: bool,
    outcome: Outcome,
    t_v: Option<f64>,
    t_b: f64,
) -> (bool, f64, f64) {
    match (correct && outcome.is_conclusive(), t_v) {
        (true, Some(t_v)) => (t_v < t_b, t_b / t_v, t_v.min(t_b)),
        _ => (false, 1.0, t_b),
    }
}

/// Evaluate one instance: query the model, validate, run the split checks
/// in parallel, and fill in the indicators:
/// Valid; Correct = Valid and V1 = TRUE; Speedup = Correct and conclusive
/// outcome and t_v < t_b.
pub fn evaluate_instance(
    instance: &EvalInstance,
    generator: &dyn InvariantGenerator,
    backend: &dyn OracleBackend,
    timeout: Duration,
) -> EvalRecord {
    let gen = generator.generate(instance);
    if let Some(error) = &gen.error {
        return EvalRecord::invalid(instance, &gen, format!("transport failure: {error}"));
    }
    let Some(raw_output) = &gen.raw_output else {
        return EvalRecord::invalid(instance, &gen, "no model output".to_string());
    };
    let predicate = match parse_generation_response(raw_output, &instance.marker) {
        Ok(p) => p,
        Err(reason) => return EvalRecord::invalid(instance, &gen, reason.to_string()),
    };

    let query = VerificationQuery::from_program(instance.program.clone());
    let candidate = Property::at_marker(&instance.marker, predicate.clone());
    let split = match run_split(backend, &query, &candidate, timeout) {
        Ok(split) => split,
        Err(e) => return EvalRecord::invalid(instance, &gen, e.to_string()),
    };
    let outcome = decide(split.v1.outcome, split.v2.outcome);
    let correct = split.v1.outcome == Outcome::True;
    let t_b = instance.t_b;
    let (speedup, s_factor, vbs) = portfolio_times(correct, outcome, Some(split.t_v), t_b);
    let diagnostic = split
        .v1
        .diagnostic
        .clone()
        .or_else(|| split.v2.diagnostic.clone());
    EvalRecord {
        id: instance.id.clone(),
        raw_model_output: Some(raw_output.clone()),
        invariant_text: Some(print_minimal(&predicate)),
        t_m: gen.t_m,
        valid: true,
        correct,
        speedup,
        outcome,
        t1: Some(split.v1.wall_time),
        t2: Some(split.v2.wall_time),
        t_v: Some(split.t_v),
        s_factor,
        vbs,
        t_b,
        baseline_timed_out: instance.baseline_timed_out,
        diagnostic,
    }
}

/// Evaluate instances concurrently (bounded pool), preserving input order.
pub fn evaluate_batch(
    instances: &[EvalInstance],
    generator: &dyn InvariantGenerator,
    backend: &dyn OracleBackend,
    timeout: Duration,
    workers: usize,
) -> Vec<EvalRecord> {
    crate::curate::run_indexed(instances.len(), workers, |idx| {
        evaluate_instance(&instances[idx], generator, backend, timeout)
    })
}

/// Aggregate metrics over an evaluation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_instances: u64,
    /// Indicator rates in percent.
    pub r_valid: f64,
    pub r_correct: f64,
    pub r_speedup: f64,
    /// Mean speedup factor among accelerated instances (0 when none).
    pub s_mean_accelerated: f64,
    /// Virtual best performance: mean per-instance VBS seconds.
    pub vbp: f64,
    /// VBP with model latency charged to the split arm of the min.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vbp_e2e: Option<f64>,
    /// Baseline-timeout instances that ended with a conclusive outcome.
    pub solved_timeouts: u64,
    pub mean_baseline: f64,
}

/// Compute the metric suite. `include_latency` controls whether the
/// end-to-end portfolio time (inference latency added to the split arm
/// before the min) is reported.
pub fn compute_metrics(records: &[EvalRecord], include_latency: bool) -> MetricsReport {
    let n = records.len();
    let pct = |count: usize| {
        if n == 0 {
            0.0
        } else {
            100.0 * count as f64 / n as f64
        }
    };
    let mean = |sum: f64| if n == 0 { 0.0 } else { sum / n as f64 };

    let valid = records.iter().filter(|r| r.valid).count();
    let correct = records.iter().filter(|r| r.correct).count();
    let accelerated: Vec<&EvalRecord> = records.iter().filter(|r| r.speedup).collect();
    let s_mean_accelerated = if accelerated.is_empty() {
        0.0
    } else {
        accelerated.iter().map(|r| r.s_factor).sum::<f64>() / accelerated.len() as f64
    };
    let vbp = mean(records.iter().map(|r| r.vbs).sum());
    let vbp_e2e = include_latency.then(|| {
        mean(
            records
                .iter()
                .map(|r| {
                    let used_split = r.correct && r.outcome.is_conclusive();
                    match (used_split, r.t_v) {
                        (true, Some(t_v)) => (t_v + r.t_m).min(r.t_b),
                        _ => r.t_b,
                    }
                })
                .sum(),
        )
    });
    let solved_timeouts = records
        .iter()
        .filter(|r| r.baseline_timed_out && r.outcome.is_conclusive())
        .count() as u64;
    MetricsReport {
        n_instances: n as u64,
        r_valid: pct(valid),
        r_correct: pct(correct),
        r_speedup: pct(accelerated.len()),
        s_mean_accelerated,
        vbp,
        vbp_e2e,
        solved_timeouts,
        mean_baseline: mean(records.iter().map(|r| r.t_b).sum()),
    }
}

/// Partition instance ids by baseline time: hard iff `t_b > threshold`.
pub fn partition_easy_hard(
    baseline_times: &[(String, f64)],
    threshold: f64,
) -> (Vec<String>, Vec<String>) {
    let mut easy = Vec::new();
    let mut hard = Vec::new();
    for (id, t_b) in baseline_times {
        if *t_b > threshold {
            hard.push(id.clone());
        } else {
            easy.push(id.clone());
        }
    }
    (easy, hard)
}

/// Median baseline time of V(A, P, q) over `k` runs (lower-middle median
/// for even `k`). The boolean is set when every run timed out; `t_b` then
/// equals the timeout.
pub fn baseline_median(
    program: &Program,
    backend: &dyn OracleBackend,
    k: usize,
    timeout: Duration,
) -> (f64, bool) {
    let postcondition = program.postcondition();
    let source = match annotate(program, &[], &postcondition) {
        Ok(s) => s,
        Err(_) => return (timeout.as_secs_f64(), true),
    };
    let k = k.max(1);
    let mut times = Vec::with_capacity(k);
    let mut all_timed_out = true;
    for _ in 0..k {
        let verdict = run_query(backend, &source, timeout);
        let timed_out =
            verdict.outcome == Outcome::Unknown && verdict.wall_time >= timeout.as_secs_f64();
        all_timed_out &= timed_out;
        times.push(verdict.wall_time);
    }
    times.sort_by(f64::total_cmp);
    (times[(times.len() - 1) / 2], all_timed_out)
}

/// Prepare instances: parse programs and fill in baseline medians where
/// the input did not provide one.
pub fn prepare_instances(
    specs: &[EvalInstanceSpec],
    backend: &dyn OracleBackend,
    k: usize,
    timeout: Duration,
    workers: usize,
) -> Vec<Result<EvalInstance, String>> {
    crate::curate::run_indexed(specs.len(), workers, |idx| {
        let spec = &specs[idx];
        let program =
            Program::from_source(&spec.program).map_err(|e| format!("{}: {e}", spec.id))?;
        if !program.has_marker(&spec.marker) {
            return Err(format!("{}: unknown marker `{}`", spec.id, spec.marker));
        }
        let (t_b, baseline_timed_out) = match spec.t_b {
            Some(t) => (t, t >= timeout.as_secs_f64()),
            None => baseline_median(&program, backend, k, timeout),
        };
        Ok(EvalInstance {
            id: spec.id.clone(),
            program,
            marker: spec.marker.clone(),
            t_b,
            baseline_timed_out,
        })
    })
}

/// Write per-instance timings as CSV.
pub fn write_timings_csv(records: &[EvalRecord], path: &Path) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "id,t_b,t_m,t1,t2,t_v,s_factor,vbs,outcome")?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.id,
            r.t_b,
            r.t_m,
            opt(r.t1),
            opt(r.t2),
            opt(r.t_v),
            r.s_factor,
            r.vbs,
            r.outcome
        )?;
    }
    out.flush()
}
