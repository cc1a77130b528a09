//! The V0 -> V1 -> V2 dataset pipeline and training-sample persistence.
//!
//! Per raw instance: the V0 record keeps the verifier's invariant text as
//! received (whitespace-collapsed), the V1 record is its cast-stripped,
//! normalized, minimally printed form, and V2 records are the qualifying
//! simplified candidates (grade >= 2). Instances whose raw invariant fails
//! to parse, or collapses to a degenerate constant, produce no records and
//! are reported as skips.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluate::baseline_median;
use crate::normalize::{is_degenerate, normalize_raw, NormalizationReport};
use crate::predicate::{expr_metrics, parse_predicate, print_minimal};
use crate::simplify::{SimplifyContext, SimplifyEngine};
use crate::verify::{Program, VerificationQuery};

/// One raw instance of the curation input JSONL.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RawInstance {
    pub id: String,
    /// Marker-instrumented C source with inline precondition assumes and
    /// the target assertion.
    pub program: String,
    /// Target loop marker for the invariant.
    pub marker: String,
    /// The verifier-emitted invariant text (V0).
    pub raw_invariant: String,
    /// Median baseline verification time; measured via the backend when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_b: Option<f64>,
}

/// Pipeline stage of a curated sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    V0,
    V1,
    V2,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::V0 => "v0",
            Stage::V1 => "v1",
            Stage::V2 => "v2",
        })
    }
}

/// One curated training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedSample {
    pub id: String,
    pub stage: Stage,
    /// Marker-instrumented program source.
    pub program_text: String,
    pub marker: String,
    /// V0: the whitespace-collapsed raw text; V1/V2: the minimal printing.
    pub invariant_text: String,
    /// Quality grade; V2 records always carry one (>= 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<u8>,
    pub t_b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_v: Option<f64>,
    pub char_length: usize,
    pub num_disjuncts: usize,
    pub num_conjuncts: usize,
    /// The model's rationale for a V2 rewrite, when it provided one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_rationale: Option<String>,
    /// Attached to V1 records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormalizationReport>,
}

/// Result of curating one instance.
#[derive(Debug)]
pub enum CurateOutcome {
    Samples(Vec<CuratedSample>),
    Skipped { reason: String },
}

/// Pipeline knobs for curation.
#[derive(Debug, Clone)]
pub struct CurateOptions {
    /// Verbosity threshold eta (characters).
    pub eta: usize,
    /// Candidates to sample per verbose invariant (N).
    pub n_candidates: usize,
    pub timeout: Duration,
    /// Baseline timing runs when `t_b` is absent from the input.
    pub k_runs: usize,
}

/// Run the full pipeline on one raw instance.
pub fn curate_instance(
    raw: &RawInstance,
    engine: &SimplifyEngine<'_>,
    opts: &CurateOptions,
) -> CurateOutcome {
    let skip = |reason: String| {
        log::info!("{}: skipped: {reason}", raw.id);
        CurateOutcome::Skipped { reason }
    };
    let program = match Program::from_source(&raw.program) {
        Ok(p) => p,
        Err(e) => return skip(format!("program: {e}")),
    };
    if !program.has_marker(&raw.marker) {
        return skip(format!("unknown marker `{}`", raw.marker));
    }
    let parsed_raw = match parse_predicate(&raw.raw_invariant) {
        Ok(p) => p,
        Err(e) => return skip(format!("raw invariant: {e}")),
    };
    let (normalized, report) = normalize_raw(&parsed_raw);
    if is_degenerate(&normalized) {
        return skip("degenerate after normalization".to_string());
    }
    let t_b = match raw.t_b {
        Some(t) => t,
        None => baseline_median(&program, engine.backend, opts.k_runs, engine.timeout).0,
    };

    let mut samples = Vec::new();

    let raw_text = collapse_whitespace(&raw.raw_invariant);
    let raw_metrics = expr_metrics(&parsed_raw);
    samples.push(CuratedSample {
        id: raw.id.clone(),
        stage: Stage::V0,
        program_text: raw.program.clone(),
        marker: raw.marker.clone(),
        char_length: raw_text.chars().count(),
        invariant_text: raw_text,
        grade: None,
        t_b,
        t1: None,
        t2: None,
        t_v: None,
        num_disjuncts: raw_metrics.num_disjuncts,
        num_conjuncts: raw_metrics.num_conjuncts,
        source_rationale: None,
        normalization: None,
    });

    let v1_text = print_minimal(&normalized);
    samples.push(CuratedSample {
        id: raw.id.clone(),
        stage: Stage::V1,
        program_text: raw.program.clone(),
        marker: raw.marker.clone(),
        invariant_text: v1_text,
        grade: None,
        t_b,
        t1: None,
        t2: None,
        t_v: None,
        char_length: report.output_metrics.char_length,
        num_disjuncts: report.output_metrics.num_disjuncts,
        num_conjuncts: report.output_metrics.num_conjuncts,
        source_rationale: None,
        normalization: Some(report),
    });

    let query = VerificationQuery::from_program(program.clone());
    let ctx = SimplifyContext {
        program: &program,
        normalized_predicate: &normalized,
        marker: &raw.marker,
        n_candidates: opts.n_candidates,
        verbosity_threshold: opts.eta,
    };
    for candidate in engine.simplify_invariant(&query, &raw.marker, &normalized, t_b, &ctx) {
        let metrics = expr_metrics(&candidate.predicate);
        samples.push(CuratedSample {
            id: raw.id.clone(),
            stage: Stage::V2,
            program_text: raw.program.clone(),
            marker: raw.marker.clone(),
            invariant_text: print_minimal(&candidate.predicate),
            grade: Some(candidate.grade),
            t_b,
            t1: Some(candidate.split.v1.wall_time),
            t2: Some(candidate.split.v2.wall_time),
            t_v: Some(candidate.split.t_v),
            char_length: metrics.char_length,
            num_disjuncts: metrics.num_disjuncts,
            num_conjuncts: metrics.num_conjuncts,
            source_rationale: candidate.rationale,
            normalization: None,
        });
    }
    CurateOutcome::Samples(samples)
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Batch curation result.
#[derive(Debug, Default)]
pub struct CurateBatch {
    pub samples: Vec<CuratedSample>,
    /// (instance id, reason) for instances that produced no records.
    pub skipped: Vec<(String, String)>,
}

impl CurateBatch {
    pub fn by_stage(&self, stage: Stage) -> Vec<&CuratedSample> {
        self.samples.iter().filter(|s| s.stage == stage).collect()
    }
}

/// Curate instances concurrently under a bounded worker pool, preserving
/// input order in the output.
pub fn curate_batch(
    instances: &[RawInstance],
    engine: &SimplifyEngine<'_>,
    opts: &CurateOptions,
    workers: usize,
) -> CurateBatch {
    let outcomes = run_indexed(instances.len(), workers, |idx| {
        curate_instance(&instances[idx], engine, opts)
    });
    let mut batch = CurateBatch::default();
    for (instance, outcome) in instances.iter().zip(outcomes) {
        match outcome {
            CurateOutcome::Samples(samples) => batch.samples.extend(samples),
            CurateOutcome::Skipped { reason } => batch.skipped.push((instance.id.clone(), reason)),
        }
    }
    batch
}

/// Run `job(0..count)` on a fixed worker pool, collecting results in index
/// order.
pub fn run_indexed<T: Send>(
    count: usize,
    workers: usize,
    job: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    let workers = workers.max(1).min(count.max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new((0..count).map(|_| None).collect::<Vec<_>>());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if idx >= count {
                    break;
                }
                let result = job(idx);
                slots.lock().unwrap()[idx] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|s| s.expect("worker filled slot"))
        .collect()
}

/// JSONL persistence failure.
#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
}

/// Write samples one JSON object per line.
pub fn emit_jsonl(samples: &[CuratedSample], path: &Path) -> Result<(), JsonlError> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    for sample in samples {
        serde_json::to_writer(&mut out, sample).map_err(|e| JsonlError::Schema {
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Load samples, validating per-record invariants; violations are reported
/// with their 1-based line number.
pub fn load_jsonl(path: &Path) -> Result<Vec<CuratedSample>, JsonlError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut samples = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let sample: CuratedSample =
            serde_json::from_str(&text).map_err(|e| JsonlError::Schema {
                line: line_no,
                message: e.to_string(),
            })?;
        validate_sample(&sample).map_err(|message| JsonlError::Schema {
            line: line_no,
            message,
        })?;
        samples.push(sample);
    }
    Ok(samples)
}

fn validate_sample(sample: &CuratedSample) -> Result<(), String> {
    if sample.t_b <= 0.0 {
        return Err(format!("t_b must be positive, got {}", sample.t_b));
    }
    let parsed = parse_predicate(&sample.invariant_text)
        .map_err(|e| format!("invariant does not parse: {e}"))?;
    let reprinted = print_minimal(&parsed);
    let reparsed =
        parse_predicate(&reprinted).map_err(|e| format!("reprinted invariant broke: {e}"))?;
    if reparsed != parsed {
        return Err("invariant does not round-trip through parse/print".to_string());
    }
    match sample.stage {
        Stage::V2 => match sample.grade {
            Some(g) if g >= 2 => {}
            other => return Err(format!("v2 sample requires grade >= 2, got {other:?}")),
        },
        Stage::V0 | Stage::V1 => {}
    }
    Ok(())
}

/// Seeded 80/20 split over instance ids. The ids are shuffled with the
/// seed and the first fifth becomes the validation set.
pub fn train_val_split(ids: &[String], seed: u64) -> (Vec<String>, Vec<String>) {
    let mut shuffled: Vec<String> = ids.to_vec();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);
    let val_len = shuffled.len() / 5;
    let train = shuffled.split_off(val_len);
    (train, shuffled)
}

/// Distribution summary (lower-middle median for even counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dist {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl Dist {
    fn zero() -> Self {
        Dist {
            min: 0.0,
            median: 0.0,
            mean: 0.0,
            max: 0.0,
        }
    }

    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Dist::zero();
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Dist {
            min: sorted[0],
            median: sorted[(sorted.len() - 1) / 2],
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Dataset statistics over curated samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: u64,
    pub by_stage: BTreeMap<String, u64>,
    pub by_grade: BTreeMap<u8, u64>,
    pub char_length: Dist,
    /// t_b / t_v over grade-3 samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup_grade3: Option<Dist>,
}

/// Per-stage and per-grade counts plus char-length and grade-3 speedup
/// distributions.
pub fn dataset_stats(samples: &[CuratedSample]) -> StatsReport {
    let mut by_stage = BTreeMap::new();
    let mut by_grade = BTreeMap::new();
    let mut lengths = Vec::with_capacity(samples.len());
    let mut speedups = Vec::new();
    for sample in samples {
        *by_stage.entry(sample.stage.to_string()).or_insert(0) += 1;
        if let Some(grade) = sample.grade {
            *by_grade.entry(grade).or_insert(0) += 1;
            if grade == 3 {
                if let Some(t_v) = sample.t_v {
                    if t_v > 0.0 {
                        speedups.push(sample.t_b / t_v);
                    }
                }
            }
        }
        lengths.push(sample.char_length as f64);
    }
    StatsReport {
        total: samples.len() as u64,
        by_stage,
        by_grade,
        char_length: Dist::of(&lengths),
        speedup_grade3: (!speedups.is_empty()).then(|| Dist::of(&speedups)),
    }
}
