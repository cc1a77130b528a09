//! Command-line entry point wiring the pipeline and evaluation workflows.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use invkit::config::{BackendChoice, ToolConfig};
use invkit::curate::{
    curate_batch, dataset_stats, emit_jsonl, load_jsonl, train_val_split, CurateOptions,
    RawInstance, Stage,
};
use invkit::evaluate::{
    compute_metrics, evaluate_batch, partition_easy_hard, prepare_instances, write_timings_csv,
    EvalInstanceSpec, LlmGenerator, ReplayGenerator,
};
use invkit::grade::{grade_candidate_text, CandidateSyntax};
use invkit::normalize::normalize_raw;
use invkit::predicate::{parse_predicate, print_minimal};
use invkit::simplify::SimplifyEngine;
use invkit::verify::{Program, VerificationQuery};

#[derive(Parser)]
#[command(
    name = "invkit",
    version,
    about = "Curate loop-invariant training data and evaluate candidate invariants"
)]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON config file (flag > env > file > default).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Verification backend.
    #[arg(long, global = true)]
    backend: Option<BackendChoice>,
    /// Per-query timeout in seconds.
    #[arg(long, global = true)]
    timeout: Option<f64>,
    /// Worker pool size.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Process instances one at a time (timing-sensitive runs).
    #[arg(long, global = true)]
    serial: bool,
    /// Verbosity threshold eta in characters.
    #[arg(long, global = true)]
    eta: Option<usize>,
    /// Simplification candidates per invariant.
    #[arg(long, global = true)]
    n_candidates: Option<usize>,
    /// Baseline timing runs.
    #[arg(long, global = true)]
    k_runs: Option<usize>,
    /// Split-check repetitions per grading.
    #[arg(long, global = true)]
    grading_runs: Option<usize>,
    /// Seed for the train/validation shuffle.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Keep annotated query files for debugging.
    #[arg(long, global = true)]
    keep_artifacts: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, strip casts, and normalize raw invariants; emit V1 JSONL.
    Normalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run the full V0 -> V1 -> V2 curation pipeline.
    Curate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Grade candidate invariants against their instances.
    Grade {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate a model (or replayed outputs) on instances.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Replay pre-generated model outputs instead of calling a model.
        #[arg(long)]
        from_file: Option<PathBuf>,
        /// Also write per-instance timings CSV.
        #[arg(long)]
        csv: bool,
        /// Skip the end-to-end (latency-charged) portfolio metric.
        #[arg(long)]
        no_latency: bool,
    },
    /// Dataset statistics for a curated JSONL file.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Emit the report as JSON instead of text.
        #[arg(long)]
        json: bool,
    },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn build_config(common: &CommonArgs) -> Result<ToolConfig, Box<dyn std::error::Error>> {
    let mut config = match &common.config {
        Some(path) => ToolConfig::from_file(path)?,
        None => ToolConfig::default(),
    };
    config.apply_env()?;
    if let Some(backend) = common.backend {
        config.backend = backend;
    }
    if let Some(timeout) = common.timeout {
        config.timeout_secs = timeout;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if common.serial {
        config.workers = 1;
    }
    if let Some(eta) = common.eta {
        config.eta = eta;
    }
    if let Some(n) = common.n_candidates {
        config.n_candidates = n;
    }
    if let Some(k) = common.k_runs {
        config.k_runs = k;
    }
    if let Some(g) = common.grading_runs {
        config.grading_runs = g;
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    config.keep_artifacts |= common.keep_artifacts;
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let config = build_config(&cli.common)?;
    match cli.command {
        Command::Normalize { input, output } => cmd_normalize(&input, &output),
        Command::Curate { input, out_dir } => cmd_curate(&config, &input, &out_dir),
        Command::Grade { input, output } => cmd_grade(&config, &input, &output),
        Command::Evaluate {
            input,
            out_dir,
            from_file,
            csv,
            no_latency,
        } => cmd_evaluate(
            &config,
            &input,
            &out_dir,
            from_file.as_deref(),
            csv,
            !no_latency,
        ),
        Command::Stats { input, json } => cmd_stats(&input, json),
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(
    path: &Path,
) -> Result<Vec<(usize, T)>, Box<dyn std::error::Error>> {
    let file =
        std::fs::File::open(path).map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    let mut rows = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let row = serde_json::from_str(&text)
            .map_err(|e| format!("{}:{}: {e}", path.display(), idx + 1))?;
        rows.push((idx + 1, row));
    }
    Ok(rows)
}

/// Input line for `normalize`: only the invariant is required.
#[derive(Debug, Deserialize)]
struct NormalizeInput {
    #[serde(default)]
    id: Option<String>,
    #[serde(alias = "invariant")]
    raw_invariant: String,
}

#[derive(Debug, Serialize)]
struct NormalizeOutput {
    id: String,
    invariant_text: String,
    char_length: usize,
    num_disjuncts: usize,
    num_conjuncts: usize,
    rules_fired: BTreeMap<String, u64>,
    casts_stripped: u64,
}

fn cmd_normalize(input: &Path, output: &Path) -> Result<(), Box<dyn std::error::Error>> {
    let file =
        std::fs::File::open(input).map_err(|e| format!("cannot open {}: {e}", input.display()))?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(output)?);
    let mut processed = 0u64;
    let mut skipped = 0u64;
    let mut rule_totals: BTreeMap<String, u64> = BTreeMap::new();
    let mut casts_total = 0u64;
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let row: NormalizeInput = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("line {line_no}: skipped (bad JSON: {e})");
                skipped += 1;
                continue;
            }
        };
        let id = row.id.unwrap_or_else(|| format!("line-{line_no}"));
        let parsed = match parse_predicate(&row.raw_invariant) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("{id}: skipped (unparseable invariant: {e})");
                skipped += 1;
                continue;
            }
        };
        let (normalized, report) = normalize_raw(&parsed);
        for (rule, count) in &report.rules_fired {
            *rule_totals.entry(rule.clone()).or_insert(0) += count;
        }
        casts_total += report.casts_stripped;
        let record = NormalizeOutput {
            id,
            invariant_text: print_minimal(&normalized),
            char_length: report.output_metrics.char_length,
            num_disjuncts: report.output_metrics.num_disjuncts,
            num_conjuncts: report.output_metrics.num_conjuncts,
            rules_fired: report.rules_fired,
            casts_stripped: report.casts_stripped,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
        processed += 1;
    }
    out.flush()?;
    println!("normalized {processed} invariants, skipped {skipped}");
    println!("casts stripped: {casts_total}");
    if rule_totals.is_empty() {
        println!("rules fired: none");
    } else {
        println!("rules fired:");
        for (rule, count) in &rule_totals {
            println!("  {rule}: {count}");
        }
    }
    Ok(())
}

fn cmd_curate(
    config: &ToolConfig,
    input: &Path,
    out_dir: &Path,
) -> Result<(), Box<dyn std::error::Error>> {
    let instances: Vec<RawInstance> = read_jsonl(input)?.into_iter().map(|(_, r)| r).collect();
    std::fs::create_dir_all(out_dir)?;
    let backend = config.make_backend()?;
    let llm = config.make_llm()?;
    let engine = SimplifyEngine {
        backend: backend.as_ref(),
        llm: llm.as_ref(),
        timeout: config.timeout(),
        grading_runs: config.grading_runs,
        workers: config.workers,
    };
    let opts = CurateOptions {
        eta: config.eta,
        n_candidates: config.n_candidates,
        timeout: config.timeout(),
        k_runs: config.k_runs,
    };
    let batch = curate_batch(&instances, &engine, &opts, config.workers);

    let mut counts = BTreeMap::new();
    for stage in [Stage::V0, Stage::V1, Stage::V2] {
        let samples: Vec<_> = batch.by_stage(stage).into_iter().cloned().collect();
        counts.insert(stage.to_string(), samples.len() as u64);
        emit_jsonl(&samples, &out_dir.join(format!("{stage}.jsonl")))?;
    }

    let ids: Vec<String> = instances.iter().map(|i| i.id.clone()).collect();
    let (train_ids, val_ids) = train_val_split(&ids, config.seed);
    let manifest = serde_json::json!({
        "config": config,
        "seed": config.seed,
        "instances": instances.len(),
        "counts": counts,
        "skipped": batch.skipped.iter().map(|(id, reason)| {
            serde_json::json!({"id": id, "reason": reason})
        }).collect::<Vec<_>>(),
        "train_ids": train_ids,
        "val_ids": val_ids,
    });
    std::fs::write(
        out_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;

    println!(
        "curated {} instances: v0={} v1={} v2={} skipped={}",
        instances.len(),
        counts["v0"],
        counts["v1"],
        counts["v2"],
        batch.skipped.len()
    );
    for (id, reason) in &batch.skipped {
        println!("  skipped {id}: {reason}");
    }
    Ok(())
}

/// Input line for `grade`.
#[derive(Debug, Clone, Deserialize)]
struct CandidateInstance {
    id: String,
    program: String,
    marker: String,
    invariant: String,
    #[serde(default)]
    t_b: Option<f64>,
}

#[derive(Debug, Serialize)]
struct GradeOutput {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    invariant_text: Option<String>,
    grade: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    v1: Option<invkit::verify::Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    v2: Option<invkit::verify::Outcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_v: Option<f64>,
    t_b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    diagnostic: Option<String>,
}

fn cmd_grade(
    config: &ToolConfig,
    input: &Path,
    output: &Path,
) -> Result<(), Box<dyn std::error::Error>> {
    let rows: Vec<CandidateInstance> = read_jsonl(input)?.into_iter().map(|(_, r)| r).collect();
    let backend = config.make_backend()?;
    let timeout = config.timeout();

    let outputs = invkit::curate::run_indexed(rows.len(), config.workers, |idx| {
        let row = &rows[idx];
        let program = match Program::from_source(&row.program) {
            Ok(p) => p,
            Err(e) => {
                return GradeOutput {
                    id: row.id.clone(),
                    invariant_text: None,
                    grade: 0,
                    v1: None,
                    v2: None,
                    t1: None,
                    t2: None,
                    t_v: None,
                    t_b: row.t_b.unwrap_or(0.0),
                    diagnostic: Some(format!("program: {e}")),
                }
            }
        };
        let t_b = match row.t_b {
            Some(t) => t,
            None => {
                invkit::evaluate::baseline_median(
                    &program,
                    backend.as_ref(),
                    config.k_runs,
                    timeout,
                )
                .0
            }
        };
        let query = VerificationQuery::from_program(program);
        let graded = grade_candidate_text(
            &query,
            &row.marker,
            &row.invariant,
            t_b,
            backend.as_ref(),
            timeout,
            config.grading_runs,
        );
        let (invariant_text, diagnostic) = match &graded.candidate {
            CandidateSyntax::Valid(p) => (Some(print_minimal(p)), None),
            CandidateSyntax::Invalid { reason, .. } => (None, Some(reason.clone())),
        };
        GradeOutput {
            id: row.id.clone(),
            invariant_text,
            grade: graded.grade,
            v1: graded.split.as_ref().map(|s| s.v1.outcome),
            v2: graded.split.as_ref().map(|s| s.v2.outcome),
            t1: graded.split.as_ref().map(|s| s.v1.wall_time),
            t2: graded.split.as_ref().map(|s| s.v2.wall_time),
            t_v: graded.split.as_ref().map(|s| s.t_v),
            t_b,
            diagnostic,
        }
    });

    let mut out = std::io::BufWriter::new(std::fs::File::create(output)?);
    let mut grade_counts = [0u64; 4];
    for record in &outputs {
        grade_counts[record.grade as usize] += 1;
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    println!(
        "graded {} candidates: g0={} g1={} g2={} g3={}",
        outputs.len(),
        grade_counts[0],
        grade_counts[1],
        grade_counts[2],
        grade_counts[3]
    );
    Ok(())
}

fn cmd_evaluate(
    config: &ToolConfig,
    input: &Path,
    out_dir: &Path,
    from_file: Option<&Path>,
    csv: bool,
    include_latency: bool,
) -> Result<(), Box<dyn std::error::Error>> {
    let specs: Vec<EvalInstanceSpec> = read_jsonl(input)?.into_iter().map(|(_, r)| r).collect();
    std::fs::create_dir_all(out_dir)?;
    let backend = config.make_backend()?;
    let timeout = config.timeout();

    let prepared = prepare_instances(
        &specs,
        backend.as_ref(),
        config.k_runs,
        timeout,
        config.workers,
    );
    let mut instances = Vec::new();
    for result in prepared {
        match result {
            Ok(instance) => instances.push(instance),
            Err(e) => return Err(format!("bad instance: {e}").into()),
        }
    }

    let generator: Box<dyn invkit::evaluate::InvariantGenerator> = match from_file {
        Some(path) => Box::new(ReplayGenerator::from_jsonl(path)?),
        None => Box::new(LlmGenerator {
            llm: config.make_llm()?,
        }),
    };

    let records = evaluate_batch(
        &instances,
        generator.as_ref(),
        backend.as_ref(),
        timeout,
        config.workers,
    );
    let metrics = compute_metrics(&records, include_latency);

    let mut out = std::io::BufWriter::new(std::fs::File::create(out_dir.join("records.jsonl"))?);
    for record in &records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    std::fs::write(
        out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&metrics)? + "\n",
    )?;
    if csv {
        write_timings_csv(&records, &out_dir.join("timings.csv"))?;
    }

    let baseline_times: Vec<(String, f64)> =
        instances.iter().map(|i| (i.id.clone(), i.t_b)).collect();
    let (easy, hard) = partition_easy_hard(&baseline_times, config.hard_threshold_secs);

    println!("instances evaluated: {}", metrics.n_instances);
    println!(
        "easy/hard split at {}s: {} easy, {} hard",
        config.hard_threshold_secs,
        easy.len(),
        hard.len()
    );
    println!("R_valid    {:6.1} %", metrics.r_valid);
    println!("R_correct  {:6.1} %", metrics.r_correct);
    println!("R_speedup  {:6.1} %", metrics.r_speedup);
    println!("S mean (accelerated)  {:.3}x", metrics.s_mean_accelerated);
    println!("VBP        {:.6} s", metrics.vbp);
    if let Some(e2e) = metrics.vbp_e2e {
        println!("VBP_E2E    {e2e:.6} s");
    }
    println!("solved baseline timeouts: {}", metrics.solved_timeouts);
    Ok(())
}

fn cmd_stats(input: &Path, as_json: bool) -> Result<(), Box<dyn std::error::Error>> {
    let samples = load_jsonl(input)?;
    let report = dataset_stats(&samples);
    if as_json {
        println!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(());
    }
    println!("samples: {}", report.total);
    for (stage, count) in &report.by_stage {
        println!("  stage {stage}: {count}");
    }
    for (grade, count) in &report.by_grade {
        println!("  grade {grade}: {count}");
    }
    println!(
        "char length: min {} / median {} / mean {:.1} / max {}",
        report.char_length.min,
        report.char_length.median,
        report.char_length.mean,
        report.char_length.max
    );
    if let Some(speedup) = &report.speedup_grade3 {
        println!(
            "grade-3 speedup (t_b/t_v): min {:.2} / median {:.2} / mean {:.2} / max {:.2}",
            speedup.min, speedup.median, speedup.mean, speedup.max
        );
    }
    Ok(())
}
