//! External verification backend: runs a verifier as a subprocess and maps
//! its output to a verdict through configurable regexes.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BackendReply, ConcurrencyGate, OracleBackend, Outcome};

/// Configuration for an external verifier, loadable from JSON.
///
/// `command` is the argv template; every occurrence of `{file}` is replaced
/// by the path of the temporary `.c` file holding the annotated query.
/// The default verdict regexes match UAutomizer result lines.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExternalBackendConfig {
    pub command: Vec<String>,
    /// Optional wrapper prepended to the command, e.g. a memory limiter
    /// such as `runlim`. The built-in backend has no equivalent knob; it
    /// bounds work with `max_states`/`max_steps` instead.
    #[serde(default)]
    pub wrapper: Vec<String>,
    #[serde(default = "default_true_patterns")]
    pub verdict_true: Vec<String>,
    #[serde(default = "default_false_patterns")]
    pub verdict_false: Vec<String>,
    #[serde(default = "default_unknown_patterns")]
    pub verdict_unknown: Vec<String>,
    /// Keep the generated `.c` files for debugging.
    #[serde(default)]
    pub keep_artifacts: bool,
    /// Directory for kept artifacts (default: a fresh temp dir).
    #[serde(default)]
    pub artifact_dir: Option<PathBuf>,
    /// Cap on simultaneous verifier subprocesses (clamped to >= 2 so a
    /// split pair can always overlap).
    #[serde(default = "default_max_procs")]
    pub max_procs: usize,
}

fn default_true_patterns() -> Vec<String> {
    vec![
        r"RESULT:\s*Ultimate proved your program to be correct".to_string(),
        r"Verification result:\s*TRUE".to_string(),
    ]
}

fn default_false_patterns() -> Vec<String> {
    vec![
        r"RESULT:\s*Ultimate proved your program to be incorrect".to_string(),
        r"Verification result:\s*FALSE".to_string(),
    ]
}

fn default_unknown_patterns() -> Vec<String> {
    vec![
        r"RESULT:\s*Ultimate could not prove your program".to_string(),
        r"Verification result:\s*UNKNOWN".to_string(),
    ]
}

fn default_max_procs() -> usize {
    4
}

/// Subprocess-backed oracle.
pub struct ExternalBackend {
    config: ExternalBackendConfig,
    re_true: Vec<Regex>,
    re_false: Vec<Regex>,
    re_unknown: Vec<Regex>,
    gate: ConcurrencyGate,
    work_dir: Arc<tempfile::TempDir>,
    counter: AtomicU64,
}

impl ExternalBackend {
    pub fn new(config: ExternalBackendConfig) -> Result<Self, String> {
        if !config.command.iter().any(|part| part.contains("{file}")) {
            return Err("external backend command has no `{file}` placeholder".to_string());
        }
        let compile = |patterns: &[String]| -> Result<Vec<Regex>, String> {
            patterns
                .iter()
                .map(|p| Regex::new(p).map_err(|e| format!("bad verdict regex `{p}`: {e}")))
                .collect()
        };
        Ok(ExternalBackend {
            re_true: compile(&config.verdict_true)?,
            re_false: compile(&config.verdict_false)?,
            re_unknown: compile(&config.verdict_unknown)?,
            gate: ConcurrencyGate::new(config.max_procs),
            work_dir: Arc::new(
                tempfile::TempDir::new().map_err(|e| format!("cannot create temp dir: {e}"))?,
            ),
            counter: AtomicU64::new(0),
            config,
        })
    }

    fn query_path(&self) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let dir = match (&self.config.artifact_dir, self.config.keep_artifacts) {
            (Some(dir), true) => dir.clone(),
            _ => self.work_dir.path().to_path_buf(),
        };
        dir.join(format!("query_{n:05}.c"))
    }

    fn classify(&self, output: &str) -> Option<Outcome> {
        if self.re_true.iter().any(|re| re.is_match(output)) {
            Some(Outcome::True)
        } else if self.re_false.iter().any(|re| re.is_match(output)) {
            Some(Outcome::False)
        } else if self.re_unknown.iter().any(|re| re.is_match(output)) {
            Some(Outcome::Unknown)
        } else {
            None
        }
    }
}

impl OracleBackend for ExternalBackend {
    fn check(&self, annotated_source: &str, timeout: Duration) -> BackendReply {
        let _permit = self.gate.acquire();
        external_check_at(self, annotated_source, timeout)
    }

    fn name(&self) -> &str {
        "external"
    }
}

/// Write the annotated source to a `.c` file, run the configured command
/// under the timeout, and map its output to a verdict. The subprocess runs
/// in its own process group, which is killed wholesale on timeout.
pub fn external_check(
    config: &ExternalBackendConfig,
    annotated_source: &str,
    timeout: Duration,
) -> BackendReply {
    match ExternalBackend::new(config.clone()) {
        Ok(backend) => external_check_at(&backend, annotated_source, timeout),
        Err(e) => BackendReply::unknown(e),
    }
}

fn external_check_at(
    backend: &ExternalBackend,
    annotated_source: &str,
    timeout: Duration,
) -> BackendReply {
    let path = backend.query_path();
    if let Some(parent) = path.parent() {
        if std::fs::create_dir_all(parent).is_err() {
            return BackendReply::unknown(format!("cannot create {}", parent.display()));
        }
    }
    if let Err(e) = std::fs::write(&path, annotated_source) {
        return BackendReply::unknown(format!("cannot write {}: {e}", path.display()));
    }

    let mut argv: Vec<String> = backend.config.wrapper.clone();
    argv.extend(
        backend
            .config
            .command
            .iter()
            .map(|part| part.replace("{file}", &path.to_string_lossy())),
    );
    let started = Instant::now();
    let mut command = Command::new(&argv[0]);
    command
        .args(&argv[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    // A dedicated process group lets a timeout kill verifier children too.
    command.process_group(0);

    let mut child = match command.spawn() {
        Ok(child) => child,
        Err(e) => {
            return BackendReply::unknown(format!("spawn failure for `{}`: {e}", argv.join(" ")))
        }
    };
    let pid = child.id() as i32;

    let mut stdout_pipe = child.stdout.take().expect("stdout piped");
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let drain = |pipe: &mut dyn Read| {
        let mut buf = String::new();
        let _ = pipe.read_to_string(&mut buf);
        buf
    };
    let (stdout, stderr, status) = std::thread::scope(|scope| {
        let out = scope.spawn(move || drain(&mut stdout_pipe));
        let err = scope.spawn(move || drain(&mut stderr_pipe));
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) => {
                    if started.elapsed() >= timeout {
                        timed_out = true;
                        unsafe {
                            libc::kill(-pid, libc::SIGKILL);
                        }
                        let _ = child.wait();
                        break None;
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(_) => break None,
            }
        };
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        (stdout, stderr, if timed_out { None } else { status })
    });
    let elapsed = started.elapsed().as_secs_f64();

    let keep_note = if backend.config.keep_artifacts {
        format!(" [artifact: {}]", path.display())
    } else {
        Default::default()
    };

    let Some(status) = status else {
        return BackendReply {
            outcome: Outcome::Unknown,
            self_time: Some(timeout.as_secs_f64()),
            diagnostic: Some(format!(
                "timeout after {:.1}s{keep_note}",
                timeout.as_secs_f64()
            )),
        };
    };

    let combined = format!("{stdout}\n{stderr}");
    match backend.classify(&combined) {
        Some(outcome) => BackendReply {
            outcome,
            self_time: Some(elapsed),
            diagnostic: if keep_note.is_empty() {
                None
            } else {
                Some(keep_note.trim().to_string())
            },
        },
        None => {
            let tail: String = combined
                .lines()
                .rev()
                .take(5)
                .collect::<Vec<_>>()
                .into_iter()
                .rev()
                .collect::<Vec<_>>()
                .join(" | ");
            BackendReply {
                outcome: Outcome::Unknown,
                self_time: Some(elapsed),
                diagnostic: Some(format!(
                    "backend failure: exit {:?}, unmatched output: {tail}{keep_note}",
                    status.code()
                )),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(cmd: &[&str]) -> ExternalBackendConfig {
        ExternalBackendConfig {
            command: cmd.iter().map(|s| s.to_string()).collect(),
            wrapper: Vec::new(),
            verdict_true: default_true_patterns(),
            verdict_false: default_false_patterns(),
            verdict_unknown: default_unknown_patterns(),
            keep_artifacts: false,
            artifact_dir: None,
            max_procs: 4,
        }
    }

    #[test]
    fn maps_true_verdict() {
        let cfg = config(&[
            "/bin/sh",
            "-c",
            "cat {file} > /dev/null; echo 'RESULT: Ultimate proved your program to be correct!'",
        ]);
        let reply = external_check(&cfg, "int main() { return 0; }", Duration::from_secs(5));
        assert_eq!(reply.outcome, Outcome::True);
    }

    #[test]
    fn maps_false_verdict() {
        let cfg = config(&[
            "/bin/sh",
            "-c",
            "echo 'RESULT: Ultimate proved your program to be incorrect! {file}'",
        ]);
        let reply = external_check(&cfg, "int main() { return 0; }", Duration::from_secs(5));
        assert_eq!(reply.outcome, Outcome::False);
    }

    #[test]
    fn unmatched_output_is_backend_failure() {
        let cfg = config(&["/bin/sh", "-c", "echo 'gibberish {file}'; exit 3"]);
        let reply = external_check(&cfg, "int main() { return 0; }", Duration::from_secs(5));
        assert_eq!(reply.outcome, Outcome::Unknown);
        let diag = reply.diagnostic.unwrap();
        assert!(diag.contains("backend failure"), "{diag}");
        assert!(diag.contains("gibberish"), "{diag}");
    }

    #[test]
    fn timeout_kills_process() {
        let cfg = config(&["/bin/sh", "-c", "sleep 30; echo done {file}"]);
        let started = Instant::now();
        let reply = external_check(&cfg, "int main() { return 0; }", Duration::from_millis(200));
        assert!(started.elapsed() < Duration::from_secs(5));
        assert_eq!(reply.outcome, Outcome::Unknown);
        assert!((reply.self_time.unwrap() - 0.2).abs() < 1e-9);
    }

    #[test]
    fn spawn_failure_is_reported() {
        let cfg = config(&["/nonexistent/verifier", "{file}"]);
        let reply = external_check(&cfg, "int main() { return 0; }", Duration::from_secs(1));
        assert_eq!(reply.outcome, Outcome::Unknown);
        assert!(reply.diagnostic.unwrap().contains("spawn failure"));
    }

    #[test]
    fn missing_placeholder_is_rejected() {
        let cfg = config(&["/bin/true"]);
        assert!(ExternalBackend::new(cfg).is_err());
    }

    #[test]
    fn config_parses_from_json_with_defaults() {
        let cfg: ExternalBackendConfig =
            serde_json::from_str(r#"{"command": ["verifier", "{file}"]}"#).unwrap();
        assert_eq!(cfg.max_procs, 4);
        assert!(!cfg.verdict_true.is_empty());
    }
}
