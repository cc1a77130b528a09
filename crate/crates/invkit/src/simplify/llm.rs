//! LLM transport: an HTTP chat-completions client, a directory-backed stub
//! for offline runs, and an in-memory static stub for tests.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Chat-completions endpoint settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmEndpointConfig {
    /// Base URL, e.g. `https://api.example.com/v1`; the client posts to
    /// `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_top_p")]
    pub top_p: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Name of the environment variable holding the API key.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Base backoff in milliseconds, doubled per retry.
    #[serde(default = "default_backoff_ms")]
    pub retry_backoff_ms: u64,
    #[serde(default = "default_request_timeout")]
    pub request_timeout_secs: u64,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_top_p() -> f64 {
    0.8
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_api_key_env() -> String {
    "INVKIT_API_KEY".to_string()
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_request_timeout() -> u64 {
    120
}

/// Transport failure after retries were exhausted.
#[derive(Debug, Clone, Error)]
#[error("llm transport error: {0}")]
pub struct TransportError(pub String);

/// Something that can sample completions for a (system, user) prompt pair.
pub trait LlmClient: Send + Sync {
    fn complete(&self, system: &str, user: &str, n: usize) -> Result<Vec<String>, TransportError>;
}

/// Blocking HTTP client for chat-completions endpoints. Samples `n`
/// completions as `n` independent requests, retrying each transient
/// failure with bounded exponential backoff.
pub struct HttpLlm {
    config: LlmEndpointConfig,
    client: reqwest::blocking::Client,
}

impl HttpLlm {
    pub fn new(config: LlmEndpointConfig) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpLlm { config, client })
    }

    fn single_completion(&self, system: &str, user: &str) -> Result<String, TransportError> {
        let url = format!(
            "{}/chat/completions",
            self.config.base_url.trim_end_matches('/')
        );
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
            "temperature": self.config.temperature,
            "top_p": self.config.top_p,
            "max_tokens": self.config.max_tokens,
        });
        let api_key = std::env::var(&self.config.api_key_env).ok();
        let mut last_error = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                let backoff = self.config.retry_backoff_ms << (attempt - 1);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            let mut request = self.client.post(&url).json(&body);
            if let Some(key) = &api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let value: serde_json::Value = response
                            .json()
                            .map_err(|e| TransportError(format!("bad response body: {e}")))?;
                        return extract_content(&value)
                            .ok_or_else(|| TransportError("no completion content".to_string()));
                    }
                    last_error = format!("http status {status}");
                    if status.is_client_error() && status.as_u16() != 429 {
                        break;
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(TransportError(last_error))
    }
}

fn extract_content(value: &serde_json::Value) -> Option<String> {
    value
        .get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

impl LlmClient for HttpLlm {
    fn complete(&self, system: &str, user: &str, n: usize) -> Result<Vec<String>, TransportError> {
        (0..n)
            .map(|_| self.single_completion(system, user))
            .collect()
    }
}

/// Key identifying a prompt pair in a stub directory.
pub fn stub_key(system: &str, user: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(system.as_bytes());
    hasher.update([0u8]);
    hasher.update(user.as_bytes());
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Offline stub that reads canned responses from `{dir}/{stub_key}.json`
/// (a JSON array of strings). At most `n` responses are returned; a
/// missing file is a transport error, which callers treat as an empty
/// candidate set.
pub struct StubDirLlm {
    pub dir: PathBuf,
}

impl LlmClient for StubDirLlm {
    fn complete(&self, system: &str, user: &str, n: usize) -> Result<Vec<String>, TransportError> {
        let key = stub_key(system, user);
        let path = self.dir.join(format!("{key}.json"));
        let data = std::fs::read_to_string(&path).map_err(|e| {
            TransportError(format!(
                "no canned response at {} ({e}); create it with a JSON array of strings",
                path.display()
            ))
        })?;
        let mut responses: Vec<String> = serde_json::from_str(&data)
            .map_err(|e| TransportError(format!("bad canned response file {key}.json: {e}")))?;
        responses.truncate(n);
        Ok(responses)
    }
}

/// In-memory stub returning fixed responses; `n` requests cycle through
/// the list.
pub struct StaticLlm {
    responses: Vec<String>,
}

impl StaticLlm {
    pub fn new(responses: Vec<String>) -> Self {
        StaticLlm { responses }
    }
}

impl LlmClient for StaticLlm {
    fn complete(
        &self,
        _system: &str,
        _user: &str,
        n: usize,
    ) -> Result<Vec<String>, TransportError> {
        if self.responses.is_empty() {
            return Err(TransportError("static stub has no responses".to_string()));
        }
        Ok((0..n)
            .map(|i| self.responses[i % self.responses.len()].clone())
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Minimal one-shot HTTP server for exercising the client.
    fn serve_responses(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<()>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut content_length = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if let Some(v) = line
                        .to_ascii_lowercase()
                        .strip_prefix("content-length:")
                        .map(|v| v.trim().parse::<usize>().unwrap_or(0))
                    {
                        content_length = v;
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body_buf = vec![0u8; content_length];
                reader.read_exact(&mut body_buf).unwrap();
                let reason = if status == 200 { "OK" } else { "Server Error" };
                let response = format!(
                    "HTTP/1.1 {status} {reason}\r\ncontent-length: {}\r\ncontent-type: application/json\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                stream.write_all(response.as_bytes()).unwrap();
            }
        });
        (format!("http://{addr}"), handle)
    }

    fn chat_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}]
        })
        .to_string()
    }

    fn config(base_url: &str) -> LlmEndpointConfig {
        LlmEndpointConfig {
            base_url: base_url.to_string(),
            model: "test-model".to_string(),
            temperature: 0.7,
            top_p: 0.8,
            max_tokens: 256,
            api_key_env: "INVKIT_TEST_KEY_UNSET".to_string(),
            max_retries: 2,
            retry_backoff_ms: 1,
            request_timeout_secs: 5,
        }
    }

    #[test]
    fn http_client_extracts_completion_content() {
        let (url, server) = serve_responses(vec![(200, chat_body("{\"ok\":1}"))]);
        let client = HttpLlm::new(config(&url)).unwrap();
        let out = client.complete("sys", "user", 1).unwrap();
        assert_eq!(out, vec!["{\"ok\":1}".to_string()]);
        server.join().unwrap();
    }

    #[test]
    fn http_client_retries_transient_failures() {
        let (url, server) =
            serve_responses(vec![(500, "{}".to_string()), (200, chat_body("recovered"))]);
        let client = HttpLlm::new(config(&url)).unwrap();
        let out = client.complete("sys", "user", 1).unwrap();
        assert_eq!(out, vec!["recovered".to_string()]);
        server.join().unwrap();
    }

    #[test]
    fn http_client_gives_up_after_retries() {
        let (url, server) = serve_responses(vec![
            (500, "{}".to_string()),
            (500, "{}".to_string()),
            (500, "{}".to_string()),
        ]);
        let client = HttpLlm::new(config(&url)).unwrap();
        let err = client.complete("sys", "user", 1).unwrap_err();
        assert!(err.0.contains("500"), "{err}");
        server.join().unwrap();
    }

    #[test]
    fn stub_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let key = stub_key("sys", "user");
        std::fs::write(
            dir.path().join(format!("{key}.json")),
            serde_json::to_string(&vec!["a", "b", "c"]).unwrap(),
        )
        .unwrap();
        let stub = StubDirLlm {
            dir: dir.path().to_path_buf(),
        };
        assert_eq!(stub.complete("sys", "user", 2).unwrap(), vec!["a", "b"]);
        assert!(stub.complete("sys", "other", 2).is_err());
    }

    #[test]
    fn static_stub_cycles() {
        let stub = StaticLlm::new(vec!["x".into(), "y".into()]);
        assert_eq!(stub.complete("s", "u", 3).unwrap(), vec!["x", "y", "x"]);
    }
}
