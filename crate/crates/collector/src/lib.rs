//! Collects style-variant responses from a chat-completion endpoint.
//!
//! Prompts are sent by a bounded pool of workers. Each finished response is
//! appended to the output file immediately, so an interrupted run can be
//! resumed by skipping the (problem_id, style) keys already on disk.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

use rcscore::corpus::{load_records, CorpusError, DecodingConfig, PromptRecord, ResponseRecord, StyleId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EndpointConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub backoff_base_s: f64,
    pub dry_run: bool,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            base_url: String::new(),
            model: String::new(),
            api_key_env: "RCS_API_KEY".into(),
            timeout_s: 120.0,
            max_retries: 3,
            backoff_base_s: 1.0,
            dry_run: false,
        }
    }
}

impl EndpointConfig {
    pub fn validate(&self) -> Result<(), CollectError> {
        let bad = |m: &str| Err(CollectError::Config(m.to_owned()));
        if !self.dry_run && self.base_url.trim().is_empty() {
            return bad("base_url is required unless dry_run is set");
        }
        if self.model.trim().is_empty() {
            return bad("model name is required");
        }
        if !(self.timeout_s > 0.0) {
            return bad("timeout_s must be positive");
        }
        if !(self.backoff_base_s >= 0.0) {
            return bad("backoff_base_s must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CollectError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("cannot build HTTP client: {0}")]
    Client(reqwest::Error),
}

/// A failed completion attempt.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BackendError(pub String);

pub trait ChatBackend: Sync {
    fn complete(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, BackendError>;
}

/// Returns the prompt itself; needs no network.
#[derive(Debug, Clone, Copy, Default)]
pub struct DryRunBackend;

impl ChatBackend for DryRunBackend {
    fn complete(&self, prompt: &str, _: &DecodingConfig) -> Result<String, BackendError> {
        Ok(prompt.to_owned())
    }
}

#[derive(Debug, Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
pub struct ChatRequest<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
    temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_k: Option<u32>,
    max_tokens: u32,
}

impl<'a> ChatRequest<'a> {
    pub fn new(model: &'a str, prompt: &'a str, decoding: &DecodingConfig) -> Self {
        ChatRequest {
            model,
            messages: [Message {
                role: "user",
                content: prompt,
            }],
            temperature: decoding.temperature,
            top_p: decoding.top_p,
            top_k: decoding.top_k,
            max_tokens: decoding.max_new_tokens,
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

/// POSTs to `{base_url}/chat/completions` with a bearer token.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    api_key: String,
}

impl HttpBackend {
    pub fn new(endpoint: &EndpointConfig) -> Result<Self, CollectError> {
        let api_key = std::env::var(&endpoint.api_key_env)
            .map_err(|_| CollectError::MissingApiKey(endpoint.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(endpoint.timeout_s))
            .build()
            .map_err(CollectError::Client)?;
        Ok(HttpBackend {
            client,
            url: format!("{}/chat/completions", endpoint.base_url.trim_end_matches('/')),
            model: endpoint.model.clone(),
            api_key,
        })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(&self, prompt: &str, decoding: &DecodingConfig) -> Result<String, BackendError> {
        let response = self
            .client
            .post(&self.url)
            .bearer_auth(&self.api_key)
            .json(&ChatRequest::new(&self.model, prompt, decoding))
            .send()
            .map_err(|e| BackendError(format!("request failed: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            let body = response.text().unwrap_or_default();
            let snippet: String = body.chars().take(200).collect();
            return Err(BackendError(format!("HTTP {status}: {snippet}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| BackendError(format!("unreadable response body: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError("response has no choices[0].message.content".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollectOptions {
    pub concurrency: usize,
    pub resume: bool,
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl Default for CollectOptions {
    fn default() -> Self {
        CollectOptions {
            concurrency: 4,
            resume: false,
            max_retries: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CollectSummary {
    pub requested: usize,
    pub skipped: usize,
    pub failed: usize,
}

fn now_rfc3339() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CollectError + '_ {
    move |source| CollectError::Io {
        path: path.to_owned(),
        source,
    }
}

fn complete_with_retries<B: ChatBackend>(
    backend: &B,
    prompt: &str,
    decoding: &DecodingConfig,
    options: &CollectOptions,
) -> Result<String, BackendError> {
    let mut attempt = 0;
    loop {
        match backend.complete(prompt, decoding) {
            Ok(text) => return Ok(text),
            Err(e) if attempt >= options.max_retries => return Err(e),
            Err(e) => {
                let wait = options.backoff_base.mul_f64(2f64.powi(attempt as i32));
                log::warn!("attempt {} failed ({e}); retrying in {wait:?}", attempt + 1);
                std::thread::sleep(wait);
                attempt += 1;
            }
        }
    }
}

/// Sends every pending prompt through `backend` and appends the responses to `out_path`.
pub fn collect_with<B: ChatBackend>(
    backend: &B,
    prompts: &[PromptRecord],
    model: &str,
    decoding: &DecodingConfig,
    out_path: &Path,
    options: &CollectOptions,
) -> Result<CollectSummary, CollectError> {
    if options.concurrency == 0 {
        return Err(CollectError::Config("concurrency must be positive".into()));
    }
    decoding.validate().map_err(CollectError::Config)?;

    let done: HashSet<(String, StyleId)> = if options.resume && out_path.exists() {
        load_records::<ResponseRecord>(out_path)?
            .into_iter()
            .map(|r| (r.problem_id, r.style))
            .collect()
    } else {
        HashSet::new()
    };
    let pending: Vec<&PromptRecord> = prompts
        .iter()
        .filter(|p| !done.contains(&(p.problem_id.clone(), p.style)))
        .collect();

    if let Some(dir) = out_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let file: File = OpenOptions::new()
        .create(true)
        .write(true)
        .append(options.resume)
        .truncate(!options.resume)
        .open(out_path)
        .map_err(io_err(out_path))?;
    let log = Mutex::new(BufWriter::new(file));
    let next = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    let write_error: Mutex<Option<std::io::Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..options.concurrency.min(pending.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(prompt) = pending.get(i) else { break };
                let (text, error) = match complete_with_retries(backend, &prompt.prompt, decoding, options) {
                    Ok(text) => (text, None),
                    Err(e) => {
                        log::error!("{} {}: giving up: {e}", prompt.problem_id, prompt.style);
                        failed.fetch_add(1, Ordering::SeqCst);
                        (String::new(), Some(e.0))
                    }
                };
                let record = ResponseRecord {
                    problem_id: prompt.problem_id.clone(),
                    style: prompt.style,
                    model: model.to_owned(),
                    decoding: decoding.clone(),
                    text,
                    created_at: now_rfc3339(),
                    error,
                };
                let line = serde_json::to_string(&record).expect("response records serialize");
                let mut w = log.lock().unwrap();
                if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                    write_error.lock().unwrap().get_or_insert(e);
                    next.store(pending.len(), Ordering::SeqCst);
                    break;
                }
            });
        }
    });

    if let Some(e) = write_error.into_inner().unwrap() {
        return Err(io_err(out_path)(e));
    }
    Ok(CollectSummary {
        requested: pending.len(),
        skipped: prompts.len() - pending.len(),
        failed: failed.into_inner(),
    })
}

/// Collect with the backend the endpoint configuration describes.
pub fn collect(
    prompts: &[PromptRecord],
    endpoint: &EndpointConfig,
    decoding: &DecodingConfig,
    out_path: &Path,
    concurrency: usize,
    resume: bool,
) -> Result<CollectSummary, CollectError> {
    endpoint.validate()?;
    let options = CollectOptions {
        concurrency,
        resume,
        max_retries: endpoint.max_retries,
        backoff_base: Duration::from_secs_f64(endpoint.backoff_base_s),
    };
    if endpoint.dry_run {
        collect_with(&DryRunBackend, prompts, &endpoint.model, decoding, out_path, &options)
    } else {
        let backend = HttpBackend::new(endpoint)?;
        collect_with(&backend, prompts, &endpoint.model, decoding, out_path, &options)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_body_shape() {
        let beam = serde_json::to_value(ChatRequest::new("m", "hi", &DecodingConfig::beam())).unwrap();
        assert_eq!(
            beam,
            serde_json::json!({
                "model": "m",
                "messages": [{"role": "user", "content": "hi"}],
                "temperature": 1.0,
                "top_p": 0.9,
                "top_k": 50,
                "max_tokens": 2048
            })
        );
        let greedy = serde_json::to_value(ChatRequest::new("m", "hi", &DecodingConfig::greedy())).unwrap();
        let obj = greedy.as_object().unwrap();
        assert_eq!(obj["temperature"], 0.0);
        assert!(!obj.contains_key("top_k") && !obj.contains_key("top_p"));
    }

    #[test]
    fn endpoint_validation() {
        let mut e = EndpointConfig {
            model: "m".into(),
            ..Default::default()
        };
        assert!(e.validate().is_err());
        e.dry_run = true;
        assert!(e.validate().is_ok());
        e.timeout_s = 0.0;
        assert!(e.validate().is_err());
        assert_eq!(EndpointConfig::default().api_key_env, "RCS_API_KEY");
    }

    #[test]
    fn missing_key_is_a_configuration_error() {
        let e = EndpointConfig {
            base_url: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key_env: "RCS_TEST_KEY_THAT_IS_NOT_SET".into(),
            ..Default::default()
        };
        assert!(matches!(HttpBackend::new(&e), Err(CollectError::MissingApiKey(_))));
    }

    struct Flaky(AtomicUsize, usize);

    impl ChatBackend for Flaky {
        fn complete(&self, _: &str, _: &DecodingConfig) -> Result<String, BackendError> {
            if self.0.fetch_add(1, Ordering::SeqCst) < self.1 {
                Err(BackendError("transient".into()))
            } else {
                Ok("ok".into())
            }
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let options = CollectOptions {
            max_retries: 3,
            backoff_base: Duration::ZERO,
            ..Default::default()
        };
        let b = Flaky(AtomicUsize::new(0), 2);
        assert_eq!(complete_with_retries(&b, "p", &DecodingConfig::greedy(), &options).unwrap(), "ok");
        assert_eq!(b.0.load(Ordering::SeqCst), 3);
        let b = Flaky(AtomicUsize::new(0), 10);
        assert!(complete_with_retries(&b, "p", &DecodingConfig::greedy(), &options).is_err());
        assert_eq!(b.0.load(Ordering::SeqCst), 4);
    }
}
