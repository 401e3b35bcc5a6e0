use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rcscore::corpus::{load_records, DecodingConfig, PromptRecord, ResponseRecord, StyleId};
use rcscore_collector::{
    collect, collect_with, BackendError, ChatBackend, CollectOptions, DryRunBackend, EndpointConfig,
};

fn prompts(n: usize) -> Vec<PromptRecord> {
    (0..n)
        .map(|i| PromptRecord {
            problem_id: format!("p{}", i / 4),
            style: StyleId::ALL[i % 4],
            prompt: format!("prompt number {i}\nwith a second line"),
        })
        .collect()
}

fn options(concurrency: usize, resume: bool) -> CollectOptions {
    CollectOptions {
        concurrency,
        resume,
        max_retries: 2,
        backoff_base: Duration::ZERO,
    }
}

fn dry_endpoint() -> EndpointConfig {
    EndpointConfig {
        model: "toy".into(),
        dry_run: true,
        ..Default::default()
    }
}

#[test]
fn dry_run_echoes_prompts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nested/responses.jsonl");
    let ps = prompts(2);
    let summary = collect(&ps, &dry_endpoint(), &DecodingConfig::greedy(), &out, 2, false).unwrap();
    assert_eq!((summary.requested, summary.failed), (2, 0));
    let mut got: Vec<ResponseRecord> = load_records(&out).unwrap();
    got.sort_by_key(|r| r.style);
    assert_eq!(got.len(), 2);
    for r in &got {
        let p = ps.iter().find(|p| p.style == r.style).unwrap();
        assert_eq!(r.text, p.prompt);
        assert_eq!(r.model, "toy");
        assert!(r.error.is_none());
        assert!(r.created_at.ends_with('Z'));
    }
}

struct Counting {
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    delay: Duration,
}

impl Counting {
    fn new(delay: Duration) -> Self {
        Counting {
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            delay,
        }
    }
}

impl ChatBackend for Counting {
    fn complete(&self, prompt: &str, _: &DecodingConfig) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.delay);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(prompt.to_uppercase())
    }
}

#[test]
fn in_flight_requests_are_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let backend = Counting::new(Duration::from_millis(15));
    let ps = prompts(16);
    collect_with(&backend, &ps, "m", &DecodingConfig::beam(), &out, &options(3, false)).unwrap();
    let max = backend.max_in_flight.load(Ordering::SeqCst);
    assert!((2..=3).contains(&max), "max in flight {max}");
    assert_eq!(load_records::<ResponseRecord>(&out).unwrap().len(), 16);
}

#[test]
fn resume_skips_existing_keys_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let ps = prompts(2);
    let first = Counting::new(Duration::ZERO);
    collect_with(&first, &ps[..1], "m", &DecodingConfig::greedy(), &out, &options(1, false)).unwrap();

    let second = Counting::new(Duration::ZERO);
    let summary = collect_with(&second, &ps, "m", &DecodingConfig::greedy(), &out, &options(2, true)).unwrap();
    assert_eq!(second.calls.load(Ordering::SeqCst), 1);
    assert_eq!((summary.requested, summary.skipped), (1, 1));

    let strip = |mut v: Vec<ResponseRecord>| {
        v.iter_mut().for_each(|r| r.created_at.clear());
        v.sort_by_key(|r| r.style);
        v
    };
    let once = strip(load_records(&out).unwrap());
    let third = Counting::new(Duration::ZERO);
    collect_with(&third, &ps, "m", &DecodingConfig::greedy(), &out, &options(2, true)).unwrap();
    assert_eq!(third.calls.load(Ordering::SeqCst), 0);
    assert_eq!(strip(load_records(&out).unwrap()), once);
    assert_eq!(once.len(), 2);
}

struct AlwaysFails(AtomicUsize);

impl ChatBackend for AlwaysFails {
    fn complete(&self, _: &str, _: &DecodingConfig) -> Result<String, BackendError> {
        self.0.fetch_add(1, Ordering::SeqCst);
        Err(BackendError("service unavailable".into()))
    }
}

#[test]
fn exhausted_retries_record_an_empty_response() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let backend = AlwaysFails(AtomicUsize::new(0));
    let summary = collect_with(&backend, &prompts(1), "m", &DecodingConfig::greedy(), &out, &options(1, false)).unwrap();
    assert_eq!(summary.failed, 1);
    assert_eq!(backend.0.load(Ordering::SeqCst), 3);
    let got: Vec<ResponseRecord> = load_records(&out).unwrap();
    assert_eq!(got[0].text, "");
    assert_eq!(got[0].error.as_deref(), Some("service unavailable"));
}

#[test]
fn zero_concurrency_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let err = collect_with(&DryRunBackend, &prompts(1), "m", &DecodingConfig::greedy(), &out, &options(0, false));
    assert!(err.is_err());
}

/// Serves `replies` in order, one connection each, recording every request.
fn serve(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<(String, String)>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let seen = Mutex::new(Vec::new());
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut req_body = vec![0u8; length];
            reader.read_exact(&mut req_body).unwrap();
            seen.lock().unwrap().push((head, String::from_utf8(req_body).unwrap()));
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen.into_inner().unwrap()
    });
    (addr, handle)
}

#[test]
fn http_wire_format_and_retry_on_server_error() {
    let ok = r#"{"choices":[{"message":{"role":"assistant","content":"Answer: 4"}}]}"#.to_owned();
    let (addr, server) = serve(vec![(500, "{}".into()), (200, ok)]);
    std::env::set_var("RCS_COLLECTOR_TEST_KEY", "sekrit");
    let endpoint = EndpointConfig {
        base_url: format!("{addr}/v1/"),
        model: "served-model".into(),
        api_key_env: "RCS_COLLECTOR_TEST_KEY".into(),
        timeout_s: 10.0,
        max_retries: 1,
        backoff_base_s: 0.0,
        dry_run: false,
    };
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let ps = prompts(1);
    let summary = collect(&ps, &endpoint, &DecodingConfig::beam(), &out, 1, false).unwrap();
    assert_eq!(summary.failed, 0);

    let requests = server.join().unwrap();
    assert_eq!(requests.len(), 2);
    let (head, body) = &requests[1];
    assert!(head.starts_with("POST /v1/chat/completions HTTP/1.1"), "{head}");
    assert!(head.to_ascii_lowercase().contains("authorization: bearer sekrit"));
    let body: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(
        body,
        serde_json::json!({
            "model": "served-model",
            "messages": [{"role": "user", "content": ps[0].prompt}],
            "temperature": 1.0,
            "top_p": 0.9,
            "top_k": 50,
            "max_tokens": 2048
        })
    );
    let got: Vec<ResponseRecord> = load_records(&out).unwrap();
    assert_eq!(got[0].text, "Answer: 4");
    assert_eq!(got[0].decoding, DecodingConfig::beam());
}
