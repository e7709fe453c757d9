use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use iccd_core::backend::{RemoteBackend, RemoteConfig, RequestMeta, ScoreMode, ScoringBackend, ScoringRequest};
use iccd_core::error::BackendError;
use iccd_core::{DemonstrationSet, LabelId, LabeledExample};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    auth: Option<String>,
    body: Value,
}

type Handler = dyn Fn(&Value) -> (u16, Value) + Send + Sync;

/// Minimal HTTP/1.1 server answering each POST with `handler(body)`.
fn serve(handler: Arc<Handler>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let handler = Arc::clone(&handler);
            let log = Arc::clone(&log);
            std::thread::spawn(move || handle(stream, &*handler, &log));
        }
    });
    (format!("http://{addr}/v1"), seen)
}

fn handle(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Seen>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_string();
    let (mut len, mut auth) = (0, None);
    loop {
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let line = line.trim_end();
        if line.is_empty() {
            break;
        }
        let (k, v) = line.split_once(':').unwrap();
        match k.to_ascii_lowercase().as_str() {
            "content-length" => len = v.trim().parse().unwrap(),
            "authorization" => auth = Some(v.trim().to_string()),
            _ => {}
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body).unwrap();
    let body: Value = serde_json::from_slice(&body).unwrap();
    let (status, reply) = handler(&body);
    log.lock().unwrap().push(Seen { path, auth, body });
    let reply = reply.to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )
    .unwrap();
}

/// Echo response with one token per character; `logprob(prompt, i)` gives
/// the value of character `i`.
fn echo(text: &str, logprob: impl Fn(usize) -> f64) -> Value {
    let chars: Vec<String> = text.chars().map(String::from).collect();
    let offsets: Vec<usize> = (0..chars.len()).collect();
    let lps: Vec<Value> = (0..chars.len())
        .map(|i| if i == 0 { Value::Null } else { json!(logprob(i)) })
        .collect();
    json!({ "choices": [{ "text": "", "logprobs": {
        "tokens": chars, "token_logprobs": lps, "text_offset": offsets
    }}]})
}

fn request(prompt: &str, candidates: &[&str]) -> ScoringRequest {
    let query = LabeledExample::new("q", LabelId(0));
    ScoringRequest {
        prompt: prompt.to_string(),
        candidates: candidates.iter().map(|c| c.to_string()).collect(),
        meta: RequestMeta::new(&DemonstrationSet::empty(), &query),
    }
}

fn config(url: &str) -> RemoteConfig {
    RemoteConfig {
        backoff_ms: 1,
        max_retries: 2,
        timeout_secs: 5.0,
        ..RemoteConfig::new(url, "stub-model")
    }
}

#[test]
fn sums_candidate_token_logprobs() {
    let (url, seen) = serve(Arc::new(|body: &Value| {
        let text = body["prompt"].as_str().unwrap().to_string();
        (200, echo(&text, |_| -1.0))
    }));
    std::env::set_var("ICCD_TEST_TOKEN_A", "secret-a");
    let cfg = RemoteConfig {
        api_key_env: "ICCD_TEST_TOKEN_A".into(),
        ..config(&url)
    };
    let backend = RemoteBackend::new(cfg.clone()).unwrap();
    let scores = backend.score(&request("Review: ok. Sentiment:", &[" yes", "no"])).unwrap();
    assert_eq!(scores.as_slice(), &[-4.0, -2.0]);

    let seen = seen.lock().unwrap().clone();
    assert_eq!(seen.len(), 2);
    for s in &seen {
        assert_eq!(s.path, "/v1/completions");
        assert_eq!(s.auth.as_deref(), Some("Bearer secret-a"));
        assert_eq!(s.body["model"], "stub-model");
        assert_eq!(s.body["echo"], true);
        assert_eq!(s.body["max_tokens"], 1);
        assert_eq!(s.body["logprobs"], 1);
    }
    let mut prompts: Vec<&str> = seen.iter().map(|s| s.body["prompt"].as_str().unwrap()).collect();
    prompts.sort();
    assert_eq!(prompts, ["Review: ok. Sentiment: yes", "Review: ok. Sentiment:no"]);

    let mean = RemoteBackend::new(RemoteConfig {
        score_mode: ScoreMode::MeanPerToken,
        ..cfg
    })
    .unwrap();
    assert_eq!(mean.score(&request("p", &["abc", "de"])).unwrap().as_slice(), &[-1.0, -1.0]);
}

#[test]
fn fixed_logprobs_sum_to_minus_three() {
    let (url, _) = serve(Arc::new(|body: &Value| {
        let text = body["prompt"].as_str().unwrap().to_string();
        let n = text.chars().count();
        // Only the last three characters carry probability mass.
        (200, echo(&text, move |i| if i + 3 >= n { -1.0 } else { -100.0 }))
    }));
    let backend = RemoteBackend::new(config(&url)).unwrap();
    let scores = backend.score(&request("Input: x Type:", &["abc", "xyz"])).unwrap();
    assert_eq!(scores.as_slice(), &[-3.0, -3.0]);
}

#[test]
fn scores_depend_on_prompt() {
    let (url, _) = serve(Arc::new(|body: &Value| {
        let text = body["prompt"].as_str().unwrap().to_string();
        let v = if text.contains("good") { -0.5 } else { -2.0 };
        (200, echo(&text, move |_| v))
    }));
    let backend = RemoteBackend::new(config(&url)).unwrap();
    let a = backend.score(&request("a good film ", &["x", "y"])).unwrap();
    let b = backend.score(&request("a bad film ", &["x", "y"])).unwrap();
    assert_eq!(a.as_slice(), &[-0.5, -0.5]);
    assert_eq!(b.as_slice(), &[-2.0, -2.0]);
}

#[test]
fn server_errors_retry_then_fail() {
    let (url, seen) = serve(Arc::new(|_: &Value| (500, json!({ "error": "boom" }))));
    let backend = RemoteBackend::new(config(&url)).unwrap();
    let err = backend.score(&request("p", &["a", "b"])).unwrap_err();
    assert!(matches!(err, BackendError::Transport { status: Some(500), .. }), "{err:?}");
    // One attempt plus two retries for each candidate.
    assert_eq!(seen.lock().unwrap().len(), 6);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen) = serve(Arc::new(|_: &Value| (400, json!({ "error": "bad" }))));
    let backend = RemoteBackend::new(config(&url)).unwrap();
    assert!(backend.score(&request("p", &["a", "b"])).is_err());
    assert_eq!(seen.lock().unwrap().len(), 2);
}

#[test]
fn missing_logprobs_is_a_protocol_error() {
    let (url, _) = serve(Arc::new(|_: &Value| (200, json!({ "choices": [{ "text": "" }] }))));
    let backend = RemoteBackend::new(config(&url)).unwrap();
    let err = backend.score(&request("p", &["a", "b"])).unwrap_err();
    assert!(matches!(err, BackendError::ProtocolMismatch(_)), "{err:?}");
}

#[test]
fn unreachable_server_fails() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = RemoteBackend::new(config(&format!("http://127.0.0.1:{port}/v1"))).unwrap();
    assert!(backend.score(&request("p", &["a", "b"])).is_err());
}
