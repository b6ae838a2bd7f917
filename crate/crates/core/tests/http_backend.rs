//! HttpBackend against a local canned-response server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};
use tagforge::llm::{BackendError, HttpBackend, HttpConfig, LlmBackend, PromptRequest, RetryPolicy, ScoringPath};
use tagforge::model::{Document, Stage, Taxonomy, TopicDescriptor};
use tagforge::{Engine, Error};

struct Captured {
    headers: Vec<String>,
    body: Value,
}

/// Serves `responses` in order, one per connection, and reports each
/// request it saw.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let _ = tx.send(Captured {
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let reason = if status == 200 { "OK" } else { "Error" };
            let mut out = stream;
            let extra = if status == 429 { "Retry-After: 0\r\n" } else { "" };
            write!(
                out,
                "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\n{extra}Content-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
            out.flush().unwrap();
        }
    });
    (format!("http://{addr}"), rx)
}

fn chat(content: &str) -> String {
    json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }).to_string()
}

/// (token, logprob, alternatives)
type Token<'a> = (&'a str, f64, &'a [(&'a str, f64)]);

fn chat_with_logprobs(tokens: &[Token]) -> String {
    let content: String = tokens.iter().map(|t| t.0).collect();
    let lp: Vec<Value> = tokens
        .iter()
        .map(|(t, p, alts)| {
            json!({
                "token": t,
                "logprob": p,
                "top_logprobs": alts.iter().map(|(a, q)| json!({"token": a, "logprob": q})).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!({ "choices": [{ "message": { "content": content }, "logprobs": { "content": lp } }] }).to_string()
}

fn backend(base: &str, retry: RetryPolicy) -> HttpBackend {
    let mut config = HttpConfig::new(base, "test-model");
    config.api_key = Some("secret".into());
    config.retry = retry;
    config.timeout = Duration::from_secs(5);
    HttpBackend::new(config)
}

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_retries: 3,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(5),
    }
}

fn names(ns: &[&str]) -> Vec<String> {
    ns.iter().map(|s| s.to_string()).collect()
}

#[test]
fn completion_sends_expected_request() {
    let (base, seen) = serve(vec![(200, chat("hello"))]);
    let b = backend(&base, RetryPolicy::none());
    let req = PromptRequest::new("user text").with_system("system text");
    assert_eq!(b.complete(&req).unwrap(), "hello");

    let got = seen.recv().unwrap();
    assert!(got.headers[0].starts_with("POST /v1/chat/completions"));
    assert!(got.headers.iter().any(|h| h == "authorization: Bearer secret" || h == "Authorization: Bearer secret"));
    assert_eq!(got.body["model"], "test-model");
    assert_eq!(got.body["temperature"], 0.0);
    assert_eq!(got.body["messages"][0]["role"], "system");
    assert_eq!(got.body["messages"][1]["content"], "user text");
    assert!(got.body.get("logprobs").is_none());
}

#[test]
fn logprob_scoring_prefers_generated_label() {
    let reply = chat_with_logprobs(&[("Sports", -0.1, &[("Business", -2.5)])]);
    let (base, seen) = serve(vec![(200, reply)]);
    let b = backend(&base, RetryPolicy::none());
    let scores = b
        .score_labels(&PromptRequest::new("classify"), &names(&["Business", "Sports"]))
        .unwrap();
    assert_eq!(scores.path, ScoringPath::LogProb);
    assert!(scores.get("Sports").unwrap() > scores.get("Business").unwrap());
    assert_eq!(seen.recv().unwrap().body["logprobs"], true);
}

#[test]
fn rejected_logprobs_fall_back_to_completion() {
    let rejection = json!({"error": {"message": "logprobs not supported"}}).to_string();
    let (base, seen) = serve(vec![(400, rejection), (200, chat("Business")), (200, chat("Sports."))]);
    let b = backend(&base, RetryPolicy::none());
    let cands = names(&["Sports", "Business"]);

    let first = b.score_labels(&PromptRequest::new("x"), &cands).unwrap();
    assert_eq!(first.path, ScoringPath::FallbackCompletion);
    assert_eq!(first.get("Business"), Some(0.0));
    assert!(first.get("Sports").unwrap() < -1e8);

    // later calls skip the logprob attempt
    let second = b.score_labels(&PromptRequest::new("y"), &cands).unwrap();
    assert_eq!(second.get("Sports"), Some(0.0));
    let bodies: Vec<Value> = seen.try_iter().map(|c| c.body).collect();
    assert_eq!(bodies.len(), 3);
    assert_eq!(bodies[0]["logprobs"], true);
    assert!(bodies[1].get("logprobs").is_none());
    assert!(bodies[2].get("logprobs").is_none());
    assert!(!b.capabilities().supports_label_scoring);
}

#[test]
fn rate_limits_and_server_errors_are_retried() {
    let (base, _seen) = serve(vec![
        (429, "{}".into()),
        (503, "{}".into()),
        (200, chat("done")),
    ]);
    let b = backend(&base, fast_retry());
    assert_eq!(b.complete(&PromptRequest::new("x")).unwrap(), "done");
}

#[test]
fn client_errors_are_not_retried() {
    let body = json!({"error": {"message": "bad key"}}).to_string();
    let (base, seen) = serve(vec![(401, body), (200, chat("never"))]);
    let b = backend(&base, fast_retry());
    let err = b.complete(&PromptRequest::new("x")).unwrap_err();
    assert!(matches!(err, BackendError::BackendRejected { status: 401, ref message } if message == "bad key"));
    assert_eq!(seen.try_iter().count(), 1);
}

#[test]
fn persistent_failure_gives_up() {
    let (base, _seen) = serve(vec![(500, "{}".into()), (500, "{}".into())]);
    let b = backend(
        &base,
        RetryPolicy {
            max_retries: 1,
            ..fast_retry()
        },
    );
    assert!(matches!(b.complete(&PromptRequest::new("x")), Err(BackendError::TransportFailure(_))));
}

#[test]
fn unreachable_server_is_transport_failure() {
    let b = backend("http://127.0.0.1:9", RetryPolicy::none());
    assert!(matches!(b.complete(&PromptRequest::new("x")), Err(BackendError::TransportFailure(_))));
}

#[test]
fn unnamed_fallback_reply_fails_classification() {
    let mut config = HttpConfig::new("unused", "m");
    config.use_logprobs = false;
    let (base, _seen) = serve(vec![(200, chat("I am not sure."))]);
    config.base_url = base;
    config.retry = RetryPolicy::none();
    let engine = Engine::new(Arc::new(HttpBackend::new(config)));
    let mut t = Taxonomy::new();
    for n in ["Sports", "Business"] {
        t.upsert(TopicDescriptor::new(n, "d").unwrap(), Stage::Bootstrap, 0);
    }
    let err = engine.classify(&Document::new("doc-1", "text"), &t).unwrap_err();
    assert!(matches!(err, Error::ClassificationFailed { ref id, .. } if id == "doc-1"));
}
