use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use sha2::{Digest, Sha256};
use valuelens::corpus::{FeedSource, Post};
use valuelens::llm::{
    annotate_batch, serialize_values, BackendConfig, BackendError, BackendKind, BatchError,
    BatchPolicy, ChatBackend, Template,
};
use valuelens::{LikertRating, ValueId, ValueVector};

fn sha(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[test]
fn templates_match_pinned_checksums() {
    let want = [
        (
            Template::Comprehensibility,
            "637d9e8fca769fa1750bef6db7ce2b6ae3c7495d9633606bdc320b31d2987bfb",
        ),
        (
            Template::Nsfw,
            "61564d073bc45ea3b2fae89f90b74d8cb4e770033f06eabe3c6cdd286cb1a1a0",
        ),
        (
            Template::Values,
            "036f361d8c51f21ba535fdf44b4318d5cbee2833177fa929ddb780f309293230",
        ),
    ];
    for (t, digest) in want {
        assert_eq!(sha(t.source()), digest, "{t}");
    }
}

/// Minimal HTTP/1.1 server answering each connection from `script` in turn,
/// repeating the last entry once exhausted.
fn stub_server(script: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { break };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                let lower = line.to_ascii_lowercase();
                if let Some(v) = lower.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0u8; len];
            let _ = reader.read_exact(&mut body);
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let (status, payload) = &script[n.min(script.len() - 1)];
            let reply = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{payload}",
                payload.len()
            );
            let _ = stream.write_all(reply.as_bytes());
        }
    });
    (format!("http://{addr}/v1/chat"), hits)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
        .to_string()
}

fn remote(endpoint: String, env: &str) -> BackendConfig {
    BackendConfig {
        kind: BackendKind::Remote,
        endpoint: Some(endpoint),
        model: "stub".into(),
        credential_env: Some(env.into()),
        max_attempts: 3,
        timeout_secs: 5,
        max_concurrency: 1,
        backoff_ms: 0,
        ..Default::default()
    }
}

fn post() -> Post {
    Post::new(
        "p1",
        "We should respect our elders.",
        None,
        FeedSource::Fyp,
        "u",
    )
    .unwrap()
}

#[test]
fn remote_backend_retries_transient_failures() {
    let mut v = ValueVector::zeros();
    v.set(ValueId::Tradition, LikertRating::new(5).unwrap());
    let good = completion(&serialize_values(&v));
    let (url, hits) = stub_server(vec![
        (503, "{\"error\":\"overloaded\"}".into()),
        (200, completion("not json at all")),
        (200, good),
    ]);
    std::env::set_var("VALUELENS_TEST_KEY_A", "secret");
    let cfg = remote(url, "VALUELENS_TEST_KEY_A");
    let backend = cfg.build().unwrap();
    let out = annotate_batch(
        &[post()],
        Template::Values,
        backend.as_ref(),
        &BatchPolicy::from(&cfg),
    )
    .unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(out.retries.get("p1"), Some(&2));
    assert_eq!(out.results["p1"].values(), Some(&v));
    assert!(out.quarantine.is_empty());
}

#[test]
fn remote_backend_quarantines_after_budget() {
    let (url, hits) = stub_server(vec![(500, "boom".into())]);
    std::env::set_var("VALUELENS_TEST_KEY_B", "secret");
    let cfg = remote(url, "VALUELENS_TEST_KEY_B");
    let backend = cfg.build().unwrap();
    let out = annotate_batch(
        &[post()],
        Template::Values,
        backend.as_ref(),
        &BatchPolicy::from(&cfg),
    )
    .unwrap();
    assert_eq!(hits.load(Ordering::SeqCst), 3);
    assert_eq!(out.quarantine.len(), 1);
    assert_eq!(out.quarantine[0].attempts, 3);
}

#[test]
fn remote_backend_auth_failure_aborts() {
    let (url, hits) = stub_server(vec![(401, "{}".into())]);
    std::env::set_var("VALUELENS_TEST_KEY_C", "wrong");
    let cfg = remote(url, "VALUELENS_TEST_KEY_C");
    let backend = cfg.build().unwrap();
    let err = annotate_batch(
        &[post()],
        Template::Values,
        backend.as_ref(),
        &BatchPolicy::from(&cfg),
    )
    .unwrap_err();
    assert!(matches!(err, BatchError::Auth(_)));
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

#[test]
fn missing_credential_is_an_auth_error() {
    let cfg = remote("http://127.0.0.1:9/".into(), "VALUELENS_TEST_KEY_UNSET");
    assert!(matches!(cfg.build().err(), Some(BackendError::Auth(_))));
}

#[test]
fn request_body_carries_decoding_parameters() {
    // The stub echoes nothing, so check the request through a recording backend.
    struct Recorder(std::sync::Mutex<Vec<(f64, i64)>>);
    impl ChatBackend for Recorder {
        fn complete(&self, r: &valuelens::llm::ChatRequest) -> Result<String, BackendError> {
            self.0.lock().unwrap().push((r.temperature, r.seed));
            Ok(serialize_values(&ValueVector::zeros()))
        }
        fn describe(&self) -> String {
            "recorder".into()
        }
    }
    let rec = Recorder(Default::default());
    annotate_batch(&[post()], Template::Values, &rec, &BatchPolicy::default()).unwrap();
    assert_eq!(*rec.0.lock().unwrap(), vec![(1.0, 0)]);
}
