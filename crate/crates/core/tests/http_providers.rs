#![cfg(feature = "remote")]
//! The HTTP chat and embedding providers against a scripted local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use htmodel::corpus::Role;
use htmodel::labeling::{request_labels, ChatProvider, LabelProvider, LabelRequest, RequestOptions};
use htmodel::merging::{embed_labels, RemoteEmbedder};
use htmodel::provider::{ProviderConfig, ResponseCache, RetryPolicy};
use htmodel::Error;

struct Captured {
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves one canned `(status, body)` per connection, recording requests.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&log);
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            let mut auth = None;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                if let Some((k, v)) = line.split_once(':') {
                    match k.to_ascii_lowercase().as_str() {
                        "content-length" => len = v.trim().parse().unwrap(),
                        "authorization" => auth = Some(v.trim().to_string()),
                        _ => {}
                    }
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            sink.lock().unwrap().push(Captured {
                auth,
                body: serde_json::from_slice(&buf).unwrap_or(serde_json::Value::Null),
            });
            let mut stream = reader.into_inner();
            let reply = format!(
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
        }
    });
    (url, log)
}

fn config(url: &str, var: &str) -> ProviderConfig {
    std::env::set_var(var, "sk-test");
    ProviderConfig {
        endpoint_url: url.to_string(),
        model: "test-model".into(),
        api_key_env_var: var.into(),
        max_parallel: 1,
        timeout_s: 5,
        max_retries: 3,
    }
}

fn chat_reply(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

fn request() -> Vec<LabelRequest> {
    vec![LabelRequest::new(0, vec!["track".into(), "hand".into()], Role::User, 50).unwrap()]
}

#[test]
fn chat_request_shape_and_retry() {
    let (url, log) = serve(vec![(503, "{}".into()), (200, chat_reply("**Topic:** Hand Tracking"))]);
    let provider = ChatProvider::new(&config(&url, "HTMODEL_TEST_KEY_A")).unwrap();
    let opts = RequestOptions {
        max_parallel: 1,
        retry: RetryPolicy::no_delay(3),
    };
    let cache = ResponseCache::in_memory();
    let run = request_labels(&provider, &request(), &cache, &opts).unwrap();
    assert_eq!(run.labels[0].label, "Hand Tracking");
    assert_eq!(run.provider_calls, 2);

    let log = log.lock().unwrap();
    assert_eq!(log.len(), 2);
    let req = &log[1];
    assert_eq!(req.auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(req.body["model"], "test-model");
    assert_eq!(req.body["temperature"], 0);
    let msgs = req.body["messages"].as_array().unwrap();
    assert_eq!(msgs.len(), 1);
    assert_eq!(msgs[0]["role"], "user");
    assert!(msgs[0]["content"].as_str().unwrap().contains("keywords: track, hand."));
    drop(log);

    // cached: no further traffic (the server has no script left)
    let again = request_labels(&provider, &request(), &cache, &opts).unwrap();
    assert_eq!(again.provider_calls, 0);
    assert_eq!(again.labels, run.labels);
}

#[test]
fn unauthorized_is_fatal() {
    let (url, log) = serve(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let provider = ChatProvider::new(&config(&url, "HTMODEL_TEST_KEY_B")).unwrap();
    let opts = RequestOptions {
        max_parallel: 1,
        retry: RetryPolicy::no_delay(3),
    };
    let out = request_labels(&provider, &request(), &ResponseCache::in_memory(), &opts);
    assert!(matches!(out, Err(Error::ProviderConfig(_))));
    assert_eq!(log.lock().unwrap().len(), 1);
}

#[test]
fn missing_key_fails_before_any_call() {
    let cfg = ProviderConfig {
        endpoint_url: "http://127.0.0.1:9/v1".into(),
        model: "m".into(),
        api_key_env_var: "HTMODEL_TEST_KEY_NEVER_SET".into(),
        ..Default::default()
    };
    assert!(matches!(ChatProvider::new(&cfg), Err(Error::ProviderConfig(_))));
}

#[test]
fn persistent_garbage_becomes_failure() {
    let (url, _log) = serve(vec![(200, chat_reply("I cannot help")), (200, chat_reply("still no"))]);
    let provider = ChatProvider::new(&config(&url, "HTMODEL_TEST_KEY_C")).unwrap();
    assert_eq!(provider.model(), "test-model");
    let opts = RequestOptions {
        max_parallel: 1,
        retry: RetryPolicy::no_delay(2),
    };
    let run = request_labels(&provider, &request(), &ResponseCache::in_memory(), &opts).unwrap();
    assert!(run.labels.is_empty());
    assert_eq!(run.failures.len(), 1);
}

#[test]
fn embedding_dimension_is_enforced() {
    let reply = serde_json::json!({"data": [{"embedding": [0.1, 0.2, 0.3]}]}).to_string();
    let (url, _log) = serve(vec![(200, reply.clone()), (200, reply)]);
    let cfg = config(&url, "HTMODEL_TEST_KEY_D");
    let labels = vec![htmodel::labeling::TopicLabel {
        topic_id: 0,
        label: "Hand Tracking".into(),
        provider_id: "x".into(),
        prompt_hash: String::new(),
        raw_response: String::new(),
    }];
    let good = RemoteEmbedder::new(&cfg, Some(3)).unwrap();
    let e = embed_labels(&good, &labels, &ResponseCache::in_memory(), &RetryPolicy::no_delay(1)).unwrap();
    assert!((e[0].vector.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    let bad = RemoteEmbedder::new(&cfg, Some(384)).unwrap();
    let out = embed_labels(&bad, &labels, &ResponseCache::in_memory(), &RetryPolicy::no_delay(1));
    assert!(matches!(out, Err(Error::DimensionMismatch { expected: 384, found: 3 })));
}
