//! Client behaviour against the in-process fake endpoint.

use std::sync::Arc;
use std::time::Duration;

use absa_core::client::{
    ClientConfig, ClientError, CompletionClient, CompletionRequest, Endpoint, HttpTransport, Mode, RetryPolicy,
    Transport,
};
use absa_core::prompt::{ChatMessage, Role};
use absa_testkit::{FakeChatServer, FakeReply};

fn request(text: &str) -> CompletionRequest {
    CompletionRequest::new("fake-model", vec![ChatMessage { role: Role::User, content: text.into() }])
}

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy { max_attempts, base_delay: Duration::from_millis(2), max_delay: Duration::from_millis(10) }
}

fn client(server: &FakeChatServer, mode: Mode, cache: Option<&std::path::Path>, attempts: u32) -> CompletionClient {
    let transport: Arc<dyn Transport> = Arc::new(HttpTransport::new(Duration::from_secs(10)).unwrap());
    let config = ClientConfig {
        mode,
        endpoint: Some(Endpoint { url: server.url().to_string(), api_key: Some("secret".into()) }),
        cache_dir: cache.map(|p| p.to_path_buf()),
        retry: fast_retry(attempts),
        requests_per_minute: None,
    };
    CompletionClient::new(config, Some(transport)).unwrap()
}

fn echo(_: usize, body: &serde_json::Value) -> FakeReply {
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    FakeReply::content(format!("echo: {prompt}"))
}

#[test]
fn retries_transient_failures() {
    let server = FakeChatServer::start(|i, body| match i {
        0 => FakeReply::Status(503, "busy".into()),
        1 => FakeReply::Status(429, "slow down".into()),
        _ => echo(i, body),
    });
    let record = client(&server, Mode::Live, None, 5).complete(&request("hi")).unwrap();
    assert_eq!(record.attempt_count, 3);
    assert_eq!(record.response_text, "echo: hi");
    assert_eq!(server.calls(), 3);
    let seen = server.seen();
    assert_eq!(seen[0].authorization.as_deref(), Some("Bearer secret"));
    assert_eq!(seen[0].body["temperature"], 0.0);
    assert_eq!(seen[0].body["max_tokens"], 512);
    assert_eq!(seen[0].body["model"], "fake-model");
}

#[test]
fn network_errors_are_transient() {
    let server = FakeChatServer::start(|i, body| if i == 0 { FakeReply::Hangup } else { echo(i, body) });
    let record = client(&server, Mode::Live, None, 3).complete(&request("x")).unwrap();
    assert_eq!(record.attempt_count, 2);
}

#[test]
fn gives_up_with_last_status() {
    let server = FakeChatServer::start(|_, _| FakeReply::Status(500, "down".into()));
    let err = client(&server, Mode::Live, None, 4).complete(&request("x")).unwrap_err();
    assert!(matches!(err, ClientError::Exhausted { attempts: 4, status: Some(500), .. }), "{err:?}");
    assert_eq!(server.calls(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let server = FakeChatServer::start(|_, _| FakeReply::Status(401, "bad key".into()));
    let err = client(&server, Mode::Live, None, 4).complete(&request("x")).unwrap_err();
    assert!(matches!(err, ClientError::Http { status: 401, .. }));
    assert_eq!(server.calls(), 1);

    let server = FakeChatServer::start(|_, _| FakeReply::Status(200, "{\"choices\": []}".into()));
    let err = client(&server, Mode::Live, None, 4).complete(&request("x")).unwrap_err();
    assert!(matches!(err, ClientError::Malformed(_)));
}

#[test]
fn record_then_replay() {
    let cache = tempfile::tempdir().unwrap();
    let server = FakeChatServer::start(echo);
    let recorder = client(&server, Mode::Record, Some(cache.path()), 3);
    let recorded = recorder.complete(&request("The burger was delicious")).unwrap();
    assert_eq!(recorded.attempt_count, 1);

    // Record mode never re-sends a cached digest.
    let again = recorder.complete(&request("The burger was delicious")).unwrap();
    assert_eq!(server.calls(), 1);
    assert_eq!(again.attempt_count, 0);

    let replayer = CompletionClient::new(ClientConfig::replay(cache.path()), None).unwrap();
    let replayed = replayer.complete(&request("The burger was delicious")).unwrap();
    assert_eq!(replayed.response_text.as_bytes(), recorded.response_text.as_bytes());
    assert_eq!(replayed.attempt_count, 0);
    assert_eq!(replayed.request_digest, recorded.request_digest);

    let miss = replayer.complete(&request("never sent")).unwrap_err();
    assert_eq!(miss, ClientError::ReplayMiss { digest: request("never sent").digest() });
    assert_eq!(replayer.missing(&[request("never sent"), request("The burger was delicious")]).len(), 1);

    let digest = recorded.request_digest;
    let file = cache.path().join("completions").join(&digest[..2]).join(format!("{digest}.json"));
    let entry: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(file).unwrap()).unwrap();
    assert_eq!(entry["request"]["model_id"], "fake-model");
    assert_eq!(entry["record"]["response_text"], "echo: The burger was delicious");
}

#[test]
fn model_is_part_of_the_cache_key() {
    let cache = tempfile::tempdir().unwrap();
    let server = FakeChatServer::start(echo);
    client(&server, Mode::Record, Some(cache.path()), 3).complete(&request("x")).unwrap();
    let replayer = CompletionClient::new(ClientConfig::replay(cache.path()), None).unwrap();
    let mut other = request("x");
    other.model_id = "another-model".into();
    assert!(matches!(replayer.complete(&other), Err(ClientError::ReplayMiss { .. })));
}

#[test]
fn batch_bounds_concurrency_and_keeps_order() {
    let server = FakeChatServer::start(|i, body| {
        FakeReply::Delayed(Duration::from_millis(5 + (i as u64 * 7) % 20), Box::new(echo(i, body)))
    });
    let requests: Vec<CompletionRequest> = (0..100).map(|i| request(&format!("prompt {i}"))).collect();
    let results = client(&server, Mode::Live, None, 3).complete_batch(&requests, 8);
    assert_eq!(server.calls(), 100);
    assert!(server.max_concurrency() <= 8, "observed {}", server.max_concurrency());
    assert!(server.max_concurrency() > 1);
    for (i, r) in results.iter().enumerate() {
        assert_eq!(r.as_ref().unwrap().response_text, format!("echo: prompt {i}"));
    }
}

#[test]
fn single_worker_is_sequential() {
    let server = FakeChatServer::start(|i, body| FakeReply::Delayed(Duration::from_millis(3), Box::new(echo(i, body))));
    let requests: Vec<CompletionRequest> = (0..10).map(|i| request(&format!("p{i}"))).collect();
    client(&server, Mode::Live, None, 3).complete_batch(&requests, 1);
    let seen = server.seen();
    for pair in seen.windows(2) {
        assert!(pair[1].started >= pair[0].finished);
    }
    assert_eq!(server.max_concurrency(), 1);
}

#[test]
fn cached_batch_makes_no_calls() {
    let cache = tempfile::tempdir().unwrap();
    let server = FakeChatServer::start(echo);
    let requests: Vec<CompletionRequest> = (0..20).map(|i| request(&format!("p{i}"))).collect();
    let first = client(&server, Mode::Record, Some(cache.path()), 3).complete_batch(&requests, 4);
    assert_eq!(server.calls(), 20);
    let second = client(&server, Mode::Record, Some(cache.path()), 3).complete_batch(&requests, 4);
    assert_eq!(server.calls(), 20);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.as_ref().unwrap().response_text, b.as_ref().unwrap().response_text);
    }
}

#[test]
fn duplicate_requests_in_a_batch_are_sent_once() {
    let server = FakeChatServer::start(echo);
    let requests = vec![request("same"), request("other"), request("same")];
    let results = client(&server, Mode::Live, None, 3).complete_batch(&requests, 3);
    assert_eq!(server.calls(), 2);
    assert_eq!(results[0], results[2]);
}

#[test]
fn failed_members_keep_partial_results() {
    let cache = tempfile::tempdir().unwrap();
    let server = FakeChatServer::start(|i, body| {
        if body["messages"][0]["content"] == "bad" {
            FakeReply::Status(400, "no".into())
        } else {
            echo(i, body)
        }
    });
    let requests = vec![request("good"), request("bad"), request("fine")];
    let results = client(&server, Mode::Record, Some(cache.path()), 2).complete_batch(&requests, 2);
    assert!(results[0].is_ok() && results[1].is_err() && results[2].is_ok());
    let replayer = CompletionClient::new(ClientConfig::replay(cache.path()), None).unwrap();
    assert_eq!(replayer.missing(&requests), vec![request("bad").digest()]);
}
