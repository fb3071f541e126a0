//! HttpBackend against an in-process stub server and the shared golden
//! request/response files in `protocol/golden`.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::Deserialize;

use qga_core::backend::{
    default_qa_params, default_qg_params, Backend, BackendError, GenerationParams, GenerationRequest, HttpBackend,
    ModelKind, RetryPolicy,
};

#[derive(Debug, Clone, PartialEq)]
struct Request {
    method: String,
    path: String,
    body: String,
}

type Handler = dyn Fn(&Request, usize) -> (u16, String) + Send + Sync;

struct Stub {
    url: String,
    seen: Arc<Mutex<Vec<Request>>>,
}

impl Stub {
    /// Serves forever on an ephemeral port; `handler` gets the request and its 0-based arrival index.
    fn start(handler: impl Fn(&Request, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let log = seen.clone();
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = handler.clone();
                let log = log.clone();
                thread::spawn(move || serve(stream, &*handler, &log));
            }
        });
        Self { url, seen }
    }

    fn requests(&self) -> Vec<Request> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, handler: &Handler, log: &Mutex<Vec<Request>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut length = 0usize;
    loop {
        let mut header = String::new();
        reader.read_line(&mut header).unwrap();
        let header = header.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let request = Request {
        method,
        path,
        body: String::from_utf8(body).unwrap(),
    };
    let index = {
        let mut log = log.lock().unwrap();
        log.push(request.clone());
        log.len() - 1
    };
    let (status, body) = handler(&request, index);
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        503 => "Service Unavailable",
        _ => "Other",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
}

fn quick_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        initial_backoff: Duration::from_millis(1),
        max_backoff: Duration::from_millis(5),
    }
}

fn client(url: &str, retry: RetryPolicy) -> HttpBackend {
    HttpBackend::with_options(url, retry, Duration::from_secs(10)).unwrap()
}

#[derive(Debug, Deserialize)]
struct GoldenCase {
    name: String,
    request: GoldenRequest,
    response: GoldenResponse,
}

#[derive(Debug, Deserialize)]
struct GoldenRequest {
    method: String,
    path: String,
    body: Option<String>,
}

#[derive(Debug, Deserialize)]
struct GoldenResponse {
    status: u16,
    body: String,
}

#[derive(Debug, Deserialize)]
struct WireBody {
    model: String,
    inputs: Vec<String>,
    max_length: u32,
    num_beams: u32,
    length_penalty: f64,
}

fn golden_cases() -> Vec<GoldenCase> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../protocol/golden");
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap())
        .collect()
}

#[test]
fn golden_generate_requests_are_byte_exact() {
    let mut checked = 0;
    for case in golden_cases() {
        if case.request.path != "/v1/generate" || case.response.status != 200 {
            continue;
        }
        let golden_body = case.request.body.clone().unwrap();
        let wire: WireBody = serde_json::from_str(&golden_body).unwrap();
        let response = case.response.body.clone();
        let stub = Stub::start(move |_, _| (200, response.clone()));
        let backend = client(&stub.url, RetryPolicy::none());
        let params = GenerationParams {
            max_length: wire.max_length,
            num_beams: wire.num_beams,
            length_penalty: wire.length_penalty,
        };
        let request = GenerationRequest::new(wire.inputs, params).unwrap();
        let outputs = backend.generate(wire.model.parse().unwrap(), &request).unwrap();

        let seen = stub.requests();
        assert_eq!(seen.len(), 1, "{}", case.name);
        assert_eq!(seen[0].method, case.request.method);
        assert_eq!(seen[0].body, golden_body, "{}", case.name);
        let expected: serde_json::Value = serde_json::from_str(&case.response.body).unwrap();
        assert_eq!(serde_json::json!({ "outputs": outputs }), expected, "{}", case.name);
        checked += 1;
    }
    assert!(checked >= 4, "only {checked} golden generate cases");
}

#[test]
fn golden_invalid_requests_never_reach_the_wire() {
    let stub = Stub::start(|_, _| (500, String::new()));
    let backend = client(&stub.url, RetryPolicy::none());
    for case in golden_cases().iter().filter(|c| c.response.status == 400) {
        let wire: WireBody = serde_json::from_str(case.request.body.as_deref().unwrap()).unwrap();
        let params = GenerationParams {
            max_length: wire.max_length,
            num_beams: wire.num_beams,
            length_penalty: wire.length_penalty,
        };
        let rejected = match wire.model.parse::<ModelKind>() {
            Err(_) => true,
            Ok(model) => {
                let request = GenerationRequest {
                    inputs: wire.inputs,
                    max_length: params.max_length,
                    num_beams: params.num_beams,
                    length_penalty: params.length_penalty,
                };
                matches!(backend.generate(model, &request), Err(BackendError::InvalidRequest(_)))
            }
        };
        assert!(rejected, "{} was not rejected client-side", case.name);
    }
    assert!(stub.requests().is_empty());
}

#[test]
fn golden_health() {
    let case = golden_cases().into_iter().find(|c| c.name == "health_ok").unwrap();
    let body = case.response.body.clone();
    let stub = Stub::start(move |_, _| (200, body.clone()));
    assert!(client(&stub.url, RetryPolicy::none()).health().unwrap());
    assert_eq!(stub.requests()[0].path, case.request.path);
    assert_eq!(stub.requests()[0].method, "GET");

    let loading = Stub::start(|_, _| (503, r#"{"error":"model loading"}"#.into()));
    assert!(!client(&loading.url, RetryPolicy::none()).health().unwrap());
}

#[test]
fn loading_server_is_retried_until_ready() {
    let stub = Stub::start(|_, i| {
        if i < 2 {
            (503, r#"{"error":"model loading"}"#.into())
        } else {
            (200, r#"{"outputs":["ok"]}"#.into())
        }
    });
    let backend = client(&stub.url, quick_retry(5));
    let request = GenerationRequest::new(vec!["x".into()], default_qg_params()).unwrap();
    assert_eq!(backend.generate(ModelKind::Qg, &request).unwrap(), ["ok"]);
    let seen = stub.requests();
    assert_eq!(seen.len(), 3);
    assert!(seen.windows(2).all(|w| w[0].body == w[1].body));
}

#[test]
fn retries_are_bounded() {
    let stub = Stub::start(|_, _| (503, r#"{"error":"model loading"}"#.into()));
    let backend = client(&stub.url, quick_retry(3));
    let request = GenerationRequest::new(vec!["x".into()], default_qg_params()).unwrap();
    match backend.generate(ModelKind::Qg, &request) {
        Err(BackendError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn bad_request_is_not_retried() {
    let stub = Stub::start(|_, _| (400, r#"{"error":"bad"}"#.into()));
    let backend = client(&stub.url, quick_retry(5));
    let request = GenerationRequest::new(vec!["x".into()], default_qa_params()).unwrap();
    let err = backend.generate(ModelKind::Qa, &request).unwrap_err();
    assert!(matches!(err, BackendError::Protocol(_)), "{err:?}");
    assert!(!err.is_retryable());
    assert_eq!(stub.requests().len(), 1);
}

#[test]
fn wrong_output_count_is_a_protocol_violation() {
    let stub = Stub::start(|_, _| (200, r#"{"outputs":["only one"]}"#.into()));
    let backend = client(&stub.url, RetryPolicy::none());
    let request = GenerationRequest::new(vec!["a".into(), "b".into()], default_qa_params()).unwrap();
    assert!(matches!(backend.generate(ModelKind::Qa, &request), Err(BackendError::Protocol(_))));

    let garbage = Stub::start(|_, _| (200, "not json".into()));
    let backend = client(&garbage.url, RetryPolicy::none());
    assert!(matches!(backend.generate(ModelKind::Qa, &request), Err(BackendError::Protocol(_))));
}

#[test]
fn concurrent_callers_get_their_own_outputs() {
    let stub = Stub::start(|req, _| {
        let wire: WireBody = serde_json::from_str(&req.body).unwrap();
        let outputs: Vec<String> = wire.inputs.iter().map(|i| format!("{}:{i}", wire.model)).collect();
        (200, serde_json::json!({ "outputs": outputs }).to_string())
    });
    let backend = Arc::new(client(&stub.url, RetryPolicy::none()));
    let handles: Vec<_> = (0..8)
        .map(|t| {
            let backend = backend.clone();
            thread::spawn(move || {
                let inputs: Vec<String> = (0..5).map(|i| format!("t{t}-{i}")).collect();
                let model = if t % 2 == 0 { ModelKind::Qg } else { ModelKind::Qa };
                let request = GenerationRequest::new(inputs.clone(), default_qa_params()).unwrap();
                let outputs = backend.generate(model, &request).unwrap();
                let expected: Vec<String> = inputs.iter().map(|i| format!("{model}:{i}")).collect();
                assert_eq!(outputs, expected);
            })
        })
        .collect();
    for h in handles {
        h.join().unwrap();
    }
    assert_eq!(stub.requests().len(), 8);
}
