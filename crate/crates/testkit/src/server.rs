use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

/// What the fake endpoint saw for one request.
#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub index: usize,
    pub body: serde_json::Value,
    pub authorization: Option<String>,
    pub started: Instant,
    pub finished: Instant,
}

impl SeenRequest {
    /// Content of the last message, i.e. the prompt.
    pub fn prompt(&self) -> &str {
        self.body["messages"].as_array().and_then(|m| m.last()).and_then(|m| m["content"].as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone)]
pub enum FakeReply {
    /// 200 with a chat-completions body whose first choice holds the text.
    Content(String),
    /// Any status with a raw body.
    Status(u16, String),
    /// Wait, then answer.
    Delayed(Duration, Box<FakeReply>),
    /// Close the connection without answering.
    Hangup,
}

impl FakeReply {
    pub fn content(text: impl Into<String>) -> Self {
        FakeReply::Content(text.into())
    }
}

type Responder = dyn Fn(usize, &serde_json::Value) -> FakeReply + Send + Sync;

struct Shared {
    responder: Box<Responder>,
    calls: AtomicUsize,
    in_flight: AtomicUsize,
    max_in_flight: AtomicUsize,
    seen: Mutex<Vec<SeenRequest>>,
    stop: AtomicBool,
}

/// A chat-completions endpoint on a local port. The responder receives the
/// zero-based call index and the parsed request body.
pub struct FakeChatServer {
    url: String,
    shared: Arc<Shared>,
    accept: Option<JoinHandle<()>>,
}

impl FakeChatServer {
    pub fn start(responder: impl Fn(usize, &serde_json::Value) -> FakeReply + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind a local port");
        let addr = listener.local_addr().unwrap();
        let shared = Arc::new(Shared {
            responder: Box::new(responder),
            calls: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            max_in_flight: AtomicUsize::new(0),
            seen: Mutex::new(Vec::new()),
            stop: AtomicBool::new(false),
        });
        let worker = shared.clone();
        let accept = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if worker.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let shared = worker.clone();
                std::thread::spawn(move || {
                    let _ = serve(stream, &shared);
                });
            }
        });
        Self { url: format!("http://{addr}/v1/chat/completions"), shared, accept: Some(accept) }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn calls(&self) -> usize {
        self.shared.calls.load(Ordering::SeqCst)
    }

    pub fn max_concurrency(&self) -> usize {
        self.shared.max_in_flight.load(Ordering::SeqCst)
    }

    pub fn seen(&self) -> Vec<SeenRequest> {
        let mut seen = self.shared.seen.lock().unwrap().clone();
        seen.sort_by_key(|s| s.index);
        seen
    }
}

impl Drop for FakeChatServer {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        if let Some(addr) = self.url.strip_prefix("http://").and_then(|r| r.split('/').next()) {
            let _ = TcpStream::connect(addr);
        }
        if let Some(handle) = self.accept.take() {
            let _ = handle.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut length = 0;
    let mut authorization = None;
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.is_empty() {
        return Ok(());
    }
    loop {
        line.clear();
        reader.read_line(&mut line)?;
        let header = line.trim_end();
        if header.is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            match name.trim().to_ascii_lowercase().as_str() {
                "content-length" => length = value.trim().parse().unwrap_or(0),
                "authorization" => authorization = Some(value.trim().to_string()),
                _ => {}
            }
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body)?;
    let body: serde_json::Value = serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);

    let index = shared.calls.fetch_add(1, Ordering::SeqCst);
    let now = shared.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    shared.max_in_flight.fetch_max(now, Ordering::SeqCst);
    let started = Instant::now();
    let mut reply = (shared.responder)(index, &body);
    while let FakeReply::Delayed(wait, inner) = reply {
        std::thread::sleep(wait);
        reply = *inner;
    }
    shared.in_flight.fetch_sub(1, Ordering::SeqCst);
    shared.seen.lock().unwrap().push(SeenRequest { index, body, authorization, started, finished: Instant::now() });

    let (status, payload) = match reply {
        FakeReply::Content(text) => (
            200,
            serde_json::json!({
                "id": format!("fake-{index}"),
                "object": "chat.completion",
                "choices": [{"index": 0, "message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 0, "completion_tokens": 0, "total_tokens": 0}
            })
            .to_string(),
        ),
        FakeReply::Status(status, body) => (status, body),
        FakeReply::Hangup => return Ok(()),
        FakeReply::Delayed(..) => unreachable!("delays are unwrapped above"),
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    stream.flush()
}
