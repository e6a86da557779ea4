//! Minimal scripted HTTP/1.1 stub for exercising the chat client without a
//! real endpoint. Tracks request counts and the maximum number of requests
//! in flight at once.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

pub struct StubRequest {
    pub method: String,
    pub path: String,
    pub body: serde_json::Value,
    /// 1-based request ordinal across the server's lifetime.
    pub ordinal: usize,
}

pub struct StubResponse {
    pub status: u16,
    pub body: String,
}

impl StubResponse {
    pub fn json(status: u16, body: impl Into<String>) -> StubResponse {
        StubResponse {
            status,
            body: body.into(),
        }
    }

    /// 200 with a chat-completions envelope around `content`.
    pub fn chat(content: &str) -> StubResponse {
        StubResponse::json(200, chat_envelope(content))
    }
}

pub fn chat_envelope(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}}]
    })
    .to_string()
}

#[derive(Default)]
pub struct StubStats {
    pub requests: AtomicUsize,
    in_flight: AtomicUsize,
    pub max_in_flight: AtomicUsize,
}

pub struct StubServer {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
    pub stats: Arc<StubStats>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> StubServer
    where
        F: Fn(&StubRequest) -> StubResponse + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let addr = listener.local_addr().unwrap();
        let shutdown = Arc::new(AtomicBool::new(false));
        let stats = Arc::new(StubStats::default());
        let handler = Arc::new(handler);

        let accept_shutdown = Arc::clone(&shutdown);
        let accept_stats = Arc::clone(&stats);
        let handle = std::thread::spawn(move || {
            for stream in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let handler = Arc::clone(&handler);
                let stats = Arc::clone(&accept_stats);
                std::thread::spawn(move || {
                    let _ = serve_connection(stream, &*handler, &stats);
                });
            }
        });

        StubServer {
            addr,
            shutdown,
            handle: Some(handle),
            stats,
        }
    }

    /// Always answer with the same chat content.
    pub fn chat_fixed(content: &str) -> StubServer {
        let content = content.to_string();
        StubServer::start(move |_req| StubResponse::chat(&content))
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn request_count(&self) -> usize {
        self.stats.requests.load(Ordering::SeqCst)
    }

    pub fn max_concurrency(&self) -> usize {
        self.stats.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // poke the accept loop awake
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn serve_connection(
    stream: TcpStream,
    handler: &(dyn Fn(&StubRequest) -> StubResponse + Send + Sync),
    stats: &StubStats,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut parts = request_line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    if method.is_empty() {
        return Ok(()); // shutdown poke
    }

    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            break;
        }
        if let Some(value) = trimmed
            .to_ascii_lowercase()
            .strip_prefix("content-length:")
            .map(str::trim)
        {
            content_length = value.parse().unwrap_or(0);
        }
    }
    let mut body_bytes = vec![0u8; content_length];
    reader.read_exact(&mut body_bytes)?;
    let body = if body_bytes.is_empty() {
        serde_json::Value::Null
    } else {
        serde_json::from_slice(&body_bytes).unwrap_or(serde_json::Value::Null)
    };

    let ordinal = stats.requests.fetch_add(1, Ordering::SeqCst) + 1;
    let now_in_flight = stats.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    stats
        .max_in_flight
        .fetch_max(now_in_flight, Ordering::SeqCst);

    let request = StubRequest {
        method,
        path,
        body,
        ordinal,
    };
    let response = handler(&request);

    stats.in_flight.fetch_sub(1, Ordering::SeqCst);

    let reason = match response.status {
        200 => "OK",
        404 => "Not Found",
        429 => "Too Many Requests",
        500 => "Internal Server Error",
        _ => "Status",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        response.status,
        reason,
        response.body.len(),
        response.body
    )?;
    stream.flush()?;
    Ok(())
}
