use std::io::Read;
use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::Deserialize;
use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};

use super::{AnonymizationStore, AnonymizeError};

const MAX_BODY: u64 = 64 * 1024;

#[derive(Deserialize)]
struct AnonymizeRequest {
    nickname: String,
}

/// A running service. Dropping the handle does not stop it; call
/// [`ServerHandle::shutdown`] or [`ServerHandle::join`].
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for worker in self.workers {
            let _ = worker.join();
        }
    }

    /// Block until the workers exit (in practice, forever).
    pub fn join(self) {
        for worker in self.workers {
            let _ = worker.join();
        }
    }
}

/// Bind `bind` and answer `POST /anonymize` from `threads` worker threads.
pub fn serve(
    bind: &str,
    store: Arc<AnonymizationStore>,
    threads: usize,
) -> std::io::Result<ServerHandle> {
    let server = Server::http(bind).map_err(std::io::Error::other)?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
    let server = Arc::new(server);
    let workers = (0..threads.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let store = Arc::clone(&store);
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    handle(request, &store);
                }
            })
        })
        .collect();
    Ok(ServerHandle {
        addr,
        server,
        workers,
    })
}

fn handle(mut request: Request, store: &AnonymizationStore) {
    let (status, body) = route(&mut request, store);
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let response = Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(header);
    let _ = request.respond(response);
}

fn route(request: &mut Request, store: &AnonymizationStore) -> (u16, serde_json::Value) {
    let path = request.url().split('?').next().unwrap_or_default();
    if path != "/anonymize" {
        return (404, json!({ "error": "not found" }));
    }
    if *request.method() != Method::Post {
        return (405, json!({ "error": "method not allowed" }));
    }

    let mut body = Vec::new();
    if let Err(e) = request
        .as_reader()
        .take(MAX_BODY + 1)
        .read_to_end(&mut body)
    {
        return (400, json!({ "error": format!("unreadable body: {e}") }));
    }
    if body.len() as u64 > MAX_BODY {
        return (400, json!({ "error": "request body too large" }));
    }
    let parsed: AnonymizeRequest = match serde_json::from_slice(&body) {
        Ok(parsed) => parsed,
        Err(e) => return (400, json!({ "error": format!("malformed request: {e}") })),
    };
    match store.get_or_assign(&parsed.nickname) {
        Ok(id) => (200, json!({ "id": id })),
        Err(e @ AnonymizeError::EmptyNickname) => (400, json!({ "error": e.to_string() })),
        Err(e) => (500, json!({ "error": e.to_string() })),
    }
}
