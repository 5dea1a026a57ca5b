//! A small threaded HTTP front end on `tiny_http`.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use metabridge_core::store::StoreSnapshot;
use tiny_http::{Header, Method, Response, Server};

use crate::provider::Provider;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
    pub headers: Vec<(String, String)>,
}

impl HttpResponse {
    pub fn xml(body: Vec<u8>) -> Self {
        HttpResponse {
            status: 200,
            content_type: "text/xml; charset=utf-8",
            body,
            headers: Vec::new(),
        }
    }

    pub fn text(status: u16, body: &str) -> Self {
        HttpResponse {
            status,
            content_type: "text/plain; charset=utf-8",
            body: body.as_bytes().to_vec(),
            headers: Vec::new(),
        }
    }

    pub fn server_error(detail: &str) -> Self {
        HttpResponse::text(500, detail)
    }

    pub fn with_header(mut self, name: &str, value: &str) -> Self {
        self.headers.push((name.to_string(), value.to_string()));
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: String,
    pub path: String,
    /// Query pairs, followed by form pairs for urlencoded POST bodies.
    pub params: Vec<(String, String)>,
}

pub type Handler = dyn Fn(&HttpRequest) -> HttpResponse + Send + Sync;

/// A running server. Dropping it stops the workers.
pub struct ServerHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// Blocks until the server is shut down from another thread.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    fn stop_workers(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_workers();
    }
}

/// A bound but not yet serving listener; lets callers learn the port first.
pub struct Bound {
    server: Server,
    addr: SocketAddr,
}

pub fn bind(addr: &str) -> std::io::Result<Bound> {
    let server = Server::http(addr).map_err(|e| std::io::Error::new(std::io::ErrorKind::AddrNotAvailable, e.to_string()))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
    Ok(Bound { server, addr })
}

impl Bound {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Starts `workers` threads answering with `handler`.
    pub fn start(self, workers: usize, handler: Arc<Handler>) -> ServerHandle {
        let server = Arc::new(self.server);
        let stop = Arc::new(AtomicBool::new(false));
        let workers = (0..workers.max(1))
            .map(|_| {
                let server = server.clone();
                let stop = stop.clone();
                let handler = handler.clone();
                std::thread::spawn(move || loop {
                    let request = match server.recv() {
                        Ok(r) => r,
                        Err(_) if stop.load(Ordering::SeqCst) => break,
                        Err(_) => continue,
                    };
                    answer(request, &*handler);
                })
            })
            .collect();
        ServerHandle {
            addr: self.addr,
            server,
            stop,
            workers,
        }
    }
}

/// Serves `handler` on `addr` with `workers` threads.
pub fn serve_fn(addr: &str, workers: usize, handler: Arc<Handler>) -> std::io::Result<ServerHandle> {
    Ok(bind(addr)?.start(workers, handler))
}

fn answer(mut request: tiny_http::Request, handler: &Handler) {
    let url = request.url().to_string();
    let (path, query) = url.split_once('?').unwrap_or((&url, ""));
    let mut params: Vec<(String, String)> = url::form_urlencoded::parse(query.as_bytes()).into_owned().collect();
    let is_form = request.headers().iter().any(|h| {
        h.field.equiv("Content-Type") && h.value.as_str().starts_with("application/x-www-form-urlencoded")
    });
    if *request.method() == Method::Post && is_form {
        let mut body = Vec::new();
        if request.as_reader().take(1 << 20).read_to_end(&mut body).is_ok() {
            params.extend(url::form_urlencoded::parse(&body).into_owned());
        }
    }
    let req = HttpRequest {
        method: request.method().as_str().to_string(),
        path: path.to_string(),
        params,
    };
    let resp = handler(&req);
    let mut out = Response::from_data(resp.body).with_status_code(resp.status);
    if let Ok(h) = Header::from_bytes("Content-Type", resp.content_type) {
        out = out.with_header(h);
    }
    for (k, v) in &resp.headers {
        if let Ok(h) = Header::from_bytes(k.as_bytes(), v.as_bytes()) {
            out = out.with_header(h);
        }
    }
    let _ = request.respond(out);
}

/// Routes the OAI endpoint and the RSS feed of `provider`.
pub fn provider_handler(provider: Arc<Provider>) -> impl Fn(&HttpRequest) -> HttpResponse + Send + Sync {
    move |req: &HttpRequest| {
        if req.method != "GET" && req.method != "POST" {
            return HttpResponse::text(405, "method not allowed");
        }
        if req.path == provider.config.base_path {
            provider.handle_request(&req.params)
        } else if req.path == provider.config.rss_path() {
            let limit = req
                .params
                .iter()
                .find(|(k, _)| k == "limit")
                .and_then(|(_, v)| v.parse::<usize>().ok())
                .filter(|n| *n >= 1)
                .unwrap_or(20);
            match StoreSnapshot::load(&provider.store_dir).and_then(|s| provider.emit_rss(&s, limit)) {
                Ok(body) => HttpResponse {
                    content_type: "application/rss+xml; charset=utf-8",
                    ..HttpResponse::xml(body)
                },
                Err(e) => HttpResponse::server_error(&e.to_string()),
            }
        } else {
            HttpResponse::text(404, "not found")
        }
    }
}

/// Serves `provider` until the handle is shut down or dropped. An empty
/// `base_url` is filled in from the bound address.
pub fn serve(mut provider: Provider, addr: &str, workers: usize) -> std::io::Result<(ServerHandle, Arc<Provider>)> {
    let bound = bind(addr)?;
    if provider.config.base_url.is_empty() {
        provider.config.base_url = format!("http://{}{}", bound.addr(), provider.config.base_path);
    }
    let provider = Arc::new(provider);
    let handle = bound.start(workers, Arc::new(provider_handler(provider.clone())));
    Ok((handle, provider))
}
