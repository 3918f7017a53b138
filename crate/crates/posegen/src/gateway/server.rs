//! Minimal HTTP server exposing any [`Backend`] over the wire protocol.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use log::{debug, error};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tiny_http::{Header, Method, Response, Server};

use super::wire::{self, PoseConvention, API_VERSION};
use super::{Backend, GatewayError};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub workers: usize,
    /// Answer the first `n` POST requests with HTTP 503. Used to exercise
    /// client retries.
    pub fail_first: u32,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            workers: 4,
            fail_first: 0,
        }
    }
}

pub struct ServeHandle {
    addr: SocketAddr,
    server: Arc<Server>,
    workers: Vec<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Blocks until the workers exit, which only happens after
    /// [`ServeHandle::shutdown`] from another handle.
    pub fn join(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves on worker threads.
pub fn serve(backend: Arc<dyn Backend>, addr: &str, opts: ServeOptions) -> std::io::Result<ServeHandle> {
    let server = Server::http(addr).map_err(std::io::Error::other)?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| std::io::Error::other("server is not bound to an IP address"))?;
    let server = Arc::new(server);
    let failures = Arc::new(AtomicU32::new(opts.fail_first));
    let workers = (0..opts.workers.max(1))
        .map(|_| {
            let server = Arc::clone(&server);
            let backend = Arc::clone(&backend);
            let failures = Arc::clone(&failures);
            std::thread::spawn(move || {
                while let Ok(req) = server.recv() {
                    handle(backend.as_ref(), &failures, req);
                }
            })
        })
        .collect();
    Ok(ServeHandle { addr, server, workers })
}

struct Reply {
    status: u16,
    body: String,
}

fn json<T: Serialize>(status: u16, v: &T) -> Reply {
    Reply {
        status,
        body: serde_json::to_string(v).expect("wire types serialize"),
    }
}

fn error_reply(status: u16, code: &str, message: impl Into<String>) -> Reply {
    json(
        status,
        &wire::ErrorResponse {
            api_version: API_VERSION.into(),
            error: wire::ErrorBody {
                code: code.into(),
                message: message.into(),
            },
        },
    )
}

fn gateway_reply(e: GatewayError) -> Reply {
    match e {
        GatewayError::InvalidRequest(m) => error_reply(400, "invalid_request", m),
        other => error_reply(500, "internal", other.to_string()),
    }
}

fn handle(backend: &dyn Backend, failures: &AtomicU32, mut req: tiny_http::Request) {
    let method = req.method().clone();
    let path = req.url().split('?').next().unwrap_or("").to_string();
    let mut body = String::new();
    let reply = if let Err(e) = req.as_reader().read_to_string(&mut body) {
        error_reply(400, "bad_request", format!("reading body: {e}"))
    } else if method == Method::Post
        && failures
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
    {
        error_reply(503, "internal", "injected failure")
    } else {
        route(backend, &method, &path, &body)
    };
    debug!("{method} {path} -> {}", reply.status);
    let header = Header::from_bytes("content-type", "application/json").unwrap();
    let resp = Response::from_string(reply.body)
        .with_status_code(reply.status)
        .with_header(header);
    if let Err(e) = req.respond(resp) {
        error!("responding to {path}: {e}");
    }
}

/// Parses a request body, checking `api_version` before anything else.
fn parse<T: DeserializeOwned>(body: &str) -> Result<T, Reply> {
    let v: serde_json::Value =
        serde_json::from_str(body).map_err(|e| error_reply(400, "bad_request", format!("malformed JSON: {e}")))?;
    match v.get("api_version").and_then(|x| x.as_str()) {
        Some(API_VERSION) => {}
        Some(other) => {
            return Err(error_reply(
                400,
                "version_mismatch",
                format!("server speaks api_version \"{API_VERSION}\", request has \"{other}\""),
            ))
        }
        None => return Err(error_reply(400, "bad_request", "missing api_version")),
    }
    serde_json::from_value(v).map_err(|e| error_reply(400, "bad_request", e.to_string()))
}

fn route(backend: &dyn Backend, method: &Method, path: &str, body: &str) -> Reply {
    let known = [
        wire::PATH_HEALTH,
        wire::PATH_TXT2IMG,
        wire::PATH_ENCODE,
        wire::PATH_DEPTH2IMG,
        wire::PATH_HMR,
        wire::PATH_SEGMENT,
    ];
    if !known.contains(&path) {
        return error_reply(404, "not_found", format!("no endpoint {path}"));
    }
    let expected = if path == wire::PATH_HEALTH { Method::Get } else { Method::Post };
    if *method != expected {
        return error_reply(405, "method_not_allowed", format!("{path} expects {expected}"));
    }
    match dispatch(backend, path, body) {
        Ok(r) | Err(r) => r,
    }
}

fn dispatch(backend: &dyn Backend, path: &str, body: &str) -> Result<Reply, Reply> {
    let model_id = backend.model_id().map_err(gateway_reply)?;
    let v = API_VERSION.to_string();
    Ok(match path {
        wire::PATH_HEALTH => json(
            200,
            &wire::HealthResponse {
                api_version: v,
                model_id,
                status: "ok".into(),
            },
        ),
        wire::PATH_TXT2IMG => {
            let q: wire::Txt2ImgRequest = parse(body)?;
            let img = backend.txt2img(&q.to_generation()).map_err(gateway_reply)?;
            json(
                200,
                &wire::ImageResponse {
                    api_version: v,
                    model_id,
                    seed: Some(q.seed),
                    request_id: q.request_id,
                    image: wire::image_to_wire(&img),
                },
            )
        }
        wire::PATH_ENCODE => {
            let q: wire::ImageRequest = parse(body)?;
            let img = wire::image_from_wire(&q.image).map_err(bad)?;
            let z = backend.encode_latents(&img, q.seed).map_err(gateway_reply)?;
            json(
                200,
                &wire::EncodeResponse {
                    api_version: v,
                    model_id,
                    seed: q.seed,
                    request_id: q.request_id,
                    latents: wire::latents_to_wire(&z),
                },
            )
        }
        wire::PATH_DEPTH2IMG => {
            let q: wire::Depth2ImgRequest = parse(body)?;
            let z = wire::latents_from_wire(&q.latents).map_err(bad)?;
            let d = wire::depth_from_wire(&q.depth).map_err(bad)?;
            let out = backend.depth2img(&z, &d, &q.to_generation()).map_err(gateway_reply)?;
            json(
                200,
                &wire::Depth2ImgResponse {
                    api_version: v,
                    model_id,
                    seed: Some(q.seed),
                    request_id: q.request_id,
                    image: wire::image_to_wire(&out.image),
                    latent_checksum: out.latent_checksum,
                },
            )
        }
        wire::PATH_HMR => {
            let q: wire::ImageRequest = parse(body)?;
            let img = wire::image_from_wire(&q.image).map_err(bad)?;
            let r = backend.hmr(&img, q.seed).map_err(gateway_reply)?;
            json(
                200,
                &wire::HmrResponse {
                    api_version: v,
                    model_id,
                    seed: q.seed,
                    request_id: q.request_id,
                    people: r.people.iter().map(|p| wire::person_to_wire(p, PoseConvention::Full)).collect(),
                },
            )
        }
        wire::PATH_SEGMENT => {
            let q: wire::ImageRequest = parse(body)?;
            let img = wire::image_from_wire(&q.image).map_err(bad)?;
            let r = backend.segment(&img, q.seed).map_err(gateway_reply)?;
            json(
                200,
                &wire::SegmentResponse {
                    api_version: v,
                    model_id,
                    seed: q.seed,
                    request_id: q.request_id,
                    instances: r.instances.iter().map(wire::instance_to_wire).collect(),
                },
            )
        }
        _ => unreachable!("route checked the path"),
    })
}

fn bad(e: GatewayError) -> Reply {
    error_reply(400, "bad_request", e.to_string())
}
