//! Websocket bridge: discovery, interface calls and concept subscriptions
//! for browser and script clients, plus a static bundle and a health probe.
//!
//! Device traffic still goes through the runtime's service loops; the
//! bridge only queues calls and reads the state store.

pub mod protocol;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Mutex;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use thiserror::Error;
use tokio::sync::{mpsc, watch};
use tokio::task::JoinHandle as TaskHandle;
use tokio::time::{interval_at, Instant, MissedTickBehavior};
use tower_http::services::ServeDir;
use tracing::{debug, info, warn};

use crate::runtime::Runtime;
use protocol::Request;

#[derive(Debug, Error)]
pub enum BridgeError {
    #[error("bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("bridge runtime: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct BridgeConfig {
    pub addr: String,
    /// Directory served at `/`. Without one a placeholder page is served.
    pub static_dir: Option<PathBuf>,
}

impl BridgeConfig {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            static_dir: None,
        }
    }
}

#[derive(Clone)]
struct AppState {
    runtime: Runtime,
    shutdown: watch::Receiver<bool>,
}

/// A running bridge. Dropping it shuts the server down.
pub struct BridgeHandle {
    addr: SocketAddr,
    shutdown: watch::Sender<bool>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl BridgeHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn ws_url(&self) -> String {
        format!("ws://{}/ws", self.addr)
    }

    /// Sends a close frame to every client, stops accepting and waits for
    /// the server thread. Idempotent.
    pub fn shutdown(&self) {
        let _ = self.shutdown.send(true);
        let t = self.thread.lock().expect("bridge thread poisoned").take();
        if let Some(t) = t {
            let _ = t.join();
        }
    }

    /// Blocks until the server exits.
    pub fn wait(&self) {
        let t = self.thread.lock().expect("bridge thread poisoned").take();
        if let Some(t) = t {
            let _ = t.join();
        }
    }
}

impl Drop for BridgeHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

const PLACEHOLDER: &str = "<!doctype html>\n<title>RDIS bridge</title>\n<p>No UI bundle is installed. The websocket endpoint is <code>/ws</code>.</p>\n";

pub fn serve(runtime: Runtime, config: BridgeConfig) -> Result<BridgeHandle, BridgeError> {
    let listener = std::net::TcpListener::bind(&config.addr).map_err(|source| BridgeError::Bind {
        addr: config.addr.clone(),
        source,
    })?;
    listener.set_nonblocking(true)?;
    let addr = listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .thread_name("rdis-bridge")
        .enable_all()
        .build()?;
    let (tx, rx) = watch::channel(false);

    let state = AppState {
        runtime,
        shutdown: rx.clone(),
    };
    let mut app = Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/healthz", get(|| async { "ok" }));
    app = match &config.static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    };
    let app = app.with_state(state);

    let thread = thread::Builder::new().name("rdis-bridge".into()).spawn(move || {
        rt.block_on(async move {
            let listener = match tokio::net::TcpListener::from_std(listener) {
                Ok(l) => l,
                Err(e) => {
                    warn!("bridge listener: {e}");
                    return;
                }
            };
            let mut stop = rx;
            let signal = async move {
                let _ = stop.wait_for(|s| *s).await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(signal).await {
                warn!("bridge server: {e}");
            }
        });
        rt.shutdown_timeout(Duration::from_secs(1));
    })?;
    info!(%addr, "bridge listening");
    Ok(BridgeHandle {
        addr,
        shutdown: tx,
        thread: Mutex::new(Some(thread)),
    })
}

async fn ws_upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| client(socket, state))
}

async fn client(mut socket: WebSocket, state: AppState) {
    let (out_tx, mut out_rx) = mpsc::unbounded_channel::<String>();
    let mut subs: HashMap<String, TaskHandle<()>> = HashMap::new();
    let mut shutdown = state.shutdown.clone();
    if *shutdown.borrow() {
        let _ = socket.send(Message::Close(None)).await;
        return;
    }
    loop {
        tokio::select! {
            _ = shutdown.changed() => {
                let _ = socket.send(Message::Close(None)).await;
                break;
            }
            Some(text) = out_rx.recv() => {
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            msg = socket.recv() => {
                let reply = match msg {
                    Some(Ok(Message::Text(t))) => handle(t.as_str(), &state.runtime, &out_tx, &mut subs),
                    Some(Ok(Message::Binary(_))) => Some(protocol::error_message(None, "binary-unsupported", "send JSON text frames")),
                    Some(Ok(Message::Ping(_) | Message::Pong(_))) => None,
                    Some(Ok(Message::Close(_))) | None => break,
                    Some(Err(e)) => {
                        debug!("websocket receive: {e}");
                        break;
                    }
                };
                if let Some(r) = reply {
                    if socket.send(Message::Text(r.into())).await.is_err() {
                        break;
                    }
                }
            }
        }
    }
    for (_, t) in subs {
        t.abort();
    }
}

/// Handles one request. Immediate replies are returned; asynchronous ones
/// (call results, state updates) go through `out`.
fn handle(
    text: &str,
    runtime: &Runtime,
    out: &mpsc::UnboundedSender<String>,
    subs: &mut HashMap<String, TaskHandle<()>>,
) -> Option<String> {
    let req = match protocol::parse_request(text) {
        Ok(r) => r,
        Err(e) => return Some(e.to_message()),
    };
    subs.retain(|_, t| !t.is_finished());
    match req {
        Request::Rdis { id } => Some(protocol::rdis_message(id.as_deref(), runtime.canonical_text())),
        Request::List { id } => Some(protocol::list_message(id.as_deref(), runtime.document())),
        Request::Call { id, interface, args } => {
            let rt = runtime.clone();
            let out = out.clone();
            tokio::spawn(async move {
                let result = tokio::task::spawn_blocking(move || match protocol::concept_of(&interface) {
                    Some(c) => rt.call_concept(c, &args),
                    None => rt.call_interface(&interface, &args),
                })
                .await;
                let msg = match result {
                    Ok(Ok(values)) => protocol::result_message(&id, &values),
                    Ok(Err(e)) => protocol::error_message(Some(&id), e.code(), &e.to_string()),
                    Err(e) => protocol::error_message(Some(&id), "internal", &e.to_string()),
                };
                let _ = out.send(msg);
            });
            None
        }
        Request::Subscribe { id, concept, period_ms } => {
            if subs.contains_key(&id) {
                return Some(protocol::error_message(
                    Some(&id),
                    "duplicate-id",
                    &format!("subscription `{id}` already exists"),
                ));
            }
            let Some(c) = protocol::concept_of(&concept) else {
                return Some(protocol::error_message(
                    Some(&id),
                    "unknown-concept",
                    &format!("unknown concept `{concept}`"),
                ));
            };
            // Surface a missing mapping or a command concept right away.
            if let Err(e) = runtime.read_concept(c) {
                return Some(protocol::error_message(Some(&id), e.code(), &e.to_string()));
            }
            let rt = runtime.clone();
            let out = out.clone();
            let sid = id.clone();
            let task = tokio::spawn(async move {
                let period = Duration::from_millis(period_ms);
                let mut ticker = interval_at(Instant::now() + period, period);
                ticker.set_missed_tick_behavior(MissedTickBehavior::Skip);
                loop {
                    ticker.tick().await;
                    let msg = match rt.read_concept(c) {
                        Ok(s) => protocol::state_message(&sid, &s.values, s.age.as_secs_f64() * 1000.0),
                        Err(e) => {
                            let msg = protocol::error_message(Some(&sid), e.code(), &e.to_string());
                            let _ = out.send(msg);
                            return;
                        }
                    };
                    if out.send(msg).is_err() {
                        return;
                    }
                }
            });
            subs.insert(id, task);
            None
        }
        Request::Unsubscribe { id } => match subs.remove(&id) {
            Some(t) => {
                t.abort();
                Some(protocol::result_message(&id, &Default::default()))
            }
            None => Some(protocol::error_message(
                Some(&id),
                "unknown-id",
                &format!("no subscription `{id}`"),
            )),
        },
    }
}
