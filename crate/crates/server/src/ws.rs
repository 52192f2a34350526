//! WebSocket transport for the hub.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tracing::{debug, info};

use crate::hub::{ConnId, Hub, Outgoing};

pub struct Shared {
    hub: Mutex<Hub>,
    conns: Mutex<HashMap<ConnId, mpsc::UnboundedSender<String>>>,
    started: Instant,
}

impl Shared {
    pub fn new(hub: Hub) -> Arc<Self> {
        Arc::new(Self { hub: Mutex::new(hub), conns: Mutex::new(HashMap::new()), started: Instant::now() })
    }

    fn now(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    /// Run `f` against the hub and deliver what it produced. Delivery happens
    /// under the hub lock so every client sees broadcasts in seq order.
    fn with_hub(&self, f: impl FnOnce(&mut Hub, u64) -> Outgoing) {
        let mut hub = self.hub.lock().unwrap();
        let out = f(&mut hub, self.now());
        let conns = self.conns.lock().unwrap();
        for (conn, msg) in out {
            if let Some(tx) = conns.get(&conn) {
                let _ = tx.send(msg.to_json());
            }
        }
    }
}

pub fn router(shared: Arc<Shared>) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(shared)
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> Response {
    ws.on_upgrade(move |socket| connection(socket, shared))
}

async fn connection(socket: WebSocket, shared: Arc<Shared>) {
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let conn = {
        let mut hub = shared.hub.lock().unwrap();
        let conn = hub.connect();
        shared.conns.lock().unwrap().insert(conn, tx);
        conn
    };
    debug!(conn, "connected");
    let (mut sink, mut stream) = socket.split();
    let writer = tokio::spawn(async move {
        while let Some(text) = rx.recv().await {
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => shared.with_hub(|hub, now| hub.receive_text(conn, text.as_str(), now)),
            Message::Close(_) => break,
            _ => {}
        }
    }
    shared.with_hub(|hub, now| hub.disconnect(conn, now));
    shared.conns.lock().unwrap().remove(&conn);
    writer.abort();
    debug!(conn, "disconnected");
}

/// Serve on an already-bound listener until the task is dropped.
pub async fn serve(listener: TcpListener, hub: Hub) -> std::io::Result<()> {
    let tick = Duration::from_millis(hub.config().session.tick_ms.max(1));
    let shared = Shared::new(hub);
    let ticker = shared.clone();
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        loop {
            interval.tick().await;
            ticker.with_hub(|hub, now| hub.tick(now));
        }
    });
    info!(addr = ?listener.local_addr().ok(), "listening");
    axum::serve(listener, router(shared)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}
