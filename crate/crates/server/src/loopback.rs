//! In-process clients driving a [`Hub`] on a simulated clock. Used by
//! `simulate` and by tests; no sockets involved.

use std::collections::BTreeMap;

use crate::hub::{ConnId, Hub, HubConfig, Outgoing};
use crate::mirror::Mirror;
use crate::protocol::{ClientMessage, ErrorReply, ServerMessage};

#[derive(Debug)]
pub struct Client {
    pub conn: ConnId,
    pub inbox: Vec<ServerMessage>,
    pub mirror: Option<Mirror>,
    pub mirror_error: Option<String>,
}

impl Client {
    pub fn errors(&self) -> impl Iterator<Item = &ErrorReply> {
        self.inbox.iter().filter_map(|m| match m {
            ServerMessage::Error(e) => Some(e),
            _ => None,
        })
    }
}

#[derive(Debug)]
pub struct Loopback {
    pub hub: Hub,
    now: u64,
    last_tick: u64,
    clients: BTreeMap<String, Client>,
}

impl Loopback {
    pub fn new(config: HubConfig) -> Self {
        Self { hub: Hub::new(config), now: 0, last_tick: 0, clients: BTreeMap::new() }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn client(&self, worker: &str) -> Option<&Client> {
        self.clients.get(worker)
    }

    pub fn workers(&self) -> impl Iterator<Item = &str> {
        self.clients.keys().map(String::as_str)
    }

    fn route(&mut self, out: Outgoing) {
        for (conn, msg) in out {
            let Some(client) = self.clients.values_mut().find(|c| c.conn == conn) else { continue };
            match &msg {
                ServerMessage::Snapshot(s) => client.mirror = Some(Mirror::from_snapshot(s.clone())),
                ServerMessage::Broadcast(env) => {
                    if let Some(m) = client.mirror.as_mut() {
                        if let Err(e) = m.receive(env.clone()) {
                            client.mirror_error.get_or_insert_with(|| e.to_string());
                        }
                    }
                }
                ServerMessage::Error(_) => {}
            }
            client.inbox.push(msg);
        }
    }

    pub fn connect(&mut self, worker: &str) {
        if !self.clients.contains_key(worker) {
            let conn = self.hub.connect();
            self.clients.insert(worker.to_owned(), Client { conn, inbox: Vec::new(), mirror: None, mirror_error: None });
        }
    }

    /// Connect if needed, then send. Returns the errors this message produced.
    pub fn send(&mut self, worker: &str, msg: ClientMessage) -> Vec<ErrorReply> {
        self.connect(worker);
        let conn = self.clients[worker].conn;
        let out = self.hub.receive(conn, msg, self.now);
        let errors = out
            .iter()
            .filter(|(c, _)| *c == conn)
            .filter_map(|(_, m)| match m {
                ServerMessage::Error(e) => Some(e.clone()),
                _ => None,
            })
            .collect();
        self.route(out);
        errors
    }

    pub fn join(&mut self, worker: &str, session: &str) -> Vec<ErrorReply> {
        let msg = ClientMessage::Join { session_id: session.into(), worker_id: worker.into(), create: true };
        self.send(worker, msg)
    }

    pub fn leave(&mut self, worker: &str) {
        if let Some(c) = self.clients.remove(worker) {
            let out = self.hub.disconnect(c.conn, self.now);
            self.route(out);
        }
    }

    /// Move the clock forward, running a hub tick at every tick boundary
    /// passed and one at `t` itself.
    pub fn advance_to(&mut self, t: u64) {
        let step = self.hub.config().session.tick_ms.max(1);
        let mut next = (self.last_tick / step + 1) * step;
        while next < t {
            self.now = next;
            self.tick();
            next += step;
        }
        self.now = self.now.max(t);
        self.tick();
    }

    pub fn advance_by(&mut self, dt: u64) {
        self.advance_to(self.now + dt);
    }

    fn tick(&mut self) {
        self.last_tick = self.now;
        let out = self.hub.tick(self.now);
        self.route(out);
    }

    pub fn mirror_errors(&self) -> Vec<(String, String)> {
        self.clients
            .iter()
            .filter_map(|(w, c)| c.mirror_error.clone().map(|e| (w.clone(), e)))
            .collect()
    }
}
