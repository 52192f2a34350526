//! Routes connections to sessions and fans broadcasts out to members.
//! Transport-agnostic: callers feed it text frames and a clock.

use std::collections::BTreeMap;

use crowdmix_core::SessionArchive;
use serde_json::Value;
use tracing::{debug, info};

use crate::protocol::{ClientMessage, ErrorReply, ServerMessage};
use crate::session::{Session, SessionConfig, SessionError};

pub type ConnId = u64;
pub type Outgoing = Vec<(ConnId, ServerMessage)>;

#[derive(Debug, Clone, PartialEq)]
pub struct HubConfig {
    pub session: SessionConfig,
    /// Join creates unknown sessions even without `create: true`.
    pub auto_create: bool,
    /// Drop sessions that have had no members for this long.
    pub session_ttl_ms: Option<u64>,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self { session: SessionConfig::default(), auto_create: true, session_ttl_ms: None }
    }
}

#[derive(Debug, Default, Clone)]
struct Conn {
    worker: Option<String>,
    session: Option<String>,
}

#[derive(Debug, Default)]
pub struct Hub {
    config: HubConfig,
    sessions: BTreeMap<String, Session>,
    conns: BTreeMap<ConnId, Conn>,
    empty_since: BTreeMap<String, u64>,
    next_conn: ConnId,
}

impl Hub {
    pub fn new(config: HubConfig) -> Self {
        Self { config, ..Default::default() }
    }

    pub fn config(&self) -> &HubConfig {
        &self.config
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.get(id)
    }

    pub fn sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn insert_session(&mut self, session: Session, now: u64) {
        self.empty_since.insert(session.id().to_owned(), now);
        self.sessions.insert(session.id().to_owned(), session);
    }

    pub fn load_session(&mut self, id: &str, archive: SessionArchive, now: u64) {
        self.insert_session(Session::from_archive(id, self.config.session.clone(), archive), now);
    }

    pub fn connect(&mut self) -> ConnId {
        self.next_conn += 1;
        self.conns.insert(self.next_conn, Conn::default());
        self.next_conn
    }

    fn members(&self, session: &str) -> Vec<ConnId> {
        self.conns.iter().filter(|(_, c)| c.session.as_deref() == Some(session)).map(|(id, _)| *id).collect()
    }

    fn fan_out(&mut self, session: &str, out: &mut Outgoing) {
        let Some(s) = self.sessions.get_mut(session) else { return };
        let envs = s.drain();
        if envs.is_empty() {
            return;
        }
        let members = self.members(session);
        for env in envs {
            for &c in &members {
                out.push((c, ServerMessage::Broadcast(env.clone())));
            }
        }
    }

    pub fn receive_text(&mut self, conn: ConnId, text: &str, now: u64) -> Outgoing {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.receive(conn, msg, now),
            Err(e) => {
                let attempted = serde_json::from_str::<Value>(text)
                    .ok()
                    .and_then(|v| v.get("type").and_then(Value::as_str).map(str::to_owned))
                    .unwrap_or_else(|| "unknown".into());
                vec![(conn, ServerMessage::Error(ErrorReply::new(attempted, "Malformed", e.to_string())))]
            }
        }
    }

    pub fn receive(&mut self, conn: ConnId, msg: ClientMessage, now: u64) -> Outgoing {
        let attempted = msg.type_name();
        let mut out = Vec::new();
        if let Err(e) = self.dispatch(conn, msg, now, &mut out) {
            debug!(conn, error = %e, "rejected {attempted}");
            out.push((conn, ServerMessage::Error(e.reply(attempted))));
        }
        out
    }

    fn dispatch(&mut self, conn: ConnId, msg: ClientMessage, now: u64, out: &mut Outgoing) -> Result<(), SessionError> {
        let c = self.conns.entry(conn).or_default().clone();
        match msg {
            ClientMessage::Hello { worker_id } => {
                if c.session.is_some() {
                    return Err(SessionError::Unexpected("hello"));
                }
                self.conns.get_mut(&conn).unwrap().worker = Some(worker_id);
                Ok(())
            }
            ClientMessage::Join { session_id, worker_id, create } => {
                if c.session.is_some() || c.worker.as_deref().is_some_and(|w| w != worker_id) {
                    return Err(SessionError::Unexpected("join"));
                }
                if !self.sessions.contains_key(&session_id) {
                    if !(create || self.config.auto_create) {
                        return Err(SessionError::UnknownSession(session_id));
                    }
                    info!(session = %session_id, "session created");
                    self.insert_session(Session::new(&session_id, self.config.session.clone()), now);
                }
                let snapshot = self.sessions.get_mut(&session_id).unwrap().join(&worker_id, now)?;
                self.empty_since.remove(&session_id);
                let entry = self.conns.get_mut(&conn).unwrap();
                entry.worker = Some(worker_id);
                entry.session = Some(session_id.clone());
                out.push((conn, ServerMessage::Snapshot(snapshot)));
                self.fan_out(&session_id, out);
                Ok(())
            }
            msg => {
                let (Some(worker), Some(sid)) = (c.worker.clone(), c.session) else {
                    return Err(SessionError::NotJoined(c.worker.unwrap_or_default()));
                };
                let session = self.sessions.get_mut(&sid).expect("joined session exists");
                let result = session.handle(&worker, msg, now);
                // a failed message may still have emitted (e.g. lock expiry noticed on the way)
                self.fan_out(&sid, out);
                result
            }
        }
    }

    pub fn disconnect(&mut self, conn: ConnId, now: u64) -> Outgoing {
        let mut out = Vec::new();
        let Some(c) = self.conns.remove(&conn) else { return out };
        if let (Some(worker), Some(sid)) = (c.worker, c.session) {
            if let Some(s) = self.sessions.get_mut(&sid) {
                s.leave(&worker, now);
                self.fan_out(&sid, &mut out);
                if self.members(&sid).is_empty() {
                    self.empty_since.insert(sid, now);
                }
            }
        }
        out
    }

    /// Advance every session's clock and expire idle sessions.
    pub fn tick(&mut self, now: u64) -> Outgoing {
        let mut out = Vec::new();
        let ids: Vec<String> = self.sessions.keys().cloned().collect();
        for id in ids {
            self.sessions.get_mut(&id).unwrap().tick(now);
            self.fan_out(&id, &mut out);
        }
        if let Some(ttl) = self.config.session_ttl_ms {
            let dead: Vec<String> =
                self.empty_since.iter().filter(|(_, &t)| now >= t + ttl).map(|(id, _)| id.clone()).collect();
            for id in dead {
                info!(session = %id, "idle session dropped");
                self.empty_since.remove(&id);
                self.sessions.remove(&id);
            }
        }
        out
    }
}
