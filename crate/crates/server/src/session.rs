//! One collaborative session: the single sequencer that validates messages,
//! mutates the authoritative state and numbers every broadcast.

use std::collections::BTreeMap;

use crowdmix_core::archive::{ArchiveError, AssetRef};
use crowdmix_core::timeline::replay_edits;
use crowdmix_core::{
    evaluate_triggers, BehaviorId, SessionArchive, BehaviorStore, CanvasError, CanvasState, EditEvent, EditKind, Envelope, FrameEdits,
    IdGen, RecordError, RecorderBuffer, ReplayError, StoreError, TriggerBinding, DEFAULT_GAP_MS,
};
use serde::Serialize;
use thiserror::Error;
use tracing::debug;

use crate::locks::{Activity, LockError, LockEvent, LockTable, Scope, DEFAULT_LOCK_TTL_MS};
use crate::protocol::{
    kind, AssetPayload, BlockPayload, ClientMessage, EditPayload, ErrorReply, FireCause, LockPayload, Presence,
    PresencePayload, RecordingPayload, RunPayload, SessionView, Snapshot, TimelineOp,
};

pub const DEFAULT_TICK_MS: u64 = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub lock_ttl_ms: u64,
    pub tick_ms: u64,
    pub gap_ms: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { lock_ttl_ms: DEFAULT_LOCK_TTL_MS, tick_ms: DEFAULT_TICK_MS, gap_ms: DEFAULT_GAP_MS }
    }
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("worker {0} has not joined")]
    NotJoined(String),
    #[error("worker {0} is already connected")]
    DuplicateWorker(String),
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("{0} is locked by another worker")]
    LockRequired(Scope),
    #[error(transparent)]
    Lock(#[from] LockError),
    #[error("behavior {0} is not being recorded by this worker")]
    NotRecording(BehaviorId),
    #[error("a recording is already running")]
    AlreadyRecording,
    #[error("`{0}` is not valid here")]
    Unexpected(&'static str),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Canvas(#[from] CanvasError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Asset(#[from] ArchiveError),
}

fn variant<E: std::fmt::Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_owned()
}

impl SessionError {
    /// Short machine-readable reason carried in error replies.
    pub fn cause(&self) -> String {
        match self {
            SessionError::Lock(e) => variant(e),
            SessionError::Store(StoreError::Timeline(e)) => variant(e),
            SessionError::Store(StoreError::Remix(e)) => variant(e),
            SessionError::Store(e) => variant(e),
            SessionError::Canvas(e) => variant(e),
            SessionError::Record(e) => variant(e),
            SessionError::Replay(e) => variant(e),
            SessionError::Asset(_) => "InvalidAsset".into(),
            other => variant(other),
        }
    }

    pub fn reply(&self, attempted_type: &str) -> ErrorReply {
        ErrorReply::new(attempted_type, self.cause(), self.to_string())
    }
}

#[derive(Debug, Clone)]
struct Recording {
    buffer: RecorderBuffer,
    // inverse of every recorded edit, in recording order
    undo: Vec<EditKind>,
}

#[derive(Debug, Clone)]
struct Playback {
    run_id: u64,
    behavior_id: BehaviorId,
    started_at: u64,
    frames: Vec<FrameEdits>,
    next: usize,
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    config: SessionConfig,
    seq: u64,
    now: u64,
    canvas: CanvasState,
    prev: CanvasState,
    store: BehaviorStore,
    assets: BTreeMap<String, AssetRef>,
    presence: BTreeMap<String, Presence>,
    locks: LockTable,
    recordings: BTreeMap<BehaviorId, Recording>,
    playbacks: Vec<Playback>,
    next_run: u64,
    log: Vec<Envelope>,
    outbox: Vec<Envelope>,
}

impl Session {
    pub fn new(id: impl Into<String>, config: SessionConfig) -> Self {
        let locks = LockTable::new(config.lock_ttl_ms);
        Self {
            id: id.into(),
            config,
            seq: 0,
            now: 0,
            canvas: CanvasState::new(),
            prev: CanvasState::new(),
            store: BehaviorStore::new(),
            assets: BTreeMap::new(),
            presence: BTreeMap::new(),
            locks,
            recordings: BTreeMap::new(),
            playbacks: Vec::new(),
            next_run: 1,
            log: Vec::new(),
            outbox: Vec::new(),
        }
    }

    /// Start from a saved session. The op log is not replayed.
    pub fn from_archive(id: impl Into<String>, config: SessionConfig, archive: SessionArchive) -> Self {
        let mut s = Self::new(id, config);
        s.assets = archive.assets.clone();
        let (canvas, store) = archive.into_store();
        s.prev = canvas.clone();
        s.canvas = canvas;
        s.store = store;
        s
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn canvas(&self) -> &CanvasState {
        &self.canvas
    }

    pub fn store(&self) -> &BehaviorStore {
        &self.store
    }

    pub fn locks(&self) -> &LockTable {
        &self.locks
    }

    pub fn log(&self) -> &[Envelope] {
        &self.log
    }

    pub fn workers(&self) -> impl Iterator<Item = &str> {
        self.presence.keys().map(String::as_str)
    }

    pub fn is_running(&self, behavior: &BehaviorId) -> bool {
        self.playbacks.iter().any(|p| &p.behavior_id == behavior)
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            canvas: self.canvas.clone(),
            assets: self.assets.clone(),
            blocks: self.store.blocks.clone(),
            behaviors: self.store.behaviors.clone(),
            bindings: self.store.bindings.clone(),
            presence: self.presence.clone(),
            locks: self.locks.snapshot(),
        }
    }

    pub fn to_archive(&self, with_log: bool) -> SessionArchive {
        let mut a = SessionArchive::new(self.canvas.clone(), &self.store);
        a.assets = self.assets.clone();
        a.op_log = with_log.then(|| self.log.clone());
        a
    }

    /// Broadcasts produced since the last call, in sequence order.
    pub fn drain(&mut self) -> Vec<Envelope> {
        std::mem::take(&mut self.outbox)
    }

    fn emit(&mut self, worker: &str, kind: &str, payload: impl Serialize) {
        self.seq += 1;
        let env = Envelope {
            seq: self.seq,
            kind: kind.to_owned(),
            session_id: self.id.clone(),
            worker_id: worker.to_owned(),
            server_time: self.now,
            payload: serde_json::to_value(payload).expect("payload serializes"),
        };
        self.log.push(env.clone());
        self.outbox.push(env);
    }

    fn emit_lock_events(&mut self, events: Vec<LockEvent>) {
        for ev in events {
            let (kind, worker, payload) = match ev {
                LockEvent::Granted { scope, holder, lease_expiry } => (
                    kind::LOCK_GRANTED,
                    holder.clone(),
                    LockPayload {
                        behavior_id: scope.behavior_id,
                        activity: scope.activity,
                        worker_id: holder,
                        lease_expiry: Some(lease_expiry),
                        position: None,
                        reason: None,
                    },
                ),
                LockEvent::Denied { scope, worker, position } => (
                    kind::LOCK_DENIED,
                    worker.clone(),
                    LockPayload {
                        behavior_id: scope.behavior_id,
                        activity: scope.activity,
                        worker_id: worker,
                        lease_expiry: None,
                        position: Some(position),
                        reason: None,
                    },
                ),
                LockEvent::Released { scope, holder, reason } => (
                    kind::LOCK_RELEASED,
                    holder.clone(),
                    LockPayload {
                        behavior_id: scope.behavior_id,
                        activity: scope.activity,
                        worker_id: holder,
                        lease_expiry: None,
                        position: None,
                        reason: Some(serde_json::to_value(reason).unwrap().as_str().unwrap().to_owned()),
                    },
                ),
                LockEvent::Dequeued { scope, worker } => (
                    kind::LOCK_RELEASED,
                    worker.clone(),
                    LockPayload {
                        behavior_id: scope.behavior_id,
                        activity: scope.activity,
                        worker_id: worker,
                        lease_expiry: None,
                        position: None,
                        reason: Some("dequeued".into()),
                    },
                ),
            };
            self.emit(&worker, kind, payload);
        }
    }

    fn holder_now(&self, scope: &Scope) -> Option<&str> {
        let lock = self.locks.get(scope)?;
        (self.now < lock.lease_expiry).then_some(lock.holder.as_deref()).flatten()
    }

    /// Fails only when someone else holds the scope.
    fn check_not_locked_out(&self, behavior: &BehaviorId, activity: Activity, worker: &str) -> Result<(), SessionError> {
        let scope = Scope::new(behavior.clone(), activity);
        match self.holder_now(&scope) {
            Some(h) if h != worker => Err(SessionError::LockRequired(scope)),
            _ => Ok(()),
        }
    }

    fn require_lock(&self, behavior: &BehaviorId, activity: Activity, worker: &str) -> Result<(), SessionError> {
        let scope = Scope::new(behavior.clone(), activity);
        if self.holder_now(&scope) == Some(worker) {
            Ok(())
        } else {
            Err(SessionError::LockRequired(scope))
        }
    }

    pub fn join(&mut self, worker: &str, now: u64) -> Result<Snapshot, SessionError> {
        self.now = self.now.max(now);
        if self.presence.contains_key(worker) {
            return Err(SessionError::DuplicateWorker(worker.to_owned()));
        }
        let snapshot = Snapshot { session_id: self.id.clone(), seq: self.seq, server_time: self.now, state: self.view() };
        let p = Presence { worker_id: worker.to_owned(), joined_at: self.now, cursor: None, activity: String::new() };
        self.presence.insert(worker.to_owned(), p.clone());
        self.emit(worker, kind::PRESENCE_UPDATE, PresencePayload { worker_id: worker.to_owned(), presence: Some(p) });
        Ok(snapshot)
    }

    /// Disconnect: locks are released, queue entries and any unfinished
    /// recording are dropped.
    pub fn leave(&mut self, worker: &str, now: u64) {
        self.now = self.now.max(now);
        if self.presence.remove(worker).is_none() {
            return;
        }
        self.recordings.retain(|_, r| r.buffer.recording_worker_id != worker);
        let events = self.locks.disconnect(worker, self.now);
        self.emit_lock_events(events);
        self.emit(worker, kind::PRESENCE_UPDATE, PresencePayload { worker_id: worker.to_owned(), presence: None });
    }

    pub fn handle(&mut self, worker: &str, msg: ClientMessage, now: u64) -> Result<(), SessionError> {
        self.now = self.now.max(now);
        if !self.presence.contains_key(worker) {
            return Err(SessionError::NotJoined(worker.to_owned()));
        }
        match msg {
            ClientMessage::Hello { .. } | ClientMessage::Join { .. } => Err(SessionError::Unexpected(msg.type_name())),
            ClientMessage::Edit { edit, behavior_id } => self.edit(worker, edit, behavior_id),
            ClientMessage::StartRecording { behavior_id } => self.start_recording(worker, behavior_id),
            ClientMessage::StopRecording { behavior_id, gap_ms, revert } => {
                self.stop_recording(worker, behavior_id, gap_ms.unwrap_or(self.config.gap_ms), revert.unwrap_or(true))
            }
            ClientMessage::CreateBehavior { name } => {
                let b = self.store.create_behavior(&name)?.clone();
                self.emit(worker, kind::BEHAVIOR_UPDATED, serde_json::json!({ "behavior": b }));
                Ok(())
            }
            ClientMessage::Remix { block_id, fns, behavior_id } => {
                let tick = match &behavior_id {
                    Some(b) => {
                        self.check_not_locked_out(b, Activity::Remix, worker)?;
                        self.store.behavior(b)?.timeline.tick
                    }
                    None => crowdmix_core::DEFAULT_TICK_MS,
                };
                let id = self.store.remix(&block_id, &fns, tick)?;
                let block = self.store.block(&id)?.clone();
                self.emit(worker, kind::BLOCK_CREATED, BlockPayload { block, from: Some(block_id) });
                Ok(())
            }
            ClientMessage::TimelineEdit { behavior_id, op } => {
                self.store.behavior(&behavior_id)?;
                self.check_not_locked_out(&behavior_id, Activity::Remix, worker)?;
                let b = match op {
                    TimelineOp::Place { block_id, start_offset, track } => {
                        self.store.place(&behavior_id, &block_id, start_offset, track)?
                    }
                    TimelineOp::Edit { item_id, edit } => self.store.edit_item(&behavior_id, &item_id, edit)?,
                }
                .clone();
                self.emit(worker, kind::BEHAVIOR_UPDATED, serde_json::json!({ "behavior": b }));
                Ok(())
            }
            ClientMessage::Compile { behavior_id, policy } => {
                self.store.behavior(&behavior_id)?;
                self.check_not_locked_out(&behavior_id, Activity::Remix, worker)?;
                let b = self.store.compile(&behavior_id, policy)?.clone();
                self.emit(worker, kind::BEHAVIOR_UPDATED, serde_json::json!({ "behavior": b }));
                Ok(())
            }
            ClientMessage::Document { behavior_id, trigger_doc, relationship_doc } => {
                self.store.behavior(&behavior_id)?;
                self.check_not_locked_out(&behavior_id, Activity::Document, worker)?;
                let b = self.store.document(&behavior_id, &trigger_doc, &relationship_doc)?.clone();
                self.emit(worker, kind::BEHAVIOR_UPDATED, serde_json::json!({ "behavior": b }));
                Ok(())
            }
            ClientMessage::BindTrigger { behavior_id, trigger } => {
                self.store.behavior(&behavior_id)?;
                self.check_not_locked_out(&behavior_id, Activity::Document, worker)?;
                let binding = TriggerBinding { behavior_id, trigger };
                self.store.bind_trigger(binding.clone(), &self.canvas)?;
                self.emit(worker, kind::BINDING_ADDED, serde_json::json!({ "binding": binding }));
                Ok(())
            }
            ClientMessage::Fire { behavior_id } => self.fire(worker, &behavior_id, FireCause::Manual),
            ClientMessage::LockAcquire { behavior_id, activity } => {
                self.store.behavior(&behavior_id)?;
                let (_, events) = self.locks.acquire(&Scope::new(behavior_id, activity), worker, self.now);
                self.emit_lock_events(events);
                Ok(())
            }
            ClientMessage::LockRelease { behavior_id, activity } => {
                let events = self.locks.release(&Scope::new(behavior_id, activity), worker, self.now)?;
                self.emit_lock_events(events);
                Ok(())
            }
            ClientMessage::Presence { cursor, activity } => {
                let p = self.presence.get_mut(worker).unwrap();
                if cursor.is_some() {
                    p.cursor = cursor;
                }
                if let Some(a) = activity {
                    p.activity = a;
                }
                let p = p.clone();
                self.emit(worker, kind::PRESENCE_UPDATE, PresencePayload { worker_id: worker.to_owned(), presence: Some(p) });
                Ok(())
            }
            ClientMessage::PutAsset { data } => {
                let (hash, entry) = AssetRef::from_base64(&data)?;
                self.assets.insert(hash.clone(), entry);
                self.emit(worker, kind::ASSET_ADDED, AssetPayload { hash, data });
                Ok(())
            }
        }
    }

    fn inverse(&self, edit: &EditKind) -> Result<EditKind, SessionError> {
        let missing = |id: &crowdmix_core::ElementId| SessionError::Canvas(CanvasError::ElementNotFound(id.clone()));
        Ok(match edit {
            EditKind::Create(el) => EditKind::Delete { id: el.id.clone() },
            EditKind::Delete { id } => EditKind::Create(self.canvas.get(id).ok_or_else(|| missing(id))?.clone()),
            EditKind::SetProperty { element, channel, .. } => {
                let old = self.canvas.get(element).ok_or_else(|| missing(element))?.pose.get(*channel);
                EditKind::set(element.clone(), *channel, old)
            }
        })
    }

    fn edit(&mut self, worker: &str, edit: EditKind, behavior_id: Option<BehaviorId>) -> Result<(), SessionError> {
        if let Some(b) = &behavior_id {
            self.store.behavior(b)?;
            self.require_lock(b, Activity::Demonstrate, worker)?;
        }
        let event = EditEvent::new(self.now as f64, worker, edit.clone());
        let next = self.canvas.apply(&event)?;
        let inverse = self.inverse(&edit)?;
        let recording = self
            .recordings
            .iter_mut()
            .find(|(b, r)| r.buffer.recording_worker_id == worker && behavior_id.as_ref().is_none_or(|want| want == *b));
        if let Some((_, rec)) = recording {
            rec.buffer.record(event)?;
            rec.undo.push(inverse);
        }
        self.canvas = next;
        let mut payload = EditPayload::live(edit);
        payload.behavior_id = behavior_id;
        self.emit(worker, kind::EDIT_APPLIED, payload);
        Ok(())
    }

    fn start_recording(&mut self, worker: &str, behavior_id: BehaviorId) -> Result<(), SessionError> {
        self.store.behavior(&behavior_id)?;
        self.require_lock(&behavior_id, Activity::Demonstrate, worker)?;
        if self.recordings.contains_key(&behavior_id) || self.recordings.values().any(|r| r.buffer.recording_worker_id == worker) {
            return Err(SessionError::AlreadyRecording);
        }
        let buffer = RecorderBuffer::start(self.id.clone(), worker, self.now as f64);
        self.recordings.insert(behavior_id.clone(), Recording { buffer, undo: Vec::new() });
        self.emit(worker, kind::RECORDING_STARTED, RecordingPayload { behavior_id, block_ids: vec![] });
        Ok(())
    }

    /// Segment the buffer into session blocks, then (by default) roll the
    /// canvas back so the demonstration can be replayed from where it began.
    fn stop_recording(&mut self, worker: &str, behavior_id: BehaviorId, gap: f64, revert: bool) -> Result<(), SessionError> {
        match self.recordings.get(&behavior_id) {
            Some(r) if r.buffer.recording_worker_id == worker => {}
            _ => return Err(SessionError::NotRecording(behavior_id)),
        }
        if gap.is_nan() || gap <= 0.0 {
            return Err(RecordError::InvalidGap.into());
        }
        let mut rec = self.recordings.remove(&behavior_id).unwrap();
        rec.buffer.stop();
        let blocks = if rec.buffer.events.is_empty() {
            Vec::new()
        } else {
            rec.buffer.segment(gap, &mut IdGen::new("tmp"))?
        };
        let mut ids = Vec::with_capacity(blocks.len());
        for b in blocks {
            let id = self.store.add_block(b);
            let block = self.store.block(&id)?.clone();
            self.emit(worker, kind::BLOCK_CREATED, BlockPayload { block, from: None });
            ids.push(id);
        }
        if revert {
            for inv in rec.undo.into_iter().rev() {
                match self.canvas.apply(&EditEvent::new(self.now as f64, worker, inv.clone())) {
                    Ok(next) => {
                        self.canvas = next;
                        self.emit(worker, kind::EDIT_APPLIED, EditPayload { revert: true, ..EditPayload::live(inv) });
                    }
                    Err(e) => debug!(session = %self.id, error = %e, "revert step skipped"),
                }
            }
        }
        self.emit(worker, kind::RECORDING_STOPPED, RecordingPayload { behavior_id, block_ids: ids });
        Ok(())
    }

    fn fire(&mut self, worker: &str, behavior_id: &BehaviorId, cause: FireCause) -> Result<(), SessionError> {
        let b = self.store.behavior(behavior_id)?;
        let cb = b.compiled.as_ref().ok_or_else(|| StoreError::NotCompiled(behavior_id.clone()))?;
        let frames = replay_edits(cb, &self.canvas, cb.tick)?;
        let duration = cb.duration;
        let run_id = self.next_run;
        self.next_run += 1;
        self.emit(
            worker,
            kind::BEHAVIOR_STARTED,
            RunPayload { behavior_id: behavior_id.clone(), run_id, cause: Some(cause), duration: Some(duration) },
        );
        self.playbacks.push(Playback { run_id, behavior_id: behavior_id.clone(), started_at: self.now, frames, next: 0 });
        self.advance_playbacks();
        Ok(())
    }

    /// Emit every frame that is due; frame order within a run is preserved.
    fn advance_playbacks(&mut self) {
        let now = self.now as f64;
        let mut playbacks = std::mem::take(&mut self.playbacks);
        let mut done = Vec::new();
        for (i, p) in playbacks.iter_mut().enumerate() {
            while let Some(frame) = p.frames.get(p.next) {
                if p.started_at as f64 + frame.t > now {
                    break;
                }
                for edit in frame.edits.clone() {
                    match self.canvas.apply(&EditEvent::new(now, "server", edit.clone())) {
                        Ok(next) => {
                            self.canvas = next;
                            let payload = EditPayload {
                                behavior_id: Some(p.behavior_id.clone()),
                                run_id: Some(p.run_id),
                                frame_t: Some(frame.t),
                                ..EditPayload::live(edit)
                            };
                            self.emit("server", kind::EDIT_APPLIED, payload);
                        }
                        Err(e) => debug!(session = %self.id, error = %e, "playback edit skipped"),
                    }
                }
                p.next += 1;
            }
            if p.next == p.frames.len() {
                let payload = RunPayload { behavior_id: p.behavior_id.clone(), run_id: p.run_id, cause: None, duration: None };
                self.emit("server", kind::BEHAVIOR_ENDED, payload);
                done.push(i);
            }
        }
        for i in done.into_iter().rev() {
            playbacks.remove(i);
        }
        // fires during this call may have queued new runs
        playbacks.append(&mut self.playbacks);
        self.playbacks = playbacks;
    }

    /// Periodic work: lease expiry, due playback frames, then trigger edges
    /// between the previous tick's canvas and the current one.
    pub fn tick(&mut self, now: u64) {
        self.now = self.now.max(now);
        let events = self.locks.expire(self.now);
        self.emit_lock_events(events);
        self.advance_playbacks();
        let current = self.canvas.clone();
        let fired = evaluate_triggers(&self.prev, &current, &self.store.bindings);
        self.prev = current;
        for b in fired {
            if let Err(e) = self.fire("server", &b, FireCause::Trigger) {
                debug!(session = %self.id, behavior = %b, error = %e, "trigger fire failed");
            }
        }
    }
}
