//! Client-side reducer: a snapshot plus the broadcast stream rebuilds the
//! server's view.

use std::collections::{BTreeMap, VecDeque};

use crowdmix_core::{AssetRef, Behavior, CanvasError, Envelope, TriggerBinding};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::locks::{Lock, Scope};
use crate::protocol::{
    kind, AssetPayload, BlockPayload, EditPayload, LockPayload, PresencePayload, SessionView, Snapshot,
};

#[derive(Debug, Error)]
pub enum MirrorError {
    #[error("bad {kind} payload: {source}")]
    Payload { kind: String, source: serde_json::Error },
    #[error(transparent)]
    Canvas(#[from] CanvasError),
    #[error("invalid asset: {0}")]
    Asset(String),
}

#[derive(Deserialize)]
struct BehaviorMsg {
    behavior: Behavior,
}

#[derive(Deserialize)]
struct BindingMsg {
    binding: TriggerBinding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mirror {
    pub session_id: String,
    pub seq: u64,
    pub state: SessionView,
    // out-of-order broadcasts waiting for the gap to fill
    held: BTreeMap<u64, Envelope>,
}

fn payload<P: DeserializeOwned>(env: &Envelope) -> Result<P, MirrorError> {
    env.payload_as().map_err(|source| MirrorError::Payload { kind: env.kind.clone(), source })
}

impl Mirror {
    pub fn from_snapshot(s: Snapshot) -> Self {
        Self { session_id: s.session_id, seq: s.seq, state: s.state, held: BTreeMap::new() }
    }

    /// Sequence numbers still missing before held broadcasts can apply.
    pub fn missing(&self) -> Vec<u64> {
        let Some((&last, _)) = self.held.last_key_value() else { return Vec::new() };
        (self.seq + 1..last).filter(|s| !self.held.contains_key(s)).collect()
    }

    /// Apply a broadcast. Stale ones are ignored and early ones are held
    /// until the gap closes. Returns how many envelopes were applied.
    pub fn receive(&mut self, env: Envelope) -> Result<usize, MirrorError> {
        if env.seq <= self.seq {
            return Ok(0);
        }
        self.held.insert(env.seq, env);
        let mut n = 0;
        while let Some(next) = self.held.remove(&(self.seq + 1)) {
            self.apply(&next)?;
            self.seq = next.seq;
            n += 1;
        }
        Ok(n)
    }

    fn apply(&mut self, env: &Envelope) -> Result<(), MirrorError> {
        let st = &mut self.state;
        match env.kind.as_str() {
            kind::PRESENCE_UPDATE => {
                let p: PresencePayload = payload(env)?;
                match p.presence {
                    Some(pr) => st.presence.insert(p.worker_id, pr),
                    None => st.presence.remove(&p.worker_id),
                };
            }
            kind::EDIT_APPLIED => {
                let p: EditPayload = payload(env)?;
                st.canvas.apply_in_place(&p.edit)?;
            }
            kind::BLOCK_CREATED => {
                let p: BlockPayload = payload(env)?;
                st.blocks.insert(p.block.id.clone(), p.block);
            }
            kind::BEHAVIOR_UPDATED => {
                let p: BehaviorMsg = payload(env)?;
                st.behaviors.insert(p.behavior.id.clone(), p.behavior);
            }
            kind::BINDING_ADDED => {
                let p: BindingMsg = payload(env)?;
                st.bindings.push(p.binding);
            }
            kind::ASSET_ADDED => {
                let p: AssetPayload = payload(env)?;
                let (hash, entry) = AssetRef::from_base64(&p.data).map_err(|e| MirrorError::Asset(e.to_string()))?;
                st.assets.insert(hash, entry);
            }
            kind::LOCK_GRANTED | kind::LOCK_DENIED | kind::LOCK_RELEASED => {
                let p: LockPayload = payload(env)?;
                apply_lock(&mut st.locks, &env.kind, p);
            }
            // run markers and recording markers carry no state of their own
            _ => {}
        }
        Ok(())
    }
}

fn apply_lock(locks: &mut Vec<Lock>, kind: &str, p: LockPayload) {
    let scope = Scope::new(p.behavior_id, p.activity);
    let i = match locks.binary_search_by(|l| l.scope.cmp(&scope)) {
        Ok(i) => i,
        Err(i) => {
            locks.insert(i, Lock { scope, holder: None, lease_expiry: 0, waiters: VecDeque::new() });
            i
        }
    };
    let lock = &mut locks[i];
    match kind {
        kind::LOCK_GRANTED => {
            lock.holder = Some(p.worker_id.clone());
            lock.lease_expiry = p.lease_expiry.unwrap_or_default();
            lock.waiters.retain(|w| *w != p.worker_id);
        }
        kind::LOCK_DENIED => {
            if !lock.waiters.contains(&p.worker_id) {
                lock.waiters.push_back(p.worker_id);
            }
        }
        _ if p.reason.as_deref() == Some("dequeued") => lock.waiters.retain(|w| *w != p.worker_id),
        _ => lock.holder = None,
    }
    if lock.holder.is_none() && lock.waiters.is_empty() {
        locks.remove(i);
    }
}
