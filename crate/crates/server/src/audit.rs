//! Offline checks over a broadcast log.

use std::collections::{BTreeMap, VecDeque};

use crowdmix_core::Envelope;

use crate::locks::Scope;
use crate::protocol::{kind, LockPayload};

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct LockAudit {
    pub ops: usize,
    pub grants: usize,
    pub queued: usize,
    pub promoted: usize,
    pub dequeued: usize,
    pub expired: usize,
    /// Longest wait between a lock becoming free and its head waiter being granted.
    pub max_promotion_delay: u64,
    /// Longest time a holder stayed recorded past its lease.
    pub max_eviction_delay: u64,
    /// Workers still queued when the log ends.
    pub still_waiting: usize,
}

#[derive(Default)]
struct ScopeState {
    holder: Option<(String, u64)>,
    waiters: VecDeque<String>,
    free_since: Option<u64>,
}

/// Replay lock broadcasts and check: one holder at a time, FIFO promotion,
/// expired holders evicted within `tick_ms` of expiry, and a freed lock's
/// head waiter granted within `tick_ms` of the lock becoming available.
pub fn audit_locks(log: &[Envelope], tick_ms: u64) -> Result<LockAudit, String> {
    let mut scopes: BTreeMap<Scope, ScopeState> = BTreeMap::new();
    let mut a = LockAudit::default();
    for env in log {
        if !matches!(env.kind.as_str(), kind::LOCK_GRANTED | kind::LOCK_DENIED | kind::LOCK_RELEASED) {
            continue;
        }
        a.ops += 1;
        let p: LockPayload = env.payload_as().map_err(|e| format!("seq {}: {e}", env.seq))?;
        let t = env.server_time;
        let st = scopes.entry(Scope::new(p.behavior_id, p.activity)).or_default();
        let w = p.worker_id;
        match env.kind.as_str() {
            kind::LOCK_GRANTED => {
                let expiry = p.lease_expiry.ok_or_else(|| format!("seq {}: grant without lease", env.seq))?;
                match &st.holder {
                    Some((h, _)) if *h != w => return Err(format!("seq {}: {w} granted while {h} holds", env.seq)),
                    Some(_) => {}
                    None => {
                        if let Some(pos) = st.waiters.iter().position(|x| *x == w) {
                            if pos != 0 {
                                return Err(format!("seq {}: {w} promoted ahead of {}", env.seq, st.waiters[0]));
                            }
                            st.waiters.pop_front();
                            let since = st.free_since.unwrap_or(t);
                            let delay = t.saturating_sub(since);
                            if delay > tick_ms {
                                return Err(format!("seq {}: {w} waited {delay} ms after the lock freed", env.seq));
                            }
                            a.max_promotion_delay = a.max_promotion_delay.max(delay);
                            a.promoted += 1;
                        }
                    }
                }
                st.holder = Some((w, expiry));
                st.free_since = None;
                a.grants += 1;
            }
            kind::LOCK_DENIED => {
                if st.holder.is_none() {
                    return Err(format!("seq {}: {w} denied a free lock", env.seq));
                }
                if !st.waiters.contains(&w) {
                    st.waiters.push_back(w);
                    a.queued += 1;
                }
            }
            _ if p.reason.as_deref() == Some("dequeued") => {
                st.waiters.retain(|x| *x != w);
                a.dequeued += 1;
            }
            _ => {
                let Some((h, expiry)) = st.holder.take() else {
                    return Err(format!("seq {}: release of a free lock", env.seq));
                };
                if h != w {
                    return Err(format!("seq {}: {w} released a lock held by {h}", env.seq));
                }
                let free_at = if p.reason.as_deref() == Some("expired") {
                    if t < expiry {
                        return Err(format!("seq {}: lease expired early", env.seq));
                    }
                    let delay = t - expiry;
                    if delay > tick_ms {
                        return Err(format!("seq {}: eviction {delay} ms late", env.seq));
                    }
                    a.max_eviction_delay = a.max_eviction_delay.max(delay);
                    a.expired += 1;
                    expiry
                } else {
                    t
                };
                st.free_since = Some(free_at);
            }
        }
        if st.holder.is_none() && !st.waiters.is_empty() && st.free_since.is_none() {
            return Err(format!("seq {}: waiters on a lock that was never freed", env.seq));
        }
    }
    for (scope, st) in &scopes {
        if st.holder.is_none() && !st.waiters.is_empty() {
            return Err(format!("{scope}: lock left free with {} waiting", st.waiters.len()));
        }
        a.still_waiting += st.waiters.len();
    }
    Ok(a)
}
