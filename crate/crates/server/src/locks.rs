//! Lease-based activity locks with FIFO waiters.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use crowdmix_core::BehaviorId;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_LOCK_TTL_MS: u64 = 30_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activity {
    Demonstrate,
    Remix,
    Document,
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activity::Demonstrate => "demonstrate",
            Activity::Remix => "remix",
            Activity::Document => "document",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Scope {
    pub behavior_id: BehaviorId,
    pub activity: Activity,
}

impl Scope {
    pub fn new(behavior_id: impl Into<BehaviorId>, activity: Activity) -> Self {
        Self { behavior_id: behavior_id.into(), activity }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.behavior_id, self.activity)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Lock {
    pub scope: Scope,
    pub holder: Option<String>,
    pub lease_expiry: u64,
    pub waiters: VecDeque<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReleaseReason {
    Released,
    Expired,
    Disconnected,
}

/// State transitions, in the order they happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LockEvent {
    Granted { scope: Scope, holder: String, lease_expiry: u64 },
    Denied { scope: Scope, worker: String, position: usize },
    Released { scope: Scope, holder: String, reason: ReleaseReason },
    Dequeued { scope: Scope, worker: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Acquire {
    Grant { lease_expiry: u64 },
    Denied { position: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LockError {
    #[error("{worker} does not hold {scope}")]
    NotHolder { scope: Scope, worker: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockTable {
    ttl: u64,
    locks: BTreeMap<Scope, Lock>,
}

impl Default for LockTable {
    fn default() -> Self {
        Self::new(DEFAULT_LOCK_TTL_MS)
    }
}

impl LockTable {
    pub fn new(ttl: u64) -> Self {
        assert!(ttl > 0, "lock ttl must be positive");
        Self { ttl, locks: BTreeMap::new() }
    }

    pub fn ttl(&self) -> u64 {
        self.ttl
    }

    pub fn holder(&self, scope: &Scope) -> Option<&str> {
        self.locks.get(scope)?.holder.as_deref()
    }

    pub fn get(&self, scope: &Scope) -> Option<&Lock> {
        self.locks.get(scope)
    }

    /// Locks with a holder or waiters, in scope order.
    pub fn snapshot(&self) -> Vec<Lock> {
        self.locks.values().filter(|l| l.holder.is_some() || !l.waiters.is_empty()).cloned().collect()
    }

    fn grant_next(&mut self, scope: &Scope, now: u64, events: &mut Vec<LockEvent>) {
        let ttl = self.ttl;
        let lock = self.locks.get_mut(scope).expect("lock exists");
        if lock.holder.is_some() {
            return;
        }
        if let Some(next) = lock.waiters.pop_front() {
            lock.holder = Some(next.clone());
            lock.lease_expiry = now + ttl;
            events.push(LockEvent::Granted { scope: scope.clone(), holder: next, lease_expiry: now + ttl });
        }
    }

    fn evict_if_expired(&mut self, scope: &Scope, now: u64, events: &mut Vec<LockEvent>) {
        let Some(lock) = self.locks.get_mut(scope) else { return };
        if lock.holder.is_some() && now >= lock.lease_expiry {
            let holder = lock.holder.take().unwrap();
            events.push(LockEvent::Released { scope: scope.clone(), holder, reason: ReleaseReason::Expired });
            self.grant_next(scope, now, events);
        }
    }

    /// Grant a free or expired scope, renew the holder's lease, or queue.
    pub fn acquire(&mut self, scope: &Scope, worker: &str, now: u64) -> (Acquire, Vec<LockEvent>) {
        let mut events = Vec::new();
        self.evict_if_expired(scope, now, &mut events);
        let ttl = self.ttl;
        let lock = self.locks.entry(scope.clone()).or_insert_with(|| Lock {
            scope: scope.clone(),
            holder: None,
            lease_expiry: 0,
            waiters: VecDeque::new(),
        });
        let result = if lock.holder.as_deref().is_none_or(|h| h == worker) {
            lock.holder = Some(worker.to_owned());
            lock.lease_expiry = now + ttl;
            events.push(LockEvent::Granted { scope: scope.clone(), holder: worker.to_owned(), lease_expiry: now + ttl });
            Acquire::Grant { lease_expiry: now + ttl }
        } else {
            let position = match lock.waiters.iter().position(|w| w == worker) {
                Some(i) => i + 1,
                None => {
                    lock.waiters.push_back(worker.to_owned());
                    lock.waiters.len()
                }
            };
            events.push(LockEvent::Denied { scope: scope.clone(), worker: worker.to_owned(), position });
            Acquire::Denied { position }
        };
        (result, events)
    }

    pub fn release(&mut self, scope: &Scope, worker: &str, now: u64) -> Result<Vec<LockEvent>, LockError> {
        let mut events = Vec::new();
        self.evict_if_expired(scope, now, &mut events);
        let held = self.locks.get(scope).and_then(|l| l.holder.as_deref()) == Some(worker);
        if !held {
            return Err(LockError::NotHolder { scope: scope.clone(), worker: worker.to_owned() });
        }
        self.locks.get_mut(scope).unwrap().holder = None;
        events.push(LockEvent::Released { scope: scope.clone(), holder: worker.to_owned(), reason: ReleaseReason::Released });
        self.grant_next(scope, now, &mut events);
        Ok(events)
    }

    /// Evict every holder whose lease has run out and promote head waiters.
    pub fn expire(&mut self, now: u64) -> Vec<LockEvent> {
        let mut events = Vec::new();
        let scopes: Vec<Scope> = self.locks.keys().cloned().collect();
        for s in &scopes {
            self.evict_if_expired(s, now, &mut events);
        }
        events
    }

    /// Drop a departed worker: its locks are released and its queue entries removed.
    pub fn disconnect(&mut self, worker: &str, now: u64) -> Vec<LockEvent> {
        let mut events = Vec::new();
        let scopes: Vec<Scope> = self.locks.keys().cloned().collect();
        for s in &scopes {
            let lock = self.locks.get_mut(s).unwrap();
            if let Some(i) = lock.waiters.iter().position(|w| w == worker) {
                lock.waiters.remove(i);
                events.push(LockEvent::Dequeued { scope: s.clone(), worker: worker.to_owned() });
            }
            if lock.holder.as_deref() == Some(worker) {
                lock.holder = None;
                events.push(LockEvent::Released { scope: s.clone(), holder: worker.to_owned(), reason: ReleaseReason::Disconnected });
                self.grant_next(s, now, &mut events);
            }
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scope() -> Scope {
        Scope::new("bh1", Activity::Demonstrate)
    }

    #[test]
    fn free_scope_grants_with_ttl() {
        let mut t = LockTable::default();
        let (r, ev) = t.acquire(&scope(), "w1", 100);
        assert_eq!(r, Acquire::Grant { lease_expiry: 30_100 });
        assert_eq!(ev.len(), 1);
    }

    #[test]
    fn held_scope_queues() {
        let mut t = LockTable::default();
        t.acquire(&scope(), "w1", 0);
        assert_eq!(t.acquire(&scope(), "w2", 1).0, Acquire::Denied { position: 1 });
        assert_eq!(t.acquire(&scope(), "w3", 2).0, Acquire::Denied { position: 2 });
        assert_eq!(t.acquire(&scope(), "w2", 3).0, Acquire::Denied { position: 1 });
    }

    #[test]
    fn holder_renews() {
        let mut t = LockTable::default();
        t.acquire(&scope(), "w1", 0);
        assert_eq!(t.acquire(&scope(), "w1", 500).0, Acquire::Grant { lease_expiry: 30_500 });
        assert_eq!(t.holder(&scope()), Some("w1"));
    }

    #[test]
    fn release_promotes_head_waiter() {
        let mut t = LockTable::default();
        t.acquire(&scope(), "w1", 0);
        t.acquire(&scope(), "w2", 0);
        let ev = t.release(&scope(), "w1", 10).unwrap();
        assert_eq!(t.holder(&scope()), Some("w2"));
        assert!(matches!(&ev[1], LockEvent::Granted { holder, lease_expiry: 30_010, .. } if holder == "w2"));
    }

    #[test]
    fn expiry_evicts_and_promotes() {
        let mut t = LockTable::default();
        t.acquire(&scope(), "w1", 0);
        t.acquire(&scope(), "w2", 0);
        assert!(t.expire(29_999).is_empty());
        let ev = t.expire(30_001);
        assert!(matches!(&ev[0], LockEvent::Released { reason: ReleaseReason::Expired, .. }));
        assert_eq!(t.holder(&scope()), Some("w2"));
    }

    #[test]
    fn expiry_at_exact_boundary() {
        let mut t = LockTable::default();
        t.acquire(&scope(), "w1", 0);
        assert_eq!(t.expire(30_000).len(), 1);
        assert_eq!(t.holder(&scope()), None);
    }

    #[test]
    fn expired_lock_can_be_taken_before_a_sweep() {
        let mut t = LockTable::default();
        t.acquire(&scope(), "w1", 0);
        let (r, ev) = t.acquire(&scope(), "w2", 40_000);
        assert_eq!(r, Acquire::Grant { lease_expiry: 70_000 });
        assert_eq!(ev.len(), 2);
    }

    #[test]
    fn release_by_non_holder() {
        let mut t = LockTable::default();
        t.acquire(&scope(), "w1", 0);
        assert!(matches!(t.release(&scope(), "w2", 1), Err(LockError::NotHolder { .. })));
        assert!(matches!(t.release(&Scope::new("bh9", Activity::Remix), "w1", 1), Err(LockError::NotHolder { .. })));
    }

    #[test]
    fn disconnect_releases_and_dequeues() {
        let mut t = LockTable::default();
        let other = Scope::new("bh2", Activity::Remix);
        t.acquire(&scope(), "w1", 0);
        t.acquire(&scope(), "w2", 0);
        t.acquire(&scope(), "w3", 0);
        t.acquire(&other, "w3", 0);
        t.acquire(&other, "w1", 0);
        t.disconnect("w1", 5);
        assert_eq!(t.holder(&scope()), Some("w2"));
        assert_eq!(t.get(&other).unwrap().waiters.len(), 0);
        assert_eq!(t.get(&scope()).unwrap().waiters, VecDeque::from(vec!["w3".to_owned()]));
    }
}
