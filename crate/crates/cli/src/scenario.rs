//! Scripted multi-client simulations on a simulated clock.
//!
//! A scenario is JSON:
//!
//! ```json
//! {
//!   "session": "demo",
//!   "tickMs": 50,
//!   "steps": [
//!     { "at": 0, "client": "w1", "message": { "type": "createBehavior", "name": "walk" } },
//!     { "at": 900, "client": "w1", "disconnect": true }
//!   ],
//!   "assertions": [
//!     { "at": 1000, "path": "/behaviors/bh1/status", "equals": "draft" },
//!     { "at": 1000, "path": "/canvas/elements/e1", "exists": false },
//!     { "at": 1000, "path": "/canvas/elements/e2/pose/x", "approx": 12.5, "tol": 1e-6 }
//!   ]
//! }
//! ```
//!
//! Paths are JSON pointers into the session view (`canvas`, `blocks`,
//! `behaviors`, `bindings`, `assets`, `presence`, `locks`). A client that
//! sends anything before `join` is joined to the scenario's session first.
//! At each instant the clock advances, then that instant's steps run, then
//! its assertions are checked. `saveAt` picks the instant whose state is
//! written by `simulate --save` (default: the end).

use std::collections::{BTreeSet, VecDeque};

use crowdmix_core::archive::to_canonical_value;
use crowdmix_core::SessionArchive;
use crowdmix_server::audit::audit_locks;
use crowdmix_server::{ClientMessage, HubConfig, Loopback, SessionConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

fn default_session() -> String {
    "sim".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_session")]
    pub session: String,
    pub lock_ttl_ms: Option<u64>,
    pub tick_ms: Option<u64>,
    pub end_at: Option<u64>,
    /// Capture the saved session at this instant instead of at the end.
    pub save_at: Option<u64>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Step {
    pub at: u64,
    pub client: String,
    pub message: Option<ClientMessage>,
    #[serde(default)]
    pub disconnect: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Assertion {
    pub at: u64,
    pub path: String,
    pub label: Option<String>,
    pub equals: Option<Value>,
    pub exists: Option<bool>,
    pub approx: Option<f64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Outcome {
    pub at: u64,
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub passed: bool,
    pub expected: String,
    pub actual: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Rejection {
    pub at: u64,
    pub client: String,
    pub attempted_type: String,
    pub cause: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Report {
    pub outcomes: Vec<Outcome>,
    pub rejections: Vec<Rejection>,
    pub lock_audit: Result<(), String>,
    pub final_seq: u64,
    pub end_time: u64,
}

impl Report {
    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| !o.passed).count() + usize::from(self.lock_audit.is_err())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for o in &self.outcomes {
            let verdict = if o.passed { "PASS" } else { "FAIL" };
            let name = o.label.as_deref().unwrap_or(&o.path);
            s += &format!("{verdict} t={} {name}: expected {}, got {}\n", o.at, o.expected, o.actual);
        }
        for r in &self.rejections {
            s += &format!("note t={} {} {} rejected: {}\n", r.at, r.client, r.attempted_type, r.cause);
        }
        if let Err(e) = &self.lock_audit {
            s += &format!("FAIL lock audit: {e}\n");
        }
        s
    }
}

impl Assertion {
    fn check(&self, root: &Value) -> Result<Outcome, CliError> {
        let actual = root.pointer(&self.path).cloned();
        let (passed, expected) = match (&self.equals, self.exists, self.approx) {
            (Some(v), None, None) => (actual.as_ref().is_some_and(|a| json_eq(a, v)), v.to_string()),
            (None, Some(e), None) => (actual.is_some() == e, if e { "present".into() } else { "absent".into() }),
            (None, None, Some(x)) => {
                let tol = self.tol.unwrap_or(1e-9);
                let ok = actual.as_ref().and_then(Value::as_f64).is_some_and(|a| (a - x).abs() <= tol);
                (ok, format!("{x} ± {tol:e}"))
            }
            _ => {
                return Err(CliError::Scenario(format!(
                    "assertion on {} needs exactly one of equals, exists, approx",
                    self.path
                )))
            }
        };
        Ok(Outcome {
            at: self.at,
            path: self.path.clone(),
            label: self.label.clone(),
            passed,
            expected,
            actual: actual.unwrap_or(Value::Null),
        })
    }
}

/// Structural equality where numbers compare by value.
pub fn json_eq(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => x.as_f64() == y.as_f64(),
        (Value::Array(x), Value::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_eq(p, q)),
        (Value::Object(x), Value::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_eq(v, w)))
        }
        _ => a == b,
    }
}

pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let sc: Scenario = serde_json::from_str(text).map_err(|e| CliError::Parse { line: e.line(), message: e.to_string() })?;
    if sc.steps.windows(2).any(|w| w[0].at > w[1].at) {
        return Err(CliError::Scenario("steps must be in time order".into()));
    }
    for s in &sc.steps {
        if s.message.is_some() == s.disconnect {
            return Err(CliError::Scenario(format!("step at {} needs exactly one of message, disconnect", s.at)));
        }
    }
    Ok(sc)
}

/// Reorder same-instant steps from different clients; each client's own
/// steps keep their order.
fn interleave(steps: &[Step], seed: Option<u64>) -> Vec<Step> {
    let Some(seed) = seed else { return steps.to_vec() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(steps.len());
    for group in steps.chunk_by(|a, b| a.at == b.at) {
        let mut queues: Vec<(String, VecDeque<Step>)> = Vec::new();
        for s in group {
            match queues.iter_mut().find(|(c, _)| *c == s.client) {
                Some((_, q)) => q.push_back(s.clone()),
                None => queues.push((s.client.clone(), VecDeque::from([s.clone()]))),
            }
        }
        while !queues.is_empty() {
            let i = rng.gen_range(0..queues.len());
            out.push(queues[i].1.pop_front().unwrap());
            if queues[i].1.is_empty() {
                queues.remove(i);
            }
        }
    }
    out
}

pub struct Outcomes {
    pub report: Report,
    pub archive: SessionArchive,
}

pub fn run(sc: &Scenario, seed: Option<u64>) -> Result<Outcomes, CliError> {
    let defaults = SessionConfig::default();
    let config = HubConfig {
        session: SessionConfig {
            lock_ttl_ms: sc.lock_ttl_ms.unwrap_or(defaults.lock_ttl_ms),
            tick_ms: sc.tick_ms.unwrap_or(defaults.tick_ms),
            ..defaults
        },
        ..HubConfig::default()
    };
    let mut lb = Loopback::new(config);
    let steps = interleave(&sc.steps, seed);
    let mut times: BTreeSet<u64> = steps.iter().map(|s| s.at).chain(sc.assertions.iter().map(|a| a.at)).collect();
    times.extend(sc.end_at);
    times.extend(sc.save_at);

    let mut joined: BTreeSet<String> = BTreeSet::new();
    let mut outcomes = Vec::new();
    let mut rejections = Vec::new();
    let mut next_step = 0;
    let mut saved = None;
    for &t in &times {
        lb.advance_to(t);
        while let Some(step) = steps.get(next_step).filter(|s| s.at == t) {
            next_step += 1;
            if step.disconnect {
                lb.leave(&step.client);
                joined.remove(&step.client);
                continue;
            }
            let msg = step.message.clone().unwrap();
            let is_join = matches!(msg, ClientMessage::Join { .. });
            let mut errors = Vec::new();
            if !is_join && !joined.contains(&step.client) {
                errors.extend(lb.join(&step.client, &sc.session));
            }
            errors.extend(lb.send(&step.client, msg));
            if is_join || errors.iter().all(|e| e.attempted_type != "join") {
                joined.insert(step.client.clone());
            }
            rejections.extend(errors.into_iter().map(|e| Rejection {
                at: t,
                client: step.client.clone(),
                attempted_type: e.attempted_type,
                cause: e.cause,
            }));
        }
        let due: Vec<&Assertion> = sc.assertions.iter().filter(|a| a.at == t).collect();
        if !due.is_empty() {
            let view = lb.hub.session(&sc.session).map(|s| s.view()).unwrap_or_default();
            let root = to_canonical_value(&view).expect("view serializes");
            for a in due {
                outcomes.push(a.check(&root)?);
            }
        }
        if sc.save_at == Some(t) {
            saved = lb.hub.session(&sc.session).map(|s| s.to_archive(true));
        }
    }

    let session = lb.hub.session(&sc.session);
    let tick = lb.hub.config().session.tick_ms;
    let lock_audit = session.map_or(Ok(()), |s| audit_locks(s.log(), tick).map(|_| ()));
    let archive = saved.or_else(|| session.map(|s| s.to_archive(true))).unwrap_or_else(|| SessionArchive::new(Default::default(), &Default::default()));
    let report = Report {
        outcomes,
        rejections,
        lock_audit,
        final_seq: session.map_or(0, |s| s.seq()),
        end_time: lb.now(),
    };
    Ok(Outcomes { report, archive })
}
