//! Sequenced message wrapper shared by the server, clients and session logs.

use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Envelope {
    pub seq: u64,
    #[serde(rename = "type")]
    pub kind: String,
    pub session_id: String,
    pub worker_id: String,
    pub server_time: u64,
    pub payload: Value,
}

impl Envelope {
    pub fn payload_as<P: serde::de::DeserializeOwned>(&self) -> serde_json::Result<P> {
        serde_json::from_value(self.payload.clone())
    }
}

/// True when `log` has consecutive sequence numbers starting after `after`.
pub fn is_gapless(after: u64, log: &[Envelope]) -> bool {
    log.iter().zip(after + 1..).all(|(e, want)| e.seq == want)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(seq: u64) -> Envelope {
        Envelope {
            seq,
            kind: "edit".into(),
            session_id: "s".into(),
            worker_id: "w".into(),
            server_time: 0,
            payload: Value::Null,
        }
    }

    #[test]
    fn wire_names() {
        let v = serde_json::to_value(env(3)).unwrap();
        assert_eq!(v["type"], "edit");
        assert_eq!(v["sessionId"], "s");
        assert_eq!(v["serverTime"], 0);
    }

    #[test]
    fn gaps() {
        assert!(is_gapless(4, &[env(5), env(6)]));
        assert!(!is_gapless(4, &[env(5), env(7)]));
        assert!(!is_gapless(4, &[env(4)]));
        assert!(is_gapless(9, &[]));
    }
}
