#![allow(dead_code)]

use crowdmix_core::{ChannelName, EditKind, Element};
use crowdmix_server::protocol::ClientMessage;
use crowdmix_server::{Activity, HubConfig, Loopback};

pub const SESSION: &str = "s1";

pub fn loopback() -> Loopback {
    Loopback::new(HubConfig::default())
}

pub fn joined(workers: &[&str]) -> Loopback {
    let mut lb = loopback();
    for w in workers {
        assert!(lb.join(w, SESSION).is_empty());
    }
    lb
}

pub fn ok(errors: Vec<crowdmix_server::protocol::ErrorReply>) {
    assert!(errors.is_empty(), "unexpected errors: {errors:?}");
}

pub fn create_behavior(name: &str) -> ClientMessage {
    ClientMessage::CreateBehavior { name: name.into() }
}

pub fn acquire(b: &str, activity: Activity) -> ClientMessage {
    ClientMessage::LockAcquire { behavior_id: b.into(), activity }
}

pub fn release(b: &str, activity: Activity) -> ClientMessage {
    ClientMessage::LockRelease { behavior_id: b.into(), activity }
}

pub fn spawn(id: &str) -> ClientMessage {
    ClientMessage::Edit { edit: EditKind::Create(Element::shape(id, 10.0, 10.0)), behavior_id: None }
}

pub fn set(id: &str, ch: ChannelName, v: f64, behavior: Option<&str>) -> ClientMessage {
    ClientMessage::Edit { edit: EditKind::set(id, ch, v), behavior_id: behavior.map(Into::into) }
}
