//! Wire messages. One JSON object per message, discriminated by `type`.

use std::collections::BTreeMap;

use crowdmix_core::archive::AssetRef;
use crowdmix_core::{
    Behavior, BehaviorId, BlockId, CanvasState, ConflictPolicy, EditKind, ElementId, Envelope, ItemEdit, OpBlock,
    RemixFn, TriggerBinding, TriggerKind,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::locks::{Activity, Lock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum TimelineOp {
    Place { block_id: BlockId, start_offset: f64, track: u32 },
    Edit {
        item_id: String,
        #[serde(flatten)]
        edit: ItemEdit,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum ClientMessage {
    Hello {
        worker_id: String,
    },
    Join {
        session_id: String,
        worker_id: String,
        #[serde(default)]
        create: bool,
    },
    Edit {
        edit: EditKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        behavior_id: Option<BehaviorId>,
    },
    StartRecording {
        behavior_id: BehaviorId,
    },
    StopRecording {
        behavior_id: BehaviorId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gap_ms: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        revert: Option<bool>,
    },
    CreateBehavior {
        name: String,
    },
    Remix {
        block_id: BlockId,
        fns: Vec<RemixFn>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        behavior_id: Option<BehaviorId>,
    },
    TimelineEdit {
        behavior_id: BehaviorId,
        #[serde(flatten)]
        op: TimelineOp,
    },
    Compile {
        behavior_id: BehaviorId,
        #[serde(default)]
        policy: ConflictPolicy,
    },
    Document {
        behavior_id: BehaviorId,
        trigger_doc: String,
        relationship_doc: String,
    },
    BindTrigger {
        behavior_id: BehaviorId,
        trigger: TriggerKind,
    },
    Fire {
        behavior_id: BehaviorId,
    },
    LockAcquire {
        behavior_id: BehaviorId,
        activity: Activity,
    },
    LockRelease {
        behavior_id: BehaviorId,
        activity: Activity,
    },
    Presence {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cursor: Option<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        activity: Option<String>,
    },
    PutAsset {
        data: String,
    },
}

impl ClientMessage {
    pub fn type_name(&self) -> &'static str {
        match self {
            ClientMessage::Hello { .. } => "hello",
            ClientMessage::Join { .. } => "join",
            ClientMessage::Edit { .. } => "edit",
            ClientMessage::StartRecording { .. } => "startRecording",
            ClientMessage::StopRecording { .. } => "stopRecording",
            ClientMessage::CreateBehavior { .. } => "createBehavior",
            ClientMessage::Remix { .. } => "remix",
            ClientMessage::TimelineEdit { .. } => "timelineEdit",
            ClientMessage::Compile { .. } => "compile",
            ClientMessage::Document { .. } => "document",
            ClientMessage::BindTrigger { .. } => "bindTrigger",
            ClientMessage::Fire { .. } => "fire",
            ClientMessage::LockAcquire { .. } => "lockAcquire",
            ClientMessage::LockRelease { .. } => "lockRelease",
            ClientMessage::Presence { .. } => "presence",
            ClientMessage::PutAsset { .. } => "putAsset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Presence {
    pub worker_id: String,
    pub joined_at: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cursor: Option<[f64; 2]>,
    #[serde(default)]
    pub activity: String,
}

/// Everything a client mirrors. Two views are equal iff the states are.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionView {
    pub canvas: CanvasState,
    pub assets: BTreeMap<String, AssetRef>,
    pub blocks: BTreeMap<BlockId, OpBlock>,
    pub behaviors: BTreeMap<BehaviorId, Behavior>,
    pub bindings: Vec<TriggerBinding>,
    pub presence: BTreeMap<String, Presence>,
    pub locks: Vec<Lock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub session_id: String,
    pub seq: u64,
    pub server_time: u64,
    pub state: SessionView,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorReply {
    pub attempted_type: String,
    pub code: String,
    pub cause: String,
    pub message: String,
}

impl ErrorReply {
    pub const VALIDATION_FAILED: &'static str = "ValidationFailed";

    pub fn new(attempted_type: impl Into<String>, cause: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            attempted_type: attempted_type.into(),
            code: Self::VALIDATION_FAILED.into(),
            cause: cause.into(),
            message: message.into(),
        }
    }
}

/// Anything the server sends to one connection.
#[derive(Debug, Clone, PartialEq)]
pub enum ServerMessage {
    Snapshot(Snapshot),
    Broadcast(Envelope),
    Error(ErrorReply),
}

impl ServerMessage {
    pub fn to_value(&self) -> Value {
        let tagged = |kind: &str, body: Value| {
            let mut v = body;
            v.as_object_mut().unwrap().insert("type".into(), Value::from(kind));
            v
        };
        match self {
            ServerMessage::Snapshot(s) => tagged("snapshot", serde_json::to_value(s).unwrap()),
            ServerMessage::Error(e) => tagged("error", serde_json::to_value(e).unwrap()),
            ServerMessage::Broadcast(env) => serde_json::to_value(env).unwrap(),
        }
    }

    pub fn to_json(&self) -> String {
        self.to_value().to_string()
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Ok(match v.get("type").and_then(Value::as_str) {
            Some("snapshot") => ServerMessage::Snapshot(serde_json::from_value(v)?),
            Some("error") => ServerMessage::Error(serde_json::from_value(v)?),
            _ => ServerMessage::Broadcast(serde_json::from_value(v)?),
        })
    }

    pub fn as_envelope(&self) -> Option<&Envelope> {
        match self {
            ServerMessage::Broadcast(e) => Some(e),
            _ => None,
        }
    }
}

/// Broadcast type names.
pub mod kind {
    pub const PRESENCE_UPDATE: &str = "presenceUpdate";
    pub const EDIT_APPLIED: &str = "editApplied";
    pub const BLOCK_CREATED: &str = "blockCreated";
    pub const BEHAVIOR_UPDATED: &str = "behaviorUpdated";
    pub const BINDING_ADDED: &str = "bindingAdded";
    pub const ASSET_ADDED: &str = "assetAdded";
    pub const RECORDING_STARTED: &str = "recordingStarted";
    pub const RECORDING_STOPPED: &str = "recordingStopped";
    pub const BEHAVIOR_STARTED: &str = "behaviorStarted";
    pub const BEHAVIOR_ENDED: &str = "behaviorEnded";
    pub const LOCK_GRANTED: &str = "lockGranted";
    pub const LOCK_DENIED: &str = "lockDenied";
    pub const LOCK_RELEASED: &str = "lockReleased";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PresencePayload {
    pub worker_id: String,
    /// `None` once the worker has left.
    pub presence: Option<Presence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EditPayload {
    pub edit: EditKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub behavior_id: Option<BehaviorId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_t: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub revert: bool,
}

impl EditPayload {
    pub fn live(edit: EditKind) -> Self {
        Self { edit, behavior_id: None, run_id: None, frame_t: None, revert: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BlockPayload {
    pub block: OpBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AssetPayload {
    pub hash: String,
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RecordingPayload {
    pub behavior_id: BehaviorId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub block_ids: Vec<BlockId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum FireCause {
    Manual,
    Trigger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunPayload {
    pub behavior_id: BehaviorId,
    pub run_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<FireCause>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LockPayload {
    pub behavior_id: BehaviorId,
    pub activity: Activity,
    pub worker_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lease_expiry: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

/// Elements a trigger kind refers to, for validation errors.
pub fn trigger_elements(t: &TriggerKind) -> Vec<ElementId> {
    match t {
        TriggerKind::Manual => vec![],
        TriggerKind::Overlap { a, b } | TriggerKind::OnTop { a, b, .. } => vec![a.clone(), b.clone()],
    }
}
