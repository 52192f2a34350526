//! Record worker demonstrations on a shared canvas, remix them as operation
//! blocks, arrange them on timelines and replay the compiled behaviors.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases at the crate root pin the `f64` instantiation used by the server
//! and the command line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod behavior;
pub mod block;
pub mod canvas;
pub mod channel;
pub mod envelope;
pub mod recorder;
pub mod remix;
pub mod scalar;
pub mod timeline;

pub use archive::{load_session, save_session, ArchiveError, AssetRef, AssetStore};
pub use behavior::{evaluate_triggers, BehaviorId, BehaviorStatus, StoreError};
pub use block::{ApplyMode, BlockError, BlockId, BlockKind, IdGen};
pub use canvas::{apply_edit, bounding_box, CanvasError, ElementId, ElementKind};
pub use channel::{ChannelError, ChannelName};
pub use envelope::Envelope;
pub use recorder::{segment, RecordError, DEFAULT_GAP_MS};
pub use remix::{apply_pipeline, RemixError, DEFAULT_TICK_MS};
pub use scalar::Scalar;
pub use timeline::{compile, replay, replay_edits, ConflictPolicy, ReplayError, TimelineError};

pub type Sample = channel::Sample<f64>;
pub type Channel = channel::Channel<f64>;
pub type Pose = canvas::Pose<f64>;
pub type Element = canvas::Element<f64>;
pub type CanvasState = canvas::CanvasState<f64>;
pub type EditKind = canvas::EditKind<f64>;
pub type EditEvent = canvas::EditEvent<f64>;
pub type Rect = canvas::Rect<f64>;
pub type BlockSource = block::BlockSource<f64>;
pub type OpBlock = block::OpBlock<f64>;
pub type RecorderBuffer = recorder::RecorderBuffer<f64>;
pub type RemixFn = remix::RemixFn<f64>;
pub type Anchor = remix::Anchor<f64>;
pub type RemixContext = remix::RemixContext<f64>;
pub type Timeline = timeline::Timeline<f64>;
pub type TimelineItem = timeline::TimelineItem<f64>;
pub type ItemEdit = timeline::ItemEdit<f64>;
pub type Conflict = timeline::Conflict<f64>;
pub type CompiledBehavior = timeline::CompiledBehavior<f64>;
pub type FrameEdits = timeline::FrameEdits<f64>;
pub type Frame = timeline::Frame<f64>;
pub type BlockSet = timeline::BlockSet<f64>;
pub type Behavior = behavior::Behavior<f64>;
pub type TriggerKind = behavior::TriggerKind<f64>;
pub type TriggerBinding = behavior::TriggerBinding<f64>;
pub type BehaviorStore = behavior::BehaviorStore<f64>;
pub type SessionArchive = archive::SessionArchive<f64>;
