//! Behaviors with their documentation, trigger bindings and the block pool
//! they draw from.
//!
//! A behavior carries three things: what sets it off (trigger text), what it
//! visibly does (the compiled timeline) and what it implies beyond the
//! visuals (relationship text). Both texts are free-form notes for people,
//! not rules the engine evaluates.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{BlockId, IdGen, OpBlock};
use crate::canvas::{bounding_box, CanvasState, ElementId};
use crate::remix::{apply_pipeline, RemixContext, RemixError, RemixFn};
use crate::scalar::Scalar;
use crate::timeline::{compile, BlockSet, CompiledBehavior, ConflictPolicy, ItemEdit, Timeline, TimelineError};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorId(pub String);

impl BehaviorId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BehaviorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BehaviorId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BehaviorStatus {
    Draft,
    Compiled,
    Documented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct Behavior<T: Scalar> {
    pub id: BehaviorId,
    pub name: String,
    pub trigger_doc: String,
    pub relationship_doc: String,
    pub timeline: Timeline<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compiled: Option<CompiledBehavior<T>>,
    pub status: BehaviorStatus,
    pub version: u64,
}

impl<T: Scalar> Behavior<T> {
    fn has_docs(&self) -> bool {
        !self.trigger_doc.trim().is_empty() && !self.relationship_doc.trim().is_empty()
    }

    fn refresh_status(&mut self) {
        self.status = match (&self.compiled, self.has_docs()) {
            (None, _) => BehaviorStatus::Draft,
            (Some(_), false) => BehaviorStatus::Compiled,
            (Some(_), true) => BehaviorStatus::Documented,
        };
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", bound = "")]
pub enum TriggerKind<T: Scalar> {
    /// Fired by a worker through the protocol.
    Manual,
    /// Bounding boxes of `a` and `b` start to intersect.
    Overlap { a: ElementId, b: ElementId },
    /// `a` comes to rest on `b`: its bottom edge within `epsilon` of b's top
    /// edge while the two overlap horizontally.
    OnTop { a: ElementId, b: ElementId, epsilon: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct TriggerBinding<T: Scalar> {
    pub behavior_id: BehaviorId,
    pub trigger: TriggerKind<T>,
}

impl<T: Scalar> TriggerKind<T> {
    fn elements(&self) -> Vec<&ElementId> {
        match self {
            TriggerKind::Manual => vec![],
            TriggerKind::Overlap { a, b } | TriggerKind::OnTop { a, b, .. } => vec![a, b],
        }
    }

    /// Level condition on one canvas state; missing elements never satisfy it.
    pub fn holds(&self, state: &CanvasState<T>) -> bool {
        let boxes = |a: &ElementId, b: &ElementId| Some((bounding_box(state.get(a)?), bounding_box(state.get(b)?)));
        match self {
            TriggerKind::Manual => false,
            TriggerKind::Overlap { a, b } => boxes(a, b).is_some_and(|(ra, rb)| ra.intersects(&rb)),
            TriggerKind::OnTop { a, b, epsilon } => boxes(a, b)
                .is_some_and(|(ra, rb)| (ra.y1 - rb.y0).abs() <= *epsilon && ra.overlaps_horizontally(&rb)),
        }
    }
}

/// Behaviors whose geometric trigger became true between `prev` and `now`.
/// Sorted by id, each at most once.
pub fn evaluate_triggers<T: Scalar>(
    prev: &CanvasState<T>,
    now: &CanvasState<T>,
    bindings: &[TriggerBinding<T>],
) -> Vec<BehaviorId> {
    let mut fired: Vec<BehaviorId> = bindings
        .iter()
        .filter(|b| b.trigger.holds(now) && !b.trigger.holds(prev))
        .map(|b| b.behavior_id.clone())
        .collect();
    fired.sort();
    fired.dedup();
    fired
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoreError {
    #[error("unknown behavior {0}")]
    UnknownBehavior(BehaviorId),
    #[error("a behavior named `{0}` already exists")]
    DuplicateName(String),
    #[error("behavior name must not be empty")]
    InvalidName,
    #[error("behavior {0} has not been compiled")]
    NotCompiled(BehaviorId),
    #[error("documentation must not be empty")]
    EmptyDoc,
    #[error("unknown element {0}")]
    UnknownElement(ElementId),
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Remix(#[from] RemixError),
}

/// Behaviors, the blocks they arrange and their trigger bindings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct BehaviorStore<T: Scalar> {
    pub behaviors: BTreeMap<BehaviorId, Behavior<T>>,
    pub blocks: BlockSet<T>,
    pub bindings: Vec<TriggerBinding<T>>,
    behavior_ids: IdGen,
    block_ids: IdGen,
}

impl<T: Scalar> Default for BehaviorStore<T> {
    fn default() -> Self {
        Self {
            behaviors: BTreeMap::new(),
            blocks: BTreeMap::new(),
            bindings: Vec::new(),
            behavior_ids: IdGen::new("bh"),
            block_ids: IdGen::new("b"),
        }
    }
}

fn numeric_suffix(id: &str, prefix: &str) -> u64 {
    id.strip_prefix(prefix).and_then(|n| n.parse().ok()).unwrap_or(0)
}

impl<T: Scalar> BehaviorStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild from persisted parts, resuming id numbering past existing ids.
    pub fn from_parts(blocks: Vec<OpBlock<T>>, behaviors: Vec<Behavior<T>>, bindings: Vec<TriggerBinding<T>>) -> Self {
        let last_block = blocks.iter().map(|b| numeric_suffix(b.id.as_str(), "b")).max().unwrap_or(0);
        let last_bh = behaviors.iter().map(|b| numeric_suffix(b.id.as_str(), "bh")).max().unwrap_or(0);
        Self {
            behaviors: behaviors.into_iter().map(|b| (b.id.clone(), b)).collect(),
            blocks: blocks.into_iter().map(|b| (b.id.clone(), b)).collect(),
            bindings,
            behavior_ids: IdGen::resume("bh", last_bh),
            block_ids: IdGen::resume("b", last_block),
        }
    }

    pub fn behavior(&self, id: &BehaviorId) -> Result<&Behavior<T>, StoreError> {
        self.behaviors.get(id).ok_or_else(|| StoreError::UnknownBehavior(id.clone()))
    }

    fn behavior_mut(&mut self, id: &BehaviorId) -> Result<&mut Behavior<T>, StoreError> {
        self.behaviors.get_mut(id).ok_or_else(|| StoreError::UnknownBehavior(id.clone()))
    }

    pub fn find_by_name(&self, name: &str) -> Option<&Behavior<T>> {
        self.behaviors.values().find(|b| b.name == name)
    }

    pub fn block(&self, id: &BlockId) -> Result<&OpBlock<T>, StoreError> {
        self.blocks.get(id).ok_or_else(|| StoreError::UnknownBlock(id.clone()))
    }

    pub fn create_behavior(&mut self, name: &str) -> Result<&Behavior<T>, StoreError> {
        if name.trim().is_empty() {
            return Err(StoreError::InvalidName);
        }
        if self.find_by_name(name).is_some() {
            return Err(StoreError::DuplicateName(name.to_owned()));
        }
        let id = BehaviorId(self.behavior_ids.next_raw());
        let b = Behavior {
            id: id.clone(),
            name: name.to_owned(),
            trigger_doc: String::new(),
            relationship_doc: String::new(),
            timeline: Timeline::default(),
            compiled: None,
            status: BehaviorStatus::Draft,
            version: 1,
        };
        Ok(self.behaviors.entry(id).or_insert(b))
    }

    /// Store a block under a fresh session id and return that id.
    pub fn add_block(&mut self, mut block: OpBlock<T>) -> BlockId {
        block.id = self.block_ids.next_block();
        let id = block.id.clone();
        self.blocks.insert(id.clone(), block);
        id
    }

    /// Run a remix pipeline on a stored block; the result is stored as a new
    /// block and the original is kept.
    pub fn remix(&mut self, block_id: &BlockId, fns: &[RemixFn<T>], tick: T) -> Result<BlockId, StoreError> {
        let source = self.block(block_id)?;
        let mut ctx = RemixContext {
            tick,
            ids: self.block_ids.clone(),
        };
        let out = apply_pipeline(source, fns, &mut ctx)?;
        self.block_ids = ctx.ids;
        Ok(self.add_block(out))
    }

    fn edit_timeline(
        &mut self,
        id: &BehaviorId,
        f: impl FnOnce(&Timeline<T>, &BlockSet<T>) -> Result<Timeline<T>, TimelineError>,
    ) -> Result<&Behavior<T>, StoreError> {
        let blocks = &self.blocks;
        let b = self.behaviors.get_mut(id).ok_or_else(|| StoreError::UnknownBehavior(id.clone()))?;
        b.timeline = f(&b.timeline, blocks)?;
        b.compiled = None;
        b.refresh_status();
        b.version += 1;
        Ok(b)
    }

    pub fn place(&mut self, id: &BehaviorId, block: &BlockId, start_offset: T, track: u32) -> Result<&Behavior<T>, StoreError> {
        self.edit_timeline(id, |tl, blocks| tl.place(blocks, block, start_offset, track))
    }

    pub fn edit_item(&mut self, id: &BehaviorId, item_id: &str, edit: ItemEdit<T>) -> Result<&Behavior<T>, StoreError> {
        self.edit_timeline(id, |tl, _| tl.edit_item(item_id, edit))
    }

    pub fn compile(&mut self, id: &BehaviorId, policy: ConflictPolicy) -> Result<&Behavior<T>, StoreError> {
        let compiled = compile(&self.behavior(id)?.timeline, &self.blocks, policy)?;
        let b = self.behavior_mut(id)?;
        b.compiled = Some(compiled);
        b.refresh_status();
        b.version += 1;
        Ok(b)
    }

    pub fn document(&mut self, id: &BehaviorId, trigger_doc: &str, relationship_doc: &str) -> Result<&Behavior<T>, StoreError> {
        let b = self.behavior_mut(id)?;
        if b.compiled.is_none() {
            return Err(StoreError::NotCompiled(id.clone()));
        }
        if trigger_doc.trim().is_empty() || relationship_doc.trim().is_empty() {
            return Err(StoreError::EmptyDoc);
        }
        b.trigger_doc = trigger_doc.to_owned();
        b.relationship_doc = relationship_doc.to_owned();
        b.refresh_status();
        b.version += 1;
        Ok(b)
    }

    pub fn bind_trigger(&mut self, binding: TriggerBinding<T>, canvas: &CanvasState<T>) -> Result<(), StoreError> {
        let b = self.behavior(&binding.behavior_id)?;
        if b.compiled.is_none() {
            return Err(StoreError::NotCompiled(binding.behavior_id.clone()));
        }
        if let Some(missing) = binding.trigger.elements().into_iter().find(|e| canvas.get(e).is_none()) {
            return Err(StoreError::UnknownElement(missing.clone()));
        }
        self.bindings.push(binding);
        Ok(())
    }

    /// Insert a behavior received from elsewhere (e.g. a broadcast), replacing
    /// any older copy with the same id.
    pub fn upsert_behavior(&mut self, b: Behavior<T>) {
        let n = numeric_suffix(b.id.as_str(), "bh");
        if n > self.behavior_ids.issued() {
            self.behavior_ids = IdGen::resume("bh", n);
        }
        self.behaviors.insert(b.id.clone(), b);
    }

    /// Insert a block that already has its session id.
    pub fn upsert_block(&mut self, b: OpBlock<T>) {
        let n = numeric_suffix(b.id.as_str(), "b");
        if n > self.block_ids.issued() {
            self.block_ids = IdGen::resume("b", n);
        }
        self.blocks.insert(b.id.clone(), b);
    }
}
