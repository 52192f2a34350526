//! Arranging blocks in time, compiling the arrangement into one behavior, and
//! replaying that behavior frame by frame.
//!
//! Overlapping items that write the same element property are resolved by
//! rank: items are totally ordered by `(startOffset, track, itemId)` and the
//! highest-ranked active item wins. Between items a property keeps whatever
//! the last finished item wrote.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{ApplyMode, BlockId, BlockKind, OpBlock};
use crate::canvas::{CanvasError, CanvasState, EditKind, Element, ElementId};
use crate::channel::{Channel, ChannelError, ChannelName};
use crate::scalar::{tick_grid, Scalar};

/// Blocks addressable by id.
pub type BlockSet<T> = BTreeMap<BlockId, OpBlock<T>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct TimelineItem<T: Scalar> {
    pub item_id: String,
    pub block_id: BlockId,
    pub start_offset: T,
    pub track: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct Timeline<T: Scalar> {
    pub items: Vec<TimelineItem<T>>,
    pub tick: T,
    #[serde(default)]
    pub next_item: u64,
}

impl<T: Scalar> Default for Timeline<T> {
    fn default() -> Self {
        Self {
            items: Vec::new(),
            tick: T::lit(crate::remix::DEFAULT_TICK_MS),
            next_item: 1,
        }
    }
}

/// Changes to one timeline item; `remove` wins over the other fields.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct ItemEdit<T: Scalar> {
    #[serde(default)]
    pub start_offset: Option<T>,
    #[serde(default)]
    pub track: Option<u32>,
    #[serde(default)]
    pub remove: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct Conflict<T: Scalar> {
    pub element_id: ElementId,
    pub channel: ChannelName,
    pub overlap: [T; 2],
    pub winner_item_id: String,
    pub loser_item_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ConflictPolicy {
    #[default]
    LastWriterWins,
    Error,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TimelineError {
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("unknown timeline item {0}")]
    UnknownItem(String),
    #[error("start offset must be finite and >= 0")]
    NegativeOffset,
    #[error("{} overlapping writes", .0.len())]
    ConflictError(Vec<Conflict<f64>>),
    #[error("tick must be > 0")]
    InvalidTick,
}

impl<T: Scalar> Timeline<T> {
    pub fn new(tick: T) -> Self {
        Self {
            tick,
            ..Self::default()
        }
    }

    pub fn item(&self, item_id: &str) -> Option<&TimelineItem<T>> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    /// Append an item for `block_id`. A block may be placed any number of times.
    pub fn place(&self, blocks: &BlockSet<T>, block_id: &BlockId, start_offset: T, track: u32) -> Result<Self, TimelineError> {
        if !blocks.contains_key(block_id) {
            return Err(TimelineError::UnknownBlock(block_id.clone()));
        }
        check_offset(start_offset)?;
        let mut next = self.clone();
        let mut n = next.next_item.max(1);
        let mut item_id = format!("i{n}");
        while next.item(&item_id).is_some() {
            n += 1;
            item_id = format!("i{n}");
        }
        next.next_item = n + 1;
        next.items.push(TimelineItem {
            item_id,
            block_id: block_id.clone(),
            start_offset,
            track,
        });
        Ok(next)
    }

    pub fn edit_item(&self, item_id: &str, edit: ItemEdit<T>) -> Result<Self, TimelineError> {
        let pos = self
            .items
            .iter()
            .position(|i| i.item_id == item_id)
            .ok_or_else(|| TimelineError::UnknownItem(item_id.to_owned()))?;
        let mut next = self.clone();
        if edit.remove {
            next.items.remove(pos);
            return Ok(next);
        }
        if let Some(offset) = edit.start_offset {
            check_offset(offset)?;
            next.items[pos].start_offset = offset;
        }
        if let Some(track) = edit.track {
            next.items[pos].track = track;
        }
        Ok(next)
    }

    pub fn block_ids(&self) -> impl Iterator<Item = &BlockId> {
        self.items.iter().map(|i| &i.block_id)
    }
}

fn check_offset<T: Scalar>(t: T) -> Result<(), TimelineError> {
    if t.is_finite() && t >= T::zero() {
        Ok(())
    } else {
        Err(TimelineError::NegativeOffset)
    }
}

struct Placed<'a, T: Scalar> {
    item: &'a TimelineItem<T>,
    block: &'a OpBlock<T>,
    start: T,
    end: T,
}

/// Items joined with their blocks, sorted by rank (lowest first).
fn ranked<'a, T: Scalar>(tl: &'a Timeline<T>, blocks: &'a BlockSet<T>) -> Result<Vec<Placed<'a, T>>, TimelineError> {
    let mut placed = tl
        .items
        .iter()
        .map(|item| {
            let block = blocks
                .get(&item.block_id)
                .ok_or_else(|| TimelineError::UnknownBlock(item.block_id.clone()))?;
            Ok(Placed {
                item,
                block,
                start: item.start_offset,
                end: item.start_offset + block.duration,
            })
        })
        .collect::<Result<Vec<_>, TimelineError>>()?;
    placed.sort_by(|a, b| rank_cmp(a.item, b.item));
    Ok(placed)
}

/// Total order used for overlap resolution and instant execution.
pub fn rank_cmp<T: Scalar>(a: &TimelineItem<T>, b: &TimelineItem<T>) -> std::cmp::Ordering {
    a.start_offset
        .partial_cmp(&b.start_offset)
        .unwrap()
        .then(a.track.cmp(&b.track))
        .then_with(|| a.item_id.cmp(&b.item_id))
}

/// Closed spans `[s1, e1]` and `[s2, e2]` collide unless they only touch as
/// a clean hand-off (one ends exactly where a longer one begins).
fn overlap<T: Scalar>(s1: T, e1: T, s2: T, e2: T) -> Option<[T; 2]> {
    let lo = s1.max(s2);
    let hi = e1.min(e2);
    if lo > hi {
        return None;
    }
    if lo == hi {
        let handoff = (e1 == s2 && s1 < s2 && e2 > s2) || (e2 == s1 && s2 < s1 && e1 > s1);
        if handoff {
            return None;
        }
    }
    Some([lo, hi])
}

/// One conflict per pair of items writing the same element property over
/// intersecting spans. The winner is the higher-ranked item.
pub fn detect_conflicts<T: Scalar>(tl: &Timeline<T>, blocks: &BlockSet<T>) -> Result<Vec<Conflict<T>>, TimelineError> {
    let placed = ranked(tl, blocks)?;
    let mut out = Vec::new();
    for (i, lo) in placed.iter().enumerate() {
        if !lo.block.is_transform() {
            continue;
        }
        for hi in placed[i + 1..].iter().filter(|p| p.block.is_transform()) {
            if hi.block.element_id != lo.block.element_id {
                continue;
            }
            let Some(span) = overlap(lo.start, lo.end, hi.start, hi.end) else {
                continue;
            };
            for name in lo.block.channel_names() {
                if hi.block.channel(name).is_some() {
                    out.push(Conflict {
                        element_id: lo.block.element_id.clone(),
                        channel: name,
                        overlap: span,
                        winner_item_id: hi.item.item_id.clone(),
                        loser_item_id: lo.item.item_id.clone(),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// One item's contribution to a baked track, in absolute behavior time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct BakedSegment<T: Scalar> {
    pub item_id: String,
    pub rank: usize,
    pub start: T,
    pub end: T,
    #[serde(default)]
    pub mode: ApplyMode,
    pub samples: Channel<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct BakedTrack<T: Scalar> {
    pub element_id: ElementId,
    pub channel: ChannelName,
    pub segments: Vec<BakedSegment<T>>,
}

impl<T: Scalar> BakedTrack<T> {
    /// Segment that controls the property at `t`: the highest-ranked active
    /// one, else the one that finished last (rank breaks ties).
    pub fn controlling(&self, t: T) -> Option<(usize, bool)> {
        let active = self
            .segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.start <= t && t <= s.end)
            .max_by_key(|(_, s)| s.rank);
        if let Some((i, _)) = active {
            return Some((i, true));
        }
        self.segments
            .iter()
            .enumerate()
            .filter(|(_, s)| s.end < t)
            .max_by(|(_, a), (_, b)| a.end.partial_cmp(&b.end).unwrap().then(a.rank.cmp(&b.rank)))
            .map(|(i, _)| (i, false))
    }

    pub fn end(&self) -> T {
        self.segments.iter().map(|s| s.end).fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", bound = "")]
pub enum StructuralOp<T: Scalar> {
    Create(Element<T>),
    Delete { id: ElementId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct ScheduledOp<T: Scalar> {
    pub t: T,
    pub item_id: String,
    pub track: u32,
    pub op: StructuralOp<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct CompiledBehavior<T: Scalar> {
    pub duration: T,
    pub tick: T,
    pub baked_tracks: Vec<BakedTrack<T>>,
    pub structural_schedule: Vec<ScheduledOp<T>>,
    pub conflicts: Vec<Conflict<T>>,
}

/// Bake a timeline into a single replayable behavior.
pub fn compile<T: Scalar>(tl: &Timeline<T>, blocks: &BlockSet<T>, policy: ConflictPolicy) -> Result<CompiledBehavior<T>, TimelineError> {
    if !(tl.tick > T::zero()) {
        return Err(TimelineError::InvalidTick);
    }
    let conflicts = detect_conflicts(tl, blocks)?;
    if policy == ConflictPolicy::Error && !conflicts.is_empty() {
        return Err(TimelineError::ConflictError(conflicts.iter().map(Conflict::to_f64).collect()));
    }
    let placed = ranked(tl, blocks)?;

    let mut tracks: BTreeMap<(ElementId, ChannelName), Vec<BakedSegment<T>>> = BTreeMap::new();
    let mut schedule = Vec::new();
    for (rank, p) in placed.iter().enumerate() {
        match p.block.kind {
            BlockKind::Transform => {
                for c in &p.block.channels {
                    tracks
                        .entry((p.block.element_id.clone(), c.name))
                        .or_default()
                        .push(BakedSegment {
                            item_id: p.item.item_id.clone(),
                            rank,
                            start: p.start,
                            end: p.end,
                            mode: p.block.mode,
                            samples: c.shifted(p.start),
                        });
                }
            }
            BlockKind::Create | BlockKind::Delete => {
                let op = match (&p.block.kind, &p.block.payload) {
                    (BlockKind::Create, Some(el)) => StructuralOp::Create(el.clone()),
                    _ => StructuralOp::Delete { id: p.block.element_id.clone() },
                };
                schedule.push(ScheduledOp {
                    t: p.start,
                    item_id: p.item.item_id.clone(),
                    track: p.item.track,
                    op,
                });
            }
        }
    }

    let baked_tracks: Vec<BakedTrack<T>> = tracks
        .into_iter()
        .map(|((element_id, channel), segments)| BakedTrack {
            element_id,
            channel,
            segments,
        })
        .collect();
    let duration = baked_tracks
        .iter()
        .map(BakedTrack::end)
        .chain(schedule.iter().map(|s| s.t))
        .fold(T::zero(), T::max);

    Ok(CompiledBehavior {
        duration,
        tick: tl.tick,
        baked_tracks,
        structural_schedule: schedule,
        conflicts,
    })
}

impl<T: Scalar> Conflict<T> {
    fn to_f64(&self) -> Conflict<f64> {
        Conflict {
            element_id: self.element_id.clone(),
            channel: self.channel,
            overlap: [self.overlap[0].to_f64_lossy(), self.overlap[1].to_f64_lossy()],
            winner_item_id: self.winner_item_id.clone(),
            loser_item_id: self.loser_item_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplayError {
    #[error("replay target {0} is missing")]
    TargetMissing(ElementId),
    #[error("scheduled delete of missing element {0}")]
    DeleteMissing(ElementId),
    #[error("tick must be > 0")]
    InvalidTick,
    #[error(transparent)]
    Canvas(#[from] CanvasError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Edits applied at one replay frame, in application order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FrameEdits<T: Scalar> {
    pub t: T,
    pub edits: Vec<EditKind<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Frame<T: Scalar> {
    pub t: T,
    pub state: CanvasState<T>,
}

/// Value as the canvas will store it (booleans and z-order are discrete).
pub fn stored_value<T: Scalar>(channel: ChannelName, v: T) -> T {
    match channel {
        ChannelName::Visible => {
            if v >= T::half() {
                T::one()
            } else {
                T::zero()
            }
        }
        ChannelName::ZIndex => v.round(),
        _ => v,
    }
}

/// Step through a compiled behavior, yielding each frame's edits and state.
pub struct Player<'a, T: Scalar> {
    cb: &'a CompiledBehavior<T>,
    state: CanvasState<T>,
    next_op: usize,
    // (track, segment) -> property value when a re-based segment took over
    bases: HashMap<(usize, usize), T>,
}

impl<'a, T: Scalar> Player<'a, T> {
    pub fn new(cb: &'a CompiledBehavior<T>, initial: CanvasState<T>) -> Self {
        Self {
            cb,
            state: initial,
            next_op: 0,
            bases: HashMap::new(),
        }
    }

    pub fn state(&self) -> &CanvasState<T> {
        &self.state
    }

    /// Advance to behavior time `t` (non-decreasing across calls).
    pub fn step(&mut self, t: T) -> Result<Vec<EditKind<T>>, ReplayError> {
        let mut edits = Vec::new();
        while let Some(op) = self.cb.structural_schedule.get(self.next_op) {
            if op.t > t {
                break;
            }
            let kind = match &op.op {
                StructuralOp::Create(el) => EditKind::Create(el.clone()),
                StructuralOp::Delete { id } => {
                    if self.state.get(id).is_none() {
                        return Err(ReplayError::DeleteMissing(id.clone()));
                    }
                    EditKind::Delete { id: id.clone() }
                }
            };
            self.state.apply_in_place(&kind)?;
            edits.push(kind);
            self.next_op += 1;
        }

        for (ti, track) in self.cb.baked_tracks.iter().enumerate() {
            let Some((si, active)) = track.controlling(t) else {
                continue;
            };
            let seg = &track.segments[si];
            let raw = if active {
                seg.samples.sample(t)?
            } else {
                seg.samples.last().ok_or(ChannelError::EmptyChannel)?.v
            };
            let current = match self.state.get(&track.element_id) {
                Some(el) => el.pose.get(track.channel),
                None if active && seg.mode.rebases(track.channel) => {
                    return Err(ReplayError::TargetMissing(track.element_id.clone()))
                }
                // absolute writes to an absent element are dropped
                None => continue,
            };
            let value = if seg.mode.rebases(track.channel) {
                let base = *self.bases.entry((ti, si)).or_insert(current);
                let first = seg.samples.first().ok_or(ChannelError::EmptyChannel)?.v;
                base + (raw - first)
            } else {
                raw
            };
            let value = stored_value(track.channel, value);
            if value != current {
                let kind = EditKind::SetProperty {
                    element: track.element_id.clone(),
                    channel: track.channel,
                    value,
                };
                self.state.apply_in_place(&kind)?;
                edits.push(kind);
            }
        }
        Ok(edits)
    }
}

/// Frame times for replaying `cb` at `tick`.
pub fn frame_times<T: Scalar>(cb: &CompiledBehavior<T>, tick: T) -> Result<Vec<T>, ReplayError> {
    if !(tick > T::zero()) || !tick.is_finite() {
        return Err(ReplayError::InvalidTick);
    }
    Ok(tick_grid(cb.duration, tick))
}

pub fn replay_edits<T: Scalar>(cb: &CompiledBehavior<T>, initial: &CanvasState<T>, tick: T) -> Result<Vec<FrameEdits<T>>, ReplayError> {
    let mut player = Player::new(cb, initial.clone());
    frame_times(cb, tick)?
        .into_iter()
        .map(|t| Ok(FrameEdits { t, edits: player.step(t)? }))
        .collect()
}

/// Frames at `0, tick, …, duration`; a pure function of its inputs.
pub fn replay<T: Scalar>(cb: &CompiledBehavior<T>, initial: &CanvasState<T>, tick: T) -> Result<Vec<Frame<T>>, ReplayError> {
    let mut player = Player::new(cb, initial.clone());
    frame_times(cb, tick)?
        .into_iter()
        .map(|t| {
            player.step(t)?;
            Ok(Frame {
                t,
                state: player.state().clone(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::BlockSource;
    use crate::canvas::{EditEvent, Pose};

    fn src() -> BlockSource<f64> {
        BlockSource {
            worker_id: "w".into(),
            recorded_at: 0.0,
        }
    }

    fn xblock(id: &str, el: &str, pairs: &[(f64, f64)]) -> OpBlock<f64> {
        OpBlock::transform(id.into(), el.into(), vec![Channel::from_pairs(ChannelName::X, pairs)], src()).unwrap()
    }

    fn set(blocks: Vec<OpBlock<f64>>) -> BlockSet<f64> {
        blocks.into_iter().map(|b| (b.id.clone(), b)).collect()
    }

    fn canvas(ids: &[&str]) -> CanvasState<f64> {
        let mut s = CanvasState::new();
        for id in ids {
            s = s
                .apply(&EditEvent::new(0.0, "w", EditKind::Create(Element::shape(*id, 10.0, 10.0))))
                .unwrap();
        }
        s
    }

    #[test]
    fn place_and_edit() {
        let blocks = set(vec![xblock("b1", "e1", &[(0.0, 0.0), (100.0, 1.0)])]);
        let tl = Timeline::<f64>::default();
        let tl = tl.place(&blocks, &"b1".into(), 0.0, 0).unwrap();
        let tl = tl.place(&blocks, &"b1".into(), 0.0, 1).unwrap();
        assert_eq!(tl.items.len(), 2);
        assert_ne!(tl.items[0].item_id, tl.items[1].item_id);
        assert_eq!(tl.place(&blocks, &"b1".into(), -5.0, 0), Err(TimelineError::NegativeOffset));
        assert_eq!(
            tl.place(&blocks, &"zz".into(), 0.0, 0),
            Err(TimelineError::UnknownBlock("zz".into()))
        );
        let moved = tl
            .edit_item("i1", ItemEdit { start_offset: Some(500.0), ..Default::default() })
            .unwrap();
        assert_eq!(moved.item("i1").unwrap().start_offset, 500.0);
        let removed = tl.edit_item("i1", ItemEdit { remove: true, ..Default::default() }).unwrap();
        assert!(removed.item("i1").is_none());
        assert_eq!(removed.item("i2"), tl.item("i2"));
        assert_eq!(
            tl.edit_item("nope", ItemEdit::default()),
            Err(TimelineError::UnknownItem("nope".into()))
        );
    }

    fn two_x_items(second_start: f64, second: OpBlock<f64>) -> (Timeline<f64>, BlockSet<f64>) {
        let blocks = set(vec![xblock("b1", "e1", &[(0.0, 0.0), (1000.0, 100.0)]), second]);
        let tl = Timeline::default()
            .place(&blocks, &"b1".into(), 0.0, 0)
            .unwrap()
            .place(&blocks, &"b2".into(), second_start, 1)
            .unwrap();
        (tl, blocks)
    }

    #[test]
    fn conflict_examples() {
        let (tl, blocks) = two_x_items(500.0, xblock("b2", "e1", &[(0.0, 500.0), (1000.0, 600.0)]));
        let c = detect_conflicts(&tl, &blocks).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].overlap, [500.0, 1000.0]);
        assert_eq!(c[0].winner_item_id, "i2");

        let yb = OpBlock::transform(
            "b2".into(),
            "e1".into(),
            vec![Channel::from_pairs(ChannelName::Y, &[(0.0, 0.0), (1000.0, 1.0)])],
            src(),
        )
        .unwrap();
        let (tl, blocks) = two_x_items(500.0, yb);
        assert!(detect_conflicts(&tl, &blocks).unwrap().is_empty());

        let blocks = set(vec![
            xblock("b1", "e1", &[(0.0, 0.0), (400.0, 1.0)]),
            xblock("b2", "e1", &[(0.0, 0.0), (300.0, 1.0)]),
        ]);
        let tl = Timeline::default()
            .place(&blocks, &"b1".into(), 0.0, 0)
            .unwrap()
            .place(&blocks, &"b2".into(), 600.0, 0)
            .unwrap();
        assert!(detect_conflicts(&tl, &blocks).unwrap().is_empty());
    }

    #[test]
    fn lww_compile() {
        let (tl, blocks) = two_x_items(500.0, xblock("b2", "e1", &[(0.0, 500.0), (1000.0, 600.0)]));
        let cb = compile(&tl, &blocks, ConflictPolicy::LastWriterWins).unwrap();
        assert_eq!(cb.conflicts.len(), 1);
        assert_eq!(cb.duration, 1500.0);
        let mut p = Player::new(&cb, canvas(&["e1"]));
        p.step(750.0).unwrap();
        // item2 at local t=250
        assert_eq!(p.state().get(&"e1".into()).unwrap().pose.x, 525.0);
        assert!(matches!(
            compile(&tl, &blocks, ConflictPolicy::Error),
            Err(TimelineError::ConflictError(c)) if c.len() == 1
        ));
    }

    #[test]
    fn single_block_is_shifted() {
        let blocks = set(vec![xblock("b1", "e1", &[(0.0, 0.0), (100.0, 10.0)])]);
        let tl = Timeline::default().place(&blocks, &"b1".into(), 500.0, 0).unwrap();
        let cb = compile(&tl, &blocks, ConflictPolicy::Error).unwrap();
        assert_eq!(cb.baked_tracks[0].segments[0].samples.pairs(), vec![(500.0, 0.0), (600.0, 10.0)]);
        assert_eq!(cb.duration, 600.0);
    }

    #[test]
    fn empty_behavior_single_frame() {
        let cb = compile(&Timeline::<f64>::default(), &BlockSet::new(), ConflictPolicy::Error).unwrap();
        let init = canvas(&["e1"]);
        let frames = replay(&cb, &init, 20.0).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].t, 0.0);
        assert_eq!(frames[0].state, init);
    }

    #[test]
    fn replay_is_deterministic_and_counts_frames() {
        let (tl, blocks) = two_x_items(500.0, xblock("b2", "e1", &[(0.0, 500.0), (1000.0, 600.0)]));
        let cb = compile(&tl, &blocks, ConflictPolicy::LastWriterWins).unwrap();
        let a = replay(&cb, &canvas(&["e1"]), 20.0).unwrap();
        let b = replay(&cb, &canvas(&["e1"]), 20.0).unwrap();
        assert_eq!(a.len(), 1500 / 20 + 1);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn relative_apply_rebases() {
        let mut b = xblock("b1", "src", &[(0.0, 10.0), (1000.0, 110.0)]);
        b = crate::remix::apply_to_target(&b, "tgt".into(), ApplyMode::Relative).unwrap();
        let blocks = set(vec![b.clone()]);
        let tl = Timeline::default().place(&blocks, &"b1".into(), 0.0, 0).unwrap();
        let cb = compile(&tl, &blocks, ConflictPolicy::Error).unwrap();
        let mut init = canvas(&["tgt"]);
        init.elements.get_mut(&"tgt".into()).unwrap().pose = Pose::at(5.0, 0.0);
        let frames = replay(&cb, &init, 500.0).unwrap();
        let xs: Vec<f64> = frames.iter().map(|f| f.state.get(&"tgt".into()).unwrap().pose.x).collect();
        assert_eq!(xs, vec![5.0, 55.0, 105.0]);

        let abs = crate::remix::apply_to_target(&b, "tgt".into(), ApplyMode::Absolute).unwrap();
        let blocks = set(vec![abs]);
        let cb = compile(&tl, &blocks, ConflictPolicy::Error).unwrap();
        let frames = replay(&cb, &init, 500.0).unwrap();
        let xs: Vec<f64> = frames.iter().map(|f| f.state.get(&"tgt".into()).unwrap().pose.x).collect();
        assert_eq!(xs, vec![10.0, 60.0, 110.0]);

        // an absent target only matters for re-based writes
        assert_eq!(replay(&cb, &canvas(&[]), 500.0).unwrap().len(), 3);
        let rel = compile(&tl, &set(vec![b]), ConflictPolicy::Error).unwrap();
        assert_eq!(replay(&rel, &canvas(&[]), 500.0), Err(ReplayError::TargetMissing("tgt".into())));
    }

    #[test]
    fn structural_errors_and_order() {
        let create = OpBlock::create("c".into(), Element::shape("n", 1.0, 1.0), src());
        let delete = OpBlock::delete("d".into(), "n".into(), src());
        let blocks = set(vec![create, delete]);
        // delete placed on a lower track at the same instant runs first
        let tl = Timeline::default()
            .place(&blocks, &"d".into(), 100.0, 0)
            .unwrap()
            .place(&blocks, &"c".into(), 100.0, 1)
            .unwrap();
        let cb = compile(&tl, &blocks, ConflictPolicy::Error).unwrap();
        assert_eq!(replay(&cb, &canvas(&[]), 20.0), Err(ReplayError::DeleteMissing("n".into())));
        let frames = replay(&cb, &canvas(&["n"]), 30.0).unwrap();
        assert_eq!(frames.len(), 5);
        assert!(frames.last().unwrap().state.get(&"n".into()).is_some());
        assert!(frames[0].state.get(&"n".into()).is_some());
    }

    #[test]
    fn handoff_is_not_a_conflict() {
        let blocks = set(vec![
            xblock("b1", "e1", &[(0.0, 0.0), (400.0, 1.0)]),
            xblock("b2", "e1", &[(0.0, 5.0), (400.0, 6.0)]),
        ]);
        let tl = Timeline::default()
            .place(&blocks, &"b1".into(), 0.0, 0)
            .unwrap()
            .place(&blocks, &"b2".into(), 400.0, 0)
            .unwrap();
        assert!(detect_conflicts(&tl, &blocks).unwrap().is_empty());
        let instant = crate::remix::make_instant(&blocks[&BlockId::from("b2")]);
        let blocks2 = set(vec![blocks[&BlockId::from("b1")].clone(), instant]);
        let tl2 = Timeline::default()
            .place(&blocks2, &"b1".into(), 0.0, 0)
            .unwrap()
            .place(&blocks2, &"b2".into(), 400.0, 0)
            .unwrap();
        assert_eq!(detect_conflicts(&tl2, &blocks2).unwrap().len(), 1);
    }
}
