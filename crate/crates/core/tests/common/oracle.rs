//! Random timelines and a naive per-tick simulator to check them against.

use std::collections::{BTreeMap, BTreeSet};

use super::{src, transform_block_for};
use crowdmix_core::block::{BlockKind, OpBlock};
use crowdmix_core::canvas::{CanvasState, EditEvent, EditKind, Element, ElementId, Pose};
use crowdmix_core::channel::ChannelName;
use crowdmix_core::timeline::{stored_value, BlockSet, ReplayError, Timeline};
use proptest::prelude::*;

pub const TICK: f64 = 20.0;

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
enum Draw {
    Move(OpBlock<f64>),
    Spawn,
    Remove,
}

fn draw() -> impl Strategy<Value = Draw> {
    prop_oneof![
        6 => prop_oneof![transform_block_for("e1"), transform_block_for("e2"), transform_block_for("e3")].prop_map(Draw::Move),
        1 => Just(Draw::Spawn),
        1 => Just(Draw::Remove),
    ]
}

/// Up to five blocks on up to three elements, with integer offsets.
pub fn scenario() -> impl Strategy<Value = (BlockSet<f64>, Timeline<f64>)> {
    prop::collection::vec((draw(), 0u32..1500, 0u32..3), 1..=5).prop_map(|raw| {
        let mut blocks = BlockSet::new();
        let mut tl = Timeline::default();
        let mut removed = false;
        for (i, (s, offset, track)) in raw.into_iter().enumerate() {
            let id = format!("b{}", i + 1);
            let mut b = match s {
                Draw::Move(b) => b,
                Draw::Spawn => OpBlock::create(
                    "x".into(),
                    Element::shape(format!("n{i}"), 4.0, 4.0).with_pose(Pose::at(f64::from(offset), 3.0)),
                    src(),
                ),
                // a second delete of e3 would fail in both implementations
                Draw::Remove if !removed => {
                    removed = true;
                    OpBlock::delete("x".into(), "e3".into(), src())
                }
                Draw::Remove => OpBlock::create("x".into(), Element::shape(format!("n{i}"), 2.0, 2.0), src()),
            };
            b.id = id.as_str().into();
            blocks.insert(b.id.clone(), b);
            tl = tl.place(&blocks, &id.as_str().into(), f64::from(offset), track).unwrap();
        }
        (blocks, tl)
    })
}

pub fn initial() -> CanvasState<f64> {
    ["e1", "e2", "e3"].iter().enumerate().fold(CanvasState::new(), |s, (i, id)| {
        let el = Element::shape(*id, 10.0, 10.0).with_pose(Pose::at(i as f64 * 20.0, 0.0));
        s.apply(&EditEvent::new(0.0, "w", EditKind::Create(el))).unwrap()
    })
}

pub type Elements = BTreeMap<ElementId, Element<f64>>;

/// Steps every `TICK` and evaluates every placed item directly from its block.
pub fn oracle(tl: &Timeline<f64>, blocks: &BlockSet<f64>, init: &CanvasState<f64>) -> Result<Vec<Elements>, ReplayError> {
    let mut items: Vec<_> = tl.items.iter().map(|i| (i, &blocks[&i.block_id])).collect();
    items.sort_by(|a, b| {
        (a.0.start_offset, a.0.track, &a.0.item_id)
            .partial_cmp(&(b.0.start_offset, b.0.track, &b.0.item_id))
            .unwrap()
    });
    let end = |i: usize| items[i].0.start_offset + items[i].1.duration;
    let duration = (0..items.len()).map(end).fold(0.0, f64::max);
    let mut times = Vec::new();
    let mut k = 0.0;
    while k * TICK < duration {
        times.push(k * TICK);
        k += 1.0;
    }
    times.push(duration);

    let props: BTreeSet<(ElementId, ChannelName)> = items
        .iter()
        .filter(|(_, b)| b.kind == BlockKind::Transform)
        .flat_map(|(_, b)| b.channels.iter().map(|c| (b.element_id.clone(), c.name)))
        .collect();

    let mut state = init.elements.clone();
    let mut done = vec![false; items.len()];
    let mut frames = Vec::new();
    for t in times {
        for (i, (item, b)) in items.iter().enumerate() {
            if done[i] || b.kind == BlockKind::Transform || item.start_offset > t {
                continue;
            }
            done[i] = true;
            if b.kind == BlockKind::Create {
                let el = b.payload.clone().unwrap();
                state.insert(el.id.clone(), el);
            } else if state.remove(&b.element_id).is_none() {
                return Err(ReplayError::DeleteMissing(b.element_id.clone()));
            }
        }
        for (el, ch) in &props {
            let writers: Vec<usize> = (0..items.len())
                .filter(|&i| &items[i].1.element_id == el && items[i].1.channel(*ch).is_some())
                .collect();
            let active = writers.iter().rev().find(|&&i| items[i].0.start_offset <= t && t <= end(i));
            let value = match active {
                Some(&i) => items[i].1.channel(*ch).unwrap().sample(t - items[i].0.start_offset).unwrap(),
                None => {
                    let Some(&i) = writers
                        .iter()
                        .filter(|&&i| end(i) < t)
                        .max_by(|&&a, &&b| end(a).partial_cmp(&end(b)).unwrap().then(a.cmp(&b)))
                    else {
                        continue;
                    };
                    items[i].1.channel(*ch).unwrap().samples.last().unwrap().v
                }
            };
            if let Some(e) = state.get_mut(el) {
                e.pose.set(*ch, stored_value(*ch, value)).unwrap();
            }
        }
        frames.push(state.clone());
    }
    Ok(frames)
}
