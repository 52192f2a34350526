//! Capture a worker's edit stream and cut it into per-element operation blocks.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{BlockError, BlockSource, IdGen, OpBlock};
use crate::canvas::{EditEvent, EditKind, ElementId};
use crate::channel::{Channel, ChannelName, Sample};
use crate::scalar::Scalar;

/// Pause (ms) that splits two gestures on the same element.
pub const DEFAULT_GAP_MS: f64 = 500.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("recording is not active")]
    NotRecording,
    #[error("recording is still active")]
    StillRecording,
    #[error("event from worker {got} while {expected} is recording")]
    ForeignWorkerEvent { expected: String, got: String },
    #[error("event precedes the start of the recording")]
    BeforeStart,
    #[error("nothing was recorded")]
    EmptyBuffer,
    #[error("gap threshold must be > 0")]
    InvalidGap,
    #[error(transparent)]
    Block(#[from] BlockError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct RecorderBuffer<T: Scalar> {
    pub session_id: String,
    pub recording_worker_id: String,
    pub started_at: T,
    pub events: Vec<EditEvent<T>>,
    pub active: bool,
}

impl<T: Scalar> RecorderBuffer<T> {
    pub fn start(session_id: impl Into<String>, worker_id: impl Into<String>, started_at: T) -> Self {
        Self {
            session_id: session_id.into(),
            recording_worker_id: worker_id.into(),
            started_at,
            events: Vec::new(),
            active: true,
        }
    }

    /// Append an event, keeping the buffer sorted by time. Events with equal
    /// timestamps keep their arrival order.
    pub fn record(&mut self, e: EditEvent<T>) -> Result<(), RecordError> {
        if !self.active {
            return Err(RecordError::NotRecording);
        }
        if e.worker_id != self.recording_worker_id {
            return Err(RecordError::ForeignWorkerEvent {
                expected: self.recording_worker_id.clone(),
                got: e.worker_id,
            });
        }
        if e.t < self.started_at {
            return Err(RecordError::BeforeStart);
        }
        let at = self.events.partition_point(|x| x.t <= e.t);
        self.events.insert(at, e);
        Ok(())
    }

    pub fn stop(&mut self) {
        self.active = false;
    }

    pub fn segment(&self, gap: T, ids: &mut IdGen) -> Result<Vec<OpBlock<T>>, RecordError> {
        segment(self, gap, ids)
    }
}

/// Value-returning form of [`RecorderBuffer::record`].
pub fn record_event<T: Scalar>(buf: &RecorderBuffer<T>, e: EditEvent<T>) -> Result<RecorderBuffer<T>, RecordError> {
    let mut next = buf.clone();
    next.record(e)?;
    Ok(next)
}

struct Pending<'a, T: Scalar> {
    order: usize,
    start: T,
    worker: &'a str,
    body: PendingBody<'a, T>,
}

enum PendingBody<'a, T: Scalar> {
    Transform(Vec<&'a EditEvent<T>>),
    Structural(&'a EditEvent<T>),
}

/// Partition a stopped recording into blocks.
///
/// Events are grouped per element. Consecutive property edits on one element
/// closer than `gap` ms form one transform block with times re-zeroed to the
/// block start; creates and deletes are instantaneous blocks of their own.
/// Blocks come back in start-time order and take ids from `ids` in that order.
pub fn segment<T: Scalar>(buf: &RecorderBuffer<T>, gap: T, ids: &mut IdGen) -> Result<Vec<OpBlock<T>>, RecordError> {
    if buf.active {
        return Err(RecordError::StillRecording);
    }
    if !(gap > T::zero()) {
        return Err(RecordError::InvalidGap);
    }
    if buf.events.is_empty() {
        return Err(RecordError::EmptyBuffer);
    }

    let mut per_element: BTreeMap<&ElementId, Vec<(usize, &EditEvent<T>)>> = BTreeMap::new();
    for (i, e) in buf.events.iter().enumerate() {
        per_element.entry(e.kind.element_id()).or_default().push((i, e));
    }

    let mut pending = Vec::new();
    for events in per_element.values() {
        let mut run: Vec<&EditEvent<T>> = Vec::new();
        let mut run_order = 0;
        for &(i, e) in events {
            match e.kind {
                EditKind::SetProperty { .. } => {
                    if let Some(last) = run.last() {
                        if e.t - last.t >= gap {
                            flush(&mut run, run_order, &mut pending);
                        }
                    }
                    if run.is_empty() {
                        run_order = i;
                    }
                    run.push(e);
                }
                EditKind::Create(_) | EditKind::Delete { .. } => {
                    flush(&mut run, run_order, &mut pending);
                    pending.push(Pending {
                        order: i,
                        start: e.t,
                        worker: &e.worker_id,
                        body: PendingBody::Structural(e),
                    });
                }
            }
        }
        flush(&mut run, run_order, &mut pending);
    }

    pending.sort_by(|a, b| a.start.partial_cmp(&b.start).unwrap().then(a.order.cmp(&b.order)));

    pending
        .into_iter()
        .map(|p| {
            let source = BlockSource {
                worker_id: p.worker.to_owned(),
                recorded_at: p.start,
            };
            let id = ids.next_block();
            Ok(match p.body {
                PendingBody::Structural(e) => match &e.kind {
                    EditKind::Create(el) => OpBlock::create(id, el.clone(), source),
                    EditKind::Delete { id: el } => OpBlock::delete(id, el.clone(), source),
                    EditKind::SetProperty { .. } => unreachable!(),
                },
                PendingBody::Transform(run) => {
                    let element = run[0].kind.element_id().clone();
                    OpBlock::transform(id, element, build_channels(&run, p.start), source)?
                }
            })
        })
        .collect()
}

fn flush<'a, T: Scalar>(run: &mut Vec<&'a EditEvent<T>>, order: usize, pending: &mut Vec<Pending<'a, T>>) {
    if let Some(first) = run.first() {
        pending.push(Pending {
            order,
            start: first.t,
            worker: &first.worker_id,
            body: PendingBody::Transform(std::mem::take(run)),
        });
    }
}

fn build_channels<T: Scalar>(run: &[&EditEvent<T>], start: T) -> Vec<Channel<T>> {
    let mut channels: BTreeMap<ChannelName, Vec<Sample<T>>> = BTreeMap::new();
    for e in run {
        if let EditKind::SetProperty { channel, value, .. } = &e.kind {
            let samples = channels.entry(*channel).or_default();
            let t = e.t - start;
            match samples.last_mut() {
                // several writes in one instant: the last one wins
                Some(last) if last.t == t => last.v = *value,
                _ => samples.push(Sample::new(t, *value)),
            }
        }
    }
    channels
        .into_iter()
        .map(|(name, mut samples)| {
            if samples[0].t > T::zero() {
                let v = samples[0].v;
                samples.insert(0, Sample::new(T::zero(), v));
            }
            Channel::new(name, samples)
        })
        .collect()
}

/// Resample every channel of a transform block onto a uniform `tick` grid.
/// Endpoints are kept; the duration is unchanged.
pub fn resample_block<T: Scalar>(b: &OpBlock<T>, tick: T) -> Result<OpBlock<T>, crate::remix::RemixError> {
    use crate::remix::RemixError;
    if !b.is_transform() {
        return Err(RemixError::StructuralBlock);
    }
    if !(tick > T::zero()) {
        return Err(RemixError::InvalidArgument("tick must be > 0".into()));
    }
    let mut out = b.clone();
    for c in &mut out.channels {
        *c = c.resampled(b.duration, tick)?;
    }
    Ok(out)
}
