//! Recorded operation blocks, the unit that gets remixed and placed on a timeline.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::canvas::{Element, ElementId};
use crate::channel::{Channel, ChannelError, ChannelName, Sample};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub String);

impl BlockId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for BlockId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Deterministic id source: `prefix1`, `prefix2`, …
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdGen {
    prefix: String,
    next: u64,
}

impl IdGen {
    pub fn new(prefix: impl Into<String>) -> Self {
        Self {
            prefix: prefix.into(),
            next: 1,
        }
    }

    /// Continue numbering after `last` ids have already been handed out.
    pub fn resume(prefix: impl Into<String>, last: u64) -> Self {
        Self {
            prefix: prefix.into(),
            next: last + 1,
        }
    }

    pub fn next_raw(&mut self) -> String {
        let id = format!("{}{}", self.prefix, self.next);
        self.next += 1;
        id
    }

    pub fn next_block(&mut self) -> BlockId {
        BlockId(self.next_raw())
    }

    pub fn issued(&self) -> u64 {
        self.next - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Transform,
    Create,
    Delete,
}

/// How a transform block's positional values land on its element at replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApplyMode {
    /// Recorded values are written verbatim.
    #[default]
    Absolute,
    /// x, y and rotation are re-based so the first sample sits on the
    /// element's pose when the block starts; later samples apply the deltas.
    Relative,
}

impl ApplyMode {
    pub fn rebases(self, channel: ChannelName) -> bool {
        self == ApplyMode::Relative
            && matches!(channel, ChannelName::X | ChannelName::Y | ChannelName::Rotation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct BlockSource<T: Scalar> {
    pub worker_id: String,
    pub recorded_at: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct OpBlock<T: Scalar> {
    pub id: BlockId,
    pub element_id: ElementId,
    pub kind: BlockKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<Channel<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Element<T>>,
    pub duration: T,
    pub source: BlockSource<T>,
    #[serde(default)]
    pub mode: ApplyMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BlockError {
    #[error("transform block has no channels")]
    NoChannels,
    #[error("channel {0} appears twice")]
    DuplicateChannel(ChannelName),
    #[error("channel {name}: {source}")]
    Channel {
        name: ChannelName,
        source: ChannelError,
    },
    #[error("channel {0} does not start at t=0")]
    LateStart(ChannelName),
    #[error("duration does not match channel extent")]
    DurationMismatch,
    #[error("structural block is malformed: {0}")]
    Structural(&'static str),
}

impl<T: Scalar> OpBlock<T> {
    /// Build a transform block. Every channel is extended with a hold sample
    /// so it spans the whole block; the duration is the longest channel.
    pub fn transform(
        id: BlockId,
        element_id: ElementId,
        channels: Vec<Channel<T>>,
        source: BlockSource<T>,
    ) -> Result<Self, BlockError> {
        let duration = channels.iter().map(Channel::end_time).fold(T::zero(), T::max);
        let channels = channels
            .into_iter()
            .map(|mut c| {
                if let Some(last) = c.last() {
                    if last.t < duration {
                        c.samples.push(Sample::new(duration, last.v));
                    }
                }
                c
            })
            .collect();
        let block = Self {
            id,
            element_id,
            kind: BlockKind::Transform,
            channels,
            payload: None,
            duration,
            source,
            mode: ApplyMode::Absolute,
        };
        block.validate()?;
        Ok(block)
    }

    pub fn create(id: BlockId, element: Element<T>, source: BlockSource<T>) -> Self {
        Self {
            id,
            element_id: element.id.clone(),
            kind: BlockKind::Create,
            channels: Vec::new(),
            payload: Some(element),
            duration: T::zero(),
            source,
            mode: ApplyMode::Absolute,
        }
    }

    pub fn delete(id: BlockId, element_id: ElementId, source: BlockSource<T>) -> Self {
        Self {
            id,
            element_id,
            kind: BlockKind::Delete,
            channels: Vec::new(),
            payload: None,
            duration: T::zero(),
            source,
            mode: ApplyMode::Absolute,
        }
    }

    pub fn is_transform(&self) -> bool {
        self.kind == BlockKind::Transform
    }

    pub fn channel(&self, name: ChannelName) -> Option<&Channel<T>> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn channel_mut(&mut self, name: ChannelName) -> Option<&mut Channel<T>> {
        self.channels.iter_mut().find(|c| c.name == name)
    }

    /// Set of channels this block writes, in block order.
    pub fn channel_names(&self) -> impl Iterator<Item = ChannelName> + '_ {
        self.channels.iter().map(|c| c.name)
    }

    pub fn validate(&self) -> Result<(), BlockError> {
        match self.kind {
            BlockKind::Transform => {
                if self.channels.is_empty() {
                    return Err(BlockError::NoChannels);
                }
                let mut seen = Vec::new();
                for c in &self.channels {
                    if seen.contains(&c.name) {
                        return Err(BlockError::DuplicateChannel(c.name));
                    }
                    seen.push(c.name);
                    c.validate().map_err(|source| BlockError::Channel { name: c.name, source })?;
                    if c.samples[0].t != T::zero() {
                        return Err(BlockError::LateStart(c.name));
                    }
                }
                let extent = self.channels.iter().map(Channel::end_time).fold(T::zero(), T::max);
                if extent != self.duration {
                    return Err(BlockError::DurationMismatch);
                }
            }
            BlockKind::Create => {
                if self.payload.is_none() || !self.channels.is_empty() {
                    return Err(BlockError::Structural("create block needs a payload and no channels"));
                }
                if self.duration != T::zero() {
                    return Err(BlockError::DurationMismatch);
                }
            }
            BlockKind::Delete => {
                if self.payload.is_some() || !self.channels.is_empty() {
                    return Err(BlockError::Structural("delete block carries no data"));
                }
                if self.duration != T::zero() {
                    return Err(BlockError::DurationMismatch);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn src() -> BlockSource<f64> {
        BlockSource {
            worker_id: "w1".into(),
            recorded_at: 0.0,
        }
    }

    #[test]
    fn transform_extends_short_channels() {
        let b = OpBlock::transform(
            "b1".into(),
            "e1".into(),
            vec![
                Channel::from_pairs(ChannelName::X, &[(0.0, 0.0), (100.0, 5.0)]),
                Channel::from_pairs(ChannelName::Y, &[(0.0, 0.0), (300.0, 5.0)]),
            ],
            src(),
        )
        .unwrap();
        assert_eq!(b.duration, 300.0);
        assert_eq!(b.channel(ChannelName::X).unwrap().pairs(), vec![(0.0, 0.0), (100.0, 5.0), (300.0, 5.0)]);
    }

    #[test]
    fn transform_validation() {
        assert_eq!(
            OpBlock::<f64>::transform("b".into(), "e".into(), vec![], src()),
            Err(BlockError::NoChannels)
        );
        let dup = vec![
            Channel::from_pairs(ChannelName::X, &[(0.0, 0.0)]),
            Channel::from_pairs(ChannelName::X, &[(0.0, 1.0)]),
        ];
        assert_eq!(
            OpBlock::transform("b".into(), "e".into(), dup, src()),
            Err(BlockError::DuplicateChannel(ChannelName::X))
        );
        let late = vec![Channel::from_pairs(ChannelName::X, &[(5.0, 0.0)])];
        assert_eq!(
            OpBlock::transform("b".into(), "e".into(), late, src()),
            Err(BlockError::LateStart(ChannelName::X))
        );
    }

    #[test]
    fn id_gen_counts() {
        let mut ids = IdGen::new("b");
        assert_eq!(ids.next_block().as_str(), "b1");
        assert_eq!(ids.next_block().as_str(), "b2");
        assert_eq!(ids.issued(), 2);
        let mut resumed = IdGen::resume("b", 7);
        assert_eq!(resumed.next_raw(), "b8");
    }
}
