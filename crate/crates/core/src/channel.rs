//! Keyframed property channels and their sampling rules.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{tick_grid, Scalar};

/// Element property that a channel (or a `SetProperty` edit) writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ChannelName {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "rotation")]
    Rotation,
    #[serde(rename = "scaleX")]
    ScaleX,
    #[serde(rename = "scaleY")]
    ScaleY,
    #[serde(rename = "zIndex")]
    ZIndex,
    #[serde(rename = "visible")]
    Visible,
}

impl ChannelName {
    pub const ALL: [ChannelName; 7] = [
        ChannelName::X,
        ChannelName::Y,
        ChannelName::Rotation,
        ChannelName::ScaleX,
        ChannelName::ScaleY,
        ChannelName::ZIndex,
        ChannelName::Visible,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ChannelName::X => "x",
            ChannelName::Y => "y",
            ChannelName::Rotation => "rotation",
            ChannelName::ScaleX => "scaleX",
            ChannelName::ScaleY => "scaleY",
            ChannelName::ZIndex => "zIndex",
            ChannelName::Visible => "visible",
        }
    }

    /// Integer and boolean properties hold their previous value between samples.
    pub fn is_stepped(self) -> bool {
        matches!(self, ChannelName::ZIndex | ChannelName::Visible)
    }

    pub fn is_positional(self) -> bool {
        matches!(self, ChannelName::X | ChannelName::Y)
    }
}

impl fmt::Display for ChannelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown channel `{0}`")]
pub struct UnknownChannel(pub String);

impl FromStr for ChannelName {
    type Err = UnknownChannel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ChannelName::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| UnknownChannel(s.to_owned()))
    }
}

/// One keyframe. `t` is milliseconds from the start of the owning block
/// (or of the behavior, once baked). Booleans are stored as 0/1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Sample<T: Scalar> {
    pub t: T,
    pub v: T,
}

impl<T: Scalar> Sample<T> {
    pub fn new(t: T, v: T) -> Self {
        Self { t, v }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChannelError {
    #[error("channel has no samples")]
    EmptyChannel,
    #[error("channel samples are not time ordered")]
    Unordered,
    #[error("more than two samples share timestamp index {0}")]
    TripleSample(usize),
    #[error("channel sample is not finite")]
    NonFinite,
}

/// Time-ordered samples for a single property.
///
/// Two samples may share a timestamp to encode a jump: the first is the
/// value approaching the instant, the second the value from that instant on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Channel<T: Scalar> {
    pub name: ChannelName,
    pub samples: Vec<Sample<T>>,
}

impl<T: Scalar> Channel<T> {
    pub fn new(name: ChannelName, samples: Vec<Sample<T>>) -> Self {
        Self { name, samples }
    }

    pub fn from_pairs(name: ChannelName, pairs: &[(T, T)]) -> Self {
        Self::new(name, pairs.iter().map(|&(t, v)| Sample::new(t, v)).collect())
    }

    pub fn pairs(&self) -> Vec<(T, T)> {
        self.samples.iter().map(|s| (s.t, s.v)).collect()
    }

    pub fn first(&self) -> Option<Sample<T>> {
        self.samples.first().copied()
    }

    pub fn last(&self) -> Option<Sample<T>> {
        self.samples.last().copied()
    }

    pub fn end_time(&self) -> T {
        self.last().map_or_else(T::zero, |s| s.t)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.samples.is_empty() {
            return Err(ChannelError::EmptyChannel);
        }
        for (i, w) in self.samples.windows(2).enumerate() {
            if w[1].t < w[0].t {
                return Err(ChannelError::Unordered);
            }
            if i + 2 < self.samples.len() && w[0].t == w[1].t && self.samples[i + 2].t == w[0].t {
                return Err(ChannelError::TripleSample(i));
            }
        }
        if self.samples.iter().any(|s| !s.t.is_finite() || !s.v.is_finite()) {
            return Err(ChannelError::NonFinite);
        }
        Ok(())
    }

    /// Value at `t`, right-continuous; see [`sample_channel`].
    pub fn sample(&self, t: T) -> Result<T, ChannelError> {
        sample_channel(self, t)
    }

    /// Value approaching `t` from the left. At a jump this is the pre-value.
    pub fn left_limit(&self, t: T) -> Result<T, ChannelError> {
        let s = &self.samples;
        if s.is_empty() {
            return Err(ChannelError::EmptyChannel);
        }
        let t = clamp(t, s[0].t, s[s.len() - 1].t);
        let j = s.partition_point(|p| p.t < t);
        if j == 0 {
            return Ok(s[0].v);
        }
        if j == s.len() {
            return Ok(s[j - 1].v);
        }
        let (a, b) = (s[j - 1], s[j]);
        if self.name.is_stepped() {
            return Ok(if b.t == t { b.v } else { a.v });
        }
        Ok(lerp(a, b, t))
    }

    /// Resample onto `0, tick, …, end` via [`sample_channel`].
    pub fn resampled(&self, end: T, tick: T) -> Result<Self, ChannelError> {
        let samples = tick_grid(end, tick)
            .into_iter()
            .map(|t| Ok(Sample::new(t, self.sample(t)?)))
            .collect::<Result<Vec<_>, ChannelError>>()?;
        Ok(Self::new(self.name, samples))
    }

    pub fn shifted(&self, dt: T) -> Self {
        Self::new(
            self.name,
            self.samples.iter().map(|s| Sample::new(s.t + dt, s.v)).collect(),
        )
    }
}

fn clamp<T: Scalar>(t: T, lo: T, hi: T) -> T {
    if t < lo {
        lo
    } else if t > hi {
        hi
    } else {
        t
    }
}

fn lerp<T: Scalar>(a: Sample<T>, b: Sample<T>, t: T) -> T {
    if t == a.t {
        return a.v;
    }
    if t == b.t {
        return b.v;
    }
    a.v + (b.v - a.v) * ((t - a.t) / (b.t - a.t))
}

/// Evaluate a channel at `t` milliseconds.
///
/// Numeric channels interpolate linearly between neighbouring samples,
/// stepped channels hold the previous sample. `t` is clamped to the sampled
/// range, and at a doubled timestamp the later (post) value is returned.
pub fn sample_channel<T: Scalar>(c: &Channel<T>, t: T) -> Result<T, ChannelError> {
    let s = &c.samples;
    if s.is_empty() {
        return Err(ChannelError::EmptyChannel);
    }
    let t = clamp(t, s[0].t, s[s.len() - 1].t);
    // last sample with time <= t
    let i = s.partition_point(|p| p.t <= t) - 1;
    if i + 1 == s.len() || c.name.is_stepped() {
        return Ok(s[i].v);
    }
    Ok(lerp(s[i], s[i + 1], t))
}
