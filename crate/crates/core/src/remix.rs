//! Remix functions: pure edits on recorded blocks.
//!
//! Temporal edits (stretch, trim, skip, normalize, smooth, ease, reverse)
//! change when values happen; trajectory edits (resize, rotate) change the
//! x/y path only; `clone` and `apply` generate new blocks from old ones.
//! Every function returns a new block and leaves its input alone.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::block::{ApplyMode, BlockError, IdGen, OpBlock};
use crate::canvas::ElementId;
use crate::channel::{Channel, ChannelError, ChannelName, Sample};
use crate::scalar::{tick_grid, Scalar};

/// Sampling interval (ms) for remixes that resample their output.
pub const DEFAULT_TICK_MS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RemixError {
    #[error("operation is only defined for transform blocks")]
    StructuralBlock,
    #[error("invalid range [{from}, {to}] for block of duration {duration}")]
    InvalidRange { from: f64, to: f64, duration: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("block has no {0} channel")]
    MissingChannel(ChannelName),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Block(#[from] BlockError),
}

type Result<T, E = RemixError> = std::result::Result<T, E>;

/// Pivot for trajectory edits.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub enum Anchor<T: Scalar> {
    /// The block's first (x, y) sample.
    #[default]
    FirstSample,
    Point { x: T, y: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "fn", rename_all = "camelCase", bound = "")]
pub enum RemixFn<T: Scalar> {
    Stretch { factor: T },
    SetDuration { ms: T },
    MakeInstant,
    Trim { from: T, to: T },
    Skip { from: T, to: T },
    Normalize,
    Smooth { window: T },
    EaseInOut,
    Reverse,
    ResizeTrajectory {
        sx: T,
        sy: T,
        #[serde(default)]
        anchor: Anchor<T>,
    },
    RotateTrajectory {
        theta: T,
        #[serde(default)]
        anchor: Anchor<T>,
    },
    Clone,
    Apply {
        target: ElementId,
        #[serde(default = "relative")]
        mode: ApplyMode,
    },
}

fn relative() -> ApplyMode {
    ApplyMode::Relative
}

/// Settings shared by a chain of remixes.
#[derive(Debug, Clone)]
pub struct RemixContext<T: Scalar> {
    pub tick: T,
    pub ids: IdGen,
}

impl<T: Scalar> RemixContext<T> {
    pub fn new(ids: IdGen) -> Self {
        Self {
            tick: T::lit(DEFAULT_TICK_MS),
            ids,
        }
    }
}

fn require_transform<T: Scalar>(b: &OpBlock<T>) -> Result<()> {
    if b.is_transform() {
        Ok(())
    } else {
        Err(RemixError::StructuralBlock)
    }
}

fn require_tick<T: Scalar>(tick: T) -> Result<()> {
    if tick > T::zero() && tick.is_finite() {
        Ok(())
    } else {
        Err(RemixError::InvalidArgument("tick must be > 0".into()))
    }
}

fn check_range<T: Scalar>(b: &OpBlock<T>, from: T, to: T) -> Result<()> {
    if from >= T::zero() && from < to && to <= b.duration {
        Ok(())
    } else {
        Err(RemixError::InvalidRange {
            from: from.to_f64_lossy(),
            to: to.to_f64_lossy(),
            duration: b.duration.to_f64_lossy(),
        })
    }
}

fn refresh_duration<T: Scalar>(b: &mut OpBlock<T>) {
    b.duration = b.channels.iter().map(Channel::end_time).fold(T::zero(), T::max);
}

/// Multiply every sample time by `factor`.
pub fn stretch<T: Scalar>(b: &OpBlock<T>, factor: T) -> Result<OpBlock<T>> {
    require_transform(b)?;
    if !(factor > T::zero()) || !factor.is_finite() {
        return Err(RemixError::InvalidArgument("stretch factor must be > 0".into()));
    }
    Ok(rescale_time(b, factor, b.duration * factor))
}

fn rescale_time<T: Scalar>(b: &OpBlock<T>, factor: T, new_duration: T) -> OpBlock<T> {
    let mut out = b.clone();
    for c in &mut out.channels {
        for s in &mut c.samples {
            s.t = if s.t == b.duration { new_duration } else { s.t * factor };
        }
    }
    out.duration = new_duration;
    out
}

/// Stretch so the block lasts exactly `ms`.
pub fn set_duration<T: Scalar>(b: &OpBlock<T>, ms: T) -> Result<OpBlock<T>> {
    require_transform(b)?;
    if !(ms >= T::zero()) || !ms.is_finite() {
        return Err(RemixError::InvalidArgument("duration must be >= 0".into()));
    }
    if ms == T::zero() {
        return Ok(make_instant(b));
    }
    if b.duration == T::zero() {
        return Err(RemixError::InvalidArgument("cannot stretch an instantaneous block".into()));
    }
    Ok(rescale_time(b, ms / b.duration, ms))
}

/// Collapse to duration 0, keeping each channel's final value.
pub fn make_instant<T: Scalar>(b: &OpBlock<T>) -> OpBlock<T> {
    let mut out = b.clone();
    for c in &mut out.channels {
        let last = c.samples.last().map_or_else(T::zero, |s| s.v);
        c.samples = vec![Sample::new(T::zero(), last)];
    }
    out.duration = T::zero();
    out
}

/// Keep only `[from, to]`, re-zeroed.
pub fn trim<T: Scalar>(b: &OpBlock<T>, from: T, to: T) -> Result<OpBlock<T>> {
    require_transform(b)?;
    check_range(b, from, to)?;
    let mut out = b.clone();
    for (c, src) in out.channels.iter_mut().zip(&b.channels) {
        let mut samples = vec![Sample::new(T::zero(), src.sample(from)?)];
        samples.extend(
            src.samples
                .iter()
                .filter(|s| s.t > from && s.t < to)
                .map(|s| Sample::new(s.t - from, s.v)),
        );
        samples.push(Sample::new(to - from, src.sample(to)?));
        c.samples = samples;
    }
    out.duration = to - from;
    Ok(out)
}

/// Cut `(from, to)` out of the block; the jump is kept as a double sample.
pub fn skip<T: Scalar>(b: &OpBlock<T>, from: T, to: T) -> Result<OpBlock<T>> {
    require_transform(b)?;
    check_range(b, from, to)?;
    let cut = to - from;
    let mut out = b.clone();
    for (c, src) in out.channels.iter_mut().zip(&b.channels) {
        let mut samples: Vec<Sample<T>> = src.samples.iter().copied().filter(|s| s.t < from).collect();
        let post = src.sample(to)?;
        if from > T::zero() {
            let pre = src.left_limit(from)?;
            samples.push(Sample::new(from, pre));
            if pre != post {
                samples.push(Sample::new(from, post));
            }
        } else {
            samples.push(Sample::new(from, post));
        }
        samples.extend(
            src.samples
                .iter()
                .filter(|s| s.t > to)
                .map(|s| Sample::new(s.t - cut, s.v)),
        );
        c.samples = samples;
    }
    refresh_duration(&mut out);
    Ok(out)
}

/// Re-time so the (x, y) path is travelled at constant speed. All channels
/// follow the same time warp. A block that never moves is returned as is.
pub fn normalize<T: Scalar>(b: &OpBlock<T>, tick: T) -> Result<OpBlock<T>> {
    require_transform(b)?;
    require_tick(tick)?;
    let (x, y) = (b.channel(ChannelName::X), b.channel(ChannelName::Y));
    if (x.is_none() && y.is_none()) || b.duration == T::zero() {
        return Ok(b.clone());
    }
    let at = |c: Option<&Channel<T>>, t: T, left: bool| -> Result<T> {
        Ok(match c {
            None => T::zero(),
            Some(c) if left => c.left_limit(t)?,
            Some(c) => c.sample(t)?,
        })
    };

    let mut times: Vec<T> = x.iter().chain(y.iter()).flat_map(|c| c.samples.iter().map(|s| s.t)).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();

    let doubled = |c: Option<&Channel<T>>, t: T| c.is_some_and(|c| c.samples.iter().filter(|s| s.t == t).count() > 1);

    // polyline vertices (time, cumulative arc length); a jump adds a vertex pair
    let mut verts: Vec<(T, T)> = Vec::with_capacity(times.len() * 2);
    let mut prev: Option<(T, T)> = None;
    let mut s = T::zero();
    for &t in &times {
        let mut points = Vec::with_capacity(2);
        if doubled(x, t) || doubled(y, t) {
            points.push((at(x, t, true)?, at(y, t, true)?));
        }
        points.push((at(x, t, false)?, at(y, t, false)?));
        for p in points {
            if let Some(q) = prev {
                s = s + (p.0 - q.0).hypot(p.1 - q.1);
            }
            verts.push((t, s));
            prev = Some(p);
        }
    }
    let total = s;
    if total == T::zero() {
        return Ok(b.clone());
    }

    let d = b.duration;
    let warp = |p: T| -> T {
        if p <= T::zero() {
            return T::zero();
        }
        if p >= d {
            return d;
        }
        let target = total * (p / d);
        let j = verts.partition_point(|v| v.1 < target);
        if j == 0 {
            return verts[0].0;
        }
        if j == verts.len() {
            return d;
        }
        let (a, b) = (verts[j - 1], verts[j]);
        a.0 + (b.0 - a.0) * ((target - a.1) / (b.1 - a.1))
    };
    retime(b, tick, warp)
}

fn retime<T: Scalar>(b: &OpBlock<T>, tick: T, warp: impl Fn(T) -> T) -> Result<OpBlock<T>> {
    let grid = tick_grid(b.duration, tick);
    let mut out = b.clone();
    for (c, src) in out.channels.iter_mut().zip(&b.channels) {
        c.samples = grid
            .iter()
            .map(|&p| Ok(Sample::new(p, src.sample(warp(p))?)))
            .collect::<Result<_>>()?;
    }
    Ok(out)
}

/// Centered moving average over the tick-resampled values of each numeric
/// channel. The window narrows near both ends so endpoints stay fixed.
pub fn smooth<T: Scalar>(b: &OpBlock<T>, window: T, tick: T) -> Result<OpBlock<T>> {
    require_transform(b)?;
    require_tick(tick)?;
    if !(window >= T::zero()) || !window.is_finite() {
        return Err(RemixError::InvalidArgument("smoothing window must be >= 0".into()));
    }
    if window == T::zero() {
        return Ok(b.clone());
    }
    let d = b.duration;
    let half = window * T::half();
    let mut out = b.clone();
    for c in out.channels.iter_mut().filter(|c| !c.name.is_stepped()) {
        let grid = c.resampled(d, tick)?.samples;
        c.samples = grid
            .iter()
            .map(|s| {
                let h = half.min(s.t).min(d - s.t);
                let (sum, n) = grid
                    .iter()
                    .filter(|o| (o.t - s.t).abs() <= h)
                    .fold((T::zero(), 0usize), |(sum, n), o| (sum + o.v, n + 1));
                Sample::new(s.t, sum / T::from_usize(n))
            })
            .collect();
    }
    Ok(out)
}

/// Smoothstep `3u² − 2u³`.
pub fn smoothstep<T: Scalar>(u: T) -> T {
    u * u * (T::three() - T::two() * u)
}

/// Time warp `value'(p) = value(D·e(p/D))` with smoothstep `e`.
pub fn ease_in_out<T: Scalar>(b: &OpBlock<T>, tick: T) -> Result<OpBlock<T>> {
    require_transform(b)?;
    require_tick(tick)?;
    if b.duration == T::zero() {
        return Ok(b.clone());
    }
    let d = b.duration;
    retime(b, tick, |p| {
        if p >= d {
            d
        } else {
            d * smoothstep(p / d)
        }
    })
}

/// Play the block backwards.
pub fn reverse<T: Scalar>(b: &OpBlock<T>) -> Result<OpBlock<T>> {
    require_transform(b)?;
    let d = b.duration;
    let mut out = b.clone();
    for c in &mut out.channels {
        c.samples = c.samples.iter().rev().map(|s| Sample::new(d - s.t, s.v)).collect();
    }
    Ok(out)
}

fn anchor_point<T: Scalar>(b: &OpBlock<T>, anchor: Anchor<T>) -> (T, T) {
    match anchor {
        Anchor::Point { x, y } => (x, y),
        Anchor::FirstSample => {
            let first = |n| b.channel(n).and_then(Channel::first).map_or_else(T::zero, |s| s.v);
            (first(ChannelName::X), first(ChannelName::Y))
        }
    }
}

/// Scale the (x, y) path about `anchor`. Other channels are untouched.
pub fn resize_trajectory<T: Scalar>(b: &OpBlock<T>, sx: T, sy: T, anchor: Anchor<T>) -> Result<OpBlock<T>> {
    require_transform(b)?;
    if !sx.is_finite() || !sy.is_finite() {
        return Err(RemixError::InvalidArgument("scale factors must be finite".into()));
    }
    let (ax, ay) = anchor_point(b, anchor);
    let mut out = b.clone();
    for c in &mut out.channels {
        let (a, k) = match c.name {
            ChannelName::X => (ax, sx),
            ChannelName::Y => (ay, sy),
            _ => continue,
        };
        if k == T::one() {
            continue;
        }
        for s in &mut c.samples {
            s.v = a + k * (s.v - a);
        }
    }
    Ok(out)
}

/// Rotate the (x, y) path by `theta` about `anchor`. The element's own
/// rotation channel is left alone. Needs both x and y channels.
pub fn rotate_trajectory<T: Scalar>(b: &OpBlock<T>, theta: T, anchor: Anchor<T>) -> Result<OpBlock<T>> {
    require_transform(b)?;
    if !theta.is_finite() {
        return Err(RemixError::InvalidArgument("angle must be finite".into()));
    }
    if theta == T::zero() {
        return Ok(b.clone());
    }
    let x = b.channel(ChannelName::X).ok_or(RemixError::MissingChannel(ChannelName::X))?;
    let y = b.channel(ChannelName::Y).ok_or(RemixError::MissingChannel(ChannelName::Y))?;
    let (ax, ay) = anchor_point(b, anchor);
    let (sin, cos) = theta.sin_cos();

    // joint time grid; a jump in either channel becomes a jump in both
    let mut times: Vec<T> = x.samples.iter().chain(&y.samples).map(|s| s.t).collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times.dedup();
    let doubled = |c: &Channel<T>, t: T| c.samples.iter().filter(|s| s.t == t).count() > 1;

    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for t in times {
        let mut points = Vec::with_capacity(2);
        if doubled(x, t) || doubled(y, t) {
            points.push((x.left_limit(t)?, y.left_limit(t)?));
        }
        points.push((x.sample(t)?, y.sample(t)?));
        for (px, py) in points {
            let (dx, dy) = (px - ax, py - ay);
            xs.push(Sample::new(t, ax + cos * dx - sin * dy));
            ys.push(Sample::new(t, ay + sin * dx + cos * dy));
        }
    }
    let mut out = b.clone();
    out.channel_mut(ChannelName::X).unwrap().samples = xs;
    out.channel_mut(ChannelName::Y).unwrap().samples = ys;
    Ok(out)
}

/// Deep copy under a fresh id.
pub fn clone_block<T: Scalar>(b: &OpBlock<T>, ids: &mut IdGen) -> OpBlock<T> {
    let mut out = b.clone();
    out.id = ids.next_block();
    out
}

/// Re-point a transform block at another element.
pub fn apply_to_target<T: Scalar>(b: &OpBlock<T>, target: ElementId, mode: ApplyMode) -> Result<OpBlock<T>> {
    require_transform(b)?;
    let mut out = b.clone();
    out.element_id = target;
    out.mode = mode;
    Ok(out)
}

pub fn apply_fn<T: Scalar>(b: &OpBlock<T>, f: &RemixFn<T>, ctx: &mut RemixContext<T>) -> Result<OpBlock<T>> {
    match f {
        RemixFn::Stretch { factor } => stretch(b, *factor),
        RemixFn::SetDuration { ms } => set_duration(b, *ms),
        RemixFn::MakeInstant => Ok(make_instant(b)),
        RemixFn::Trim { from, to } => trim(b, *from, *to),
        RemixFn::Skip { from, to } => skip(b, *from, *to),
        RemixFn::Normalize => normalize(b, ctx.tick),
        RemixFn::Smooth { window } => smooth(b, *window, ctx.tick),
        RemixFn::EaseInOut => ease_in_out(b, ctx.tick),
        RemixFn::Reverse => reverse(b),
        RemixFn::ResizeTrajectory { sx, sy, anchor } => resize_trajectory(b, *sx, *sy, *anchor),
        RemixFn::RotateTrajectory { theta, anchor } => rotate_trajectory(b, *theta, *anchor),
        RemixFn::Clone => Ok(clone_block(b, &mut ctx.ids)),
        RemixFn::Apply { target, mode } => apply_to_target(b, target.clone(), *mode),
    }
}

/// Left-to-right composition; an empty list returns a copy of `b`.
pub fn apply_pipeline<T: Scalar>(b: &OpBlock<T>, fns: &[RemixFn<T>], ctx: &mut RemixContext<T>) -> Result<OpBlock<T>> {
    fns.iter().try_fold(b.clone(), |acc, f| apply_fn(&acc, f, ctx))
}
