//! Scalar abstraction shared by every numeric type in the engine.
//!
//! Times are milliseconds and angles are radians, both carried in the same
//! scalar type as positions.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    Float + FloatConst + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    fn lit(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn from_usize(n: usize) -> Self {
        Self::lit(n as f64)
    }

    fn half() -> Self {
        Self::lit(0.5)
    }

    fn two() -> Self {
        Self::lit(2.0)
    }

    fn three() -> Self {
        Self::lit(3.0)
    }
}

impl Scalar for f32 {
    fn lit(v: f64) -> Self {
        v as f32
    }

    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn lit(v: f64) -> Self {
        v
    }

    fn to_f64_lossy(self) -> f64 {
        self
    }
}

/// Frame times `0, tick, 2·tick, …` strictly below `end`, followed by `end`.
///
/// Each time is computed as `k·tick` so no rounding accumulates.
pub fn tick_grid<T: Scalar>(end: T, tick: T) -> Vec<T> {
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let t = T::from_usize(k) * tick;
        if t >= end {
            break;
        }
        out.push(t);
        k += 1;
    }
    out.push(end);
    out
}
