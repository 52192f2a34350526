#![allow(dead_code)]

pub mod oracle;

use crowdmix_core::block::{BlockSource, OpBlock};
use crowdmix_core::channel::{Channel, ChannelName, Sample};
use proptest::prelude::*;

pub fn src() -> BlockSource<f64> {
    BlockSource { worker_id: "w1".into(), recorded_at: 0.0 }
}

fn value_range(name: ChannelName) -> BoxedStrategy<f64> {
    match name {
        ChannelName::X | ChannelName::Y => (-500.0..500.0f64).boxed(),
        ChannelName::Rotation => (-3.2..3.2f64).boxed(),
        ChannelName::ScaleX | ChannelName::ScaleY => (0.1..3.0f64).boxed(),
        ChannelName::ZIndex => (-5i32..5).prop_map(f64::from).boxed(),
        ChannelName::Visible => prop::bool::ANY.prop_map(|b| if b { 1.0 } else { 0.0 }).boxed(),
    }
}

/// Integer-millisecond channel starting at 0. A zero step (after the first
/// sample, never twice in a row) makes a jump.
pub fn channel(name: ChannelName, max_len: usize) -> impl Strategy<Value = Channel<f64>> {
    prop::collection::vec((0u32..120, value_range(name)), 1..max_len).prop_map(move |raw| {
        let mut t = 0.0;
        let mut samples: Vec<Sample<f64>> = Vec::with_capacity(raw.len());
        for (i, (step, v)) in raw.into_iter().enumerate() {
            if i > 0 {
                let jump_ok = step % 7 == 0 && i >= 2 && samples[i - 1].t != samples[i - 2].t;
                t += if jump_ok { 0.0 } else { f64::from(step.max(1)) };
            }
            samples.push(Sample::new(t, v));
        }
        Channel::new(name, samples)
    })
}

pub fn transform_block_for(element: &'static str) -> impl Strategy<Value = OpBlock<f64>> {
    let names = prop::sample::subsequence(ChannelName::ALL.to_vec(), 1..=4);
    names
        .prop_flat_map(|names| names.into_iter().map(|n| channel(n, 12)).collect::<Vec<_>>())
        .prop_map(move |channels| OpBlock::transform("b0".into(), element.into(), channels, src()).unwrap())
}

pub fn transform_block() -> impl Strategy<Value = OpBlock<f64>> {
    transform_block_for("e1")
}

/// Block guaranteed to carry both x and y.
pub fn xy_block() -> impl Strategy<Value = OpBlock<f64>> {
    (channel(ChannelName::X, 12), channel(ChannelName::Y, 12), prop::option::of(channel(ChannelName::Rotation, 6)))
        .prop_map(|(x, y, r)| {
            let mut cs = vec![x, y];
            cs.extend(r);
            OpBlock::transform("b0".into(), "e1".into(), cs, src()).unwrap()
        })
}

pub fn first_last(c: &Channel<f64>) -> (f64, f64) {
    (c.samples[0].v, c.samples[c.samples.len() - 1].v)
}
