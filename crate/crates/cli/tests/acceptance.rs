//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::cell::Cell;
use std::path::Path;
use std::time::{Duration, Instant};

use common::oracle;
use common::{first_last, transform_block};
use crowdmix_cli::{render, scenario};
use crowdmix_core::archive::{load_session, save_session};
use crowdmix_core::block::OpBlock;
use crowdmix_core::recorder::resample_block;
use crowdmix_core::remix;
use crowdmix_core::scalar::tick_grid;
use crowdmix_core::timeline::{compile, replay, ConflictPolicy};
use crowdmix_core::{ChannelName, ElementId, SessionArchive};
use crowdmix_server::audit::audit_locks;
use crowdmix_server::mirror::Mirror;
use crowdmix_server::protocol::{ClientMessage, ServerMessage, Snapshot};
use crowdmix_server::{Activity, HubConfig, Loopback};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Check = (&'static str, fn() -> Verdict);

const TICK: f64 = 20.0;

fn runner(cases: u32) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    if took < limit {
        Ok(())
    } else {
        Err(format!("took {took:.2?}, limit {limit:?}"))
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

fn numeric(b: &OpBlock<f64>) -> OpBlock<f64> {
    let mut r = resample_block(b, TICK).unwrap();
    r.channels.retain(|c| !c.name.is_stepped());
    r
}

fn remix_laws(b: &OpBlock<f64>, f: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(&remix::reverse(&remix::reverse(b).unwrap()).unwrap(), b);

    let d = b.duration;
    prop_assert_eq!(remix::stretch(b, f).unwrap().duration, d * f);
    if d > 0.0 {
        prop_assert_eq!(remix::set_duration(b, 1000.0).unwrap().duration, 1000.0);
    }
    prop_assert_eq!(remix::make_instant(b).duration, 0.0);
    prop_assert_eq!(remix::reverse(b).unwrap().duration, d);
    for out in [
        remix::smooth(b, 60.0, TICK).unwrap(),
        remix::ease_in_out(b, TICK).unwrap(),
        remix::normalize(b, TICK).unwrap(),
    ] {
        prop_assert_eq!(out.duration, d);
        for c in &b.channels {
            let (f0, l0) = first_last(c);
            let (f1, l1) = first_last(out.channel(c.name).unwrap());
            prop_assert!(close(f0, f1, 1e-9) && close(l0, l1, 1e-9));
        }
    }
    if d >= 2.0 {
        let (from, to) = ((d * 0.25).floor(), (d * 0.75).floor().max((d * 0.25).floor() + 1.0));
        let t = remix::trim(b, from, to).unwrap();
        prop_assert_eq!(t.duration, to - from);
        prop_assert_eq!(remix::skip(b, from, to).unwrap().duration, d - (to - from));
        for c in &b.channels {
            let (f1, l1) = first_last(t.channel(c.name).unwrap());
            prop_assert!(close(f1, c.sample(from).unwrap(), 1e-9) && close(l1, c.sample(to).unwrap(), 1e-9));
        }
    }

    let back = remix::stretch(&remix::stretch(b, f).unwrap(), 1.0 / f).unwrap();
    prop_assert!((back.duration - d).abs() <= 1e-6);
    let grid = tick_grid(d.min(back.duration), TICK);
    let (nb, nback) = (numeric(b), numeric(&back));
    for (c, r) in b.channels.iter().zip(&back.channels) {
        let smooth = c.samples.windows(2).all(|w| w[0].t < w[1].t);
        if smooth && !c.name.is_stepped() {
            let (rc, rr) = (nb.channel(c.name).unwrap(), nback.channel(c.name).unwrap());
            for &t in &grid {
                prop_assert!((rc.sample(t).unwrap() - rr.sample(t).unwrap()).abs() <= 1e-6);
            }
        } else {
            // jumps and steps: the sample lists themselves line up
            for (s, q) in c.samples.iter().zip(&r.samples) {
                prop_assert!((s.t - q.t).abs() <= 1e-6 && s.v == q.v);
            }
        }
    }
    Ok(())
}

fn criterion_1() -> Verdict {
    let n = Cell::new(0u32);
    let start = Instant::now();
    runner(1000)
        .run(&(transform_block(), 0.25..4.0f64), |(b, f)| {
            n.set(n.get() + 1);
            remix_laws(&b, f)
        })
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    within(Duration::from_secs(10), took)?;
    Ok(format!("{} random blocks, all laws hold, {took:.2?}", n.get()))
}

fn criterion_2() -> Verdict {
    let n = Cell::new(0u32);
    let start = Instant::now();
    runner(200)
        .run(&oracle::scenario(), |(blocks, tl)| {
            n.set(n.get() + 1);
            let cb = compile(&tl, &blocks, ConflictPolicy::LastWriterWins).unwrap();
            let got = replay(&cb, &oracle::initial(), oracle::TICK)
                .map(|fs| fs.into_iter().map(|f| f.state.elements).collect::<Vec<_>>());
            prop_assert_eq!(got, oracle::oracle(&tl, &blocks, &oracle::initial()));
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let took = start.elapsed();
    within(Duration::from_secs(30), took)?;
    Ok(format!("{} random timelines equal the per-tick oracle, {took:.2?}", n.get()))
}

fn turtle() -> scenario::Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/turtle.json");
    scenario::parse(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn turtle_archive() -> SessionArchive {
    scenario::run(&turtle(), None).unwrap().archive
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let out = scenario::run(&turtle(), None).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let r = &out.report;
    if r.failures() > 0 {
        return Err(format!("scenario failed:\n{}", r.to_text()));
    }
    let bh = out.archive.behaviors.iter().find(|b| b.id == "bh1".into()).ok_or("no behavior")?;
    let cb = bh.compiled.as_ref().ok_or("not compiled")?;
    if cb.duration != 1000.0 {
        return Err(format!("duration {}", cb.duration));
    }
    let frames = replay(cb, &out.archive.canvas, cb.tick).map_err(|e| e.to_string())?;
    let last = &frames.last().unwrap().state;
    let turtle_id = ElementId::from("turtle");
    if last.get(&turtle_id).is_some() || last.get(&"shell".into()).is_none() {
        return Err("final frame should hold the shell and not the turtle".into());
    }
    let flipped = &frames[frames.len() - 2].state;
    let rot = flipped.get(&turtle_id).ok_or("turtle gone early")?.pose.get(ChannelName::Rotation);
    if rot != std::f64::consts::PI {
        return Err(format!("turtle rotation {rot} before removal"));
    }
    within(Duration::from_secs(1), took)?;
    Ok(format!(
        "{} scenario checks pass; duration 1000 ms; shell replaces flipped turtle; {took:.2?}",
        r.outcomes.len()
    ))
}

fn criterion_4() -> Verdict {
    let archive = turtle_archive();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut jsonl = Vec::new();
    let mut svgs = Vec::new();
    for i in 0..5 {
        let frames = render::frames(&archive, &"bh1".into(), None).map_err(|e| e.to_string())?;
        let file = dir.path().join(format!("run{i}.jsonl"));
        render::write(&frames, &file, render::Format::FramesJsonl).map_err(|e| e.to_string())?;
        jsonl.push(std::fs::read(&file).unwrap());
        let sdir = dir.path().join(format!("svg{i}"));
        render::write(&frames, &sdir, render::Format::SvgDir).map_err(|e| e.to_string())?;
        let mut files: Vec<_> = std::fs::read_dir(&sdir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        svgs.push(files.iter().map(|p| std::fs::read(p).unwrap()).collect::<Vec<_>>());
    }
    if jsonl.windows(2).any(|w| w[0] != w[1]) || svgs.windows(2).any(|w| w[0] != w[1]) {
        return Err("renders differ between runs".into());
    }
    Ok(format!("5 renders identical: {} jsonl bytes, {} svg files", jsonl[0].len(), svgs[0].len()))
}

const WORKERS: [&str; 3] = ["w1", "w2", "w3"];

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut lb = Loopback::new(HubConfig::default());
    for w in WORKERS {
        lb.join(w, "locks");
    }
    lb.send("w1", ClientMessage::CreateBehavior { name: "one".into() });
    lb.send("w1", ClientMessage::CreateBehavior { name: "two".into() });
    let scopes = [("bh1", Activity::Demonstrate), ("bh1", Activity::Remix), ("bh2", Activity::Document)];
    let mut lock_ops = 0;
    while lock_ops < 600 {
        let w = WORKERS[rng.gen_range(0..3)];
        let (b, a) = scopes[rng.gen_range(0..scopes.len())];
        match rng.gen_range(0..20) {
            0..=8 => {
                lb.send(w, ClientMessage::LockAcquire { behavior_id: b.into(), activity: a });
                lock_ops += 1;
            }
            9..=13 => {
                lb.send(w, ClientMessage::LockRelease { behavior_id: b.into(), activity: a });
                lock_ops += 1;
            }
            14..=17 => lb.advance_by(rng.gen_range(1..2_000)),
            18 => lb.advance_by(rng.gen_range(25_000..40_000)),
            _ => {
                lb.leave(w);
                lb.join(w, "locks");
            }
        }
    }
    // nobody renews from here on, so every queue drains by expiry
    lb.advance_by(4 * 30_000 + 100);
    let tick = lb.hub.config().session.tick_ms;
    let audit = audit_locks(lb.hub.session("locks").unwrap().log(), tick)?;
    if audit.still_waiting > 0 || audit.queued != audit.promoted + audit.dequeued {
        return Err(format!("waiters left unserved: {audit:?}"));
    }
    Ok(format!(
        "{lock_ops} lock ops, {} grants, {} queued ({} promoted, {} removed), {} expiries; no double holder; \
         handover <= {} ms after eligibility (limit {tick}), eviction <= {} ms after TTL",
        audit.grants, audit.queued, audit.promoted, audit.dequeued, audit.expired, audit.max_promotion_delay, audit.max_eviction_delay
    ))
}

fn random_message(rng: &mut ChaCha8Rng) -> ClientMessage {
    let el = format!("e{}", rng.gen_range(0..4));
    match rng.gen_range(0..10) {
        0 => ClientMessage::Edit { edit: crowdmix_core::EditKind::Create(crowdmix_core::Element::shape(el, 8.0, 8.0)), behavior_id: None },
        1..=4 => ClientMessage::Edit {
            edit: crowdmix_core::EditKind::set(el, ChannelName::X, rng.gen_range(-100.0..100.0)),
            behavior_id: None,
        },
        5 => ClientMessage::Presence { cursor: Some([rng.gen_range(0.0..300.0), 0.0]), activity: None },
        6 => ClientMessage::LockAcquire { behavior_id: "bh1".into(), activity: Activity::Remix },
        7 => ClientMessage::LockRelease { behavior_id: "bh1".into(), activity: Activity::Remix },
        8 => ClientMessage::Edit { edit: crowdmix_core::EditKind::Delete { id: el.as_str().into() }, behavior_id: None },
        _ => ClientMessage::CreateBehavior { name: format!("b{}", rng.gen_range(0..1000)) },
    }
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut lb = Loopback::new(HubConfig { ..HubConfig::default() });
    for w in WORKERS {
        lb.join(w, "order");
    }
    let mut sent = 0;
    let mut boundaries = 0;
    let mut late_join_seq = None;
    while sent < 400 {
        if sent == 150 && late_join_seq.is_none() {
            lb.join("late", "order");
            let ServerMessage::Snapshot(Snapshot { seq, .. }) = &lb.client("late").unwrap().inbox[0] else {
                return Err("late joiner got no snapshot".into());
            };
            late_join_seq = Some(*seq);
        }
        if rng.gen_bool(0.15) {
            lb.advance_by(rng.gen_range(1..5_000));
        } else {
            let msg = random_message(&mut rng);
            lb.send(WORKERS[rng.gen_range(0..3)], msg);
            sent += 1;
        }
        let s = lb.hub.session("order").unwrap();
        for w in lb.workers() {
            let m = lb.client(w).unwrap().mirror.as_ref().unwrap();
            if m.seq != s.seq() || m.state != s.view() {
                return Err(format!("{w} diverged at seq {}", s.seq()));
            }
        }
        boundaries += 1;
    }
    let k = late_join_seq.unwrap();
    let log = lb.hub.session("order").unwrap().log().to_vec();
    if log.iter().enumerate().any(|(i, e)| e.seq != i as u64 + 1) {
        return Err("server log has gaps".into());
    }
    let streams: Vec<Vec<_>> = WORKERS
        .iter()
        .map(|w| lb.client(w).unwrap().inbox.iter().filter_map(ServerMessage::as_envelope).filter(|e| e.seq > 3).cloned().collect())
        .collect();
    if streams.iter().any(|s| s[..] != log[3..]) {
        return Err("clients saw different streams".into());
    }

    // snapshot-at-k plus suffix versus the full stream, compared at every seq > k
    let ServerMessage::Snapshot(snap) = lb.client("late").unwrap().inbox[0].clone() else { unreachable!() };
    let mut late = Mirror::from_snapshot(snap);
    let ServerMessage::Snapshot(first) = lb.client("w1").unwrap().inbox[0].clone() else { unreachable!() };
    let mut full = Mirror::from_snapshot(first);
    for env in &log {
        full.receive(env.clone()).map_err(|e| e.to_string())?;
        if env.seq > k {
            late.receive(env.clone()).map_err(|e| e.to_string())?;
            if late.state != full.state {
                return Err(format!("late joiner differs at seq {}", env.seq));
            }
        }
    }
    let checked = log.len() as u64 - k;
    Ok(format!(
        "{sent} messages, {} broadcasts, identical gap-free streams; late joiner at seq {k} exact at all {checked} later seqs \
         and at {boundaries} message boundaries",
        log.len()
    ))
}

fn criterion_7() -> Verdict {
    let archive = turtle_archive();
    let before = render::frames(&archive, &"bh1".into(), None).map_err(|e| e.to_string())?;
    let bytes = save_session(&archive).map_err(|e| e.to_string())?;
    let loaded: SessionArchive = load_session(&bytes).map_err(|e| e.to_string())?;
    let after = render::frames(&loaded, &"bh1".into(), None).map_err(|e| e.to_string())?;
    if render::frames_jsonl(&before) != render::frames_jsonl(&after) {
        return Err("replay differs after reload".into());
    }
    if save_session(&loaded).map_err(|e| e.to_string())? != bytes {
        return Err("re-save is not byte-identical".into());
    }
    // a brand-new worker in a fresh server can still run the behavior
    let mut lb = Loopback::new(HubConfig::default());
    lb.hub.load_session("restored", loaded, 0);
    lb.join("newcomer", "restored");
    let errs = lb.send("newcomer", ClientMessage::Fire { behavior_id: "bh1".into() });
    if !errs.is_empty() {
        return Err(format!("fire after reload: {errs:?}"));
    }
    lb.advance_by(1_100);
    let live = &lb.hub.session("restored").unwrap().canvas().elements;
    if live != &after.last().unwrap().state.elements {
        return Err("restored session ends in a different state".into());
    }
    Ok(format!("{} bytes saved; replay identical after reload; newcomer reproduces the behavior", bytes.len()))
}

fn criterion_8() -> Verdict {
    let start = Instant::now();
    let out = scenario::run(&turtle(), None).map_err(|e| e.to_string())?;
    let frames = render::frames(&out.archive, &"bh1".into(), None).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    if out.report.failures() > 0 || frames.is_empty() {
        return Err("pipeline did not complete".into());
    }
    within(Duration::from_secs(5), took)?;
    Ok(format!("demonstrate, segment, remix, compile, replay ({} frames) in {took:.2?}", frames.len()))
}

fn main() {
    let criteria: [Check; 8] = [
        ("remix algebra", criterion_1),
        ("oracle equivalence", criterion_2),
        ("mario-turtle end to end", criterion_3),
        ("render determinism", criterion_4),
        ("lock safety and liveness", criterion_5),
        ("protocol order and late join", criterion_6),
        ("persistence retention", criterion_7),
        ("pipeline latency", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS [{}] {name}: {detail}", i + 1),
            Ok(Err(why)) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", i + 1);
            }
            Err(_) => {
                failed += 1;
                println!("FAIL [{}] {name}: panicked", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
