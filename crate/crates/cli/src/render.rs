//! Replay a compiled behavior into files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crowdmix_core::archive::to_canonical_line;
use crowdmix_core::{bounding_box, replay, BehaviorId, CanvasState, Element, ElementKind, Frame, Rect, SessionArchive};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    FramesJsonl,
    SvgDir,
}

pub fn frames(archive: &SessionArchive, behavior: &BehaviorId, tick: Option<f64>) -> Result<Vec<Frame>, CliError> {
    let b = archive
        .behaviors
        .iter()
        .find(|b| &b.id == behavior)
        .ok_or_else(|| CliError::UnknownBehavior(behavior.clone()))?;
    let cb = b.compiled.as_ref().ok_or_else(|| CliError::NotCompiled(behavior.clone()))?;
    Ok(replay(cb, &archive.canvas, tick.unwrap_or(cb.tick))?)
}

/// One canonical canvas state per line.
pub fn frames_jsonl(frames: &[Frame]) -> String {
    frames.iter().map(|f| to_canonical_line(&f.state).expect("canvas serializes") + "\n").collect()
}

fn num(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn union(frames: &[Frame]) -> Rect {
    let boxes = frames.iter().flat_map(|f| f.state.elements.values()).filter(|e| e.pose.visible).map(bounding_box);
    boxes
        .reduce(|a, b| Rect::new(a.x0.min(b.x0), a.y0.min(b.y0), a.x1.max(b.x1), a.y1.max(b.y1)))
        .unwrap_or(Rect::new(0.0, 0.0, 1.0, 1.0))
}

fn element_svg(out: &mut String, el: &Element) {
    let p = &el.pose;
    let (w, h) = (el.width, el.height);
    let (cx, cy) = (p.x + w * p.scale_x / 2.0, p.y + h * p.scale_y / 2.0);
    let transform = format!(
        "translate({} {}) rotate({}) scale({} {})",
        num(cx),
        num(cy),
        num(p.rotation.to_degrees()),
        num(p.scale_x),
        num(p.scale_y)
    );
    let (x, y, w, h) = (num(-w / 2.0), num(-h / 2.0), num(w), num(h));
    let id = &el.id;
    match (el.kind, &el.asset_ref) {
        (ElementKind::Image, Some(hash)) => writeln!(
            out,
            r#"  <image data-id="{id}" href="assets/{hash}" x="{x}" y="{y}" width="{w}" height="{h}" transform="{transform}"/>"#
        ),
        (ElementKind::Text, _) => writeln!(
            out,
            r#"  <text data-id="{id}" x="{x}" y="{y}" transform="{transform}">{}</text>"#,
            escape(el.label.as_deref().unwrap_or_default())
        ),
        _ => writeln!(
            out,
            r##"  <rect data-id="{id}" x="{x}" y="{y}" width="{w}" height="{h}" fill="#9ab" stroke="#234" transform="{transform}"/>"##
        ),
    }
    .unwrap();
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// SVG for one canvas, painted in (zIndex, id) order.
pub fn svg(state: &CanvasState, view: &Rect, t: f64) -> String {
    let mut out = String::new();
    let (w, h) = (view.x1 - view.x0, view.y1 - view.y0);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="{} {} {} {}" data-t="{}">"#,
        num(view.x0),
        num(view.y0),
        num(w),
        num(h),
        num(t)
    )
    .unwrap();
    let mut els: Vec<&Element> = state.elements.values().filter(|e| e.pose.visible).collect();
    els.sort_by(|a, b| a.pose.z_index.cmp(&b.pose.z_index).then_with(|| a.id.cmp(&b.id)));
    for el in els {
        element_svg(&mut out, el);
    }
    out.push_str("</svg>\n");
    out
}

/// Every frame's SVG, sharing one view box.
pub fn svg_frames(frames: &[Frame]) -> Vec<(String, String)> {
    let b = union(frames);
    let view = Rect::new(b.x0 - 10.0, b.y0 - 10.0, b.x1 + 10.0, b.y1 + 10.0);
    frames.iter().enumerate().map(|(i, f)| (format!("frame_{i:05}.svg"), svg(&f.state, &view, f.t))).collect()
}

pub fn write(frames: &[Frame], out: &Path, format: Format) -> Result<(), CliError> {
    match format {
        Format::FramesJsonl => fs::write(out, frames_jsonl(frames)).map_err(CliError::io(out)),
        Format::SvgDir => {
            fs::create_dir_all(out).map_err(CliError::io(out))?;
            for (name, body) in svg_frames(frames) {
                let p = out.join(name);
                fs::write(&p, body).map_err(CliError::io(&p))?;
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_are_stable() {
        assert_eq!(num(1.0), "1");
        assert_eq!(num(-0.00001), "0");
        assert_eq!(num(180.0f64.to_radians().to_degrees()), "180");
        assert_eq!(num(0.125), "0.125");
    }

    #[test]
    fn rect_is_centered_and_rotated() {
        let mut el = Element::shape("e1", 20.0, 10.0);
        el.pose.x = 100.0;
        el.pose.rotation = std::f64::consts::PI;
        let state = CanvasState { elements: [(el.id.clone(), el)].into(), version: 1 };
        let s = svg(&state, &Rect::new(0.0, 0.0, 200.0, 100.0), 0.0);
        assert!(s.contains(r#"x="-10" y="-5" width="20" height="10""#), "{s}");
        assert!(s.contains("translate(110 5) rotate(180) scale(1 1)"), "{s}");
    }
}
