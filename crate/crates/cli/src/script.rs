//! Remix scripts.
//!
//! One remix per line, whitespace-separated tokens, `#` starts a comment:
//!
//! ```text
//! stretch  <block> <factor>
//! duration <block> <ms>
//! instant  <block>
//! trim     <block> <from> <to>
//! skip     <block> <from> <to>
//! normalize <block>
//! smooth   <block> <window>
//! ease     <block>
//! reverse  <block>
//! resize   <block> <sx> <sy> [<ax> <ay>]
//! rotate   <block> <theta> [<ax> <ay>]
//! clone    <block>
//! apply    <block> <element> [relative|absolute]
//! ```
//!
//! `<block>` is a block id, or `_` for the block made by the previous line.
//! Each line adds one new block; inputs are never modified.

use crowdmix_core::{Anchor, ApplyMode, BehaviorStore, BlockId, RemixFn, SessionArchive, StoreError};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum BlockRef {
    Id(BlockId),
    Previous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptLine {
    pub line: usize,
    pub block: BlockRef,
    pub remix: RemixFn,
}

fn num(line: usize, tok: &str) -> Result<f64, CliError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::Parse { line, message: format!("expected a number, got `{tok}`") })
}

fn anchor(line: usize, rest: &[&str]) -> Result<Anchor, CliError> {
    match rest {
        [] => Ok(Anchor::FirstSample),
        [x, y] => Ok(Anchor::Point { x: num(line, x)?, y: num(line, y)? }),
        _ => Err(CliError::Parse { line, message: "anchor needs both x and y".into() }),
    }
}

pub fn parse_script(text: &str) -> Result<Vec<ScriptLine>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or_default();
        let toks: Vec<&str> = content.split_whitespace().collect();
        let Some((&name, rest)) = toks.split_first() else { continue };
        let Some((&block, args)) = rest.split_first() else {
            return Err(CliError::Parse { line, message: format!("`{name}` needs a block") });
        };
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(CliError::Parse { line, message: format!("`{name}` takes {n} argument(s), got {}", args.len()) })
            }
        };
        let remix = match name {
            "stretch" => {
                arity(1)?;
                RemixFn::Stretch { factor: num(line, args[0])? }
            }
            "duration" => {
                arity(1)?;
                RemixFn::SetDuration { ms: num(line, args[0])? }
            }
            "instant" => {
                arity(0)?;
                RemixFn::MakeInstant
            }
            "trim" | "skip" => {
                arity(2)?;
                let (from, to) = (num(line, args[0])?, num(line, args[1])?);
                if name == "trim" {
                    RemixFn::Trim { from, to }
                } else {
                    RemixFn::Skip { from, to }
                }
            }
            "normalize" => {
                arity(0)?;
                RemixFn::Normalize
            }
            "smooth" => {
                arity(1)?;
                RemixFn::Smooth { window: num(line, args[0])? }
            }
            "ease" => {
                arity(0)?;
                RemixFn::EaseInOut
            }
            "reverse" => {
                arity(0)?;
                RemixFn::Reverse
            }
            "resize" if args.len() >= 2 => RemixFn::ResizeTrajectory {
                sx: num(line, args[0])?,
                sy: num(line, args[1])?,
                anchor: anchor(line, &args[2..])?,
            },
            "rotate" if !args.is_empty() => {
                RemixFn::RotateTrajectory { theta: num(line, args[0])?, anchor: anchor(line, &args[1..])? }
            }
            "clone" => {
                arity(0)?;
                RemixFn::Clone
            }
            "apply" if matches!(args.len(), 1 | 2) => {
                let mode = match args.get(1) {
                    None | Some(&"relative") => ApplyMode::Relative,
                    Some(&"absolute") => ApplyMode::Absolute,
                    Some(m) => return Err(CliError::Parse { line, message: format!("unknown apply mode `{m}`") }),
                };
                RemixFn::Apply { target: args[0].into(), mode }
            }
            "resize" | "rotate" | "apply" => {
                return Err(CliError::Parse { line, message: format!("wrong number of arguments for `{name}`") })
            }
            other => return Err(CliError::Parse { line, message: format!("unknown remix `{other}`") }),
        };
        let block = if block == "_" { BlockRef::Previous } else { BlockRef::Id(block.into()) };
        out.push(ScriptLine { line, block, remix });
    }
    Ok(out)
}

/// Run a parsed script against a session. Returns the updated session and
/// the ids of the blocks it produced, in line order.
pub fn run_script(archive: &SessionArchive, script: &[ScriptLine], tick: f64) -> Result<(SessionArchive, Vec<BlockId>), CliError> {
    let mut store = BehaviorStore::from_parts(archive.blocks.clone(), archive.behaviors.clone(), archive.bindings.clone());
    let mut out = archive.clone();
    let mut produced: Vec<BlockId> = Vec::new();
    for l in script {
        let source = match &l.block {
            BlockRef::Id(id) => id.clone(),
            BlockRef::Previous => produced
                .last()
                .cloned()
                .ok_or_else(|| CliError::Parse { line: l.line, message: "`_` used before any block was produced".into() })?,
        };
        let id = store.remix(&source, std::slice::from_ref(&l.remix), tick).map_err(|e| match e {
            StoreError::UnknownBlock(b) => CliError::UnknownBlock(b),
            StoreError::Remix(source) => CliError::Remix { line: l.line, source },
            other => CliError::Parse { line: l.line, message: other.to_string() },
        })?;
        out.blocks.push(store.block(&id).expect("just added").clone());
        produced.push(id);
    }
    Ok((out, produced))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_form() {
        let s = parse_script(
            "# header\nstretch b1 0.5\nduration b1 1000 # trailing\n\ninstant b2\ntrim b1 100 200\nresize _ 2 2 0 0\nrotate b1 3.14\napply b1 shell absolute\n",
        )
        .unwrap();
        assert_eq!(s.len(), 7);
        assert_eq!(s[0], ScriptLine { line: 2, block: BlockRef::Id("b1".into()), remix: RemixFn::Stretch { factor: 0.5 } });
        assert_eq!(s[4].block, BlockRef::Previous);
        assert_eq!(s[4].remix, RemixFn::ResizeTrajectory { sx: 2.0, sy: 2.0, anchor: Anchor::Point { x: 0.0, y: 0.0 } });
        assert_eq!(s[6].remix, RemixFn::Apply { target: "shell".into(), mode: ApplyMode::Absolute });
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_script("reverse b1\n\nstretch b1 fast").unwrap_err();
        assert!(matches!(err, CliError::Parse { line: 3, .. }));
        assert!(matches!(parse_script("wobble b1").unwrap_err(), CliError::Parse { line: 1, .. }));
        assert!(matches!(parse_script("instant").unwrap_err(), CliError::Parse { line: 1, .. }));
        assert!(matches!(parse_script("rotate b1 1 2").unwrap_err(), CliError::Parse { line: 1, .. }));
        assert!(parse_script("").unwrap().is_empty());
    }
}
