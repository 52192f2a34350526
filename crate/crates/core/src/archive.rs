//! Session files: canonical JSON plus a content-addressed asset directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::behavior::{Behavior, BehaviorStore, TriggerBinding};
use crate::block::OpBlock;
use crate::canvas::{CanvasState, Element};
use crate::envelope::Envelope;
use crate::scalar::Scalar;
use crate::timeline::StructuralOp;

pub const SCHEMA: &str = "crowdmix/1";
pub const ASSET_DIR: &str = "assets";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AssetRef {
    /// Base64 of the raw bytes.
    Inline { data: String },
    /// Path relative to the session file.
    External { path: String },
}

impl AssetRef {
    /// Inline entry for base64 `data`, keyed by the hash of the decoded bytes.
    pub fn from_base64(data: &str) -> Result<(String, AssetRef), ArchiveError> {
        let hash = sha256_hex(&B64.decode(data)?);
        Ok((hash, AssetRef::Inline { data: data.to_owned() }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct SessionArchive<T: Scalar> {
    pub schema: String,
    pub canvas: CanvasState<T>,
    pub assets: BTreeMap<String, AssetRef>,
    pub blocks: Vec<OpBlock<T>>,
    pub behaviors: Vec<Behavior<T>>,
    pub bindings: Vec<TriggerBinding<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_log: Option<Vec<Envelope>>,
}

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("unsupported schema `{0}`")]
    SchemaMismatch(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("asset {expected} has hash {actual}")]
    AssetHash { expected: String, actual: String },
    #[error("malformed session file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad asset encoding: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn canonical_value(v: Value) -> Value {
    match v {
        Value::Object(m) => {
            let sorted: BTreeMap<String, Value> = m.into_iter().map(|(k, v)| (k, canonical_value(v))).collect();
            Value::Object(sorted.into_iter().collect::<Map<_, _>>())
        }
        Value::Array(a) => Value::Array(a.into_iter().map(canonical_value).collect()),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() && f.fract() == 0.0 && f.abs() < 9.007_199_254_740_992e15 => Value::Number(Number::from(f as i64)),
            _ => Value::Number(n),
        },
        other => other,
    }
}

/// Sorted keys, shortest round-trip floats and integral floats as integers.
pub fn to_canonical_value<S: Serialize>(x: &S) -> serde_json::Result<Value> {
    Ok(canonical_value(serde_json::to_value(x)?))
}

pub fn to_canonical_line<S: Serialize>(x: &S) -> serde_json::Result<String> {
    serde_json::to_string(&to_canonical_value(x)?)
}

pub fn to_canonical_pretty<S: Serialize>(x: &S) -> serde_json::Result<String> {
    serde_json::to_string_pretty(&to_canonical_value(x)?)
}

impl<T: Scalar> SessionArchive<T> {
    pub fn new(canvas: CanvasState<T>, store: &BehaviorStore<T>) -> Self {
        Self {
            schema: SCHEMA.to_owned(),
            canvas,
            assets: BTreeMap::new(),
            blocks: store.blocks.values().cloned().collect(),
            behaviors: store.behaviors.values().cloned().collect(),
            bindings: store.bindings.clone(),
            op_log: None,
        }
    }

    pub fn add_asset(&mut self, bytes: &[u8]) -> String {
        let hash = sha256_hex(bytes);
        self.assets.insert(hash.clone(), AssetRef::Inline { data: B64.encode(bytes) });
        hash
    }

    pub fn into_store(self) -> (CanvasState<T>, BehaviorStore<T>) {
        (self.canvas, BehaviorStore::from_parts(self.blocks, self.behaviors, self.bindings))
    }

    /// Referential integrity: timeline blocks, asset references and binding targets.
    pub fn validate(&self) -> Result<(), ArchiveError> {
        let blocks: BTreeSet<_> = self.blocks.iter().map(|b| &b.id).collect();
        for b in &self.behaviors {
            if let Some(missing) = b.timeline.block_ids().find(|id| !blocks.contains(id)) {
                return Err(ArchiveError::DanglingReference(format!("behavior {} uses block {missing}", b.id)));
            }
        }
        let behaviors: BTreeSet<_> = self.behaviors.iter().map(|b| &b.id).collect();
        if let Some(bad) = self.bindings.iter().find(|b| !behaviors.contains(&b.behavior_id)) {
            return Err(ArchiveError::DanglingReference(format!("binding for behavior {}", bad.behavior_id)));
        }
        let payloads = self.blocks.iter().filter_map(|b| b.payload.as_ref());
        let scheduled = self
            .behaviors
            .iter()
            .filter_map(|b| b.compiled.as_ref())
            .flat_map(|c| c.structural_schedule.iter())
            .filter_map(|s| match &s.op {
                StructuralOp::Create(e) => Some(e),
                StructuralOp::Delete { .. } => None,
            });
        let all: Vec<&Element<T>> = self.canvas.elements.values().chain(payloads).chain(scheduled).collect();
        for el in all {
            if let Some(r) = &el.asset_ref {
                if !self.assets.contains_key(r) {
                    return Err(ArchiveError::DanglingReference(format!("element {} uses asset {r}", el.id)));
                }
            }
        }
        Ok(())
    }

    /// Decoded bytes of an asset; external paths resolve against `base`.
    pub fn asset_bytes(&self, hash: &str, base: &Path) -> Result<Vec<u8>, ArchiveError> {
        let bytes = match self.assets.get(hash) {
            None => return Err(ArchiveError::DanglingReference(format!("asset {hash}"))),
            Some(AssetRef::Inline { data }) => B64.decode(data)?,
            Some(AssetRef::External { path }) => fs::read(base.join(path))
                .map_err(|_| ArchiveError::DanglingReference(format!("asset file {path}")))?,
        };
        let actual = sha256_hex(&bytes);
        if actual != hash {
            return Err(ArchiveError::AssetHash { expected: hash.to_owned(), actual });
        }
        Ok(bytes)
    }
}

pub fn save_session<T: Scalar>(a: &SessionArchive<T>) -> Result<Vec<u8>, ArchiveError> {
    let mut s = to_canonical_pretty(a)?;
    s.push('\n');
    Ok(s.into_bytes())
}

pub fn load_session<T: Scalar>(bytes: &[u8]) -> Result<SessionArchive<T>, ArchiveError> {
    let v: Value = serde_json::from_slice(bytes)?;
    let schema = v.get("schema").and_then(Value::as_str).unwrap_or_default();
    if schema != SCHEMA {
        return Err(ArchiveError::SchemaMismatch(schema.to_owned()));
    }
    let a: SessionArchive<T> = serde_json::from_value(v)?;
    a.validate()?;
    Ok(a)
}

/// Content-addressed blobs under `<root>/assets/<sha256>`.
#[derive(Debug, Clone)]
pub struct AssetStore {
    root: PathBuf,
}

impl AssetStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn relative_path(hash: &str) -> String {
        format!("{ASSET_DIR}/{hash}")
    }

    pub fn put(&self, bytes: &[u8]) -> io::Result<String> {
        let hash = sha256_hex(bytes);
        let path = self.root.join(Self::relative_path(&hash));
        if !path.exists() {
            fs::create_dir_all(self.root.join(ASSET_DIR))?;
            fs::write(&path, bytes)?;
        }
        Ok(hash)
    }

    pub fn get(&self, hash: &str) -> io::Result<Vec<u8>> {
        fs::read(self.root.join(Self::relative_path(hash)))
    }
}

fn parent_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

/// Write the session file; inline assets move into the `assets/` directory
/// next to it when `externalize` is set.
pub fn save_to_path<T: Scalar>(a: &SessionArchive<T>, path: &Path, externalize: bool) -> Result<(), ArchiveError> {
    let base = parent_dir(path);
    let mut out = a.clone();
    if externalize {
        let store = AssetStore::new(base);
        for (hash, r) in out.assets.iter_mut() {
            if let AssetRef::Inline { data } = r {
                let written = store.put(&B64.decode(data.as_bytes())?)?;
                if &written != hash {
                    return Err(ArchiveError::AssetHash { expected: hash.clone(), actual: written });
                }
                *r = AssetRef::External { path: AssetStore::relative_path(hash) };
            }
        }
    }
    fs::write(path, save_session(&out)?)?;
    Ok(())
}

/// Load a session file and check that every external asset is present.
pub fn load_from_path<T: Scalar>(path: &Path) -> Result<SessionArchive<T>, ArchiveError> {
    let a: SessionArchive<T> = load_session(&fs::read(path)?)?;
    let base = parent_dir(path);
    for (hash, r) in &a.assets {
        if matches!(r, AssetRef::External { .. }) {
            a.asset_bytes(hash, base)?;
        }
    }
    Ok(a)
}
