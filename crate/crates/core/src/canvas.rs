//! Value-semantic shared canvas: elements, poses and edits.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelName;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub String);

impl ElementId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    /// Fresh UUID-format id.
    pub fn random() -> Self {
        Self(uuid::Uuid::new_v4().to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ElementId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

/// Placement of an element. `(x, y)` is the top-left corner of the
/// unrotated rectangle (y grows downward); rotation pivots on the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct Pose<T: Scalar> {
    pub x: T,
    pub y: T,
    pub rotation: T,
    pub scale_x: T,
    pub scale_y: T,
    pub z_index: i64,
    pub visible: bool,
}

impl<T: Scalar> Default for Pose<T> {
    fn default() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
            rotation: T::zero(),
            scale_x: T::one(),
            scale_y: T::one(),
            z_index: 0,
            visible: true,
        }
    }
}

impl<T: Scalar> Pose<T> {
    pub fn at(x: T, y: T) -> Self {
        Self {
            x,
            y,
            ..Self::default()
        }
    }

    /// Channel value, with booleans as 0/1.
    pub fn get(&self, name: ChannelName) -> T {
        match name {
            ChannelName::X => self.x,
            ChannelName::Y => self.y,
            ChannelName::Rotation => self.rotation,
            ChannelName::ScaleX => self.scale_x,
            ChannelName::ScaleY => self.scale_y,
            ChannelName::ZIndex => T::lit(self.z_index as f64),
            ChannelName::Visible => {
                if self.visible {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn set(&mut self, name: ChannelName, value: T) -> Result<(), CanvasError> {
        if !value.is_finite() {
            return Err(CanvasError::InvalidValue(format!("{name} is not finite")));
        }
        match name {
            ChannelName::X => self.x = value,
            ChannelName::Y => self.y = value,
            ChannelName::Rotation => self.rotation = value,
            ChannelName::ScaleX | ChannelName::ScaleY if value <= T::zero() => {
                return Err(CanvasError::InvalidValue(format!("{name} must be > 0")))
            }
            ChannelName::ScaleX => self.scale_x = value,
            ChannelName::ScaleY => self.scale_y = value,
            ChannelName::ZIndex => self.z_index = value.round().to_f64_lossy() as i64,
            ChannelName::Visible => self.visible = value >= T::half(),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CanvasError> {
        for v in [self.x, self.y, self.rotation, self.scale_x, self.scale_y] {
            if !v.is_finite() {
                return Err(CanvasError::InvalidValue("pose value is not finite".into()));
            }
        }
        if self.scale_x <= T::zero() || self.scale_y <= T::zero() {
            return Err(CanvasError::InvalidValue("scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Image,
    Shape,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct Element<T: Scalar> {
    pub id: ElementId,
    pub kind: ElementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub pose: Pose<T>,
    pub width: T,
    pub height: T,
}

impl<T: Scalar> Element<T> {
    pub fn shape(id: impl Into<ElementId>, width: T, height: T) -> Self {
        Self {
            id: id.into(),
            kind: ElementKind::Shape,
            asset_ref: None,
            label: None,
            pose: Pose::default(),
            width,
            height,
        }
    }

    pub fn image(id: impl Into<ElementId>, asset_ref: impl Into<String>, width: T, height: T) -> Self {
        Self {
            kind: ElementKind::Image,
            asset_ref: Some(asset_ref.into()),
            ..Self::shape(id, width, height)
        }
    }

    pub fn with_pose(mut self, pose: Pose<T>) -> Self {
        self.pose = pose;
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn validate(&self) -> Result<(), CanvasError> {
        if self.kind == ElementKind::Image && self.asset_ref.is_none() {
            return Err(CanvasError::InvalidValue(format!("image {} has no assetRef", self.id)));
        }
        if !self.width.is_finite() || !self.height.is_finite() || self.width < T::zero() || self.height < T::zero() {
            return Err(CanvasError::InvalidValue(format!("bad size for {}", self.id)));
        }
        self.pose.validate()
    }
}

impl From<String> for ElementId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CanvasState<T: Scalar> {
    pub elements: BTreeMap<ElementId, Element<T>>,
    pub version: u64,
}

impl<T: Scalar> Default for CanvasState<T> {
    fn default() -> Self {
        Self {
            elements: BTreeMap::new(),
            version: 0,
        }
    }
}

impl<T: Scalar> CanvasState<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &ElementId) -> Option<&Element<T>> {
        self.elements.get(id)
    }

    pub fn apply(&self, edit: &EditEvent<T>) -> Result<Self, CanvasError> {
        apply_edit(self, edit)
    }

    /// In-place variant used by replay loops; same validation and version bump.
    pub fn apply_in_place(&mut self, kind: &EditKind<T>) -> Result<(), CanvasError> {
        match kind {
            EditKind::Create(el) => {
                if self.elements.contains_key(&el.id) {
                    return Err(CanvasError::DuplicateElement(el.id.clone()));
                }
                el.validate()?;
                self.elements.insert(el.id.clone(), el.clone());
            }
            EditKind::Delete { id } => {
                self.elements
                    .remove(id)
                    .ok_or_else(|| CanvasError::ElementNotFound(id.clone()))?;
            }
            EditKind::SetProperty { element, channel, value } => {
                let el = self
                    .elements
                    .get_mut(element)
                    .ok_or_else(|| CanvasError::ElementNotFound(element.clone()))?;
                let mut pose = el.pose;
                pose.set(*channel, *value)?;
                el.pose = pose;
            }
        }
        self.version += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "camelCase", bound = "")]
pub enum EditKind<T: Scalar> {
    Create(Element<T>),
    Delete { id: ElementId },
    #[serde(rename_all = "camelCase")]
    SetProperty {
        element: ElementId,
        channel: ChannelName,
        value: T,
    },
}

impl<T: Scalar> EditKind<T> {
    pub fn element_id(&self) -> &ElementId {
        match self {
            EditKind::Create(el) => &el.id,
            EditKind::Delete { id } => id,
            EditKind::SetProperty { element, .. } => element,
        }
    }

    pub fn set(element: impl Into<ElementId>, channel: ChannelName, value: T) -> Self {
        EditKind::SetProperty {
            element: element.into(),
            channel,
            value,
        }
    }
}

/// A single manipulation of the canvas at session time `t` (ms).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", bound = "")]
pub struct EditEvent<T: Scalar> {
    pub t: T,
    pub worker_id: String,
    pub kind: EditKind<T>,
}

impl<T: Scalar> EditEvent<T> {
    pub fn new(t: T, worker_id: impl Into<String>, kind: EditKind<T>) -> Self {
        Self {
            t,
            worker_id: worker_id.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CanvasError {
    #[error("element {0} not found")]
    ElementNotFound(ElementId),
    #[error("element {0} already exists")]
    DuplicateElement(ElementId),
    #[error("invalid value: {0}")]
    InvalidValue(String),
}

/// Apply one edit, returning the next state. The input is left untouched.
pub fn apply_edit<T: Scalar>(state: &CanvasState<T>, e: &EditEvent<T>) -> Result<CanvasState<T>, CanvasError> {
    if !e.t.is_finite() || e.t < T::zero() {
        return Err(CanvasError::InvalidValue("edit time must be finite and >= 0".into()));
    }
    let mut next = state.clone();
    next.apply_in_place(&e.kind)?;
    Ok(next)
}

/// Axis-aligned rectangle `(x0, y0)`–`(x1, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Rect<T: Scalar> {
    pub x0: T,
    pub y0: T,
    pub x1: T,
    pub y1: T,
}

impl<T: Scalar> Rect<T> {
    pub fn new(x0: T, y0: T, x1: T, y1: T) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// Closed intersection test; touching edges count.
    pub fn intersects(&self, other: &Rect<T>) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    /// Horizontal extents share a positive-length interval.
    pub fn overlaps_horizontally(&self, other: &Rect<T>) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1
    }
}

/// Axis-aligned box of the scaled, rotated element rectangle.
pub fn bounding_box<T: Scalar>(el: &Element<T>) -> Rect<T> {
    let p = &el.pose;
    let w = el.width * p.scale_x;
    let h = el.height * p.scale_y;
    let (hw, hh) = (w * T::half(), h * T::half());
    let (cx, cy) = (p.x + hw, p.y + hh);
    let (sin, cos) = p.rotation.sin_cos();
    // half extents of the rotated rectangle
    let ex = (hw * cos).abs() + (hh * sin).abs();
    let ey = (hw * sin).abs() + (hh * cos).abs();
    Rect::new(cx - ex, cy - ey, cx + ex, cy + ey)
}
