//! Annotated 3D scenes and the situated agent.
//!
//! A [`Scene`] is loaded once from a JSON scene file and never mutated
//! afterwards. Objects iterate in ascending id order everywhere, which is the
//! determinism contract the rest of the crate relies on.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quaternions are renormalized on load; anything further from unit norm than
/// this is treated as a corrupt annotation.
const MAX_QUATERNION_DRIFT: f64 = 1e-2;

/// Horizontal projections shorter than this are considered vertical.
const MIN_HORIZONTAL_NORM: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("scene file is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("object {id}: {field} {reason}")]
    InvalidObject { id: u32, field: &'static str, reason: String },
    #[error("duplicate object id {0}")]
    DuplicateId(u32),
    #[error("agent: {field} {reason}")]
    InvalidAgent { field: &'static str, reason: String },
    #[error("agent facing direction is vertical; cannot derive a horizontal forward vector")]
    DegenerateFacing,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Add for Vec3 {
    type Output = Vec3;

    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;

    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Unit quaternion `(x, y, z, w)` with the canonical sign `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { x: 0.0, y: 0.0, z: 0.0, w: 1.0 };

    pub fn from_array(a: [f64; 4]) -> Self {
        Self { x: a[0], y: a[1], z: a[2], w: a[3] }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.z, self.w]
    }

    /// Rotation of `angle` radians about +z.
    pub fn from_yaw(angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Self { x: 0.0, y: 0.0, z: s, w: c }.canonical()
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    /// Flips the sign so that `w >= 0`; `q` and `-q` encode the same rotation.
    pub fn canonical(self) -> Self {
        if self.w < 0.0 {
            Self { x: -self.x, y: -self.y, z: -self.z, w: -self.w }
        } else {
            self
        }
    }

    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        Some(Self { x: self.x / n, y: self.y / n, z: self.z / n, w: self.w / n })
    }

    /// Hamilton product `self * other`.
    pub fn hamilton(self, o: Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Rotates `v` by this quaternion, `v' = q v q*`.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        // t = 2 (q_v x v); v' = v + w t + q_v x t
        let q = Vec3::new(self.x, self.y, self.z);
        let t = cross(q, v).scale(2.0);
        v + t.scale(self.w) + cross(q, t)
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    Vec3::new(a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x)
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let t = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if t >= PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// A box with a vertical axis and a yaw-only orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub center: Vec3,
    /// Length (along the heading), width, height.
    pub lwh: [f64; 3],
    /// Yaw about +z in `[-pi, pi)`.
    pub heading: f64,
    /// Whether the annotation supplied a heading. Headingless boxes are
    /// axis-aligned and defer to the agent's facing for allocentric frames.
    pub explicit_heading: bool,
}

impl OrientedBox {
    pub fn axis_aligned(center: Vec3, lwh: [f64; 3]) -> Self {
        Self { center, lwh, heading: 0.0, explicit_heading: false }
    }

    pub fn with_heading(center: Vec3, lwh: [f64; 3], heading: f64) -> Self {
        Self { center, lwh, heading: wrap_angle(heading), explicit_heading: true }
    }

    pub fn bottom(&self) -> f64 {
        self.center.z - self.lwh[2] / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center.z + self.lwh[2] / 2.0
    }

    pub fn footprint_area(&self) -> f64 {
        self.lwh[0] * self.lwh[1]
    }

    /// Unit vector of the box's local +x axis in the XY plane.
    pub fn heading_vector(&self) -> Vec3 {
        Vec3::new(self.heading.cos(), self.heading.sin(), 0.0)
    }
}

/// The four XY corners of a box, counter-clockwise.
pub fn footprint(b: &OrientedBox) -> [[f64; 2]; 4] {
    let (hl, hw) = (b.lwh[0] / 2.0, b.lwh[1] / 2.0);
    let (s, c) = b.heading.sin_cos();
    let local = [[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]];
    local.map(|[u, v]| [b.center.x + c * u - s * v, b.center.y + s * u + c * v])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub category: String,
    pub bbox: OrientedBox,
    /// Annotated attributes keyed by `color`, `shape`, `material` or `state`.
    pub attributes: BTreeMap<String, String>,
}

impl ObjectInstance {
    pub fn center(&self) -> Vec3 {
        self.bbox.center
    }

    pub fn attribute(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPose {
    pub position: Vec3,
    pub rotation: Quaternion,
    /// Body-frame axis that counts as "forward" before rotation. Defaults to +x.
    pub reference_axis: Vec3,
}

impl AgentPose {
    pub fn new(position: Vec3, rotation: Quaternion) -> Self {
        Self { position, rotation, reference_axis: Vec3::new(1.0, 0.0, 0.0) }
    }

    pub fn facing_yaw(position: Vec3, yaw: f64) -> Self {
        Self::new(position, Quaternion::from_yaw(yaw))
    }

    pub fn forward(&self) -> Result<Vec3, SceneError> {
        forward_vector(self)
    }
}

/// The agent's facing direction: the rotated reference axis projected onto
/// the XY plane and normalized.
pub fn forward_vector(pose: &AgentPose) -> Result<Vec3, SceneError> {
    let v = pose.rotation.rotate(pose.reference_axis);
    let n = v.x.hypot(v.y);
    if !(n > MIN_HORIZONTAL_NORM) {
        return Err(SceneError::DegenerateFacing);
    }
    Ok(Vec3::new(v.x / n, v.y / n, 0.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub scene_id: String,
    pub objects: BTreeMap<ObjectId, ObjectInstance>,
    pub agent: AgentPose,
}

impl Scene {
    pub fn object(&self, id: ObjectId) -> Option<&ObjectInstance> {
        self.objects.get(&id)
    }

    /// Objects in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = &ObjectInstance> {
        self.objects.values()
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    /// Same scene viewed from another pose.
    pub fn with_agent(&self, agent: AgentPose) -> Scene {
        Scene { agent, ..self.clone() }
    }

    /// Applies one rotation about +z (by `yaw`) followed by a translation to
    /// every object and to the agent.
    pub fn rigid_transform(&self, yaw: f64, translation: Vec3) -> Scene {
        let (s, c) = yaw.sin_cos();
        let move_point = |p: Vec3| Vec3::new(c * p.x - s * p.y, s * p.x + c * p.y, p.z) + translation;
        let objects = self
            .objects
            .iter()
            .map(|(id, o)| {
                let mut o = o.clone();
                o.bbox.center = move_point(o.bbox.center);
                o.bbox.heading = wrap_angle(o.bbox.heading + yaw);
                (*id, o)
            })
            .collect();
        let agent = AgentPose {
            position: move_point(self.agent.position),
            rotation: Quaternion::from_yaw(yaw).hamilton(self.agent.rotation).canonical(),
            reference_axis: self.agent.reference_axis,
        };
        Scene { scene_id: self.scene_id.clone(), objects, agent }
    }

    /// Deterministic JSON rendering in the scene-file schema.
    pub fn canonical_dump(&self) -> String {
        serde_json::to_string(&SceneFile::from(self)).expect("scene serializes")
    }
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub scene_id: String,
    pub agent: AgentFile,
    pub objects: Vec<ObjectFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub position: [f64; 3],
    pub rotation: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_axis: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectFile {
    pub id: u32,
    pub category: String,
    pub center: [f64; 3],
    pub lwh: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heading: Option<f64>,
    #[serde(default)]
    pub attributes: AttributesFile,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributesFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,
}

impl From<&Scene> for SceneFile {
    fn from(scene: &Scene) -> Self {
        let reference_axis =
            (scene.agent.reference_axis != Vec3::new(1.0, 0.0, 0.0)).then(|| scene.agent.reference_axis.to_array());
        SceneFile {
            scene_id: scene.scene_id.clone(),
            agent: AgentFile {
                position: scene.agent.position.to_array(),
                rotation: scene.agent.rotation.to_array(),
                reference_axis,
            },
            objects: scene
                .iter()
                .map(|o| ObjectFile {
                    id: o.id.0,
                    category: o.category.clone(),
                    center: o.bbox.center.to_array(),
                    lwh: o.bbox.lwh,
                    heading: o.bbox.explicit_heading.then_some(o.bbox.heading),
                    attributes: AttributesFile {
                        color: o.attributes.get("color").cloned(),
                        shape: o.attributes.get("shape").cloned(),
                        material: o.attributes.get("material").cloned(),
                        state: o.attributes.get("state").cloned(),
                    },
                })
                .collect(),
        }
    }
}

/// Parses and validates a scene file.
pub fn load_scene(bytes: &[u8]) -> Result<Scene, SceneError> {
    let file: SceneFile = serde_json::from_slice(bytes)?;
    scene_from_file(file)
}

pub fn scene_from_file(file: SceneFile) -> Result<Scene, SceneError> {
    let agent = validate_agent(&file.agent)?;
    let mut objects = BTreeMap::new();
    for obj in file.objects {
        let inst = validate_object(obj)?;
        let id = inst.id;
        if objects.insert(id, inst).is_some() {
            return Err(SceneError::DuplicateId(id.0));
        }
    }
    Ok(Scene { scene_id: file.scene_id, objects, agent })
}

/// Validates a raw `(position, rotation)` pair as an agent pose.
pub fn pose_from_parts(position: [f64; 3], rotation: [f64; 4]) -> Result<AgentPose, SceneError> {
    validate_agent(&AgentFile { position, rotation, reference_axis: None })
}

fn validate_agent(a: &AgentFile) -> Result<AgentPose, SceneError> {
    let position = Vec3::from_array(a.position);
    if !position.is_finite() {
        return Err(SceneError::InvalidAgent { field: "position", reason: "must be finite".into() });
    }
    let raw = Quaternion::from_array(a.rotation);
    let n = raw.norm();
    if !n.is_finite() || (n - 1.0).abs() > MAX_QUATERNION_DRIFT {
        return Err(SceneError::InvalidAgent {
            field: "rotation",
            reason: format!("must be a unit quaternion (norm {n})"),
        });
    }
    let rotation = raw.normalized().expect("norm checked").canonical();
    let mut pose = AgentPose::new(position, rotation);
    if let Some(axis) = a.reference_axis {
        let axis = Vec3::from_array(axis);
        let n = axis.norm();
        if !n.is_finite() || n == 0.0 {
            return Err(SceneError::InvalidAgent {
                field: "reference_axis",
                reason: "must be a non-zero finite vector".into(),
            });
        }
        pose.reference_axis = axis.scale(1.0 / n);
    }
    Ok(pose)
}

fn validate_object(o: ObjectFile) -> Result<ObjectInstance, SceneError> {
    let bad = |field, reason: &str| SceneError::InvalidObject { id: o.id, field, reason: reason.into() };
    let category = o.category.trim().to_lowercase();
    if category.is_empty() {
        return Err(bad("category", "must be non-empty"));
    }
    let center = Vec3::from_array(o.center);
    if !center.is_finite() {
        return Err(bad("center", "must be finite"));
    }
    if o.lwh.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(bad("lwh", "components must be finite and > 0"));
    }
    let bbox = match o.heading {
        Some(h) if !h.is_finite() => return Err(bad("heading", "must be finite")),
        Some(h) => OrientedBox::with_heading(center, o.lwh, h),
        None => OrientedBox::axis_aligned(center, o.lwh),
    };
    let mut attributes = BTreeMap::new();
    let a = o.attributes;
    for (key, value) in [("color", a.color), ("shape", a.shape), ("material", a.material), ("state", a.state)] {
        if let Some(v) = value {
            attributes.insert(key.to_string(), v);
        }
    }
    Ok(ObjectInstance { id: ObjectId(o.id), category, bbox, attributes })
}
