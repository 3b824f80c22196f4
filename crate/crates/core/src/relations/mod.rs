//! Geometric spatial relations between annotated objects and the agent.
//!
//! Horizontal relations (closest, farthest, within reach, around) use
//! center-to-center distances. Vertical relations (on, above, below) combine
//! XY footprint overlap with the Z gap between surfaces. Allocentric relations
//! (left, right, front, back) test how much of the target footprint falls in
//! a rectangular region grown out of one side of the anchor. Egocentric
//! relations classify the bearing of an object from the agent's facing.

pub mod geometry;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parallel::Exec;
use crate::scene::{footprint, AgentPose, ObjectId, ObjectInstance, OrientedBox, Scene, SceneError, Vec3};
use geometry::Point;

/// Slack on the "target bottom is not below anchor top" test, so resting
/// contact survives floating-point noise from transforms.
pub const SURFACE_TOLERANCE: f64 = 1e-9;

const MIN_BEARING_NORM: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum RelationError {
    #[error("zero direction: object center coincides with the agent position")]
    ZeroDirection,
    #[error("an object cannot be related to itself")]
    SameObject,
    #[error("{0}")]
    Facing(String),
    #[error("invalid relation config: {0}")]
    Config(String),
}

impl From<SceneError> for RelationError {
    fn from(e: SceneError) -> Self {
        RelationError::Facing(e.to_string())
    }
}

/// Every tunable threshold used by the relation predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RelationConfig {
    /// Margin by which the nearest (farthest) candidate must beat the runner-up.
    pub epsilon_m: f64,
    pub wr_dist_m: f64,
    pub ar_dist_m: f64,
    pub min_iou: f64,
    /// Largest gap between target bottom and anchor top still counted as "on".
    pub on_gap_m: f64,
    /// Overlap area over target footprint area required for "on".
    pub min_overlap_ratio: f64,
    pub dead_zone_deg: f64,
    /// Extent of the directional regions used for left/right/front/back.
    pub allo_depth_m: f64,
    /// Fraction of the target footprint that must lie inside a region.
    pub allo_min_overlap: f64,
}

impl Default for RelationConfig {
    fn default() -> Self {
        Self {
            epsilon_m: 0.05,
            wr_dist_m: 1.0,
            ar_dist_m: 2.0,
            min_iou: 0.25,
            on_gap_m: 0.20,
            min_overlap_ratio: 0.30,
            dead_zone_deg: 22.5,
            allo_depth_m: 3.0,
            allo_min_overlap: 0.50,
        }
    }
}

impl RelationConfig {
    pub fn validate(&self) -> Result<(), RelationError> {
        let positive = [
            ("epsilon_m", self.epsilon_m),
            ("wr_dist_m", self.wr_dist_m),
            ("ar_dist_m", self.ar_dist_m),
            ("on_gap_m", self.on_gap_m),
            ("allo_depth_m", self.allo_depth_m),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(RelationError::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        let unit = [
            ("min_iou", self.min_iou),
            ("min_overlap_ratio", self.min_overlap_ratio),
            ("allo_min_overlap", self.allo_min_overlap),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v <= 1.0) {
                return Err(RelationError::Config(format!("{name} must be in (0, 1], got {v}")));
            }
        }
        if !(self.dead_zone_deg >= 0.0 && self.dead_zone_deg < 45.0) {
            return Err(RelationError::Config(format!("dead_zone_deg must be in [0, 45), got {}", self.dead_zone_deg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationLabel {
    Left,
    Right,
    Front,
    Back,
    On,
    Above,
    Below,
    Closest,
    Farthest,
    WithinReach,
    Around,
    /// Clock sector 1..=12, 12 being straight ahead.
    OClock(u8),
}

impl RelationLabel {
    pub const OBJECT_VOCABULARY: [RelationLabel; 11] = [
        RelationLabel::Left,
        RelationLabel::Right,
        RelationLabel::Front,
        RelationLabel::Back,
        RelationLabel::On,
        RelationLabel::Above,
        RelationLabel::Below,
        RelationLabel::Closest,
        RelationLabel::Farthest,
        RelationLabel::WithinReach,
        RelationLabel::Around,
    ];

    pub fn is_directional(self) -> bool {
        matches!(self, Self::Left | Self::Right | Self::Front | Self::Back)
    }
}

impl fmt::Display for RelationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Left => "left",
            Self::Right => "right",
            Self::Front => "front",
            Self::Back => "back",
            Self::On => "on",
            Self::Above => "above",
            Self::Below => "below",
            Self::Closest => "closest",
            Self::Farthest => "farthest",
            Self::WithinReach => "within reach",
            Self::Around => "around",
            Self::OClock(n) => return write!(f, "{n} o'clock"),
        };
        f.write_str(s)
    }
}

impl FromStr for RelationLabel {
    type Err = ();

    /// Parses the canonical spelling only; aliases live in the tool API.
    fn from_str(s: &str) -> Result<Self, ()> {
        Ok(match s {
            "left" => Self::Left,
            "right" => Self::Right,
            "front" => Self::Front,
            "back" => Self::Back,
            "on" => Self::On,
            "above" => Self::Above,
            "below" => Self::Below,
            "closest" => Self::Closest,
            "farthest" => Self::Farthest,
            "within reach" => Self::WithinReach,
            "around" => Self::Around,
            other => {
                let n = other.strip_suffix(" o'clock").ok_or(())?.trim().parse::<u8>().map_err(|_| ())?;
                if (1..=12).contains(&n) {
                    Self::OClock(n)
                } else {
                    return Err(());
                }
            }
        })
    }
}

impl Serialize for RelationLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

// ---------------------------------------------------------------------------
// Horizontal

pub fn center_distance(a: Vec3, b: Vec3) -> f64 {
    let d = a - b;
    (d.x * d.x + d.y * d.y + d.z * d.z).sqrt()
}

fn ranked<'a, I>(candidates: I, anchor: Vec3) -> Vec<(f64, &'a ObjectInstance)>
where
    I: IntoIterator<Item = &'a ObjectInstance>,
{
    let mut v: Vec<_> = candidates.into_iter().map(|o| (center_distance(o.center(), anchor), o)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    v
}

/// The nearest candidate, if it beats the second nearest by more than
/// `epsilon_m`. A lone candidate always wins.
pub fn closest_among<'a, I>(candidates: I, anchor: Vec3, cfg: &RelationConfig) -> Option<&'a ObjectInstance>
where
    I: IntoIterator<Item = &'a ObjectInstance>,
{
    let v = ranked(candidates, anchor);
    match v.as_slice() {
        [] => None,
        [(_, only)] => Some(only),
        [(d0, o), (d1, _), ..] => (d1 - d0 > cfg.epsilon_m).then_some(*o),
    }
}

pub fn farthest_among<'a, I>(candidates: I, anchor: Vec3, cfg: &RelationConfig) -> Option<&'a ObjectInstance>
where
    I: IntoIterator<Item = &'a ObjectInstance>,
{
    let v = ranked(candidates, anchor);
    match v.as_slice() {
        [] => None,
        [(_, only)] => Some(only),
        [.., (d1, _), (d0, o)] => (d0 - d1 > cfg.epsilon_m).then_some(*o),
    }
}

pub fn is_within_reach(target: &ObjectInstance, anchor: &ObjectInstance, cfg: &RelationConfig) -> bool {
    center_distance(target.center(), anchor.center()) < cfg.wr_dist_m
}

pub fn is_around(target: &ObjectInstance, anchor: &ObjectInstance, cfg: &RelationConfig) -> bool {
    center_distance(target.center(), anchor.center()) < cfg.ar_dist_m
}

// ---------------------------------------------------------------------------
// Vertical

pub fn xy_overlap_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    geometry::intersection_area(&footprint(a), &footprint(b))
}

/// Intersection over union of the two XY footprints.
pub fn xy_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let (fa, fb) = (footprint(a), footprint(b));
    if fa == fb {
        return 1.0;
    }
    let inter = geometry::intersection_area(&fa, &fb);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.footprint_area() + b.footprint_area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerticalRelation {
    None,
    On,
    Above,
    Below,
}

impl VerticalRelation {
    pub fn label(self) -> Option<RelationLabel> {
        match self {
            Self::None => None,
            Self::On => Some(RelationLabel::On),
            Self::Above => Some(RelationLabel::Above),
            Self::Below => Some(RelationLabel::Below),
        }
    }
}

fn rests_on(t: &OrientedBox, a: &OrientedBox, iou: f64, overlap: f64, cfg: &RelationConfig) -> bool {
    let gap = t.bottom() - a.top();
    iou > cfg.min_iou
        && gap >= -SURFACE_TOLERANCE
        && gap <= cfg.on_gap_m
        && overlap / t.footprint_area() >= cfg.min_overlap_ratio
}

fn is_above(t: &OrientedBox, a: &OrientedBox, iou: f64, overlap: f64, cfg: &RelationConfig) -> bool {
    t.bottom() - a.top() >= -SURFACE_TOLERANCE && iou > 0.0 && !rests_on(t, a, iou, overlap, cfg)
}

pub fn vertical_relation(target: &ObjectInstance, anchor: &ObjectInstance, cfg: &RelationConfig) -> VerticalRelation {
    let (t, a) = (&target.bbox, &anchor.bbox);
    let iou = xy_iou(t, a);
    if iou <= 0.0 {
        return VerticalRelation::None;
    }
    let overlap = xy_overlap_area(t, a);
    if rests_on(t, a, iou, overlap, cfg) {
        VerticalRelation::On
    } else if is_above(t, a, iou, overlap, cfg) {
        VerticalRelation::Above
    } else if is_above(a, t, iou, overlap, cfg) {
        VerticalRelation::Below
    } else {
        VerticalRelation::None
    }
}

// ---------------------------------------------------------------------------
// Allocentric

/// Rectangle in the viewer frame, `[u0, u1] x [v0, v1]` along forward and left.
fn frame_rect(forward: Vec3, u: [f64; 2], v: [f64; 2]) -> [Point; 4] {
    let left = Vec3::new(-forward.y, forward.x, 0.0);
    let at = |a: f64, b: f64| [a * forward.x + b * left.x, a * forward.y + b * left.y];
    [at(u[0], v[0]), at(u[1], v[0]), at(u[1], v[1]), at(u[0], v[1])]
}

/// The four directional regions around `anchor`, ordered left, right, front, back.
pub fn directional_regions(anchor: &OrientedBox, forward: Vec3, depth: f64) -> [(RelationLabel, [Point; 4]); 4] {
    let left = Vec3::new(-forward.y, forward.x, 0.0);
    let fp = footprint(anchor);
    let proj = |p: &Point, d: Vec3| p[0] * d.x + p[1] * d.y;
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &fp {
        let (u, v) = (proj(p, forward), proj(p, left));
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let (wide_u, wide_v) = ([u0 - depth, u1 + depth], [v0 - depth, v1 + depth]);
    [
        (RelationLabel::Left, frame_rect(forward, wide_u, [v1, v1 + depth])),
        (RelationLabel::Right, frame_rect(forward, wide_u, [v0 - depth, v0])),
        (RelationLabel::Front, frame_rect(forward, [u1, u1 + depth], wide_v)),
        (RelationLabel::Back, frame_rect(forward, [u0 - depth, u0], wide_v)),
    ]
}

/// Fraction of the target footprint inside each directional region of the anchor.
pub fn directional_fractions(target: &OrientedBox, anchor: &OrientedBox, forward: Vec3, depth: f64) -> [f64; 4] {
    let fp = footprint(target);
    let area = target.footprint_area();
    directional_regions(anchor, forward, depth).map(|(_, r)| geometry::intersection_area(&fp, &r) / area)
}

fn pick_side(a: f64, b: f64, threshold: f64) -> Option<bool> {
    match (a >= threshold, b >= threshold) {
        (true, true) if a > b => Some(true),
        (true, true) if b > a => Some(false),
        (true, false) => Some(true),
        (false, true) => Some(false),
        _ => None,
    }
}

/// Left/right/front/back of `target` as seen from `anchor` in the frame whose
/// forward axis is `viewer_forward`. Left and right never co-occur, nor do
/// front and back; the larger overlap wins and an exact tie yields neither.
pub fn allocentric_relations(
    target: &ObjectInstance,
    anchor: &ObjectInstance,
    viewer_forward: Vec3,
    cfg: &RelationConfig,
) -> Vec<RelationLabel> {
    let [l, r, f, b] = directional_fractions(&target.bbox, &anchor.bbox, viewer_forward, cfg.allo_depth_m);
    let mut out = Vec::with_capacity(2);
    match pick_side(l, r, cfg.allo_min_overlap) {
        Some(true) => out.push(RelationLabel::Left),
        Some(false) => out.push(RelationLabel::Right),
        None => {}
    }
    match pick_side(f, b, cfg.allo_min_overlap) {
        Some(true) => out.push(RelationLabel::Front),
        Some(false) => out.push(RelationLabel::Back),
        None => {}
    }
    out
}

/// Frame used for allocentric relations about `anchor`: its own heading when
/// annotated, the agent's facing otherwise.
pub fn viewer_frame(anchor: &ObjectInstance, scene: &Scene) -> Result<Vec3, RelationError> {
    if anchor.bbox.explicit_heading {
        Ok(anchor.bbox.heading_vector())
    } else {
        Ok(scene.agent.forward()?)
    }
}

// ---------------------------------------------------------------------------
// Egocentric

/// Signed bearing in degrees from the agent's facing to `point`,
/// counter-clockwise positive, in `(-180, 180]`.
pub fn bearing_deg(pose: &AgentPose, point: Vec3) -> Result<f64, RelationError> {
    let f = pose.forward()?;
    let d = point - pose.position;
    let n = d.x.hypot(d.y);
    if !(n > MIN_BEARING_NORM) {
        return Err(RelationError::ZeroDirection);
    }
    let (dx, dy) = (d.x / n, d.y / n);
    Ok((f.x * dy - f.y * dx).atan2(f.x * dx + f.y * dy).to_degrees())
}

/// Clock sector for a counter-clockwise bearing; 12 is straight ahead, 3 is
/// to the right.
pub fn oclock_sector(bearing_deg: f64) -> u8 {
    let clockwise = (-bearing_deg).rem_euclid(360.0);
    let n = (((clockwise + 15.0) / 30.0).floor() as i64).rem_euclid(12);
    if n == 0 {
        12
    } else {
        n as u8
    }
}

pub fn egocentric_from_bearing(theta: f64, cfg: &RelationConfig, include_oclock: bool) -> Vec<RelationLabel> {
    let dz = cfg.dead_zone_deg;
    let mut out = Vec::with_capacity(3);
    if (dz..=180.0 - dz).contains(&theta) {
        out.push(RelationLabel::Left);
    } else if (-180.0 + dz..=-dz).contains(&theta) {
        out.push(RelationLabel::Right);
    }
    if theta.abs() <= 90.0 - dz {
        out.push(RelationLabel::Front);
    } else if theta.abs() >= 90.0 + dz {
        out.push(RelationLabel::Back);
    }
    if include_oclock {
        out.push(RelationLabel::OClock(oclock_sector(theta)));
    }
    out
}

pub fn egocentric_relations(
    target: &ObjectInstance,
    pose: &AgentPose,
    cfg: &RelationConfig,
    include_oclock: bool,
) -> Result<Vec<RelationLabel>, RelationError> {
    let theta = bearing_deg(pose, target.center())?;
    Ok(egocentric_from_bearing(theta, cfg, include_oclock))
}

// ---------------------------------------------------------------------------
// Combined

fn extremes(reference: &ObjectInstance, scene: &Scene, cfg: &RelationConfig) -> (Option<ObjectId>, Option<ObjectId>) {
    let others = || scene.iter().filter(|o| o.id != reference.id);
    (
        closest_among(others(), reference.center(), cfg).map(|o| o.id),
        farthest_among(others(), reference.center(), cfg).map(|o| o.id),
    )
}

fn combine(
    target: &ObjectInstance,
    reference: &ObjectInstance,
    forward: Vec3,
    extremes: (Option<ObjectId>, Option<ObjectId>),
    cfg: &RelationConfig,
) -> Vec<RelationLabel> {
    let mut out = allocentric_relations(target, reference, forward, cfg);
    out.extend(vertical_relation(target, reference, cfg).label());
    if extremes.0 == Some(target.id) {
        out.push(RelationLabel::Closest);
    }
    if extremes.1 == Some(target.id) {
        out.push(RelationLabel::Farthest);
    }
    if is_within_reach(target, reference, cfg) {
        out.push(RelationLabel::WithinReach);
    }
    if is_around(target, reference, cfg) {
        out.push(RelationLabel::Around);
    }
    out
}

/// Every relation `target` holds to `reference`, ordered allocentric,
/// vertical, horizontal. Closest and farthest compete against all other
/// objects in the scene.
pub fn all_relations(
    target: &ObjectInstance,
    reference: &ObjectInstance,
    scene: &Scene,
    cfg: &RelationConfig,
) -> Result<Vec<RelationLabel>, RelationError> {
    if target.id == reference.id {
        return Err(RelationError::SameObject);
    }
    let forward = viewer_frame(reference, scene)?;
    Ok(combine(target, reference, forward, extremes(reference, scene, cfg), cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRelations {
    pub target: ObjectId,
    pub reference: ObjectId,
    pub relations: Vec<RelationLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentRelations {
    pub object: ObjectId,
    pub relations: Vec<RelationLabel>,
}

/// Full pairwise relation dump of a scene.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationTable {
    pub scene_id: String,
    pub pairs: Vec<PairRelations>,
    pub agent: Vec<AgentRelations>,
}

impl RelationTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("relation table serializes")
    }
}

pub fn relation_table(scene: &Scene, cfg: &RelationConfig, exec: Exec) -> Result<RelationTable, RelationError> {
    let objects: Vec<&ObjectInstance> = scene.iter().collect();
    let rows: Vec<Result<Vec<PairRelations>, RelationError>> = exec.map(&objects, |reference| {
        let forward = viewer_frame(reference, scene)?;
        let ext = extremes(reference, scene, cfg);
        Ok(objects
            .iter()
            .filter(|t| t.id != reference.id)
            .map(|t| PairRelations {
                target: t.id,
                reference: reference.id,
                relations: combine(t, reference, forward, ext, cfg),
            })
            .collect())
    });
    let mut pairs = Vec::with_capacity(objects.len() * objects.len().saturating_sub(1));
    for row in rows {
        pairs.extend(row?);
    }
    pairs.sort_by_key(|p| (p.target, p.reference));
    let agent = exec
        .map(&objects, |o| match egocentric_relations(o, &scene.agent, cfg, true) {
            Ok(relations) => Ok(AgentRelations { object: o.id, relations }),
            Err(RelationError::ZeroDirection) => Ok(AgentRelations { object: o.id, relations: vec![] }),
            Err(e) => Err(e),
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RelationTable { scene_id: scene.scene_id.clone(), pairs, agent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Quaternion;
    use std::collections::BTreeMap;

    fn obj(id: u32, c: [f64; 3], lwh: [f64; 3]) -> ObjectInstance {
        ObjectInstance {
            id: ObjectId(id),
            category: format!("o{id}"),
            bbox: OrientedBox::axis_aligned(Vec3::from_array(c), lwh),
            attributes: BTreeMap::new(),
        }
    }

    fn cfg() -> RelationConfig {
        RelationConfig::default()
    }

    #[test]
    fn default_config_is_valid() {
        cfg().validate().unwrap();
        let bad = RelationConfig { dead_zone_deg: 45.0, ..cfg() };
        assert!(bad.validate().is_err());
        let bad = RelationConfig { min_iou: 0.0, ..cfg() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn distance_345() {
        assert_eq!(center_distance(Vec3::default(), Vec3::default()), 0.0);
        assert_eq!(center_distance(Vec3::default(), Vec3::new(3.0, 4.0, 0.0)), 5.0);
    }

    #[test]
    fn iou_examples() {
        let a = OrientedBox::axis_aligned(Vec3::default(), [1.0, 1.0, 1.0]);
        assert_eq!(xy_iou(&a, &a), 1.0);
        let far = OrientedBox::axis_aligned(Vec3::new(5.0, 0.0, 0.0), [1.0, 1.0, 1.0]);
        assert_eq!(xy_iou(&a, &far), 0.0);
        let half = OrientedBox::axis_aligned(Vec3::new(0.5, 0.0, 0.0), [1.0, 1.0, 1.0]);
        assert!((xy_iou(&a, &half) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn closest_and_farthest_margins() {
        let anchor = Vec3::default();
        let c = cfg();
        let one = [obj(1, [7.0, 0.0, 0.0], [0.1; 3])];
        assert_eq!(closest_among(&one, anchor, &c).unwrap().id, ObjectId(1));
        let clear = [obj(1, [1.0, 0.0, 0.0], [0.1; 3]), obj(2, [2.0, 0.0, 0.0], [0.1; 3])];
        assert_eq!(closest_among(&clear, anchor, &c).unwrap().id, ObjectId(1));
        assert_eq!(farthest_among(&clear, anchor, &c).unwrap().id, ObjectId(2));
        let tight = [obj(1, [1.0, 0.0, 0.0], [0.1; 3]), obj(2, [1.03, 0.0, 0.0], [0.1; 3])];
        assert!(closest_among(&tight, anchor, &c).is_none());
        let tight_far = [obj(1, [1.97, 0.0, 0.0], [0.1; 3]), obj(2, [2.0, 0.0, 0.0], [0.1; 3])];
        assert!(farthest_among(&tight_far, anchor, &c).is_none());
        assert!(closest_among(&[], anchor, &c).is_none());
    }

    #[test]
    fn reach_and_around_bands() {
        let a = obj(0, [0.0; 3], [0.1; 3]);
        for (d, wr, ar) in [(0.5, true, true), (1.5, false, true), (2.5, false, false)] {
            let t = obj(1, [d, 0.0, 0.0], [0.1; 3]);
            assert_eq!(is_within_reach(&t, &a, &cfg()), wr, "d={d}");
            assert_eq!(is_around(&t, &a, &cfg()), ar, "d={d}");
        }
    }

    #[test]
    fn book_on_table_and_lamp_above() {
        // IoU 0.3 / 0.8 clears min_iou; a much smaller book would not.
        let table = obj(1, [0.0, 0.0, 0.4], [1.0, 0.8, 0.8]);
        let book = obj(2, [0.1, 0.0, 0.85], [0.6, 0.5, 0.1]);
        assert_eq!(vertical_relation(&book, &table, &cfg()), VerticalRelation::On);
        assert_eq!(vertical_relation(&table, &book, &cfg()), VerticalRelation::None);
        let lamp = obj(3, [0.0, 0.0, 1.95], [0.6, 0.6, 0.3]);
        assert_eq!(vertical_relation(&lamp, &table, &cfg()), VerticalRelation::Above);
        assert_eq!(vertical_relation(&table, &lamp, &cfg()), VerticalRelation::Below);
    }

    #[test]
    fn allocentric_left_and_back() {
        let anchor = obj(0, [0.0; 3], [0.5, 0.5, 0.5]);
        let fwd = Vec3::new(1.0, 0.0, 0.0);
        let left = obj(1, [0.0, 1.0, 0.0], [0.2, 0.2, 0.2]);
        assert_eq!(allocentric_relations(&left, &anchor, fwd, &cfg()), vec![RelationLabel::Left]);
        let back = obj(2, [-1.0, 0.0, 0.0], [0.2, 0.2, 0.2]);
        assert_eq!(allocentric_relations(&back, &anchor, fwd, &cfg()), vec![RelationLabel::Back]);
    }

    #[test]
    fn egocentric_examples() {
        let pose = AgentPose::new(Vec3::default(), Quaternion::IDENTITY);
        let c = cfg();
        let ahead = obj(1, [1.0, 0.0, 0.0], [0.1; 3]);
        assert_eq!(
            egocentric_relations(&ahead, &pose, &c, true).unwrap(),
            vec![RelationLabel::Front, RelationLabel::OClock(12)]
        );
        let left = obj(2, [0.0, 1.0, 0.0], [0.1; 3]);
        assert_eq!(
            egocentric_relations(&left, &pose, &c, true).unwrap(),
            vec![RelationLabel::Left, RelationLabel::OClock(9)]
        );
        let left_back = obj(3, [-1.0, 1.0, 0.0], [0.1; 3]);
        assert_eq!(
            egocentric_relations(&left_back, &pose, &c, false).unwrap(),
            vec![RelationLabel::Left, RelationLabel::Back]
        );
        let here = obj(4, [0.0, 0.0, 1.0], [0.1; 3]);
        assert_eq!(egocentric_relations(&here, &pose, &c, true), Err(RelationError::ZeroDirection));
    }

    #[test]
    fn oclock_sectors() {
        assert_eq!(oclock_sector(0.0), 12);
        assert_eq!(oclock_sector(-90.0), 3);
        assert_eq!(oclock_sector(180.0), 6);
        assert_eq!(oclock_sector(90.0), 9);
        assert_eq!(oclock_sector(14.9), 12);
        assert_eq!(oclock_sector(-15.0), 1);
    }

    #[test]
    fn label_round_trip() {
        for l in RelationLabel::OBJECT_VOCABULARY {
            assert_eq!(l.to_string().parse::<RelationLabel>(), Ok(l));
        }
        assert_eq!("7 o'clock".parse::<RelationLabel>(), Ok(RelationLabel::OClock(7)));
        assert!("13 o'clock".parse::<RelationLabel>().is_err());
        assert!("behind".parse::<RelationLabel>().is_err());
    }

    #[test]
    fn self_relation_is_an_error() {
        let scene = Scene {
            scene_id: "s".into(),
            objects: [(ObjectId(1), obj(1, [0.0; 3], [1.0; 3]))].into_iter().collect(),
            agent: AgentPose::new(Vec3::new(5.0, 0.0, 0.0), Quaternion::IDENTITY),
        };
        let o = scene.object(ObjectId(1)).unwrap();
        assert_eq!(all_relations(o, o, &scene, &cfg()), Err(RelationError::SameObject));
    }
}
