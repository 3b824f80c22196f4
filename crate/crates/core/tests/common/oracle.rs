//! Brute-force relation oracle, written without the library's geometry:
//! box corners come from heading vectors, convex intersections from vertex
//! containment plus edge crossings, and egocentric bearings from the
//! quaternion's rotation matrix.

use scenecode::relations::{RelationConfig, RelationLabel, SURFACE_TOLERANCE};
use scenecode::scene::{AgentPose, ObjectInstance, OrientedBox, Scene};

type P = (f64, f64);

pub fn corners(b: &OrientedBox) -> Vec<P> {
    let (u, v) = ((b.heading.cos(), b.heading.sin()), (-b.heading.sin(), b.heading.cos()));
    let (hl, hw) = (b.lwh[0] / 2.0, b.lwh[1] / 2.0);
    [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|(a, c)| (b.center.x + a * hl * u.0 + c * hw * v.0, b.center.y + a * hl * u.1 + c * hw * v.1))
        .collect()
}

fn cross(o: P, a: P, b: P) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Point inside (or on) a counter-clockwise convex polygon.
fn contains(poly: &[P], p: P) -> bool {
    (0..poly.len()).all(|i| cross(poly[i], poly[(i + 1) % poly.len()], p) >= -1e-12)
}

fn segment_crossing(a: P, b: P, c: P, d: P) -> Option<P> {
    let den = (b.0 - a.0) * (d.1 - c.1) - (b.1 - a.1) * (d.0 - c.0);
    if den.abs() < 1e-15 {
        return None;
    }
    let t = ((c.0 - a.0) * (d.1 - c.1) - (c.1 - a.1) * (d.0 - c.0)) / den;
    let s = ((c.0 - a.0) * (b.1 - a.1) - (c.1 - a.1) * (b.0 - a.0)) / den;
    ((0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&s)).then_some((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)))
}

fn shoelace(pts: &[P]) -> f64 {
    let n = pts.len();
    (0..n).map(|i| pts[i].0 * pts[(i + 1) % n].1 - pts[(i + 1) % n].0 * pts[i].1).sum::<f64>().abs() / 2.0
}

/// Area of the intersection of two counter-clockwise convex polygons.
pub fn intersection_area(a: &[P], b: &[P]) -> f64 {
    let mut pts: Vec<P> = a.iter().copied().filter(|&p| contains(b, p)).collect();
    pts.extend(b.iter().copied().filter(|&p| contains(a, p)));
    for i in 0..a.len() {
        for j in 0..b.len() {
            pts.extend(segment_crossing(a[i], a[(i + 1) % a.len()], b[j], b[(j + 1) % b.len()]));
        }
    }
    if pts.len() < 3 {
        return 0.0;
    }
    let c = (
        pts.iter().map(|p| p.0).sum::<f64>() / pts.len() as f64,
        pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64,
    );
    pts.sort_by(|p, q| (p.1 - c.1).atan2(p.0 - c.0).total_cmp(&(q.1 - c.1).atan2(q.0 - c.0)));
    shoelace(&pts)
}

pub fn iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    let inter = intersection_area(&corners(a), &corners(b));
    if inter <= 0.0 {
        return 0.0;
    }
    inter / (a.lwh[0] * a.lwh[1] + b.lwh[0] * b.lwh[1] - inter)
}

fn dist(a: &ObjectInstance, b: &ObjectInstance) -> f64 {
    let (p, q) = (a.bbox.center, b.bbox.center);
    ((p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2)).sqrt()
}

fn on(t: &OrientedBox, a: &OrientedBox, cfg: &RelationConfig) -> bool {
    let gap = (t.center.z - t.lwh[2] / 2.0) - (a.center.z + a.lwh[2] / 2.0);
    let inter = intersection_area(&corners(t), &corners(a));
    iou(t, a) > cfg.min_iou
        && gap >= -SURFACE_TOLERANCE
        && gap <= cfg.on_gap_m
        && inter / (t.lwh[0] * t.lwh[1]) >= cfg.min_overlap_ratio
}

fn above(t: &OrientedBox, a: &OrientedBox, cfg: &RelationConfig) -> bool {
    let gap = (t.center.z - t.lwh[2] / 2.0) - (a.center.z + a.lwh[2] / 2.0);
    gap >= -SURFACE_TOLERANCE && iou(t, a) > 0.0 && !on(t, a, cfg)
}

pub fn vertical(t: &ObjectInstance, a: &ObjectInstance, cfg: &RelationConfig) -> Option<RelationLabel> {
    if on(&t.bbox, &a.bbox, cfg) {
        Some(RelationLabel::On)
    } else if above(&t.bbox, &a.bbox, cfg) {
        Some(RelationLabel::Above)
    } else if above(&a.bbox, &t.bbox, cfg) {
        Some(RelationLabel::Below)
    } else {
        None
    }
}

/// Agent facing: the rotation matrix's first column projected to XY.
pub fn agent_forward(pose: &AgentPose) -> P {
    let q = pose.rotation;
    let (x, y) = (1.0 - 2.0 * (q.y * q.y + q.z * q.z), 2.0 * (q.x * q.y + q.w * q.z));
    let n = x.hypot(y);
    (x / n, y / n)
}

fn view_axis(anchor: &ObjectInstance, scene: &Scene) -> P {
    if anchor.bbox.explicit_heading {
        (anchor.bbox.heading.cos(), anchor.bbox.heading.sin())
    } else {
        agent_forward(&scene.agent)
    }
}

pub fn allocentric(t: &ObjectInstance, a: &ObjectInstance, scene: &Scene, cfg: &RelationConfig) -> Vec<RelationLabel> {
    let f = view_axis(a, scene);
    let l = (-f.1, f.0);
    let to_frame = |p: &P| (p.0 * f.0 + p.1 * f.1, p.0 * l.0 + p.1 * l.1);
    let anchor: Vec<P> = corners(&a.bbox).iter().map(to_frame).collect();
    let target: Vec<P> = corners(&t.bbox).iter().map(to_frame).collect();
    let u0 = anchor.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let u1 = anchor.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let v0 = anchor.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let v1 = anchor.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let d = cfg.allo_depth_m;
    let rect = |ua: f64, ub: f64, va: f64, vb: f64| vec![(ua, va), (ub, va), (ub, vb), (ua, vb)];
    let area = t.bbox.lwh[0] * t.bbox.lwh[1];
    let frac = |r: Vec<P>| intersection_area(&target, &r) / area;
    let left = frac(rect(u0 - d, u1 + d, v1, v1 + d));
    let right = frac(rect(u0 - d, u1 + d, v0 - d, v0));
    let front = frac(rect(u1, u1 + d, v0 - d, v1 + d));
    let back = frac(rect(u0 - d, u0, v0 - d, v1 + d));
    let k = cfg.allo_min_overlap;
    let mut out = Vec::new();
    let side = |x: f64, y: f64, lx: RelationLabel, ly: RelationLabel| -> Option<RelationLabel> {
        if x >= k && (y < k || x > y) {
            Some(lx)
        } else if y >= k && (x < k || y > x) {
            Some(ly)
        } else {
            None
        }
    };
    out.extend(side(left, right, RelationLabel::Left, RelationLabel::Right));
    out.extend(side(front, back, RelationLabel::Front, RelationLabel::Back));
    out
}

pub fn closest_and_farthest(
    reference: &ObjectInstance,
    scene: &Scene,
    cfg: &RelationConfig,
) -> (Option<u32>, Option<u32>) {
    let others: Vec<&ObjectInstance> = scene.iter().filter(|o| o.id != reference.id).collect();
    if others.len() == 1 {
        return (Some(others[0].id.0), Some(others[0].id.0));
    }
    let mut best: Option<(f64, u32)> = None;
    let mut worst: Option<(f64, u32)> = None;
    for o in &others {
        let d = dist(o, reference);
        if best.is_none_or(|(b, _)| d < b) {
            best = Some((d, o.id.0));
        }
        if worst.is_none_or(|(w, _)| d > w) {
            worst = Some((d, o.id.0));
        }
    }
    let (bd, bid) = best.expect("at least two others");
    let (wd, wid) = worst.expect("at least two others");
    let second_best = others.iter().filter(|o| o.id.0 != bid).map(|o| dist(o, reference)).fold(f64::INFINITY, f64::min);
    let second_worst =
        others.iter().filter(|o| o.id.0 != wid).map(|o| dist(o, reference)).fold(f64::NEG_INFINITY, f64::max);
    ((second_best - bd > cfg.epsilon_m).then_some(bid), (wd - second_worst > cfg.epsilon_m).then_some(wid))
}

/// All relations of `t` to `reference`, in the library's label order.
pub fn pair(t: &ObjectInstance, reference: &ObjectInstance, scene: &Scene, cfg: &RelationConfig) -> Vec<RelationLabel> {
    let mut out = allocentric(t, reference, scene, cfg);
    out.extend(vertical(t, reference, cfg));
    let (c, f) = closest_and_farthest(reference, scene, cfg);
    if c == Some(t.id.0) {
        out.push(RelationLabel::Closest);
    }
    if f == Some(t.id.0) {
        out.push(RelationLabel::Farthest);
    }
    let d = dist(t, reference);
    if d < cfg.wr_dist_m {
        out.push(RelationLabel::WithinReach);
    }
    if d < cfg.ar_dist_m {
        out.push(RelationLabel::Around);
    }
    out
}

/// Egocentric labels of an object from the agent, including the clock sector.
pub fn egocentric(o: &ObjectInstance, scene: &Scene, cfg: &RelationConfig) -> Vec<RelationLabel> {
    let f = agent_forward(&scene.agent);
    let (dx, dy) = (o.bbox.center.x - scene.agent.position.x, o.bbox.center.y - scene.agent.position.y);
    if dx.hypot(dy) <= 1e-9 {
        return Vec::new();
    }
    let theta = (f.0 * dy - f.1 * dx).atan2(f.0 * dx + f.1 * dy).to_degrees();
    let z = cfg.dead_zone_deg;
    let mut out = Vec::new();
    if theta >= z && theta <= 180.0 - z {
        out.push(RelationLabel::Left);
    } else if theta <= -z && theta >= -180.0 + z {
        out.push(RelationLabel::Right);
    }
    if theta.abs() <= 90.0 - z {
        out.push(RelationLabel::Front);
    } else if theta.abs() >= 90.0 + z {
        out.push(RelationLabel::Back);
    }
    let clockwise = (360.0 - theta) % 360.0;
    let sector = ((clockwise / 30.0).round() as u8) % 12;
    out.push(RelationLabel::OClock(if sector == 0 { 12 } else { sector }));
    out
}
