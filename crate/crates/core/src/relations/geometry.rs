//! Convex polygon helpers for XY footprint overlap.

pub type Point = [f64; 2];

/// Signed shoelace area; positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        acc += x0 * y1 - x1 * y0;
    }
    acc / 2.0
}

pub fn area(poly: &[Point]) -> f64 {
    signed_area(poly).abs()
}

fn side(a: Point, b: Point, p: Point) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn edge_cross(a: Point, b: Point, p: Point, q: Point) -> Point {
    let sp = side(a, b, p);
    let sq = side(a, b, q);
    let t = sp / (sp - sq);
    [p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]
}

/// Sutherland-Hodgman clip of `subject` against the convex counter-clockwise
/// polygon `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut out: Vec<Point> = subject.to_vec();
    for i in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut out);
        for j in 0..input.len() {
            let cur = input[j];
            let prev = input[(j + input.len() - 1) % input.len()];
            let cur_in = side(a, b, cur) >= 0.0;
            let prev_in = side(a, b, prev) >= 0.0;
            match (prev_in, cur_in) {
                (true, true) => out.push(cur),
                (true, false) => out.push(edge_cross(a, b, prev, cur)),
                (false, true) => {
                    out.push(edge_cross(a, b, prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    out
}

/// Intersection area of two convex counter-clockwise polygons.
///
/// The pair is put in a fixed order before clipping so the result is exactly
/// symmetric in its arguments.
pub fn intersection_area(a: &[Point], b: &[Point]) -> f64 {
    if !bounds_overlap(a, b) {
        return 0.0;
    }
    let (s, c) = if lex_cmp(a, b).is_le() { (a, b) } else { (b, a) };
    area(&clip_convex(s, c))
}

fn bounds(poly: &[Point]) -> [f64; 4] {
    poly.iter().fold([f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY], |[x0, y0, x1, y1], p| {
        [x0.min(p[0]), y0.min(p[1]), x1.max(p[0]), y1.max(p[1])]
    })
}

fn bounds_overlap(a: &[Point], b: &[Point]) -> bool {
    let [ax0, ay0, ax1, ay1] = bounds(a);
    let [bx0, by0, bx1, by1] = bounds(b);
    ax0 < bx1 && bx0 < ax1 && ay0 < by1 && by0 < ay1
}

fn lex_cmp(a: &[Point], b: &[Point]) -> std::cmp::Ordering {
    let flat = |p: &[Point]| p.iter().flat_map(|q| q.iter().copied()).collect::<Vec<f64>>();
    let (fa, fb) = (flat(a), flat(b));
    for (x, y) in fa.iter().zip(&fb) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    fa.len().cmp(&fb.len())
}
