//! Planar geometry helpers shared by mask building and post-processing.

use geo::{Coord, LineString, Polygon};

pub(crate) const EPS: f64 = 1e-9;

#[inline]
fn sub(a: Coord<f64>, b: Coord<f64>) -> Coord<f64> {
    Coord { x: a.x - b.x, y: a.y - b.y }
}

#[inline]
fn dot(a: Coord<f64>, b: Coord<f64>) -> f64 {
    a.x * b.x + a.y * b.y
}

#[inline]
fn cross(a: Coord<f64>, b: Coord<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Euclidean distance from `p` to the closed segment `a-b`.
pub fn point_segment_distance(p: Coord<f64>, a: Coord<f64>, b: Coord<f64>) -> f64 {
    let d = sub(b, a);
    let len2 = dot(d, d);
    if len2 == 0.0 {
        return sub(p, a).x.hypot(sub(p, a).y);
    }
    let t = (dot(sub(p, a), d) / len2).clamp(0.0, 1.0);
    let q = Coord { x: a.x + t * d.x, y: a.y + t * d.y };
    (p.x - q.x).hypot(p.y - q.y)
}

fn orient(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>) -> f64 {
    cross(sub(b, a), sub(c, a))
}

fn on_segment(a: Coord<f64>, b: Coord<f64>, p: Coord<f64>) -> bool {
    p.x >= a.x.min(b.x) - EPS
        && p.x <= a.x.max(b.x) + EPS
        && p.y >= a.y.min(b.y) - EPS
        && p.y <= a.y.max(b.y) + EPS
}

/// Whether closed segments `a-b` and `c-d` share at least one point.
pub fn segments_intersect(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>, d: Coord<f64>) -> bool {
    let scale = [a, b, c, d].iter().map(|p| p.x.abs().max(p.y.abs())).fold(1.0, f64::max);
    let tol = EPS * scale * scale;
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    let s = |v: f64| if v > tol { 1 } else if v < -tol { -1 } else { 0 };
    let (s1, s2, s3, s4) = (s(o1), s(o2), s(o3), s(o4));
    if s1 * s2 < 0 && s3 * s4 < 0 {
        return true;
    }
    (s1 == 0 && on_segment(a, b, c))
        || (s2 == 0 && on_segment(a, b, d))
        || (s3 == 0 && on_segment(c, d, a))
        || (s4 == 0 && on_segment(c, d, b))
}

/// Closed ring with at least three distinct vertices and no two
/// non-adjacent edges touching.
pub fn ring_is_simple(ring: &LineString<f64>) -> bool {
    let pts = &ring.0;
    if pts.len() < 4 || pts.first() != pts.last() {
        return false;
    }
    let n = pts.len() - 1;
    for i in 0..n {
        let (a, b) = (pts[i], pts[i + 1]);
        if a == b {
            return false;
        }
        for j in i + 1..n {
            let (c, d) = (pts[j], pts[j + 1]);
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                // adjacent edges may only share their common vertex
                let (shared, other_end, this_far) = if j == i + 1 { (b, d, a) } else { (a, c, b) };
                let back = orient(this_far, shared, other_end).abs() <= EPS
                    && dot(sub(this_far, shared), sub(other_end, shared)) > 0.0;
                if back {
                    return false;
                }
                continue;
            }
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    ring_signed_area(ring).abs() > 0.0
}

/// Whether any edge of `a` touches any edge of `b` other than at isolated
/// shared vertices. Used to reject simplifications that make a hole cross
/// its shell.
pub fn rings_cross(a: &LineString<f64>, b: &LineString<f64>) -> bool {
    for ea in a.lines() {
        for eb in b.lines() {
            if !segments_intersect(ea.start, ea.end, eb.start, eb.end) {
                continue;
            }
            let touching_vertex = [ea.start, ea.end].iter().any(|p| *p == eb.start || *p == eb.end);
            if !touching_vertex {
                return true;
            }
        }
    }
    false
}

/// Shoelace area; positive for counter-clockwise rings (y up).
pub fn ring_signed_area(ring: &LineString<f64>) -> f64 {
    let pts = &ring.0;
    if pts.len() < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for w in pts.windows(2) {
        s += w[0].x * w[1].y - w[1].x * w[0].y;
    }
    let (f, l) = (pts[0], pts[pts.len() - 1]);
    if f != l {
        s += l.x * f.y - f.x * l.y;
    }
    s / 2.0
}

/// Shell area minus hole areas.
pub fn polygon_area(p: &Polygon<f64>) -> f64 {
    ring_signed_area(p.exterior()).abs() - p.interiors().iter().map(|r| ring_signed_area(r).abs()).sum::<f64>()
}

/// Length over which two segments run collinearly on top of each other.
pub fn collinear_overlap(a: Coord<f64>, b: Coord<f64>, c: Coord<f64>, d: Coord<f64>, tol: f64) -> f64 {
    let dir = sub(b, a);
    let len = dot(dir, dir).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    // both ends of c-d must lie on the line through a-b
    if (cross(dir, sub(c, a)) / len).abs() > tol || (cross(dir, sub(d, a)) / len).abs() > tol {
        return 0.0;
    }
    let t = |p: Coord<f64>| dot(sub(p, a), dir) / len;
    let (t0, t1) = (t(c).min(t(d)), t(c).max(t(d)));
    (t1.min(len) - t0.max(0.0)).max(0.0)
}

/// Total length of boundary shared by two polygons (all rings).
pub fn shared_border_length(p: &Polygon<f64>, q: &Polygon<f64>, tol: f64) -> f64 {
    let rings_p: Vec<&LineString<f64>> = std::iter::once(p.exterior()).chain(p.interiors()).collect();
    let rings_q: Vec<&LineString<f64>> = std::iter::once(q.exterior()).chain(q.interiors()).collect();
    let mut total = 0.0;
    for rp in &rings_p {
        for ep in rp.lines() {
            for rq in &rings_q {
                for eq in rq.lines() {
                    total += collinear_overlap(ep.start, ep.end, eq.start, eq.end, tol);
                }
            }
        }
    }
    total
}

pub fn bbox(p: &Polygon<f64>) -> [f64; 4] {
    let mut b = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
    for c in p.exterior().coords() {
        b[0] = b[0].min(c.x);
        b[1] = b[1].min(c.y);
        b[2] = b[2].max(c.x);
        b[3] = b[3].max(c.y);
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use geo::coord;

    fn ring(pts: &[(f64, f64)]) -> LineString<f64> {
        let mut v: Vec<Coord<f64>> = pts.iter().map(|&(x, y)| coord! { x: x, y: y }).collect();
        v.push(v[0]);
        LineString(v)
    }

    #[test]
    fn distance_to_segment() {
        let a = coord! { x: 0.0, y: 0.0 };
        let b = coord! { x: 10.0, y: 0.0 };
        assert_eq!(point_segment_distance(coord! { x: 5.0, y: 3.0 }, a, b), 3.0);
        assert_eq!(point_segment_distance(coord! { x: 13.0, y: 4.0 }, a, b), 5.0);
        assert_eq!(point_segment_distance(coord! { x: 3.0, y: 4.0 }, a, a), 5.0);
    }

    #[test]
    fn simple_rings() {
        assert!(ring_is_simple(&ring(&[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])));
        // bowtie
        assert!(!ring_is_simple(&ring(&[(0.0, 0.0), (1.0, 1.0), (1.0, 0.0), (0.0, 1.0)])));
        // spike folding back on itself
        assert!(!ring_is_simple(&ring(&[(0.0, 0.0), (2.0, 0.0), (1.0, 0.0), (1.0, 1.0)])));
        assert!(!ring_is_simple(&LineString(vec![coord! { x: 0.0, y: 0.0 }; 3])));
    }

    #[test]
    fn areas() {
        let sq = ring(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]);
        assert_eq!(ring_signed_area(&sq), 4.0);
        let hole = ring(&[(0.5, 0.5), (0.5, 1.5), (1.5, 1.5), (1.5, 0.5)]);
        assert_eq!(polygon_area(&Polygon::new(sq, vec![hole])), 3.0);
    }

    #[test]
    fn shared_border_of_adjacent_squares() {
        let a = Polygon::new(ring(&[(0.0, 0.0), (2.0, 0.0), (2.0, 2.0), (0.0, 2.0)]), vec![]);
        let b = Polygon::new(ring(&[(2.0, 1.0), (5.0, 1.0), (5.0, 5.0), (2.0, 5.0)]), vec![]);
        assert!((shared_border_length(&a, &b, 1e-9) - 1.0).abs() < 1e-12);
        let c = Polygon::new(ring(&[(3.0, 3.0), (4.0, 3.0), (4.0, 4.0)]), vec![]);
        assert_eq!(shared_border_length(&a, &c, 1e-9), 0.0);
    }
}
