use geo::coordinate_position::{CoordPos, CoordinatePosition};
use geo::{Coord, LineString, Polygon};

use super::FieldPolygon;
use crate::geom::{point_segment_distance, ring_is_simple, rings_cross};

fn douglas_peucker(pts: &[Coord<f64>], tol: f64, keep: &mut [bool], lo: usize, hi: usize) {
    if hi <= lo + 1 {
        return;
    }
    let (mut far, mut dmax) = (lo, -1.0);
    for i in lo + 1..hi {
        let d = point_segment_distance(pts[i], pts[lo], pts[hi]);
        if d > dmax {
            far = i;
            dmax = d;
        }
    }
    if dmax > tol {
        keep[far] = true;
        douglas_peucker(pts, tol, keep, lo, far);
        douglas_peucker(pts, tol, keep, far, hi);
    }
}

/// Douglas-Peucker on a closed ring. The walk is anchored at vertex 0 and
/// the vertex farthest from it; vertex 0 itself is then dropped when it
/// lies within `tolerance` of its simplified neighbours. Rings that would
/// fall below three vertices are returned unchanged.
pub fn simplify_ring(ring: &LineString<f64>, tolerance: f64) -> LineString<f64> {
    let mut pts: Vec<Coord<f64>> = ring.0.clone();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    let n = pts.len();
    if n <= 3 || tolerance <= 0.0 {
        return ring.clone();
    }
    let far = (1..n)
        .max_by(|&a, &b| {
            let da = (pts[a].x - pts[0].x).hypot(pts[a].y - pts[0].y);
            let db = (pts[b].x - pts[0].x).hypot(pts[b].y - pts[0].y);
            da.total_cmp(&db).then(b.cmp(&a))
        })
        .expect("ring has vertices");
    let mut closed = pts.clone();
    closed.push(pts[0]);
    let mut keep = vec![false; n + 1];
    keep[0] = true;
    keep[far] = true;
    keep[n] = true;
    douglas_peucker(&closed, tolerance, &mut keep, 0, far);
    douglas_peucker(&closed, tolerance, &mut keep, far, n);
    let mut out: Vec<Coord<f64>> = (0..n).filter(|&i| keep[i]).map(|i| pts[i]).collect();
    if out.len() > 3 {
        let (prev, next) = (out[out.len() - 1], out[1]);
        // every vertex the new edge would skip must stay within tolerance
        let last_kept = (0..n).rev().find(|&i| keep[i] && i != 0).unwrap_or(0);
        let next_kept = (1..n).find(|&i| keep[i]).unwrap_or(0);
        let skipped = (last_kept..n).chain(0..=next_kept);
        if skipped.clone().all(|i| point_segment_distance(pts[i], prev, next) <= tolerance) {
            out.remove(0);
        }
    }
    if out.len() < 3 {
        return ring.clone();
    }
    out.push(out[0]);
    LineString(out)
}

fn valid(p: &Polygon<f64>) -> bool {
    let shell = Polygon::new(p.exterior().clone(), vec![]);
    ring_is_simple(p.exterior())
        && p.interiors().iter().all(|h| h.coords().all(|c| shell.coordinate_position(c) != CoordPos::Outside))
        && p.interiors().iter().all(ring_is_simple)
        && p.interiors().iter().all(|h| !rings_cross(p.exterior(), h))
        && p.interiors().iter().enumerate().all(|(i, a)| p.interiors()[i + 1..].iter().all(|b| !rings_cross(a, b)))
}

/// Simplifies every ring of a field. If the result is not a valid polygon
/// the tolerance is halved and the attempt repeated; a tolerance that
/// shrinks below a millionth of the original gives the input back.
pub fn simplify_polygon(field: &FieldPolygon, tolerance: f64) -> FieldPolygon {
    let mut tol = tolerance;
    while tol > tolerance * 1e-6 && tol > 0.0 {
        let shell = simplify_ring(field.polygon.exterior(), tol);
        let holes = field.polygon.interiors().iter().map(|r| simplify_ring(r, tol)).collect();
        let candidate = Polygon::new(shell, holes);
        if valid(&candidate) {
            return FieldPolygon::new(field.field_id, candidate, field.source_component_px);
        }
        tol /= 2.0;
    }
    field.clone()
}
