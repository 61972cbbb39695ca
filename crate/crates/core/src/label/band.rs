use std::f64::consts::FRAC_PI_2;
use std::sync::OnceLock;

use geo::{unary_union, Coord, LineString, MultiPolygon, Polygon};

use super::{LabelError, ParcelSet};
use crate::geom::{point_segment_distance, polygon_area};

/// Segments used to approximate each quarter circle of a round join or cap.
pub const QUARTER_CIRCLE_SEGMENTS: usize = 8;

/// One closed polyline per ring (shell and holes) of every crop parcel, in
/// source vertex order.
pub fn polygons_to_boundaries(parcels: &ParcelSet) -> Vec<LineString<f64>> {
    parcels
        .crop_parcels()
        .flat_map(|p| p.geometry.0.iter())
        .flat_map(|poly| std::iter::once(poly.exterior()).chain(poly.interiors()))
        .cloned()
        .collect()
}

/// Corridor of points within `half_width` of any parcel outline.
///
/// Membership is decided against the exact round-capped corridor; the
/// polygonal union (round joins approximated with
/// [`QUARTER_CIRCLE_SEGMENTS`] segments per quarter circle) is built on
/// first use.
#[derive(Debug, Clone)]
pub struct BoundaryBand {
    lines: Vec<LineString<f64>>,
    half_width: f64,
    polygons: OnceLock<MultiPolygon<f64>>,
}

pub fn buffer_boundaries(lines: Vec<LineString<f64>>, half_width: f64) -> Result<BoundaryBand, LabelError> {
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(LabelError::NonPositiveWidth(half_width));
    }
    Ok(BoundaryBand { lines, half_width, polygons: OnceLock::new() })
}

impl BoundaryBand {
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn lines(&self) -> &[LineString<f64>] {
        &self.lines
    }

    pub fn segments(&self) -> impl Iterator<Item = (Coord<f64>, Coord<f64>)> + '_ {
        self.lines.iter().flat_map(|l| l.lines().map(|s| (s.start, s.end)))
    }

    /// Whether `p` lies within `half_width` of an outline.
    pub fn contains(&self, p: Coord<f64>) -> bool {
        self.segments().any(|(a, b)| point_segment_distance(p, a, b) <= self.half_width)
    }

    /// Union of the buffered outlines.
    pub fn polygons(&self) -> &MultiPolygon<f64> {
        self.polygons.get_or_init(|| {
            let capsules: Vec<Polygon<f64>> =
                self.segments().map(|(a, b)| capsule(a, b, self.half_width)).collect();
            unary_union(&capsules)
        })
    }

    pub fn area(&self) -> f64 {
        self.polygons().0.iter().map(polygon_area).sum()
    }
}

/// Stadium polygon around segment `a-b`: two semicircular caps joined by
/// the parallel sides. Counter-clockwise.
fn capsule(a: Coord<f64>, b: Coord<f64>, r: f64) -> Polygon<f64> {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    // a degenerate segment gets an arbitrary axis; the result is a disc
    let heading = if dx == 0.0 && dy == 0.0 { 0.0 } else { dy.atan2(dx) };
    let n = 2 * QUARTER_CIRCLE_SEGMENTS;
    let step = 2.0 * FRAC_PI_2 / n as f64;
    let mut pts = Vec::with_capacity(2 * n + 3);
    // cap around b: from heading - 90deg to heading + 90deg
    for i in 0..=n {
        let t = heading - FRAC_PI_2 + step * i as f64;
        pts.push(Coord { x: b.x + r * t.cos(), y: b.y + r * t.sin() });
    }
    // cap around a: from heading + 90deg to heading + 270deg
    for i in 0..=n {
        let t = heading + FRAC_PI_2 + step * i as f64;
        pts.push(Coord { x: a.x + r * t.cos(), y: a.y + r * t.sin() });
    }
    pts.push(pts[0]);
    Polygon::new(LineString(pts), vec![])
}
