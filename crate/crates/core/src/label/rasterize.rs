//! Scanline rasterisation of parcel interiors and boundary corridors.

use std::collections::BTreeSet;

use geo::{Coord, Polygon};
use rayon::prelude::*;

use super::{buffer_boundaries, polygons_to_boundaries, LabelError, ParcelSet};
use crate::mask::{ClassMask, BOUNDARY, INTERIOR, NON_CROP};
use crate::raster::GridGeometry;

/// Diagnostics gathered while building a mask.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskReport {
    /// Pairs of crop parcels whose interiors overlap (a data error).
    pub overlapping: Vec<(i64, i64)>,
}

/// Classifies every pixel centre: 2 inside the boundary corridor, else 1
/// inside a crop parcel, else 0.
pub fn build_class_mask(parcels: &ParcelSet, geometry: &GridGeometry, half_width: f64) -> Result<ClassMask, LabelError> {
    build_class_mask_with_report(parcels, geometry, half_width).map(|(m, _)| m)
}

pub fn build_class_mask_with_report(
    parcels: &ParcelSet,
    geometry: &GridGeometry,
    half_width: f64,
) -> Result<(ClassMask, MaskReport), LabelError> {
    if parcels.crs_code() != geometry.crs_code {
        return Err(LabelError::CrsMismatch { parcels: parcels.crs_code(), grid: geometry.crs_code });
    }
    let band = buffer_boundaries(polygons_to_boundaries(parcels), half_width)?;
    let segments: Vec<Segment> = band.segments().map(|(a, b)| Segment::new(a, b, half_width)).collect();
    let shapes: Vec<Shape> = parcels
        .crop_parcels()
        .flat_map(|p| p.geometry.0.iter().map(move |poly| Shape::new(p.id, poly)))
        .collect();

    let width = geometry.width;
    let mut codes = vec![NON_CROP; geometry.len()];
    let overlaps: BTreeSet<(i64, i64)> = codes
        .par_chunks_mut(width)
        .enumerate()
        .map(|(row, out)| {
            let (_, y) = geometry.pixel_center(0, row);
            let mut overlaps = BTreeSet::new();
            fill_interiors(&shapes, geometry, y, out, &mut overlaps);
            for seg in &segments {
                if let Some((lo, hi)) = seg.row_interval(y) {
                    if let Some((c0, c1)) = column_span(geometry, lo, hi) {
                        out[c0..=c1].fill(BOUNDARY);
                    }
                }
            }
            overlaps
        })
        .reduce(BTreeSet::new, |mut a, b| {
            a.extend(b);
            a
        });
    let report = MaskReport { overlapping: overlaps.into_iter().collect() };
    if !report.overlapping.is_empty() {
        log::warn!("overlapping crop parcel interiors: {:?}", report.overlapping);
    }
    let mask = ClassMask::new(*geometry, codes).expect("codes are in range and sized to the grid");
    Ok((mask, report))
}

/// Columns whose centres satisfy `lo <= x <= hi`.
fn column_span(g: &GridGeometry, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let first = ((lo - g.origin_x) / g.pixel_size - 0.5).ceil().max(0.0);
    let last = ((hi - g.origin_x) / g.pixel_size - 0.5).floor().min(g.width as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

/// Columns whose centres satisfy `lo < x < hi`.
fn open_column_span(g: &GridGeometry, lo: f64, hi: f64) -> Option<(usize, usize)> {
    let f = (lo - g.origin_x) / g.pixel_size - 0.5;
    let l = (hi - g.origin_x) / g.pixel_size - 0.5;
    let first = (f.floor() + 1.0).max(0.0);
    let last = (l.ceil() - 1.0).min(g.width as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

struct Shape {
    id: i64,
    min_y: f64,
    max_y: f64,
    edges: Vec<(Coord<f64>, Coord<f64>)>,
}

impl Shape {
    fn new(id: i64, poly: &Polygon<f64>) -> Self {
        let edges: Vec<_> = std::iter::once(poly.exterior())
            .chain(poly.interiors())
            .flat_map(|r| r.lines().map(|l| (l.start, l.end)))
            .collect();
        let min_y = edges.iter().map(|e| e.0.y.min(e.1.y)).fold(f64::INFINITY, f64::min);
        let max_y = edges.iter().map(|e| e.0.y.max(e.1.y)).fold(f64::NEG_INFINITY, f64::max);
        Self { id, min_y, max_y, edges }
    }
}

/// Marks crop interiors on one row by even-odd crossing spans.
fn fill_interiors(
    shapes: &[Shape],
    g: &GridGeometry,
    y: f64,
    out: &mut [u8],
    overlaps: &mut BTreeSet<(i64, i64)>,
) {
    let mut owner: Vec<Option<i64>> = Vec::new();
    let mut xs = Vec::new();
    for shape in shapes.iter().filter(|s| y > s.min_y && y < s.max_y) {
        xs.clear();
        for &(a, b) in &shape.edges {
            // half-open rule so a vertex on the scanline is counted once
            if (a.y <= y) != (b.y <= y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        xs.sort_unstable_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let Some((c0, c1)) = open_column_span(g, pair[0], pair[1]) else { continue };
            if owner.is_empty() {
                owner.resize(out.len(), None);
            }
            for c in c0..=c1 {
                match owner[c] {
                    Some(other) if other != shape.id => {
                        overlaps.insert((other.min(shape.id), other.max(shape.id)));
                    }
                    _ => owner[c] = Some(shape.id),
                }
                out[c] = INTERIOR;
            }
        }
    }
}

/// A boundary segment with its corridor radius.
struct Segment {
    a: Coord<f64>,
    b: Coord<f64>,
    r: f64,
    min_y: f64,
    max_y: f64,
}

impl Segment {
    fn new(a: Coord<f64>, b: Coord<f64>, r: f64) -> Self {
        Self { a, b, r, min_y: a.y.min(b.y) - r, max_y: a.y.max(b.y) + r }
    }

    /// X-extent of the capsule around the segment on the line `y`.
    ///
    /// The capsule is convex, so its slice is one interval: the hull of the
    /// slices of the two end discs and the swept rectangle.
    fn row_interval(&self, y: f64) -> Option<(f64, f64)> {
        if y < self.min_y || y > self.max_y {
            return None;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut take = |iv: Option<(f64, f64)>| {
            if let Some((l, h)) = iv {
                lo = lo.min(l);
                hi = hi.max(h);
            }
        };
        take(disc_slice(self.a, self.r, y));
        take(disc_slice(self.b, self.r, y));
        take(self.rect_slice(y));
        (lo <= hi).then_some((lo, hi))
    }

    fn rect_slice(&self, y: f64) -> Option<(f64, f64)> {
        let (a, r) = (self.a, self.r);
        let dx = self.b.x - a.x;
        let dy = self.b.y - a.y;
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return None;
        }
        let len = len2.sqrt();
        let ey = y - a.y;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        // projection parameter t = ((x - ax) dx + ey dy) / len2 in [0, 1]
        if dx == 0.0 {
            let t = ey * dy / len2;
            if !(0.0..=1.0).contains(&t) {
                return None;
            }
        } else {
            let x0 = a.x - ey * dy / dx;
            let x1 = a.x + (len2 - ey * dy) / dx;
            lo = lo.max(x0.min(x1));
            hi = hi.min(x0.max(x1));
        }
        // perpendicular distance |dx ey - dy (x - ax)| / len <= r
        if dy == 0.0 {
            if ey.abs() > r {
                return None;
            }
        } else {
            let x0 = a.x + (dx * ey - r * len) / dy;
            let x1 = a.x + (dx * ey + r * len) / dy;
            lo = lo.max(x0.min(x1));
            hi = hi.min(x0.max(x1));
        }
        (lo <= hi).then_some((lo, hi))
    }
}

fn disc_slice(c: Coord<f64>, r: f64, y: f64) -> Option<(f64, f64)> {
    let dy = y - c.y;
    let h2 = r * r - dy * dy;
    if h2 < 0.0 {
        return None;
    }
    let h = h2.sqrt();
    Some((c.x - h, c.x + h))
}
